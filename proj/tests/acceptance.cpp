// Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "capel/capel.hpp"
#include "cli.hpp"
#include "fixtures.hpp"
#include "oracle.hpp"

using namespace capel;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s  %-26s %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

constexpr int kSeeds = 5;

SynthConfig synth_default(std::uint64_t seed) {
  SynthConfig c;
  c.seed = seed;
  return c;
}

double test_accuracy(const CapelModel& m, const SynthInstance& inst) {
  return accuracy(m, inst.test.x, inst.test.y).accuracy;
}

// ----------------------------------------------------------------- criteria

Outcome gradient_correctness() {
  const PcScope scopes[3] = {PcScope::AllClassesMean, PcScope::AllClassesSum,
                             PcScope::TrueClassOnly};
  double worst = 0.0;
  int over = 0;
  for (int i = 0; i < 20; ++i) {
    Rng rng(derive_seed(static_cast<std::uint64_t>(i), "gradcheck-shape"));
    const std::size_t y = 2 + rng.uniform_index(4);
    const std::size_t k = 1 + rng.uniform_index(4);
    const std::size_t d = 2 + rng.uniform_index(7);
    const std::size_t b = 1 + rng.uniform_index(16);
    const auto inst = cli::make_gradcheck_instance(static_cast<std::uint64_t>(i), y, k, d, b, 1.0f);
    const ObjectiveOptions opts{i % 2 ? 3.0 : 0.0, scopes[i % 3], 1};
    const auto r = finite_diff_check(inst.model, inst.batch, inst.labels, opts, 1e-3);
    worst = std::max(worst, r.max_rel_error);
    if (r.max_rel_error > 1e-5) ++over;
  }
  return {worst <= 1e-5, fmt("max rel err %.3g over 20 instances, %d above 1e-5 (h=1e-3)", worst, over)};
}

Outcome forward_oracle() {
  double worst = 0.0;
  int label_mismatch = 0;
  for (int m = 0; m < 100; ++m) {
    Rng rng(derive_seed(static_cast<std::uint64_t>(m), "forward"));
    const std::size_t Y = 1 + rng.uniform_index(6);
    const std::size_t K = 1 + rng.uniform_index(5);
    const std::size_t D = 2 + rng.uniform_index(9);
    PromptTensor p(Y, K, D);
    for (auto& v : p.data) v = static_cast<float>(rng.gaussian());
    auto model = init_model(p, static_cast<float>(1.0 + 99.0 * rng.uniform()));
    for (auto& a : model.alpha) a = static_cast<float>(rng.gaussian());
    for (int s = 0; s < 10; ++s) {
      std::vector<float> x(D);
      for (auto& v : x) v = static_cast<float>(rng.gaussian());
      const auto xn = l2_normalize(x);
      const auto got = predict(model, xn);
      const auto ref = oracle::forward(model, xn.data());
      if (got.label != ref.label) ++label_mismatch;
      for (std::size_t c = 0; c < Y; ++c) {
        worst = std::max(worst, static_cast<double>(std::fabs(got.probabilities[c] - ref.prob[c])));
      }
    }
  }
  return {label_mismatch == 0 && worst <= 1e-5,
          fmt("100 models x 10 inputs: %d label mismatches, max |dp| %.3g", label_mismatch, worst)};
}

Outcome reductions() {
  Rng rng(11);
  const std::size_t Y = 7, D = 16;
  PromptTensor p(Y, 1, D);
  for (auto& v : p.data) v = static_cast<float>(rng.gaussian());
  const auto model = init_model(p, kDefaultTau, AlphaInit::Ones);
  const auto heads = feature_average_classifier(p);
  EmbeddingMatrix x(1000, D);
  LabelVector labels(1000);
  int mismatches = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    std::vector<float> v(D);
    for (auto& e : v) e = static_cast<float>(rng.gaussian());
    const auto u = l2_normalize(v);
    std::copy(u.begin(), u.end(), x.row(i).begin());
    labels[i] = static_cast<std::uint32_t>(rng.uniform_index(Y));
    const auto a = predict(model, x.row(i));
    const auto b = zero_shot_predict(heads, kDefaultTau, x.row(i));
    if (a.label != b.label || a.probabilities != b.probabilities) ++mismatches;
  }
  const auto logits = batch_logits(model, x);
  double pc_max = 0.0;
  for (auto scope : {PcScope::AllClassesMean, PcScope::AllClassesSum, PcScope::TrueClassOnly}) {
    pc_max = std::max(pc_max, std::fabs(cluster_preserving_loss(logits, scope, labels)));
  }
  auto zero = model;
  std::fill(zero.alpha.begin(), zero.alpha.end(), 0.0f);
  const double ce = cross_entropy_weighted(batch_logits(zero, x), zero.alpha, labels);
  const double ce_err = std::fabs(ce - std::log(static_cast<double>(Y)));
  return {mismatches == 0 && pc_max == 0.0 && ce_err <= 1e-6,
          fmt("K=1 vs zero-shot mismatches %d/1000, |pc| %.3g, |ce - ln Y| %.3g", mismatches,
              pc_max, ce_err)};
}

Outcome centroid_shift() {
  double margin = 0.0;
  std::string per;
  for (int s = 0; s < kSeeds; ++s) {
    const auto inst = generate(synth_default(static_cast<std::uint64_t>(s)));
    const double logit = test_accuracy(init_model(inst.prompts), inst);
    const double feat = test_accuracy(feature_average_model(inst.prompts), inst);
    margin += (logit - feat) / kSeeds;
    per += fmt(" %+.2f", 100.0 * (logit - feat));
  }
  return {margin * 100.0 >= 2.0,
          fmt("mean logit - feature = %+.2f pts (need >= +2.00); per seed:%s", 100.0 * margin,
              per.c_str())};
}

Outcome collapse_prevention() {
  int ok = 0;
  std::string per;
  for (int s = 0; s < kSeeds; ++s) {
    const auto inst = generate(synth_default(static_cast<std::uint64_t>(s)));
    TrainConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    auto with = cfg;
    auto without = cfg;
    without.lambda = 0.0;
    const auto a = train(init_model(inst.prompts), inst.train.x, inst.train.y, with).model;
    const auto b = train(init_model(inst.prompts), inst.train.x, inst.train.y, without).model;
    const double cos_a = prototype_diversity(a).global_mean;
    const double cos_b = prototype_diversity(b).global_mean;
    const double h_a = empirical_conditional_entropy(a, inst.train.x, inst.train.y, cfg.pc_scope);
    const double h_b = empirical_conditional_entropy(b, inst.train.x, inst.train.y, cfg.pc_scope);
    if (cos_a < cos_b && h_a < h_b) ++ok;
    per += fmt(" [cos %.4f/%.4f H %.4f/%.4f]", cos_a, cos_b, h_a, h_b);
  }
  return {ok == kSeeds, fmt("%d/%d seeds lower (lambda=3 / lambda=0, H on train split):%s", ok, kSeeds, per.c_str())};
}

Outcome flaw_suppression() {
  double separated = 0.0;
  std::string per;
  for (int s = 0; s < kSeeds; ++s) {
    auto sc = synth_default(static_cast<std::uint64_t>(s));
    sc.flawed_per_class = 1;
    sc.flaw_mode = FlawMode::WrongClass;
    const auto inst = generate(sc);
    TrainConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    const auto m = train(init_model(inst.prompts), inst.train.x, inst.train.y, cfg).model;
    const double f = *flaw_separation(m, inst.flaw_mask).fraction_clean_above;
    separated += f / kSeeds;
    per += fmt(" %.2f", f);
  }
  return {separated >= 0.9,
          fmt("classes with clean alpha > flawed alpha: %.3f (need >= 0.9); per seed:%s",
              separated, per.c_str())};
}

Outcome pruning_stability() {
  double worst = 0.0;
  std::string per;
  for (int s = 0; s < kSeeds; ++s) {
    auto sc = synth_default(static_cast<std::uint64_t>(s));
    sc.prompts = 50;
    const auto inst = generate(sc);
    TrainConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    const auto m = train(init_model(inst.prompts), inst.train.x, inst.train.y, cfg).model;
    const double full = test_accuracy(m, inst);
    const double pruned = test_accuracy(prune(m, 10), inst);
    const double delta = 100.0 * (pruned - full);
    worst = std::max(worst, std::fabs(delta));
    per += fmt(" %+.2f", delta);
  }
  return {worst <= 0.5,
          fmt("K=50 -> m=10, max |delta acc| %.2f pts (need <= 0.50); per seed:%s", worst,
              per.c_str())};
}

Outcome ablation_ordering() {
  std::vector<double> mean(7, 0.0);
  for (int s = 0; s < kSeeds; ++s) {
    const auto inst = generate(synth_default(static_cast<std::uint64_t>(s)));
    TrainConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    cfg.threads = 7;
    const auto rows =
        ablation_run(inst.train.x, inst.train.y, inst.test.x, inst.test.y, inst.prompts, cfg);
    for (std::size_t r = 0; r < 7; ++r) mean[r] += rows[r].accuracy / kSeeds;
  }
  const bool ok = mean[6] >= mean[4] && mean[4] >= mean[3] && mean[3] >= mean[1] &&
                  mean[3] >= mean[2];
  std::string rows;
  for (std::size_t r = 0; r < 7; ++r) rows += fmt(" r%zu=%.4f", r + 1, mean[r]);
  return {ok, "need r7>=r5>=r4>=r2, r4>=r3;" + rows};
}

std::vector<std::uint8_t> slurp(const fs::path& p) { return read_file(p); }

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "capel_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ostringstream out, err;
  const auto d = dir.string();
  auto run = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "capel");
    const int rc = cli::run(args, out, err);
    if (rc != 0) throw std::runtime_error("capel " + args[1] + " exited " + std::to_string(rc) + ": " + err.str());
  };
  run({"synth", "--out", d + "/data", "--seed", "3"});
  const std::vector<std::string> base = {"train", "--embeddings", d + "/data/train.cape", "--prompts",
                                         d + "/data/bank.json", "--shots", "16", "--seed", "1"};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  run(with({"--out", d + "/a.capc"}));
  run(with({"--out", d + "/b.capc"}));
  run(with({"--threads", "4", "--out", d + "/c.capc"}));
  const auto a = slurp(dir / "a.capc");
  const bool same_run = a == slurp(dir / "b.capc");
  const bool same_threads = a == slurp(dir / "c.capc");
  const bool same_sidecar = read_text(dir / "a.capc.json") == read_text(dir / "c.capc.json");
  fs::remove_all(dir);
  return {same_run && same_threads && same_sidecar,
          fmt("repeat run identical: %s, threads 4 vs 1 identical: %s (sidecar %s)",
              same_run ? "yes" : "no", same_threads ? "yes" : "no", same_sidecar ? "yes" : "no")};
}

template <typename F>
bool raises(ErrorCode code, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

Outcome format_golden() {
  using namespace fixtures;
  int bad = 0;
  std::string notes;
  auto check = [&](bool ok, const char* what) {
    if (!ok) {
      ++bad;
      notes += std::string(" ") + what;
    }
  };
  const auto e = decode_embeddings(kEmbedding2x3);
  check(e.matrix.rows == 2 && e.matrix.dim == 3, "embedding shape");
  check(e.labels && (*e.labels)[0] == 1 && (*e.labels)[1] == 0, "embedding labels");
  check(e.matrix.data[0] == 1.0f && e.matrix.data[4] == 0.6f && e.matrix.data[5] == 0.8f,
        "embedding values");
  LabelVector labels = {1, 0};
  check(encode_embeddings(e.matrix, &labels) == kEmbedding2x3, "embedding re-encode");

  const auto c = decode_checkpoint(kCheckpoint1x2x2, ClassIndex::numbered(1));
  check(c.classes == 1 && c.prompts == 2 && c.dim == 2 && c.tau == 100.0f, "checkpoint header");
  check(c.alpha == std::vector<float>{0.5f, 0.5f}, "checkpoint alpha");
  check(encode_checkpoint(c) == kCheckpoint1x2x2, "checkpoint re-encode");

  auto trunc = kEmbedding2x3;
  trunc.pop_back();
  check(raises(ErrorCode::SizeMismatch, [&] { decode_embeddings(trunc); }), "truncated embedding");
  check(raises(ErrorCode::BadMagic, [&] { decode_embeddings(with_byte(kEmbedding2x3, 0, 'X')); }),
        "embedding magic");
  check(raises(ErrorCode::BadVersion, [&] { decode_embeddings(with_byte(kEmbedding2x3, 4, 2)); }),
        "embedding version");
  check(raises(ErrorCode::BadFlags, [&] { decode_embeddings(with_byte(kEmbedding2x3, 16, 3)); }),
        "embedding flags");
  check(raises(ErrorCode::NormOutOfRange,
               [&] { decode_embeddings(with_byte(kEmbedding2x3, 20, 0x40)); }),
        "embedding norm");
  check(raises(ErrorCode::BadVersion,
               [&] { decode_checkpoint(with_byte(kCheckpoint1x2x2, 4, 2), ClassIndex::numbered(1)); }),
        "checkpoint version");
  check(raises(ErrorCode::BadMagic,
               [&] { decode_checkpoint(with_byte(kCheckpoint1x2x2, 3, 'E'), ClassIndex::numbered(1)); }),
        "checkpoint magic");
  auto ctrunc = kCheckpoint1x2x2;
  ctrunc.pop_back();
  check(raises(ErrorCode::SizeMismatch, [&] { decode_checkpoint(ctrunc, ClassIndex::numbered(1)); }),
        "truncated checkpoint");
  check(raises(ErrorCode::DimMismatch,
               [&] { decode_checkpoint(kCheckpoint1x2x2, ClassIndex::numbered(2)); }),
        "checkpoint class count");
  return {bad == 0, bad == 0 ? "all fixtures parse and all corruptions are rejected"
                             : "failed:" + notes};
}

}  // namespace

int main() {
  criterion("gradient_correctness", gradient_correctness);
  criterion("forward_oracle", forward_oracle);
  criterion("reductions", reductions);
  criterion("centroid_shift", centroid_shift);
  criterion("collapse_prevention", collapse_prevention);
  criterion("flaw_suppression", flaw_suppression);
  criterion("pruning_stability", pruning_stability);
  criterion("ablation_ordering", ablation_ordering);
  criterion("determinism", determinism);
  criterion("format_golden", format_golden);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
