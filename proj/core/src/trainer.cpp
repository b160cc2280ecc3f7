#include "capel/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "capel/error.hpp"
#include "capel/rng.hpp"
#include "json.hpp"

namespace capel {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(AlphaInit mode) {
  return mode == AlphaInit::Ones ? "ones" : "uniform_1_over_K";
}

AlphaInit parse_alpha_init(std::string_view text) {
  if (text == "uniform_1_over_K" || text == "uniform") return AlphaInit::UniformOverK;
  if (text == "ones") return AlphaInit::Ones;
  throw Error(ErrorCode::InvalidArgument, "unknown alpha init '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(tau > 0.0f) || !std::isfinite(tau)) fail("tau must be > 0");
  if (shots && *shots < 1) fail("shots must be >= 1");
  if (threads < 1) fail("threads must be >= 1");
}

std::string TrainConfig::to_json() const {
  ordered_json j;
  j["lr"] = lr;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lambda"] = lambda;
  j["momentum"] = momentum;
  j["pc_scope"] = std::string(to_string(pc_scope));
  j["seed"] = seed;
  j["alpha_init"] = std::string(to_string(alpha_init));
  j["tau"] = tau;
  if (shots) {
    j["shots"] = *shots;
  } else {
    j["shots"] = "all";
  }
  j["allow_fewer"] = allow_fewer;
  j["freeze_alpha"] = freeze_alpha;
  j["freeze_weights"] = freeze_weights;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig c;
  try {
    const auto j = ordered_json::parse(text);
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lambda = j.value("lambda", c.lambda);
    c.momentum = j.value("momentum", c.momentum);
    c.pc_scope = parse_pc_scope(j.value("pc_scope", std::string(to_string(c.pc_scope))));
    c.seed = j.value("seed", c.seed);
    c.alpha_init = parse_alpha_init(j.value("alpha_init", std::string(to_string(c.alpha_init))));
    c.tau = j.value("tau", c.tau);
    if (j.contains("shots") && j["shots"].is_number_unsigned()) {
      c.shots = j["shots"].get<std::size_t>();
    }
    c.allow_fewer = j.value("allow_fewer", c.allow_fewer);
    c.freeze_alpha = j.value("freeze_alpha", c.freeze_alpha);
    c.freeze_weights = j.value("freeze_weights", c.freeze_weights);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("train config: ") + e.what());
  }
  return c;
}

std::vector<std::size_t> FewShotSplit::flatten() const {
  std::vector<std::size_t> all;
  for (const auto& cls : per_class) all.insert(all.end(), cls.begin(), cls.end());
  return all;
}

FewShotSplit few_shot_sample(std::span<const std::uint32_t> labels, std::size_t num_classes,
                             std::size_t shots, std::uint64_t seed, bool allow_fewer) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(labels[i]) + " at row " +
                                                  std::to_string(i));
    }
    by_class[labels[i]].push_back(i);
  }
  FewShotSplit split;
  split.shots = shots;
  split.seed = seed;
  split.per_class.resize(num_classes);
  Rng rng(seed);
  for (std::size_t y = 0; y < num_classes; ++y) {
    const auto& pool = by_class[y];
    if (pool.empty()) {
      throw Error(ErrorCode::InsufficientSamples, "class " + std::to_string(y) + " has no samples");
    }
    if (pool.size() < shots && !allow_fewer) {
      throw Error(ErrorCode::InsufficientSamples,
                  "class " + std::to_string(y) + " has " + std::to_string(pool.size()) +
                      " samples, " + std::to_string(shots) + " shots requested");
    }
    const auto picks = rng.choose_k(pool.size(), std::min(shots, pool.size()));
    auto& chosen = split.per_class[y];
    for (std::size_t p : picks) chosen.push_back(pool[p]);
    std::sort(chosen.begin(), chosen.end());
  }
  return split;
}

void sgd_step(CapelModel& model, const Gradients& grads, double lr, double momentum,
              SgdState& state, bool freeze_alpha, bool freeze_weights) {
  if (grads.d_weights.size() != model.weights.size() || grads.d_alpha.size() != model.alpha.size()) {
    throw Error(ErrorCode::DimMismatch, "gradient shapes do not match the model");
  }
  auto update = [&](std::vector<float>& theta, const std::vector<float>& g, std::vector<float>& v) {
    if (v.size() != theta.size()) v.assign(theta.size(), 0.0f);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double vel = momentum * v[i] + static_cast<double>(g[i]);
      v[i] = static_cast<float>(vel);
      theta[i] = static_cast<float>(static_cast<double>(theta[i]) - lr * vel);
    }
  };
  if (!freeze_weights) update(model.weights, grads.d_weights, state.v_weights);
  if (!freeze_alpha) update(model.alpha, grads.d_alpha, state.v_alpha);
}

std::string TrainHistory::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : epochs) {
    const double values[4] = {e.ce, e.pc, e.total, e.train_accuracy};
    h = fnv1a64(std::as_bytes(std::span(values)), h);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string TrainHistory::to_json() const {
  ordered_json j;
  j["train_samples"] = train_samples;
  j["digest"] = digest();
  auto& list = j["epochs"] = ordered_json::array();
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    const auto& r = epochs[e];
    list.push_back({{"epoch", e + 1},
                    {"ce", r.ce},
                    {"pc", r.pc},
                    {"total", r.total},
                    {"train_accuracy", r.train_accuracy},
                    {"seconds", r.seconds}});
  }
  return j.dump(2);
}

TrainResult train(CapelModel model, const EmbeddingMatrix& x, std::span<const std::uint32_t> y,
                  const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  if (x.rows == 0) throw Error(ErrorCode::EmptyTrainingSet, "no training samples");
  if (x.dim != model.dim) {
    throw Error(ErrorCode::DimMismatch, "embedding dim " + std::to_string(x.dim) +
                                            " != model dim " + std::to_string(model.dim));
  }
  if (y.size() != x.rows) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(y.size()) + " labels for " +
                                               std::to_string(x.rows) + " rows");
  }

  std::vector<std::size_t> pool;
  if (cfg.shots) {
    pool = few_shot_sample(y, model.classes, *cfg.shots, derive_seed(cfg.seed, kSplitSeedTag),
                           cfg.allow_fewer)
               .flatten();
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] >= model.classes) {
        throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(y[i]) + " at row " +
                                                    std::to_string(i));
      }
    }
    pool.resize(x.rows);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  }

  TrainResult result{std::move(model), {}};
  result.history.train_samples = pool.size();
  Rng shuffle_rng(derive_seed(cfg.seed, kShuffleSeedTag));
  SgdState state;
  const ObjectiveOptions opts{cfg.lambda, cfg.pc_scope, cfg.threads};
  std::vector<std::size_t> order = pool;
  LabelVector batch_labels;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    order = pool;
    shuffle_rng.shuffle(std::span(order));
    EpochRecord rec;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const auto batch = x.gather(idx);
      batch_labels.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) batch_labels[i] = y[idx[i]];

      auto step = gradients(result.model, batch, batch_labels, opts);
      if (!std::isfinite(step.loss.total)) {
        throw Error(ErrorCode::Internal, "non-finite loss at epoch " + std::to_string(epoch + 1) +
                                             ", batch starting at " + std::to_string(begin) +
                                             " (ce=" + std::to_string(step.loss.ce) +
                                             ", pc=" + std::to_string(step.loss.pc) + ")");
      }
      const double n = static_cast<double>(idx.size());
      rec.ce += step.loss.ce * n;
      rec.pc += step.loss.pc * n;
      rec.total += step.loss.total * n;
      correct += step.correct;
      sgd_step(result.model, step.grads, cfg.lr, cfg.momentum, state, cfg.freeze_alpha,
               cfg.freeze_weights);
    }
    const double n = static_cast<double>(order.size());
    rec.ce /= n;
    rec.pc /= n;
    rec.total /= n;
    rec.train_accuracy = static_cast<double>(correct) / n;
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.epochs.push_back(rec);
  }
  return result;
}

}  // namespace capel
