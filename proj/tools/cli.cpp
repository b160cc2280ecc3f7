#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "capel/capel.hpp"
#include "json.hpp"

namespace capel::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

unsigned default_threads() {
  if (const char* env = std::getenv("CAPEL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
  }
  return 1;
}

GradCheckInstance make_gradcheck_instance(std::uint64_t seed, std::size_t classes,
                                          std::size_t prompts, std::size_t dim, std::size_t batch,
                                          float tau) {
  Rng rng(seed);
  PromptTensor p(classes, prompts, dim);
  for (auto& v : p.data) v = static_cast<float>(rng.gaussian());
  GradCheckInstance inst;
  inst.model = init_model(p, tau, AlphaInit::UniformOverK);
  // Move W off the unit sphere and alpha off 1/K so every gradient path is live.
  for (std::size_t j = 0; j < classes * prompts; ++j) {
    const double scale = 0.5 + rng.uniform();
    for (std::size_t d = 0; d < dim; ++d) {
      auto& w = inst.model.weights[j * dim + d];
      w = static_cast<float>(w * scale);
    }
    inst.model.alpha[j] = static_cast<float>(1.0 / static_cast<double>(prompts) + 0.2 * rng.gaussian());
  }
  inst.batch = EmbeddingMatrix(batch, dim);
  inst.labels.resize(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    std::vector<float> x(dim);
    for (auto& v : x) v = static_cast<float>(rng.gaussian());
    const auto unit = l2_normalize(x);
    std::copy(unit.begin(), unit.end(), inst.batch.row(i).begin());
    inst.labels[i] = static_cast<std::uint32_t>(rng.uniform_index(classes));
  }
  return inst;
}

namespace {

struct TrainFlags {
  std::string embeddings;
  std::string prompts;
  std::string prompt_embeddings;
  std::string out;
  std::string history;
  std::string shots = "all";
  std::string pc_scope = "all_classes_mean";
  std::string alpha_init = "uniform_1_over_K";
  TrainConfig cfg;
};

void add_train_config_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--lr", f.cfg.lr, "SGD learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--epochs", f.cfg.epochs, "training epochs")->capture_default_str();
  cmd->add_option("--batch-size", f.cfg.batch_size, "mini-batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--lambda", f.cfg.lambda, "cluster-preserving loss weight")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--momentum", f.cfg.momentum, "SGD momentum in [0, 1)")
      ->check(CLI::Range(0.0, 0.999999999))
      ->capture_default_str();
  cmd->add_option("--pc-scope", f.pc_scope, "all_classes_mean | all_classes_sum | true_class_only")
      ->check(CLI::IsMember({"all_classes_mean", "all_classes_sum", "true_class_only"}))
      ->capture_default_str();
  cmd->add_option("--seed", f.cfg.seed, "master seed (split and shuffle sub-seeds derive from it)")
      ->capture_default_str();
  cmd->add_option("--alpha-init", f.alpha_init, "uniform_1_over_K | ones")
      ->check(CLI::IsMember({"uniform_1_over_K", "ones"}))
      ->capture_default_str();
  cmd->add_option("--tau", f.cfg.tau, "logit temperature")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--shots", f.shots, "samples per class, or 'all'")
      ->check([](const std::string& s) -> std::string {
        if (s == "all") return {};
        if (!s.empty() && std::all_of(s.begin(), s.end(), ::isdigit) && std::stoul(s) >= 1) return {};
        return "--shots must be a positive integer or 'all'";
      })
      ->capture_default_str();
  cmd->add_flag("--allow-fewer", f.cfg.allow_fewer, "take every sample of classes with fewer than --shots");
  cmd->add_flag("--freeze-alpha", f.cfg.freeze_alpha, "do not train the attention matrix");
  cmd->add_flag("--freeze-w", f.cfg.freeze_weights, "do not train the sub-classifiers");
}

void finish_train_config(TrainFlags& f, unsigned threads) {
  f.cfg.pc_scope = parse_pc_scope(f.pc_scope);
  f.cfg.alpha_init = parse_alpha_init(f.alpha_init);
  f.cfg.shots = f.shots == "all" ? std::nullopt : std::optional<std::size_t>(std::stoul(f.shots));
  f.cfg.threads = threads;
  f.cfg.validate();
}

PromptTensor load_prompt_tensor(const PromptBank& bank, const std::string& path) {
  const auto rows = read_embeddings(path);
  return prompt_tensor_from_rows(rows.matrix, bank.num_classes(), bank.prompts_per_class());
}

std::string default_prompt_embeddings(const std::string& bank_path) {
  return fs::path(bank_path).replace_extension(".cape").string();
}

LabeledEmbeddings load_labeled(const std::string& path) {
  auto data = read_embeddings(path);
  if (!data.labels) throw Error(ErrorCode::MissingLabels, path + " carries no labels");
  return data;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ------------------------------------------------------------------ commands

struct SynthFlags {
  std::string out;
  std::string flaw_mode = "wrong_class";
  SynthConfig cfg;
};

int cmd_synth(SynthFlags& f, std::ostream& out) {
  f.cfg.flaw_mode = parse_flaw_mode(f.flaw_mode);
  const auto inst = generate(f.cfg);
  const fs::path dir(f.out);
  fs::create_directories(dir);
  write_embeddings(dir / "train.cape", inst.train.x, &inst.train.y);
  write_embeddings(dir / "test.cape", inst.test.x, &inst.test.y);
  write_embeddings(dir / "bank.cape", prompt_tensor_to_rows(inst.prompts));
  PromptBank bank;
  bank.classes = ClassIndex::numbered(f.cfg.classes);
  bank.prompts.resize(f.cfg.classes);
  for (std::size_t y = 0; y < f.cfg.classes; ++y) {
    for (std::size_t k = 0; k < f.cfg.prompts; ++k) {
      bank.prompts[y].push_back("synthetic prompt " + std::to_string(k) + " of class" +
                                std::to_string(y) + (inst.flawed(y, k) ? " (flawed)" : ""));
    }
  }
  write_prompt_bank(dir / "bank.json", bank);
  write_text(dir / "manifest.json", synth_manifest_json(inst) + "\n");
  out << "wrote " << (dir / "train.cape").string() << " (" << inst.train.x.rows << " rows), "
      << (dir / "test.cape").string() << " (" << inst.test.x.rows << " rows), "
      << (dir / "bank.cape").string() << " and bank.json (Y=" << f.cfg.classes
      << ", K=" << f.cfg.prompts << ", D=" << f.cfg.dim << ")\n";
  return kOk;
}

int cmd_train(TrainFlags& f, unsigned threads, std::ostream& out) {
  finish_train_config(f, threads);
  const auto bank = read_prompt_bank(f.prompts);
  const auto pe_path = f.prompt_embeddings.empty() ? default_prompt_embeddings(f.prompts)
                                                   : f.prompt_embeddings;
  const auto prompts = load_prompt_tensor(bank, pe_path);
  const auto data = load_labeled(f.embeddings);
  auto model = init_model(prompts, f.cfg.tau, f.cfg.alpha_init, bank.classes);
  auto result = train(std::move(model), data.matrix, *data.labels, f.cfg);

  CheckpointMeta meta;
  meta.train_config_json = f.cfg.to_json();
  meta.history_digest = result.history.digest();
  write_checkpoint(f.out, result.model, meta);

  ordered_json hist = ordered_json::parse(result.history.to_json());
  ordered_json flags;
  flags["command"] = "train";
  flags["embeddings"] = f.embeddings;
  flags["prompts"] = f.prompts;
  flags["prompt_embeddings"] = pe_path;
  flags["out"] = f.out;
  flags["threads"] = threads;
  flags["config"] = ordered_json::parse(f.cfg.to_json());
  hist["flags"] = flags;
  const auto history_path = f.history.empty() ? f.out + ".history.json" : f.history;
  write_text(history_path, hist.dump(2) + "\n");

  out << "trained Y=" << result.model.classes << " K=" << result.model.prompts
      << " D=" << result.model.dim << " on " << result.history.train_samples << " samples for "
      << f.cfg.epochs << " epochs";
  if (!result.history.epochs.empty()) {
    const auto& first = result.history.epochs.front();
    const auto& last = result.history.epochs.back();
    out << std::setprecision(6) << "; loss " << first.total << " -> " << last.total
        << ", train acc " << last.train_accuracy;
  }
  out << "\nwrote " << f.out << " and " << history_path << "\n";
  return kOk;
}

struct EvalFlags {
  std::string model;
  std::string embeddings;
  std::string report;
  std::string attention_csv;
};

int cmd_eval(const EvalFlags& f, unsigned threads, std::ostream& out) {
  CheckpointMeta meta;
  const auto model = read_checkpoint(f.model, &meta);
  const auto data = load_labeled(f.embeddings);
  auto report = accuracy(model, data.matrix, *data.labels, threads);
  ordered_json cfg;
  cfg["command"] = "eval";
  cfg["model"] = f.model;
  cfg["embeddings"] = f.embeddings;
  cfg["threads"] = threads;
  cfg["train_config"] = ordered_json::parse(meta.train_config_json);
  report.config_json = cfg.dump();
  if (!f.report.empty()) write_text(f.report, report.to_json() + "\n");
  if (!f.attention_csv.empty()) attention_export(model, f.attention_csv);
  const auto diversity = prototype_diversity(model);
  out << std::fixed << std::setprecision(4) << "accuracy " << report.accuracy << " ("
      << report.n_test << " samples)";
  if (diversity.applicable) out << ", mean prototype cosine " << diversity.global_mean;
  out << "\n";
  return kOk;
}

struct PredictFlags {
  std::string model;
  std::string embeddings;
  std::string out;
};

int cmd_predict(const PredictFlags& f, unsigned threads, std::ostream& out) {
  const auto model = read_checkpoint(f.model);
  const auto data = read_embeddings(f.embeddings);
  std::vector<Prediction> preds(data.matrix.rows);
  parallel_for(data.matrix.rows, threads,
               [&](std::size_t i) { preds[i] = predict(model, data.matrix.row(i)); });
  std::ostringstream csv;
  csv << "row,label,class,probability\r\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    char prob[32];
    std::snprintf(prob, sizeof(prob), "%.9g", preds[i].probabilities[preds[i].label]);
    csv << i << ',' << preds[i].label << ',' << csv_field(model.class_index.name(preds[i].label))
        << ',' << prob << "\r\n";
  }
  if (f.out.empty()) {
    out << csv.str();
  } else {
    write_text(f.out, csv.str());
  }
  return kOk;
}

struct PruneFlags {
  std::string model;
  std::string out;
  std::size_t keep = 10;
  bool rescale = false;
};

int cmd_prune(const PruneFlags& f, std::ostream& out) {
  CheckpointMeta meta;
  const auto model = read_checkpoint(f.model, &meta);
  const auto pruned = prune(model, f.keep, f.rescale);
  write_checkpoint(f.out, pruned, meta);
  out << "pruned K=" << model.prompts << " -> " << pruned.prompts << (f.rescale ? " (rescaled)" : "")
      << "; wrote " << f.out << "\n";
  return kOk;
}

struct GradCheckFlags {
  std::uint64_t seed = 0;
  std::size_t classes = 4;
  std::size_t prompts = 3;
  std::size_t dim = 8;
  std::size_t batch = 8;
  double lambda = 3.0;
  double h = 1e-3;
  float tau = 1.0f;
  std::string scope = "all_classes_mean";
};

inline constexpr double kGradCheckTolerance = 1e-5;

int cmd_gradcheck(const GradCheckFlags& f, unsigned threads, std::ostream& out) {
  const auto inst = make_gradcheck_instance(f.seed, f.classes, f.prompts, f.dim, f.batch, f.tau);
  const ObjectiveOptions opts{f.lambda, parse_pc_scope(f.scope), threads};
  const auto r = finite_diff_check(inst.model, inst.batch, inst.labels, opts, f.h);
  const bool ok = r.max_rel_error <= kGradCheckTolerance;
  out << std::scientific << std::setprecision(3) << "max relative error " << r.max_rel_error
      << " (max abs " << r.max_abs_error << ", tolerance " << kGradCheckTolerance << ") "
      << (ok ? "OK" : "FAIL") << "\n";
  return ok ? kOk : kInternal;
}

struct AblateFlags {
  std::string train;
  std::string test;
  std::string prompts;
  std::string prompt_embeddings;
  std::string out;
  TrainFlags tf;
};

int cmd_ablate(AblateFlags& f, unsigned threads, std::ostream& out) {
  finish_train_config(f.tf, threads);
  const auto bank = read_prompt_bank(f.prompts);
  const auto pe_path = f.prompt_embeddings.empty() ? default_prompt_embeddings(f.prompts)
                                                   : f.prompt_embeddings;
  const auto prompts = load_prompt_tensor(bank, pe_path);
  const auto train_data = load_labeled(f.train);
  const auto test_data = load_labeled(f.test);
  const auto rows = ablation_run(train_data.matrix, *train_data.labels, test_data.matrix,
                                 *test_data.labels, prompts, f.tf.cfg);
  const fs::path dir(f.out);
  fs::create_directories(dir);
  write_text(dir / "ablation.csv", ablation_csv(rows));
  ordered_json j;
  j["flags"] = {{"command", "ablate"},
                {"train", f.train},
                {"test", f.test},
                {"prompts", f.prompts},
                {"prompt_embeddings", pe_path},
                {"config", ordered_json::parse(f.tf.cfg.to_json())}};
  j["rows"] = ordered_json::parse(ablation_json(rows));
  write_text(dir / "ablation.json", j.dump(2) + "\n");
  out << "row  FT LE CP PW  accuracy\n";
  for (const auto& r : rows) {
    out << std::setw(3) << r.row << "   " << (r.fine_tuning ? 'x' : '.') << "  "
        << (r.logits_ensemble ? 'x' : '.') << "  " << (r.cluster_preserving ? 'x' : '.') << "  "
        << (r.prompt_weighting ? 'x' : '.') << "  " << std::fixed << std::setprecision(4)
        << r.accuracy << "\n";
  }
  return kOk;
}

struct InspectFlags {
  std::string model;
  std::string attention_csv;
};

int cmd_inspect(const InspectFlags& f, std::ostream& out) {
  CheckpointMeta meta;
  const auto model = read_checkpoint(f.model, &meta);
  double mn = model.alpha.front();
  double mx = mn;
  double sum = 0.0;
  for (float a : model.alpha) {
    mn = std::min<double>(mn, a);
    mx = std::max<double>(mx, a);
    sum += a;
  }
  const double mean = sum / static_cast<double>(model.alpha.size());
  double var = 0.0;
  for (float a : model.alpha) var += (a - mean) * (a - mean);
  var /= static_cast<double>(model.alpha.size());
  out << "Y " << model.classes << "\nK " << model.prompts << "\nD " << model.dim << "\ntau "
      << model.tau << "\n"
      << std::setprecision(6) << "alpha min " << mn << " max " << mx << " mean " << mean
      << " std " << std::sqrt(var) << "\n";
  const auto div = prototype_diversity(model);
  if (div.applicable) out << "mean prototype cosine " << div.global_mean << "\n";
  out << "digest " << hex64(model_digest(model)) << "\n";
  if (!meta.history_digest.empty()) out << "history digest " << meta.history_digest << "\n";
  out << "train config " << meta.train_config_json << "\n";
  if (!f.attention_csv.empty()) attention_export(model, f.attention_csv);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cluster-aware prompt ensemble training and evaluation", "capel"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = default_threads();
  app.add_option("--threads", threads, "worker threads (env CAPEL_THREADS)")
      ->check(CLI::PositiveNumber);

  SynthFlags synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic multi-cluster instance");
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--seed", synth.cfg.seed)->capture_default_str();
  c_synth->add_option("--y", synth.cfg.classes, "classes")->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--m", synth.cfg.clusters, "clusters per class")->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--k", synth.cfg.prompts, "prompts per class")->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--d", synth.cfg.dim, "dimension (>= 8)")->check(CLI::Range(8, 1 << 20))->capture_default_str();
  c_synth->add_option("--n-train", synth.cfg.train_per_class)->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--n-test", synth.cfg.test_per_class)->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--sigma-sample", synth.cfg.sigma_sample)->check(CLI::NonNegativeNumber)->capture_default_str();
  c_synth->add_option("--sigma-prompt", synth.cfg.sigma_prompt)->check(CLI::NonNegativeNumber)->capture_default_str();
  c_synth->add_option("--flawed", synth.cfg.flawed_per_class, "flawed prompts per class")->capture_default_str();
  c_synth->add_option("--flaw-mode", synth.flaw_mode)
      ->check(CLI::IsMember({"wrong_class", "random"}))
      ->capture_default_str();

  TrainFlags trainf;
  auto* c_train = app.add_subcommand("train", "fine-tune sub-classifiers and attention");
  c_train->add_option("--embeddings", trainf.embeddings, "labeled training embeddings (.cape)")->required();
  c_train->add_option("--prompts", trainf.prompts, "prompt bank JSON")->required();
  c_train->add_option("--prompt-embeddings", trainf.prompt_embeddings,
                      "Y·K prompt embedding rows (default: bank path with .cape)");
  c_train->add_option("--out", trainf.out, "checkpoint path (.capc)")->required();
  c_train->add_option("--history", trainf.history, "history JSON (default: <out>.history.json)");
  add_train_config_flags(c_train, trainf);

  EvalFlags evalf;
  auto* c_eval = app.add_subcommand("eval", "top-1 accuracy on labeled embeddings");
  c_eval->add_option("--model", evalf.model)->required();
  c_eval->add_option("--embeddings", evalf.embeddings)->required();
  c_eval->add_option("--report", evalf.report, "write the JSON report here");
  c_eval->add_option("--attention-csv", evalf.attention_csv, "also export the attention matrix");

  PredictFlags predf;
  auto* c_predict = app.add_subcommand("predict", "per-row predicted labels as CSV");
  c_predict->add_option("--model", predf.model)->required();
  c_predict->add_option("--embeddings", predf.embeddings)->required();
  c_predict->add_option("--out", predf.out, "CSV path (default: stdout)");

  PruneFlags prunef;
  auto* c_prune = app.add_subcommand("prune", "keep the top-m attention heads per class");
  c_prune->add_option("--model", prunef.model)->required();
  c_prune->add_option("--keep", prunef.keep, "heads kept per class")->required()->check(CLI::PositiveNumber);
  c_prune->add_option("--out", prunef.out)->required();
  c_prune->add_flag("--rescale", prunef.rescale, "preserve each class's attention mass");

  GradCheckFlags gcf;
  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference check of the analytic gradients");
  c_grad->set_help_flag("--help", "print this help message and exit");
  c_grad->add_option("--seed", gcf.seed)->capture_default_str();
  c_grad->add_option("--y", gcf.classes)->check(CLI::PositiveNumber)->capture_default_str();
  c_grad->add_option("--k", gcf.prompts)->check(CLI::PositiveNumber)->capture_default_str();
  c_grad->add_option("--d", gcf.dim)->check(CLI::PositiveNumber)->capture_default_str();
  c_grad->add_option("--b", gcf.batch, "batch size")->check(CLI::PositiveNumber)->capture_default_str();
  c_grad->add_option("--lambda", gcf.lambda)->check(CLI::NonNegativeNumber)->capture_default_str();
  c_grad->add_option("--h", gcf.h, "central-difference step")->check(CLI::Range(1e-5, 1e-2))->capture_default_str();
  c_grad->add_option("--tau", gcf.tau)->check(CLI::PositiveNumber)->capture_default_str();
  c_grad->add_option("--scope", gcf.scope)
      ->check(CLI::IsMember({"all_classes_mean", "all_classes_sum", "true_class_only"}))
      ->capture_default_str();

  AblateFlags ablf;
  auto* c_ablate = app.add_subcommand("ablate", "seven-row component ablation");
  c_ablate->add_option("--train", ablf.train)->required();
  c_ablate->add_option("--test", ablf.test)->required();
  c_ablate->add_option("--prompts", ablf.prompts)->required();
  c_ablate->add_option("--prompt-embeddings", ablf.prompt_embeddings);
  c_ablate->add_option("--out", ablf.out, "output directory")->required();
  add_train_config_flags(c_ablate, ablf.tf);

  InspectFlags inspf;
  auto* c_inspect = app.add_subcommand("inspect", "print checkpoint summary (read-only)");
  c_inspect->add_option("--model", inspf.model)->required();
  c_inspect->add_option("--attention-csv", inspf.attention_csv);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    if (app.get_subcommands().empty()) {
      err << "commands: synth, train, eval, predict, prune, gradcheck, ablate, inspect\n";
    }
    return kUsage;
  }

  try {
    if (c_synth->parsed()) return cmd_synth(synth, out);
    if (c_train->parsed()) return cmd_train(trainf, threads, out);
    if (c_eval->parsed()) return cmd_eval(evalf, threads, out);
    if (c_predict->parsed()) return cmd_predict(predf, threads, out);
    if (c_prune->parsed()) return cmd_prune(prunef, out);
    if (c_grad->parsed()) return cmd_gradcheck(gcf, threads, out);
    if (c_ablate->parsed()) return cmd_ablate(ablf, threads, out);
    if (c_inspect->parsed()) return cmd_inspect(inspf, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::Internal ? kInternal : kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  err << "usage error: no command\n";
  return kUsage;
}

}  // namespace capel::cli
