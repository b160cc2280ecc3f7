#include "capel/evalsuite.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "capel/datastore.hpp"
#include "capel/error.hpp"
#include "capel/numerics.hpp"
#include "json.hpp"

namespace capel {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

}  // namespace

std::string EvalReport::to_json() const {
  ordered_json j;
  j["accuracy"] = accuracy;
  j["n_test"] = n_test;
  j["per_class_accuracy"] = per_class_accuracy;
  j["per_class_count"] = per_class_count;
  char digest[17];
  std::snprintf(digest, sizeof(digest), "%016llx", static_cast<unsigned long long>(model_digest));
  j["model_digest"] = digest;
  j["config"] = ordered_json::parse(config_json);
  return j.dump(2);
}

EvalReport accuracy(const CapelModel& model, const EmbeddingMatrix& x,
                    std::span<const std::uint32_t> y, unsigned threads) {
  if (x.rows == 0) throw Error(ErrorCode::EmptyTestSet, "no test samples");
  if (y.size() != x.rows) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(y.size()) + " labels for " +
                                               std::to_string(x.rows) + " rows");
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= model.classes) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(y[i]) + " at row " +
                                                  std::to_string(i));
    }
  }
  std::vector<std::uint8_t> hit(x.rows, 0);
  parallel_for(x.rows, threads, [&](std::size_t i) {
    hit[i] = predict(model, x.row(i)).label == y[i] ? 1 : 0;
  });
  EvalReport r;
  r.n_test = x.rows;
  r.per_class_count.assign(model.classes, 0);
  std::vector<std::size_t> class_hits(model.classes, 0);
  std::size_t total = 0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    ++r.per_class_count[y[i]];
    class_hits[y[i]] += hit[i];
    total += hit[i];
  }
  r.accuracy = static_cast<double>(total) / static_cast<double>(x.rows);
  r.per_class_accuracy.resize(model.classes, 0.0);
  for (std::size_t c = 0; c < model.classes; ++c) {
    if (r.per_class_count[c] > 0) {
      r.per_class_accuracy[c] =
          static_cast<double>(class_hits[c]) / static_cast<double>(r.per_class_count[c]);
    }
  }
  r.model_digest = model_digest(model);
  return r;
}

DiversityReport prototype_diversity(const CapelModel& model) {
  DiversityReport r;
  if (model.prompts < 2) return r;
  r.applicable = true;
  r.per_class.resize(model.classes);
  double sum = 0.0;
  for (std::size_t y = 0; y < model.classes; ++y) {
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t j = 0; j < model.prompts; ++j) {
      for (std::size_t k = j + 1; k < model.prompts; ++k) {
        acc += cosine(model.w(y, j), model.w(y, k));
        ++pairs;
      }
    }
    r.per_class[y] = acc / static_cast<double>(pairs);
    sum += r.per_class[y];
  }
  r.global_mean = sum / static_cast<double>(model.classes);
  return r;
}

double empirical_conditional_entropy(const CapelModel& model, const EmbeddingMatrix& x,
                                     std::span<const std::uint32_t> labels, PcScope scope) {
  return cluster_preserving_loss(batch_logits(model, x), scope, labels);
}

std::vector<AblationRow> ablation_run(const EmbeddingMatrix& x_train,
                                      std::span<const std::uint32_t> y_train,
                                      const EmbeddingMatrix& x_test,
                                      std::span<const std::uint32_t> y_test,
                                      const PromptTensor& prompts, const TrainConfig& base_cfg) {
  base_cfg.validate();
  if (!(base_cfg.lambda > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "ablation needs lambda > 0 for the regularized rows");
  }
  struct Spec {
    bool fine_tuning, logits_ensemble, cluster_preserving, prompt_weighting;
  };
  const Spec specs[7] = {
      {false, false, false, false}, {false, true, false, false}, {true, false, false, false},
      {true, true, false, false},   {true, true, true, false},   {true, true, false, true},
      {true, true, true, true},
  };
  std::vector<AblationRow> rows(7);
  // Rows are independent; run them side by side with single-threaded inner
  // training so every row is identical to a sequential run.
  parallel_for(7, base_cfg.threads, [&](std::size_t r) {
    const Spec& s = specs[r];
    TrainConfig cfg = base_cfg;
    cfg.threads = 1;
    cfg.epochs = s.fine_tuning ? base_cfg.epochs : 0;
    cfg.lambda = s.cluster_preserving ? base_cfg.lambda : 0.0;
    cfg.freeze_alpha = !s.prompt_weighting;
    cfg.freeze_weights = false;
    CapelModel model = s.logits_ensemble ? init_model(prompts, cfg.tau, cfg.alpha_init)
                                         : feature_average_model(prompts, cfg.tau);
    auto trained = train(std::move(model), x_train, y_train, cfg);
    rows[r] = AblationRow{static_cast<int>(r + 1), s.fine_tuning, s.logits_ensemble,
                          s.cluster_preserving, s.prompt_weighting,
                          accuracy(trained.model, x_test, y_test).accuracy};
  });
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "row,fine_tuning,logits_ensemble,cluster_preserving,prompt_weighting,accuracy\r\n";
  for (const auto& r : rows) {
    char acc[32];
    std::snprintf(acc, sizeof(acc), "%.6f", r.accuracy);
    out << r.row << ',' << r.fine_tuning << ',' << r.logits_ensemble << ','
        << r.cluster_preserving << ',' << r.prompt_weighting << ',' << acc << "\r\n";
  }
  return out.str();
}

std::string ablation_json(const std::vector<AblationRow>& rows) {
  ordered_json j = ordered_json::array();
  for (const auto& r : rows) {
    j.push_back({{"row", r.row},
                 {"fine_tuning", r.fine_tuning},
                 {"logits_ensemble", r.logits_ensemble},
                 {"cluster_preserving", r.cluster_preserving},
                 {"prompt_weighting", r.prompt_weighting},
                 {"accuracy", r.accuracy}});
  }
  return j.dump(2);
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\r\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string attention_csv(const CapelModel& model) {
  std::ostringstream out;
  out << "class";
  for (std::size_t k = 0; k < model.prompts; ++k) out << ",k" << k;
  out << "\r\n";
  for (std::size_t y = 0; y < model.classes; ++y) {
    out << csv_field(model.class_index.name(y));
    for (std::size_t k = 0; k < model.prompts; ++k) out << ',' << format_float(model.a(y, k));
    out << "\r\n";
  }
  return out.str();
}

void attention_export(const CapelModel& model, const std::filesystem::path& path) {
  write_text(path, attention_csv(model));
}

FlawSeparation flaw_separation(const CapelModel& model, std::span<const std::uint8_t> flaw_mask) {
  if (flaw_mask.size() != model.classes * model.prompts) {
    throw Error(ErrorCode::DimMismatch, "flaw mask has " + std::to_string(flaw_mask.size()) +
                                            " entries, model has Y·K = " +
                                            std::to_string(model.classes * model.prompts));
  }
  FlawSeparation out;
  out.mean_flawed.resize(model.classes);
  out.mean_clean.resize(model.classes);
  std::size_t eligible = 0;
  std::size_t separated = 0;
  for (std::size_t y = 0; y < model.classes; ++y) {
    double flawed = 0.0;
    double clean = 0.0;
    std::size_t n_flawed = 0;
    std::size_t n_clean = 0;
    for (std::size_t k = 0; k < model.prompts; ++k) {
      if (flaw_mask[y * model.prompts + k]) {
        flawed += model.a(y, k);
        ++n_flawed;
      } else {
        clean += model.a(y, k);
        ++n_clean;
      }
    }
    if (n_flawed) out.mean_flawed[y] = flawed / static_cast<double>(n_flawed);
    if (n_clean) out.mean_clean[y] = clean / static_cast<double>(n_clean);
    if (n_flawed && n_clean) {
      ++eligible;
      if (*out.mean_clean[y] > *out.mean_flawed[y]) ++separated;
    }
  }
  if (eligible) out.fraction_clean_above = static_cast<double>(separated) / static_cast<double>(eligible);
  return out;
}

}  // namespace capel
