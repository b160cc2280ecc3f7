#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capel/model.hpp"
#include "capel/objective.hpp"
#include "capel/tensor.hpp"
#include "capel/trainer.hpp"

namespace capel {

struct EvalReport {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;  // NaN-free; classes without samples report 0
  std::vector<std::size_t> per_class_count;
  std::size_t n_test = 0;
  std::uint64_t model_digest = 0;
  std::string config_json = "{}";

  std::string to_json() const;
};

/// Top-1 accuracy of predict() against y. Throws EmptyTestSet.
EvalReport accuracy(const CapelModel& model, const EmbeddingMatrix& x,
                    std::span<const std::uint32_t> y, unsigned threads = 1);

struct DiversityReport {
  bool applicable = false;  // false when K < 2
  std::vector<double> per_class;
  double global_mean = 0.0;
};

/// Mean pairwise cosine among each class's normalized sub-classifier
/// directions. Values near 1 mean the prototypes have collapsed.
DiversityReport prototype_diversity(const CapelModel& model);

/// The cluster-preserving loss of the model on (x, labels), exposed as a
/// metric. Same code path as cluster_preserving_loss.
double empirical_conditional_entropy(const CapelModel& model, const EmbeddingMatrix& x,
                                     std::span<const std::uint32_t> labels, PcScope scope);

struct AblationRow {
  int row = 0;
  bool fine_tuning = false;
  bool logits_ensemble = false;
  bool cluster_preserving = false;
  bool prompt_weighting = false;
  double accuracy = 0.0;
};

/// The seven component combinations:
///   1 zero-shot feature average     5 row 4 + cluster-preserving term
///   2 zero-shot logit average       6 row 4 + trained attention
///   3 fine-tuned feature average    7 everything
///   4 fine-tuned logit ensemble (alpha frozen, lambda 0)
/// Zero-shot rows go through train() with epochs = 0. base_cfg.lambda is the
/// weight used by rows 5 and 7 and must be > 0.
std::vector<AblationRow> ablation_run(const EmbeddingMatrix& x_train,
                                      std::span<const std::uint32_t> y_train,
                                      const EmbeddingMatrix& x_test,
                                      std::span<const std::uint32_t> y_test,
                                      const PromptTensor& prompts, const TrainConfig& base_cfg);

std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_json(const std::vector<AblationRow>& rows);

/// RFC-4180 CSV, header "class,k0,...,k{K-1}", one row of alpha per class.
std::string attention_csv(const CapelModel& model);
void attention_export(const CapelModel& model, const std::filesystem::path& path);

struct FlawSeparation {
  std::vector<std::optional<double>> mean_flawed;  // nullopt: class has no flawed prompt
  std::vector<std::optional<double>> mean_clean;
  std::optional<double> fraction_clean_above;       // nullopt: no class has a flawed prompt
};

/// mask is Y×K (non-zero = flawed). Throws DimMismatch.
FlawSeparation flaw_separation(const CapelModel& model, std::span<const std::uint8_t> flaw_mask);

/// Minimal RFC-4180 field quoting.
std::string csv_field(const std::string& text);

}  // namespace capel
