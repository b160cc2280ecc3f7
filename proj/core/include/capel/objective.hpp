#pragma once

// Training objective: attention-weighted cross-entropy over class scores
// plus lambda times the within-class prompt entropy (cluster-preserving
// term), with analytic gradients for W and alpha.
//
// Both terms are means over the batch. The entropy term consumes raw
// logits Z, never alpha-weighted ones.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "capel/model.hpp"
#include "capel/tensor.hpp"

namespace capel {

enum class PcScope {
  AllClassesMean,  // (1/B) Σ_i (1/Y) Σ_y H(Z_i[y,:])
  AllClassesSum,   // (1/B) Σ_i Σ_y H(Z_i[y,:])
  TrueClassOnly,   // (1/B) Σ_i H(Z_i[label_i,:])
};

std::string_view to_string(PcScope scope);
/// Accepts "all_classes_mean", "all_classes_sum", "true_class_only".
PcScope parse_pc_scope(std::string_view text);

struct LossBreakdown {
  double ce = 0.0;
  double pc = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

struct Gradients {
  std::vector<float> d_weights;  // Y×K×D
  std::vector<float> d_alpha;    // Y×K
};

/// Logits of a batch, B×Y×K.
struct BatchLogits {
  std::size_t batch = 0;
  std::size_t classes = 0;
  std::size_t prompts = 0;
  std::vector<double> z;

  std::span<const double> row(std::size_t i, std::size_t y) const {
    return {z.data() + (i * classes + y) * prompts, prompts};
  }
};

BatchLogits batch_logits(const CapelModel& model, const EmbeddingMatrix& batch);

/// Mean over the batch of -log softmax(Σ_k alpha·Z)[label].
double cross_entropy_weighted(const BatchLogits& logits, std::span<const float> alpha,
                              std::span<const std::uint32_t> labels);

/// Mean within-class prompt entropy. `labels` may be empty unless scope is
/// TrueClassOnly (MissingLabels).
double cluster_preserving_loss(const BatchLogits& logits, PcScope scope,
                               std::span<const std::uint32_t> labels = {});

struct ObjectiveOptions {
  double lambda = 3.0;
  PcScope scope = PcScope::AllClassesMean;
  unsigned threads = 1;
};

LossBreakdown overall_loss(const CapelModel& model, const EmbeddingMatrix& batch,
                           std::span<const std::uint32_t> labels, const ObjectiveOptions& opts);

struct LossAndGradients {
  LossBreakdown loss;
  Gradients grads;
  std::size_t correct = 0;  // samples whose argmax class score equals the label
};

/// Analytic gradients. Per-sample work may run on opts.threads workers; every
/// reduction runs in ascending sample order, so the result is bit-identical
/// for any thread count.
LossAndGradients gradients(const CapelModel& model, const EmbeddingMatrix& batch,
                           std::span<const std::uint32_t> labels, const ObjectiveOptions& opts);

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;  // flat index over [W..., alpha...]
};

/// Central differences (f(θ+h) - f(θ-h)) / 2h of overall_loss in binary64 over
/// every W and alpha coordinate, compared against the analytic gradient.
/// Relative error is |a - n| / max(1e-8, |a|, |n|).
GradCheckResult finite_diff_check(const CapelModel& model, const EmbeddingMatrix& batch,
                                  std::span<const std::uint32_t> labels,
                                  const ObjectiveOptions& opts, double h);

namespace detail {

/// Model parameters widened to binary64; the objective's internal domain.
struct Params64 {
  std::size_t classes = 0;
  std::size_t prompts = 0;
  std::size_t dim = 0;
  double tau = 0.0;
  std::vector<double> weights;
  std::vector<double> alpha;

  static Params64 from(const CapelModel& model);
};

struct Grad64 {
  std::vector<double> d_weights;
  std::vector<double> d_alpha;
};

/// Loss and (optionally) gradients on binary64 parameters.
LossBreakdown evaluate(const Params64& params, const EmbeddingMatrix& batch,
                       std::span<const std::uint32_t> labels, const ObjectiveOptions& opts,
                       Grad64* grads, std::size_t* correct = nullptr);

}  // namespace detail

}  // namespace capel
