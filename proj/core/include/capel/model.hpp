#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "capel/tensor.hpp"

namespace capel {

inline constexpr float kDefaultTau = 100.0f;

/// Y×K×D block of prompt embeddings, class-major then prompt-major.
struct PromptTensor {
  std::size_t classes = 0;
  std::size_t prompts = 0;
  std::size_t dim = 0;
  std::vector<float> data;

  PromptTensor() = default;
  PromptTensor(std::size_t y, std::size_t k, std::size_t d)
      : classes(y), prompts(k), dim(d), data(y * k * d, 0.0f) {}

  std::span<float> vec(std::size_t y, std::size_t k) {
    return {data.data() + (y * prompts + k) * dim, dim};
  }
  std::span<const float> vec(std::size_t y, std::size_t k) const {
    return {data.data() + (y * prompts + k) * dim, dim};
  }
};

enum class AlphaInit { UniformOverK, Ones };

/// Bank of per-class sub-classifiers with a per-(class, prompt) attention
/// weight. A class score is Σ_k alpha[y,k] · tau · cos(x, w[y,k]).
///
/// alpha is unconstrained (no simplex projection). tau is fixed, not trained.
struct CapelModel {
  std::size_t classes = 0;
  std::size_t prompts = 0;
  std::size_t dim = 0;
  float tau = kDefaultTau;
  std::vector<float> weights;  // Y×K×D
  std::vector<float> alpha;    // Y×K
  ClassIndex class_index;

  std::span<float> w(std::size_t y, std::size_t k) {
    return {weights.data() + (y * prompts + k) * dim, dim};
  }
  std::span<const float> w(std::size_t y, std::size_t k) const {
    return {weights.data() + (y * prompts + k) * dim, dim};
  }
  float& a(std::size_t y, std::size_t k) { return alpha[y * prompts + k]; }
  float a(std::size_t y, std::size_t k) const { return alpha[y * prompts + k]; }

  /// Throws DimMismatch / InvalidArgument when sizes, tau or alpha are invalid.
  void validate() const;
};

/// Per-sample Y×K matrix of tau-scaled cosines.
struct LogitsTensor {
  std::size_t classes = 0;
  std::size_t prompts = 0;
  std::vector<double> z;

  double at(std::size_t y, std::size_t k) const { return z[y * prompts + k]; }
  std::span<const double> row(std::size_t y) const { return {z.data() + y * prompts, prompts}; }
};

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probabilities;
};

/// Normalizes every prompt embedding into a sub-classifier. alpha is 1/K
/// (default; untrained scores equal the plain logit average) or 1.
/// `classes` may be empty, in which case class0..class{Y-1} are used.
/// ZeroNorm names the offending (y, k).
CapelModel init_model(const PromptTensor& prompts, float tau = kDefaultTau,
                      AlphaInit alpha_init = AlphaInit::UniformOverK, ClassIndex classes = {});

/// Z[y,k] = tau · cos(x, w[y,k]). x must be unit-norm within 1e-3; w is
/// renormalized on every call since training moves it off the sphere.
LogitsTensor sub_logits(const CapelModel& model, std::span<const float> x);

/// s_y = Σ_k alpha[y,k] · Z[y,k].
std::vector<double> class_scores(const CapelModel& model, const LogitsTensor& logits);

/// softmax over class scores; label is the argmax, lowest index on ties.
Prediction predict(const CapelModel& model, std::span<const float> x);

/// Keeps the m sub-classifiers per class with the largest alpha (ties to the
/// lower k), preserving their original order. With rescale, retained alpha
/// is multiplied by Σ_all alpha / Σ_kept alpha per class.
CapelModel prune(const CapelModel& model, std::size_t keep, bool rescale = false);
std::vector<std::vector<std::size_t>> prune_selection(const CapelModel& model, std::size_t keep);

/// w̄_y = normalize(mean_k w[y,k]); Y×D.
EmbeddingMatrix feature_average_classifier(const PromptTensor& prompts);

/// Single-prompt model (K = 1, alpha = 1) over the feature-averaged heads.
CapelModel feature_average_model(const PromptTensor& prompts, float tau = kDefaultTau,
                                 ClassIndex classes = {});

/// The single-vector-per-class zero-shot rule: s_y = tau · cos(x, head_y).
std::vector<double> zero_shot_scores(const EmbeddingMatrix& heads, float tau,
                                     std::span<const float> x);
Prediction zero_shot_predict(const EmbeddingMatrix& heads, float tau, std::span<const float> x);

/// FNV-1a over the dimensions, tau, W and alpha bytes.
std::uint64_t model_digest(const CapelModel& model);

}  // namespace capel
