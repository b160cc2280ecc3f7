#include "capel/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "capel/error.hpp"
#include "capel/numerics.hpp"
#include "capel/rng.hpp"

namespace capel {

namespace {

constexpr double kInputNormTolerance = 1e-3;

void check_unit(std::span<const float> x, std::size_t dim) {
  if (x.size() != dim) {
    throw Error(ErrorCode::LengthMismatch, "input has dim " + std::to_string(x.size()) +
                                               ", model expects " + std::to_string(dim));
  }
  const double norm = l2_norm(x);
  if (!(std::abs(norm - 1.0) <= kInputNormTolerance)) {
    throw Error(ErrorCode::NormOutOfRange, "input norm " + std::to_string(norm) + " is not 1");
  }
}

Prediction softmax_prediction(const std::vector<double>& scores) {
  Prediction p;
  p.label = argmax(scores);
  p.probabilities = log_softmax(scores);
  for (double& v : p.probabilities) v = std::exp(v);
  return p;
}

}  // namespace

void CapelModel::validate() const {
  if (classes == 0 || prompts == 0 || dim == 0) {
    throw Error(ErrorCode::DimMismatch, "model dimensions must be positive");
  }
  if (weights.size() != classes * prompts * dim || alpha.size() != classes * prompts) {
    throw Error(ErrorCode::DimMismatch, "parameter sizes do not match Y, K, D");
  }
  if (class_index.size() != classes) {
    throw Error(ErrorCode::DimMismatch, "class index has " + std::to_string(class_index.size()) +
                                            " names for " + std::to_string(classes) + " classes");
  }
  if (!(tau > 0.0f) || !std::isfinite(tau)) {
    throw Error(ErrorCode::InvalidArgument, "tau must be positive and finite");
  }
  for (float a : alpha) {
    if (!std::isfinite(a)) throw Error(ErrorCode::NonFinite, "alpha contains a non-finite value");
  }
}

CapelModel init_model(const PromptTensor& prompts, float tau, AlphaInit alpha_init,
                      ClassIndex classes) {
  if (prompts.classes == 0 || prompts.prompts == 0 || prompts.dim == 0 ||
      prompts.data.size() != prompts.classes * prompts.prompts * prompts.dim) {
    throw Error(ErrorCode::DimMismatch, "prompt tensor dimensions are inconsistent");
  }
  CapelModel model;
  model.classes = prompts.classes;
  model.prompts = prompts.prompts;
  model.dim = prompts.dim;
  model.tau = tau;
  model.class_index = classes.size() == 0 ? ClassIndex::numbered(prompts.classes) : std::move(classes);
  model.weights.resize(prompts.data.size());
  for (std::size_t y = 0; y < model.classes; ++y) {
    for (std::size_t k = 0; k < model.prompts; ++k) {
      try {
        auto unit = l2_normalize(prompts.vec(y, k));
        std::copy(unit.begin(), unit.end(), model.w(y, k).begin());
      } catch (const Error& e) {
        throw Error(e.code(), "prompt embedding (y=" + std::to_string(y) + ", k=" +
                                  std::to_string(k) + "): " + e.what());
      }
    }
  }
  const float a0 = alpha_init == AlphaInit::Ones ? 1.0f : 1.0f / static_cast<float>(model.prompts);
  model.alpha.assign(model.classes * model.prompts, a0);
  model.validate();
  return model;
}

LogitsTensor sub_logits(const CapelModel& model, std::span<const float> x) {
  check_unit(x, model.dim);
  LogitsTensor out{model.classes, model.prompts, std::vector<double>(model.classes * model.prompts)};
  const double tau = model.tau;
  for (std::size_t y = 0; y < model.classes; ++y) {
    for (std::size_t k = 0; k < model.prompts; ++k) {
      out.z[y * model.prompts + k] = tau * cosine(x, model.w(y, k));
    }
  }
  return out;
}

std::vector<double> class_scores(const CapelModel& model, const LogitsTensor& logits) {
  if (logits.classes != model.classes || logits.prompts != model.prompts) {
    throw Error(ErrorCode::DimMismatch, "logits shape does not match model");
  }
  std::vector<double> s(model.classes, 0.0);
  for (std::size_t y = 0; y < model.classes; ++y) {
    double acc = 0.0;
    for (std::size_t k = 0; k < model.prompts; ++k) {
      acc += static_cast<double>(model.a(y, k)) * logits.at(y, k);
    }
    s[y] = acc;
  }
  return s;
}

Prediction predict(const CapelModel& model, std::span<const float> x) {
  return softmax_prediction(class_scores(model, sub_logits(model, x)));
}

std::vector<std::vector<std::size_t>> prune_selection(const CapelModel& model, std::size_t keep) {
  if (keep < 1 || keep > model.prompts) {
    throw Error(ErrorCode::InvalidM, "keep=" + std::to_string(keep) + " must lie in [1, " +
                                         std::to_string(model.prompts) + "]");
  }
  std::vector<std::vector<std::size_t>> selection(model.classes);
  for (std::size_t y = 0; y < model.classes; ++y) {
    std::vector<std::size_t> order(model.prompts);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
      return model.a(y, i) > model.a(y, j);
    });
    order.resize(keep);
    std::sort(order.begin(), order.end());
    selection[y] = std::move(order);
  }
  return selection;
}

CapelModel prune(const CapelModel& model, std::size_t keep, bool rescale) {
  model.validate();
  const auto selection = prune_selection(model, keep);
  CapelModel out;
  out.classes = model.classes;
  out.prompts = keep;
  out.dim = model.dim;
  out.tau = model.tau;
  out.class_index = model.class_index;
  out.weights.resize(out.classes * keep * out.dim);
  out.alpha.resize(out.classes * keep);
  for (std::size_t y = 0; y < model.classes; ++y) {
    double total = 0.0;
    double kept = 0.0;
    for (std::size_t k = 0; k < model.prompts; ++k) total += model.a(y, k);
    for (std::size_t k : selection[y]) kept += model.a(y, k);
    const double scale = (rescale && kept != 0.0) ? total / kept : 1.0;
    for (std::size_t j = 0; j < keep; ++j) {
      const std::size_t k = selection[y][j];
      auto src = model.w(y, k);
      std::copy(src.begin(), src.end(), out.w(y, j).begin());
      out.a(y, j) = rescale ? static_cast<float>(model.a(y, k) * scale) : model.a(y, k);
    }
  }
  return out;
}

EmbeddingMatrix feature_average_classifier(const PromptTensor& prompts) {
  EmbeddingMatrix heads(prompts.classes, prompts.dim);
  std::vector<double> mean(prompts.dim);
  std::vector<float> mean_f(prompts.dim);
  for (std::size_t y = 0; y < prompts.classes; ++y) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t k = 0; k < prompts.prompts; ++k) {
      auto unit = l2_normalize(prompts.vec(y, k));
      for (std::size_t d = 0; d < prompts.dim; ++d) mean[d] += unit[d];
    }
    for (std::size_t d = 0; d < prompts.dim; ++d) {
      mean_f[d] = static_cast<float>(mean[d] / static_cast<double>(prompts.prompts));
    }
    try {
      auto unit = l2_normalize(mean_f);
      std::copy(unit.begin(), unit.end(), heads.row(y).begin());
    } catch (const Error& e) {
      throw Error(e.code(), "feature average of class " + std::to_string(y) + " collapsed");
    }
  }
  return heads;
}

CapelModel feature_average_model(const PromptTensor& prompts, float tau, ClassIndex classes) {
  const auto heads = feature_average_classifier(prompts);
  PromptTensor single(prompts.classes, 1, prompts.dim);
  single.data = heads.data;
  return init_model(single, tau, AlphaInit::Ones, std::move(classes));
}

std::vector<double> zero_shot_scores(const EmbeddingMatrix& heads, float tau,
                                     std::span<const float> x) {
  check_unit(x, heads.dim);
  std::vector<double> s(heads.rows);
  const double t = tau;
  for (std::size_t y = 0; y < heads.rows; ++y) s[y] = t * cosine(x, heads.row(y));
  return s;
}

Prediction zero_shot_predict(const EmbeddingMatrix& heads, float tau, std::span<const float> x) {
  return softmax_prediction(zero_shot_scores(heads, tau, x));
}

std::uint64_t model_digest(const CapelModel& model) {
  const std::uint64_t dims[3] = {model.classes, model.prompts, model.dim};
  std::uint64_t h = fnv1a64(std::as_bytes(std::span(dims)));
  h = fnv1a64(std::as_bytes(std::span(&model.tau, 1)), h);
  h = fnv1a64(std::as_bytes(std::span(model.weights)), h);
  return fnv1a64(std::as_bytes(std::span(model.alpha)), h);
}

}  // namespace capel
