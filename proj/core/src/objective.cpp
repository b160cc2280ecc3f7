#include "capel/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "capel/error.hpp"
#include "capel/numerics.hpp"

namespace capel {

std::string_view to_string(PcScope scope) {
  switch (scope) {
    case PcScope::AllClassesMean: return "all_classes_mean";
    case PcScope::AllClassesSum: return "all_classes_sum";
    case PcScope::TrueClassOnly: return "true_class_only";
  }
  return "all_classes_mean";
}

PcScope parse_pc_scope(std::string_view text) {
  if (text == "all_classes_mean") return PcScope::AllClassesMean;
  if (text == "all_classes_sum") return PcScope::AllClassesSum;
  if (text == "true_class_only") return PcScope::TrueClassOnly;
  throw Error(ErrorCode::InvalidArgument, "unknown pc scope '" + std::string(text) + "'");
}

namespace {

void check_labels(std::span<const std::uint32_t> labels, std::size_t batch, std::size_t classes) {
  if (labels.size() != batch) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(labels.size()) + " labels for " +
                                               std::to_string(batch) + " samples");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(labels[i]) + " at sample " +
                                                  std::to_string(i) + " (Y=" +
                                                  std::to_string(classes) + ")");
    }
  }
}

// Weight of one (sample, class) entropy term under `scope`, or 0 when the
// class is out of scope.
double scope_weight(PcScope scope, std::size_t y, std::size_t label, std::size_t classes) {
  switch (scope) {
    case PcScope::AllClassesMean: return 1.0 / static_cast<double>(classes);
    case PcScope::AllClassesSum: return 1.0;
    case PcScope::TrueClassOnly: return y == label ? 1.0 : 0.0;
  }
  return 0.0;
}

}  // namespace

BatchLogits batch_logits(const CapelModel& model, const EmbeddingMatrix& batch) {
  BatchLogits out{batch.rows, model.classes, model.prompts, {}};
  out.z.resize(batch.rows * model.classes * model.prompts);
  for (std::size_t i = 0; i < batch.rows; ++i) {
    const auto z = sub_logits(model, batch.row(i));
    std::copy(z.z.begin(), z.z.end(), out.z.begin() + static_cast<std::ptrdiff_t>(i * z.z.size()));
  }
  return out;
}

double cross_entropy_weighted(const BatchLogits& logits, std::span<const float> alpha,
                              std::span<const std::uint32_t> labels) {
  if (logits.batch == 0) throw Error(ErrorCode::InvalidArgument, "empty batch");
  if (alpha.size() != logits.classes * logits.prompts) {
    throw Error(ErrorCode::DimMismatch, "alpha size does not match logits");
  }
  check_labels(labels, logits.batch, logits.classes);
  std::vector<double> scores(logits.classes);
  std::vector<double> logp(logits.classes);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.batch; ++i) {
    for (std::size_t y = 0; y < logits.classes; ++y) {
      const auto z = logits.row(i, y);
      double s = 0.0;
      for (std::size_t k = 0; k < logits.prompts; ++k) s += alpha[y * logits.prompts + k] * z[k];
      scores[y] = s;
    }
    log_softmax_into(scores, logp);
    total -= logp[labels[i]];
  }
  return total / static_cast<double>(logits.batch);
}

double cluster_preserving_loss(const BatchLogits& logits, PcScope scope,
                               std::span<const std::uint32_t> labels) {
  if (logits.batch == 0) throw Error(ErrorCode::InvalidArgument, "empty batch");
  if (scope == PcScope::TrueClassOnly && labels.empty()) {
    throw Error(ErrorCode::MissingLabels, "true_class_only scope needs labels");
  }
  if (!labels.empty()) check_labels(labels, logits.batch, logits.classes);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.batch; ++i) {
    double sample = 0.0;
    for (std::size_t y = 0; y < logits.classes; ++y) {
      const double weight = scope_weight(scope, y, labels.empty() ? 0 : labels[i], logits.classes);
      if (weight == 0.0) continue;
      sample += weight * entropy_from_logits(logits.row(i, y));
    }
    total += sample;
  }
  return total / static_cast<double>(logits.batch);
}

namespace detail {

Params64 Params64::from(const CapelModel& model) {
  model.validate();
  Params64 p;
  p.classes = model.classes;
  p.prompts = model.prompts;
  p.dim = model.dim;
  p.tau = model.tau;
  p.weights.assign(model.weights.begin(), model.weights.end());
  p.alpha.assign(model.alpha.begin(), model.alpha.end());
  return p;
}

LossBreakdown evaluate(const Params64& params, const EmbeddingMatrix& batch,
                       std::span<const std::uint32_t> labels, const ObjectiveOptions& opts,
                       Grad64* grads, std::size_t* correct) {
  const std::size_t B = batch.rows;
  const std::size_t Y = params.classes;
  const std::size_t K = params.prompts;
  const std::size_t D = params.dim;
  const std::size_t YK = Y * K;
  if (B == 0) throw Error(ErrorCode::InvalidArgument, "empty batch");
  if (batch.dim != D) {
    throw Error(ErrorCode::LengthMismatch, "batch dim " + std::to_string(batch.dim) +
                                               " != model dim " + std::to_string(D));
  }
  if (!(opts.lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  check_labels(labels, B, Y);

  std::vector<double> w_norm(YK);
  for (std::size_t j = 0; j < YK; ++j) {
    const double* w = params.weights.data() + j * D;
    double sq = 0.0;
    for (std::size_t d = 0; d < D; ++d) sq += w[d] * w[d];
    w_norm[j] = std::sqrt(sq);
    if (!(w_norm[j] > kNormEpsilon)) {
      throw Error(ErrorCode::ZeroNorm, "sub-classifier (y=" + std::to_string(j / K) +
                                           ", k=" + std::to_string(j % K) + ") collapsed");
    }
  }

  // Phase 1, per sample: unit input, cosines, per-sample losses and the
  // loss derivative with respect to every logit Z[y,k].
  std::vector<double> x_unit(B * D);
  std::vector<double> cos(B * YK);
  std::vector<double> dz(grads ? B * YK : 0);       // ∂loss_i/∂Z
  std::vector<double> dalpha(grads ? B * YK : 0);   // ∂loss_i/∂alpha
  std::vector<double> ce_i(B);
  std::vector<double> pc_i(B);
  std::vector<std::uint8_t> hit(B, 0);

  parallel_for(B, opts.threads, [&](std::size_t i) {
    const auto x = batch.row(i);
    double* xu = x_unit.data() + i * D;
    double sq = 0.0;
    for (std::size_t d = 0; d < D; ++d) sq += static_cast<double>(x[d]) * x[d];
    const double xn = std::sqrt(sq);
    if (!(xn > kNormEpsilon)) throw Error(ErrorCode::ZeroNorm, "sample " + std::to_string(i));
    for (std::size_t d = 0; d < D; ++d) xu[d] = x[d] / xn;

    double* c = cos.data() + i * YK;
    for (std::size_t j = 0; j < YK; ++j) {
      const double* w = params.weights.data() + j * D;
      double acc = 0.0;
      for (std::size_t d = 0; d < D; ++d) acc += xu[d] * w[d];
      c[j] = acc / w_norm[j];
    }

    std::vector<double> z(K);
    std::vector<double> scores(Y);
    std::vector<double> logp(Y);
    std::vector<double> dh(K);
    for (std::size_t y = 0; y < Y; ++y) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += params.alpha[y * K + k] * (params.tau * c[y * K + k]);
      scores[y] = s;
    }
    log_softmax_into(scores, logp);
    const std::size_t label = labels[i];
    ce_i[i] = -logp[label];
    hit[i] = argmax(scores) == label ? 1 : 0;

    double pc = 0.0;
    for (std::size_t y = 0; y < Y; ++y) {
      const double p_minus = std::exp(logp[y]) - (y == label ? 1.0 : 0.0);
      const double weight = scope_weight(opts.scope, y, label, Y);
      for (std::size_t k = 0; k < K; ++k) z[k] = params.tau * c[y * K + k];
      if (weight != 0.0) {
        double h = 0.0;
        if (grads) {
          h = entropy_with_gradient(z, dh);
        } else {
          h = entropy_from_logits(z);
        }
        pc += weight * h;
      }
      if (!grads) continue;
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t j = i * YK + y * K + k;
        dalpha[j] = p_minus * z[k];
        double g = p_minus * params.alpha[y * K + k];
        if (weight != 0.0 && opts.lambda != 0.0) g += opts.lambda * weight * dh[k];
        dz[j] = g;
      }
    }
    pc_i[i] = pc;
  });

  const double inv_b = 1.0 / static_cast<double>(B);
  LossBreakdown loss;
  loss.lambda = opts.lambda;
  for (std::size_t i = 0; i < B; ++i) {
    loss.ce += ce_i[i];
    loss.pc += pc_i[i];
  }
  loss.ce *= inv_b;
  loss.pc *= inv_b;
  loss.total = loss.ce + opts.lambda * loss.pc;
  if (correct) {
    *correct = 0;
    for (auto h : hit) *correct += h;
  }
  if (!grads) return loss;

  // Phase 2, per sub-classifier, samples in ascending order:
  //   ∂cos/∂w = (x̂ - cos·ŵ) / ‖w‖
  grads->d_weights.assign(YK * D, 0.0);
  grads->d_alpha.assign(YK, 0.0);
  parallel_for(YK, opts.threads, [&](std::size_t j) {
    double da = 0.0;
    double along_w = 0.0;
    double* out = grads->d_weights.data() + j * D;
    for (std::size_t i = 0; i < B; ++i) {
      const std::size_t idx = i * YK + j;
      da += dalpha[idx];
      const double coef = dz[idx] * params.tau;
      along_w += coef * cos[idx];
      const double* xu = x_unit.data() + i * D;
      for (std::size_t d = 0; d < D; ++d) out[d] += coef * xu[d];
    }
    const double* w = params.weights.data() + j * D;
    const double scale = inv_b / w_norm[j];
    for (std::size_t d = 0; d < D; ++d) {
      out[d] = (out[d] - along_w * (w[d] / w_norm[j])) * scale;
    }
    grads->d_alpha[j] = da * inv_b;
  });
  return loss;
}

}  // namespace detail

LossBreakdown overall_loss(const CapelModel& model, const EmbeddingMatrix& batch,
                           std::span<const std::uint32_t> labels, const ObjectiveOptions& opts) {
  return detail::evaluate(detail::Params64::from(model), batch, labels, opts, nullptr);
}

LossAndGradients gradients(const CapelModel& model, const EmbeddingMatrix& batch,
                           std::span<const std::uint32_t> labels, const ObjectiveOptions& opts) {
  detail::Grad64 g;
  LossAndGradients out;
  out.loss = detail::evaluate(detail::Params64::from(model), batch, labels, opts, &g, &out.correct);
  out.grads.d_weights.assign(g.d_weights.begin(), g.d_weights.end());
  out.grads.d_alpha.assign(g.d_alpha.begin(), g.d_alpha.end());
  return out;
}

GradCheckResult finite_diff_check(const CapelModel& model, const EmbeddingMatrix& batch,
                                  std::span<const std::uint32_t> labels,
                                  const ObjectiveOptions& opts, double h) {
  if (!(h >= 1e-5 && h <= 1e-2)) {
    throw Error(ErrorCode::InvalidArgument, "finite-difference step must lie in [1e-5, 1e-2]");
  }
  auto params = detail::Params64::from(model);
  detail::Grad64 analytic;
  detail::evaluate(params, batch, labels, opts, &analytic);

  GradCheckResult result;
  auto probe = [&](double& theta, double a, std::size_t flat) {
    const double saved = theta;
    theta = saved + h;
    const double up = detail::evaluate(params, batch, labels, opts, nullptr).total;
    theta = saved - h;
    const double down = detail::evaluate(params, batch, labels, opts, nullptr).total;
    theta = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double abs_err = std::abs(a - numeric);
    const double rel_err = abs_err / std::max({1e-8, std::abs(a), std::abs(numeric)});
    result.max_abs_error = std::max(result.max_abs_error, abs_err);
    if (rel_err > result.max_rel_error) {
      result.max_rel_error = rel_err;
      result.worst_index = flat;
    }
  };
  for (std::size_t j = 0; j < params.weights.size(); ++j) {
    probe(params.weights[j], analytic.d_weights[j], j);
  }
  for (std::size_t j = 0; j < params.alpha.size(); ++j) {
    probe(params.alpha[j], analytic.d_alpha[j], params.weights.size() + j);
  }
  return result;
}

}  // namespace capel
