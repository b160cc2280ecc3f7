#pragma once

// Scalar kernels shared by every other module. Storage is binary32; every
// reduction (dot products, norms, log-sum-exp, entropy) accumulates in
// binary64. Logarithms are natural.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace capel {

inline constexpr double kNormEpsilon = 1e-8;

double dot(std::span<const float> a, std::span<const float> b);
double l2_norm(std::span<const float> v);

/// Unit-length copy of `v`. Throws ZeroNorm when ‖v‖ ≤ kNormEpsilon and
/// NonFinite on NaN/Inf entries.
std::vector<float> l2_normalize(std::span<const float> v);

/// Cosine similarity, clamped to [-1, 1]. Both inputs are normalized
/// explicitly, so neither needs to be unit length.
double cosine(std::span<const float> a, std::span<const float> b);

/// Max-shifted log-softmax. Rejects non-finite input.
std::vector<double> log_softmax(std::span<const double> logits);
void log_softmax_into(std::span<const double> logits, std::span<double> out);

/// Softmax entropy -Σ p log p of a logit vector, in nats. Lies in [0, ln n].
double entropy_from_logits(std::span<const double> logits);

/// Gradient of entropy_from_logits with respect to the logits:
/// ∂H/∂z_j = -q_j (log q_j + H). Returns H.
double entropy_with_gradient(std::span<const double> logits, std::span<double> grad);

/// Index of the largest element; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> v);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// visited exactly once; callers own the reduction order.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace capel
