#include "capel/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>

#include "capel/error.hpp"

namespace capel {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadVersion: return "BadVersion";
    case ErrorCode::BadFlags: return "BadFlags";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::NormOutOfRange: return "NormOutOfRange";
    case ErrorCode::RaggedBank: return "RaggedBank";
    case ErrorCode::EmptyPrompt: return "EmptyPrompt";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidM: return "InvalidM";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::MissingLabels: return "MissingLabels";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::RejectionExhausted: return "RejectionExhausted";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

namespace {

void require_finite(std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, "vector contains a non-finite value");
  }
}

}  // namespace

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double l2_norm(std::span<const float> v) { return std::sqrt(dot(v, v)); }

std::vector<float> l2_normalize(std::span<const float> v) {
  if (v.empty()) throw Error(ErrorCode::InvalidArgument, "cannot normalize an empty vector");
  require_finite(v);
  const double norm = l2_norm(v);
  if (!(norm > kNormEpsilon)) throw Error(ErrorCode::ZeroNorm, "vector norm is below 1e-8");
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  // One pass, three independent sums; each keeps the order dot() uses.
  double aa = 0.0, bb = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    aa += x * x;
    bb += y * y;
    ab += x * y;
  }
  const double na = std::sqrt(aa);
  const double nb = std::sqrt(bb);
  if (!(na > kNormEpsilon) || !(nb > kNormEpsilon)) {
    throw Error(ErrorCode::ZeroNorm, "cosine of a zero-norm vector");
  }
  return std::clamp(ab / (na * nb), -1.0, 1.0);
}

void log_softmax_into(std::span<const double> logits, std::span<double> out) {
  if (logits.empty()) throw Error(ErrorCode::InvalidArgument, "log_softmax of an empty vector");
  double max = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) throw Error(ErrorCode::NonFinite, "logit is not finite");
    max = std::max(max, z);
  }
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - max);
  const double lse = max + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  log_softmax_into(logits, out);
  return out;
}

double entropy_from_logits(std::span<const double> logits) {
  if (logits.size() == 1) {
    if (!std::isfinite(logits[0])) throw Error(ErrorCode::NonFinite, "logit is not finite");
    return 0.0;
  }
  const auto logp = log_softmax(logits);
  double h = 0.0;
  for (double lp : logp) h -= std::exp(lp) * lp;
  // Rounding can push a near-deterministic distribution slightly negative.
  return std::max(h, 0.0);
}

double entropy_with_gradient(std::span<const double> logits, std::span<double> grad) {
  const auto logp = log_softmax(logits);
  double h = 0.0;
  for (double lp : logp) h -= std::exp(lp) * lp;
  for (std::size_t j = 0; j < logp.size(); ++j) {
    const double q = std::exp(logp[j]);
    grad[j] = -q * (logp[j] + h);
  }
  return h;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1u), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace capel
