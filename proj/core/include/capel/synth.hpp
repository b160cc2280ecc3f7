#pragma once

// Seeded multi-cluster classification instances on the unit sphere.
//
// Each class owns M cluster centers (uniform on the sphere, pairwise
// within-class cosine < 0.8 by rejection). Samples and prompts are centers
// perturbed by i.i.d. N(0, σ²) coordinates and renormalized. Clean prompt j
// of a class sits on center j mod M; flawed prompts are either a noisy
// center of another class or a uniformly random direction.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "capel/model.hpp"
#include "capel/tensor.hpp"

namespace capel {

enum class FlawMode { WrongClass, Random };

std::string_view to_string(FlawMode mode);
FlawMode parse_flaw_mode(std::string_view text);

struct SynthConfig {
  std::size_t classes = 10;
  std::size_t clusters = 4;
  std::size_t prompts = 4;
  std::size_t dim = 64;
  std::size_t train_per_class = 64;
  std::size_t test_per_class = 128;
  double sigma_sample = 0.15;
  double sigma_prompt = 0.10;
  std::size_t flawed_per_class = 0;
  FlawMode flaw_mode = FlawMode::WrongClass;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
};

inline constexpr double kMaxCenterCosine = 0.8;
inline constexpr std::size_t kMaxCenterDraws = 10000;

struct SynthSplit {
  EmbeddingMatrix x;
  LabelVector y;
  std::vector<std::uint32_t> cluster;  // cluster of the generating center
};

struct SynthInstance {
  SynthConfig config;
  SynthSplit train;
  SynthSplit test;
  PromptTensor prompts;
  EmbeddingMatrix centers;          // (Y·M)×D, class-major
  std::vector<std::uint8_t> flaw_mask;  // Y×K
  std::vector<int> prompt_cluster;      // Y×K; -1 for flawed prompts

  bool flawed(std::size_t y, std::size_t k) const { return flaw_mask[y * config.prompts + k] != 0; }
};

/// Throws RejectionExhausted if some class cannot place its M centers within
/// 10⁴ draws, InvalidArgument for D < 8 or invalid counts.
SynthInstance generate(const SynthConfig& cfg);

/// JSON manifest: config, cluster assignments, flaw mask, prompt clusters.
std::string synth_manifest_json(const SynthInstance& instance);

}  // namespace capel
