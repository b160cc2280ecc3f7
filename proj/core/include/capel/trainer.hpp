#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capel/model.hpp"
#include "capel/objective.hpp"
#include "capel/tensor.hpp"

namespace capel {

struct TrainConfig {
  double lr = 2e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double lambda = 3.0;
  double momentum = 0.0;
  PcScope pc_scope = PcScope::AllClassesMean;
  std::uint64_t seed = 0;
  AlphaInit alpha_init = AlphaInit::UniformOverK;
  float tau = kDefaultTau;
  std::optional<std::size_t> shots;  // nullopt: use every training sample
  bool allow_fewer = false;
  bool freeze_alpha = false;
  bool freeze_weights = false;
  unsigned threads = 1;

  /// Throws InvalidArgument naming the first violated constraint.
  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

std::string_view to_string(AlphaInit mode);
AlphaInit parse_alpha_init(std::string_view text);

struct FewShotSplit {
  std::vector<std::vector<std::size_t>> per_class;  // sorted ascending
  std::size_t shots = 0;
  std::uint64_t seed = 0;

  /// All selected indices, class by class.
  std::vector<std::size_t> flatten() const;
};

/// Per class, `shots` indices drawn without replacement. Every class in
/// [0, num_classes) must appear in labels.
FewShotSplit few_shot_sample(std::span<const std::uint32_t> labels, std::size_t num_classes,
                             std::size_t shots, std::uint64_t seed, bool allow_fewer = false);

struct SgdState {
  std::vector<float> v_weights;
  std::vector<float> v_alpha;
};

/// v ← momentum·v + g; θ ← θ - lr·v, for W and alpha. Frozen groups are
/// left untouched.
void sgd_step(CapelModel& model, const Gradients& grads, double lr, double momentum,
              SgdState& state, bool freeze_alpha = false, bool freeze_weights = false);

struct EpochRecord {
  double ce = 0.0;
  double pc = 0.0;
  double total = 0.0;
  double train_accuracy = 0.0;  // predictions made during the epoch, before each update
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t train_samples = 0;

  /// FNV-1a over the loss and accuracy values (not timings), hex.
  std::string digest() const;
  std::string to_json() const;
};

struct TrainResult {
  CapelModel model;
  TrainHistory history;
};

/// Seeded few-shot selection (when cfg.shots is set), then per epoch: seeded
/// shuffle, batches of cfg.batch_size (last batch kept), gradient + SGD step.
/// Throws Internal on the first non-finite loss.
TrainResult train(CapelModel model, const EmbeddingMatrix& x, std::span<const std::uint32_t> y,
                  const TrainConfig& cfg);

/// Sub-seed tags used by train().
inline constexpr std::string_view kSplitSeedTag = "split";
inline constexpr std::string_view kShuffleSeedTag = "shuffle";

}  // namespace capel
