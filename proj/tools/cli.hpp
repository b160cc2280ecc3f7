#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "capel/model.hpp"
#include "capel/tensor.hpp"

namespace capel::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kInternal = 3,
};

/// Runs one command. args[0] is the program name. Results go to `out` or to
/// files, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker count from CAPEL_THREADS, defaulting to 1.
unsigned default_threads();

/// Random small instance used by `gradcheck`: sub-classifiers with norms in
/// [0.5, 1.5], alpha around 1/K, unit-norm inputs, uniform labels.
struct GradCheckInstance {
  CapelModel model;
  EmbeddingMatrix batch;
  LabelVector labels;
};
GradCheckInstance make_gradcheck_instance(std::uint64_t seed, std::size_t classes,
                                          std::size_t prompts, std::size_t dim, std::size_t batch,
                                          float tau);

}  // namespace capel::cli
