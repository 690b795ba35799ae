#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pft/core_model.hpp"

namespace pft {

// splitmix64; used both as the parameter-init generator and for any
// deterministic sampling elsewhere.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

struct TrainConfig {
  Topology topology{kInputBits, 128, kClasses};
  std::uint64_t seed = 1;
  double learning_rate = 5.0;
  double momentum = 0.9;
  int max_epochs = 20000;
  double lambda = 0.0;
  bool l2_on_biases = false;
  // Stop once accuracy has been 1 for this many consecutive epochs...
  int sustain_epochs = 50;
  // ...and the model quantized at this precision is still tie-free and fully
  // correct. Negative disables the check.
  int quantized_check_precision = 1;
  // When false, every run lasts max_epochs and converged reports whether the
  // final parameters meet the criterion above.
  bool stop_early = true;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  FloatParams params;
  int epochs_run = 0;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  bool converged = false;
  std::vector<EpochStats> loss_history;
};

struct LossAndGrads {
  double loss = 0.0;
  double accuracy = 0.0;
  FloatParams grads;
};

// Glorot-uniform weights, zero biases. W1 is drawn first (row-major), then W2.
FloatParams init_params(const Topology& t, std::uint64_t seed);

// Mean softmax cross-entropy over the dataset plus (lambda/2) * sum of squared
// regularized parameters, with the exact analytic gradient.
LossAndGrads loss_and_grads(const FloatParams& p, const Dataset& d, double lambda,
                            bool l2_on_biases);

// Full-batch gradient descent with momentum. Non-convergence is reported via
// TrainResult::converged, never thrown.
TrainResult train(const Dataset& d, const TrainConfig& cfg);

std::string loss_history_csv(const TrainResult& r);

}  // namespace pft
