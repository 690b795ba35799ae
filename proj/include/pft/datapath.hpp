#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "pft/core_model.hpp"
#include "pft/fault_engine.hpp"

namespace pft {

enum class OverflowMode { Error, Wrap };

// Iterative datapath: the hidden layer (LH) sums AND-gated W1 weights with two
// DSP adders plus a small LUT adder for the bias; the output layer (LO) runs
// ceil(m/8) executions of 8 parallel multipliers per neuron and streams each
// logit into the ArgMax register (LM).
struct DatapathConfig {
  static constexpr int kMultipliers = 8;

  int dsp_adder_bits = 48;        // each DSP adder sums four gated weights
  int final_adder_input_bits = 9; // LUT adder inputs: two partial sums and the bias
  int multiplier_operand_bits = 20;
  int accumulator_bits = 48;      // output-layer accumulator, bias included

  // Cycle model: control + m * hidden_iteration + n * ceil(m/8) * output_execution.
  std::int64_t control_cycles = 1;
  std::int64_t hidden_iteration_cycles = 24;
  std::int64_t output_execution_cycles = 23;

  OverflowMode overflow = OverflowMode::Error;

  void validate() const;
  nlohmann::ordered_json to_json() const;
};

class DatapathOverflow : public Error {
 public:
  DatapathOverflow(std::string stage, int iteration, std::int64_t value, int bits);
  const std::string& stage() const { return stage_; }
  int iteration() const { return iteration_; }
  std::int64_t value() const { return value_; }

 private:
  std::string stage_;
  int iteration_;
  std::int64_t value_;
};

struct EmulationTrace {
  std::vector<std::int64_t> pre_activation;  // LH output per hidden iteration
  std::vector<std::int64_t> hidden;          // after ReLU, as held in the buffer
  std::vector<std::int64_t> logits;          // LO output per output neuron
  std::vector<int> lm_history;               // LM register after each output neuron
  int hidden_iterations = 0;
  int output_iterations = 0;
  int executions_per_neuron = 0;
  std::int64_t output_executions = 0;
  std::int64_t cycles = 0;
  Decision decision;  // LM value; tie set when a later neuron equalled the maximum

  nlohmann::ordered_json to_json() const;
};

struct Emulation {
  Decision decision;
  EmulationTrace trace;
};

Emulation emulate(const QuantParams& q, std::uint8_t x, const DatapathConfig& cfg = {});

std::int64_t cycle_count(const Topology& t, const DatapathConfig& cfg = {});

// Emulates with the stored parameter at s replaced by v.
Decision inject_and_emulate(const QuantParams& q, const FaultSite& s, std::int64_t v, std::uint8_t x,
                            const DatapathConfig& cfg = {});

// Reported clock-cycle counts of the reference hardware, hidden size -> cycles.
struct CycleReference {
  int hidden = 0;
  std::int64_t cycles = 0;
};
inline constexpr std::array<CycleReference, 4> kReferenceCycles = {
    CycleReference{8, 1350}, CycleReference{32, 25576}, CycleReference{64, 49352},
    CycleReference{128, 96910}};

struct CycleCalibration {
  // Minimum-norm least-squares constants over the reference rows.
  double control = 0, hidden_iteration = 0, output_execution = 0;
  std::vector<double> fitted;
  std::vector<double> residuals;  // fitted - reference
  double rms_residual = 0.0;
  // The same figures for a configuration's integer constants.
  std::vector<std::int64_t> config_cycles;
  std::vector<std::int64_t> config_residuals;

  nlohmann::ordered_json to_json() const;
};

CycleCalibration calibrate_cycles(const DatapathConfig& cfg = {});

}  // namespace pft
