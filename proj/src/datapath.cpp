#include "pft/datapath.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace pft {

namespace {

std::int64_t ceil_groups(int m) {
  return (m + DatapathConfig::kMultipliers - 1) / DatapathConfig::kMultipliers;
}

bool fits(std::int64_t v, int bits) {
  return v >= -(std::int64_t{1} << (bits - 1)) && v <= (std::int64_t{1} << (bits - 1)) - 1;
}

std::int64_t wrap(std::int64_t v, int bits) {
  if (bits >= 64) return v;
  const std::uint64_t mask = (std::uint64_t{1} << bits) - 1;
  std::uint64_t u = static_cast<std::uint64_t>(v) & mask;
  if (u >> (bits - 1)) u |= ~mask;
  return static_cast<std::int64_t>(u);
}

// Applies the configured overflow policy to a value entering a `bits`-wide
// register or operand.
std::int64_t constrain(std::int64_t v, int bits, const DatapathConfig& cfg, const char* stage,
                       int iteration) {
  if (fits(v, bits)) return v;
  if (cfg.overflow == OverflowMode::Wrap) return wrap(v, bits);
  throw DatapathOverflow(stage, iteration, v, bits);
}

}  // namespace

DatapathOverflow::DatapathOverflow(std::string stage, int iteration, std::int64_t value, int bits)
    : Error("datapath overflow in " + stage + " at iteration " + std::to_string(iteration) + ": value " +
            std::to_string(value) + " exceeds " + std::to_string(bits) + " bits"),
      stage_(std::move(stage)),
      iteration_(iteration),
      value_(value) {}

void DatapathConfig::validate() const {
  for (int b : {dsp_adder_bits, final_adder_input_bits, multiplier_operand_bits, accumulator_bits}) {
    if (b < 1 || b > 63) throw Error("datapath widths must be in [1,63]");
  }
  if (control_cycles < 1 || hidden_iteration_cycles < 1 || output_execution_cycles < 1) {
    throw Error("datapath latencies must be at least one cycle");
  }
}

nlohmann::ordered_json DatapathConfig::to_json() const {
  return {{"multipliers", kMultipliers},
          {"dsp_adder_bits", dsp_adder_bits},
          {"final_adder_input_bits", final_adder_input_bits},
          {"multiplier_operand_bits", multiplier_operand_bits},
          {"accumulator_bits", accumulator_bits},
          {"control_cycles", control_cycles},
          {"hidden_iteration_cycles", hidden_iteration_cycles},
          {"output_execution_cycles", output_execution_cycles},
          {"overflow", overflow == OverflowMode::Error ? "error" : "wrap"}};
}

nlohmann::ordered_json EmulationTrace::to_json() const {
  return {{"hidden_iterations", hidden_iterations},
          {"output_iterations", output_iterations},
          {"executions_per_neuron", executions_per_neuron},
          {"output_executions", output_executions},
          {"cycles", cycles},
          {"decision", decision.index},
          {"tie", decision.tie},
          {"pre_activation", pre_activation},
          {"hidden", hidden},
          {"logits", logits},
          {"lm_history", lm_history}};
}

Emulation emulate(const QuantParams& q, std::uint8_t x, const DatapathConfig& cfg) {
  cfg.validate();
  const Topology& t = q.topology;
  Emulation out;
  EmulationTrace& tr = out.trace;
  tr.cycles = cfg.control_cycles;

  // LH: one neuron per iteration, results shifted into the buffer.
  for (int j = 0; j < t.m; ++j) {
    std::array<std::int64_t, 2> partial{};
    for (int i = 0; i < t.l; ++i) {
      const std::int64_t gated = input_bit(x, i) ? q.w1(i, j) : 0;  // AND gate
      partial[i / 4] = constrain(partial[i / 4] + gated, cfg.dsp_adder_bits, cfg, "hidden DSP adder", j);
    }
    const std::int64_t a = constrain(partial[0], cfg.final_adder_input_bits, cfg, "hidden final adder", j);
    const std::int64_t b = constrain(partial[1], cfg.final_adder_input_bits, cfg, "hidden final adder", j);
    const std::int64_t bias = constrain(q.b1[j], cfg.final_adder_input_bits, cfg, "hidden bias", j);
    const std::int64_t sum = a + b + bias;
    tr.pre_activation.push_back(sum);
    tr.hidden.push_back(sum > 0 ? sum : 0);
    ++tr.hidden_iterations;
    tr.cycles += cfg.hidden_iteration_cycles;
  }

  // LO + ArgMax: neuron k takes ceil(m/8) executions of the multiplier bank.
  const std::int64_t executions = ceil_groups(t.m);
  tr.executions_per_neuron = static_cast<int>(executions);
  int lm = 0;
  bool tie = false;
  for (int k = 0; k < t.n; ++k) {
    std::int64_t acc = 0;
    for (std::int64_t e = 0; e < executions; ++e) {
      for (int u = 0; u < DatapathConfig::kMultipliers; ++u) {
        const int j = static_cast<int>(e) * DatapathConfig::kMultipliers + u;
        if (j >= t.m) break;  // unused lanes multiply zero
        const std::int64_t h = constrain(tr.hidden[j], cfg.multiplier_operand_bits, cfg, "output multiplier", k);
        const std::int64_t w = constrain(q.w2(j, k), cfg.multiplier_operand_bits, cfg, "output multiplier", k);
        acc = constrain(acc + h * w, cfg.accumulator_bits, cfg, "output accumulator", k);
      }
      ++tr.output_executions;
      tr.cycles += cfg.output_execution_cycles;
    }
    const std::int64_t y = constrain(acc + q.b2[k], cfg.accumulator_bits, cfg, "output bias adder", k);
    tr.logits.push_back(y);
    ++tr.output_iterations;
    if (k == 0 || y > tr.logits[lm]) {
      lm = k;
      tie = false;
    } else if (y == tr.logits[lm]) {
      tie = true;
    }
    tr.lm_history.push_back(lm);
  }
  tr.decision = {lm, tie};
  out.decision = tr.decision;
  return out;
}

std::int64_t cycle_count(const Topology& t, const DatapathConfig& cfg) {
  t.validate();
  cfg.validate();
  return cfg.control_cycles + t.m * cfg.hidden_iteration_cycles +
         static_cast<std::int64_t>(t.n) * ceil_groups(t.m) * cfg.output_execution_cycles;
}

Decision inject_and_emulate(const QuantParams& q, const FaultSite& s, std::int64_t v, std::uint8_t x,
                            const DatapathConfig& cfg) {
  return emulate(inject(q, s, v), x, cfg).decision;
}

nlohmann::ordered_json CycleCalibration::to_json() const {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < kReferenceCycles.size(); ++r) {
    rows.push_back({{"design", "8-" + std::to_string(kReferenceCycles[r].hidden) + "-256"},
                    {"reference_cycles", kReferenceCycles[r].cycles},
                    {"least_squares_cycles", fitted[r]},
                    {"least_squares_residual", residuals[r]},
                    {"config_cycles", config_cycles[r]},
                    {"config_residual", config_residuals[r]}});
  }
  return {{"least_squares",
           {{"control_cycles", control},
            {"hidden_iteration_cycles", hidden_iteration},
            {"output_execution_cycles", output_execution},
            {"rms_residual", rms_residual}}},
          {"rows", rows}};
}

CycleCalibration calibrate_cycles(const DatapathConfig& cfg) {
  const auto rows = static_cast<Eigen::Index>(kReferenceCycles.size());
  Eigen::MatrixXd a(rows, 3);
  Eigen::VectorXd b(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int m = kReferenceCycles[r].hidden;
    a(r, 0) = 1.0;
    a(r, 1) = m;
    a(r, 2) = static_cast<double>(kClasses) * static_cast<double>(ceil_groups(m));
    b(r) = static_cast<double>(kReferenceCycles[r].cycles);
  }
  // The hidden and output columns are collinear when m is a multiple of 8, so
  // the minimum-norm solution is reported.
  const Eigen::VectorXd sol = a.completeOrthogonalDecomposition().solve(b);
  CycleCalibration c;
  c.control = sol(0);
  c.hidden_iteration = sol(1);
  c.output_execution = sol(2);
  double sq = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double fit = a.row(r).dot(sol);
    c.fitted.push_back(fit);
    c.residuals.push_back(fit - b(r));
    sq += (fit - b(r)) * (fit - b(r));
    const std::int64_t cc = cycle_count({kInputBits, kReferenceCycles[r].hidden, kClasses}, cfg);
    c.config_cycles.push_back(cc);
    c.config_residuals.push_back(cc - kReferenceCycles[r].cycles);
  }
  c.rms_residual = std::sqrt(sq / static_cast<double>(rows));
  return c;
}

}  // namespace pft
