#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pft/core_model.hpp"
#include "pft/fault_engine.hpp"
#include "pft/margin_analysis.hpp"
#include "pft/model_io.hpp"
#include "pft/quantizer.hpp"
#include "pft/trainer.hpp"

namespace pft {

inline const std::vector<std::uint8_t> kDefaultKeys = {0x00, 0x25, 0x5A, 0xA7, 0xFF};
inline constexpr double kReferenceImprovementFactor = 218.0;

// Training recipe shared by every experiment cell. The learning rates are
// tried in order until one converges.
struct TrainPlan {
  TrainConfig config;
  std::vector<double> learning_rates = {5.0, 1.0, 0.2};

  nlohmann::ordered_json to_json() const;
};

struct TrainedModel {
  std::uint8_t key = 0;
  TrainConfig config;  // learning_rate is the one that produced `result`
  TrainResult result;

  ModelFile model_file() const;
};

// Trains with each learning rate of the plan in turn, returning the first
// converged run, or the last attempt when none converges.
TrainedModel train_model(std::uint8_t key, const Topology& t, const TrainPlan& plan);

struct SweepSpec {
  std::vector<std::uint8_t> keys = kDefaultKeys;
  std::vector<int> hidden_sizes = {8, 16, 32, 64, 128};
  std::vector<int> precisions = {1, 2, 3, 4};
  std::string space = "full8";
  TrainPlan plan;
  int jobs = 1;

  void validate() const;
};

// One (key, hidden size, precision, group) cell; group "total" aggregates the
// four parameter groups. Absent cells carry the reason in `status`.
struct SweepRow {
  std::uint8_t key = 0;
  int hidden = 0;
  int precision = 0;
  std::string group;
  bool present = false;
  std::uint64_t faulty = 0;
  std::uint64_t denominator = 0;
  double percent = 0.0;
  std::string status;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<TrainedModel> models;  // one per (key, hidden size), in loop order

  std::string csv() const;
  const SweepRow* find(std::uint8_t key, int hidden, int precision, std::string_view group) const;
};

// Least-squares slope of %Faults against precision, per key and group.
struct PrecisionSlope {
  std::uint8_t key = 0;
  std::string group;
  int points = 0;
  double slope = 0.0;
};

// One model per key at spec.hidden_sizes.back(), quantized at every precision.
SweepResult sweep_precision(const SweepSpec& spec);
std::vector<PrecisionSlope> precision_slopes(const SweepResult& r);
std::string slopes_csv(const std::vector<PrecisionSlope>& s);

// One model per (key, hidden size), quantized at spec.precisions.front().
SweepResult sweep_hidden(const SweepSpec& spec);

struct SearchSpec {
  std::uint8_t key = 0x25;
  Topology topology{kInputBits, 128, kClasses};
  int precision = 2;
  std::vector<double> lambdas = {1e-6, 1e-5, 1e-4, 1e-3};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  // "fullN" is shared as is; "range" and "fullmin" are merged over every
  // accepted candidate so all of them are scored in one space.
  std::string space = "range";
  TrainPlan plan;
  int jobs = 1;

  void validate() const;
};

struct Candidate {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  TrainedModel trained;
  QuantReport quant;
  bool accepted = false;
  std::string reason;
  std::optional<MarginReport> shared;  // in the common space
  std::optional<MarginReport> own;     // in the candidate's own space
};

struct ComparisonReport {
  nlohmann::ordered_json space;
  int baseline = -1;     // index of the best lambda = 0 candidate
  int constrained = -1;  // index of the best candidate over the lambda grid
  std::uint64_t baseline_faulty = 0;
  std::uint64_t constrained_faulty = 0;
  double baseline_percent = 0.0;
  double constrained_percent = 0.0;
  std::optional<double> factor;  // empty when the constrained model is all-safe
  bool all_safe = false;

  bool meets(double required) const { return all_safe || (factor && *factor >= required); }
};

struct SearchResult {
  SearchSpec spec;
  std::vector<Candidate> candidates;  // baseline seeds first, then lambda-major
  ComparisonReport comparison;

  nlohmann::ordered_json summary_json() const;
  std::string candidates_csv() const;
};

// Trains the lambda x seed grid plus a lambda = 0 baseline on the same seeds,
// keeps candidates that quantize with full accuracy and no ties, and ranks
// them by margin-predicted faulty count in a space shared by all of them.
// Throws when no baseline or no constrained candidate is accepted.
SearchResult constrained_search(const SearchSpec& spec);

// Per-site counts arranged as one grid per group: W1 l x m, b1 1 x m,
// W2 m x n, b2 1 x n.
nlohmann::ordered_json fault_map_json(const FaultReport& r);
// group,row,col,faulty_pairs for every site.
std::string fault_map_csv(const FaultReport& r);

std::string key_hex(std::uint8_t key);
std::uint8_t parse_key(const std::string& text);

}  // namespace pft
