#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pft/core_model.hpp"
#include "pft/fault_engine.hpp"

namespace pft {

inline constexpr std::int64_t kNegInf = std::numeric_limits<std::int64_t>::min();
inline constexpr std::int64_t kPosInf = std::numeric_limits<std::int64_t>::max();

// Perturbations delta in [lo, hi] of the parameter at `site` keep the correct,
// tie-free decision on input x; every delta outside misclassifies. lo may be
// kNegInf and hi kPosInf.
struct SafeInterval {
  FaultSite site;
  std::uint8_t x = 0;
  std::int64_t lo = kNegInf;
  std::int64_t hi = kPosInf;

  bool contains(std::int64_t delta) const {
    return (lo == kNegInf || delta >= lo) && (hi == kPosInf || delta <= hi);
  }
  bool unbounded() const { return lo == kNegInf && hi == kPosInf; }
};

// Each requires the fault-free decision on `sample` to be its label with a
// strictly positive margin.
SafeInterval output_bias_interval(const QuantParams& q, int f2, const Sample& sample);
SafeInterval output_weight_interval(const QuantParams& q, int f1, int f2, const Sample& sample);
SafeInterval hidden_bias_interval(const QuantParams& q, int f1, const Sample& sample);
SafeInterval input_weight_interval(const QuantParams& q, int f0, int f1, const Sample& sample);
SafeInterval site_interval(const QuantParams& q, const FaultSite& site, const Sample& sample);

// Number of values in `range` other than w that fall outside w + interval.
std::uint64_t faulty_value_count(const SafeInterval& iv, std::int64_t w, const ValueRange& range);

struct SiteMargin {
  // Intersection of the per-input intervals.
  std::int64_t lo = kNegInf;
  std::int64_t hi = kPosInf;
};

struct MarginReport {
  FaultReport predicted;  // per-site predicted faulty (value, input) pairs
  std::vector<SiteMargin> site_margins;

  nlohmann::ordered_json summary_json() const;
  std::string per_site_csv() const;
};

MarginReport predict_campaign(const QuantParams& q, const FaultSpace& space, const Dataset& d,
                              int jobs = 1);

struct Counterexample {
  FaultSite site;
  std::int64_t value = 0;
  std::uint8_t x = 0;
  bool predicted_faulty = false;
  bool injected_faulty = false;
};

struct ValidationResult {
  std::uint64_t tuples = 0;
  std::uint64_t disagreements = 0;
  std::optional<Counterexample> first;
  bool ok() const { return disagreements == 0; }
};

// Compares the interval verdict with brute-force injection on every (site,
// corrupted value, input) tuple of the space.
ValidationResult validate_margins(const QuantParams& q, const FaultSpace& space, const Dataset& d,
                                  int jobs = 1);

std::string describe(const Counterexample& c);

}  // namespace pft
