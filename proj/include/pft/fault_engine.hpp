#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pft/core_model.hpp"

namespace pft {

struct FaultSite {
  ParamGroup group = ParamGroup::W1;
  int i = 0;  // W1: input bit; b1: hidden neuron; W2: hidden neuron; b2: output neuron
  int j = 0;  // W1: hidden neuron; W2: output neuron; unused for biases
  friend bool operator==(const FaultSite&, const FaultSite&) = default;
};

struct ValueRange {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::int64_t size() const { return hi - lo + 1; }
  bool contains(std::int64_t v) const { return v >= lo && v <= hi; }
};

enum class SpaceMode { FullWidth, ObservedRange };

// The set of values a faulted parameter may take. A site's corrupted values
// are every value of its group's range except the parameter's correct value.
class FaultSpace {
 public:
  static FaultSpace full_width(int bits);
  static FaultSpace full_width(const GroupWidths& widths);
  // Per-group [min, max] of the model's own values.
  static FaultSpace observed_range(const QuantParams& q);
  // "full8", "fullN", "fullmin" (each group's stored width) or "range".
  static FaultSpace parse(std::string_view spec, const QuantParams& q);
  // Smallest space containing both: per-group range hull, widest width.
  static FaultSpace merge(const FaultSpace& a, const FaultSpace& b);

  SpaceMode mode() const { return mode_; }
  const ValueRange& range(ParamGroup g) const { return ranges_[static_cast<int>(g)]; }
  int width(ParamGroup g) const { return widths_[static_cast<int>(g)]; }
  std::int64_t corrupted_per_site(ParamGroup g) const { return range(g).size() - 1; }

  // Throws unless every stored value of q lies in its group's range.
  void check_covers(const QuantParams& q) const;
  // q with group widths raised to this space (full-width mode), so every
  // corrupted value is representable.
  QuantParams widen(const QuantParams& q) const;

  std::string label() const;
  nlohmann::ordered_json to_json() const;

 private:
  SpaceMode mode_ = SpaceMode::FullWidth;
  bool merged_ = false;
  GroupWidths widths_{};
  std::array<ValueRange, 4> ranges_{};
};

// W1 row-major, b1, W2 row-major, b2.
std::vector<FaultSite> enumerate_sites(const Topology& t);
std::size_t site_index(const Topology& t, const FaultSite& s);
std::size_t group_site_count(const Topology& t, ParamGroup g);

std::int64_t read_param(const QuantParams& q, const FaultSite& s);

// Copy of q with the parameter at s replaced by v. v must fit the group width.
QuantParams inject(const QuantParams& q, const FaultSite& s, std::int64_t v);

// Fault-free state of one input, enough to patch a single-parameter fault in
// O(1) (output layer) or O(n) (hidden layer).
struct CachedInput {
  IntTrace trace;
  std::uint8_t x = 0;
  int label = 0;
  // Maximum logit value, its lowest and second-lowest index, and multiplicity.
  std::int64_t top_value = 0;
  int top_index = 0;
  int top_index2 = -1;
  int top_count = 0;
  // Largest logit value strictly below top_value (valid when has_second).
  bool has_second = false;
  std::int64_t second_value = 0;
  int second_index = 0;
  int second_count = 0;
};

class FaultFreeCache {
 public:
  FaultFreeCache(const QuantParams& q, const Dataset& d);
  const CachedInput& operator[](std::size_t x) const { return inputs_[x]; }
  std::size_t size() const { return inputs_.size(); }

 private:
  std::vector<CachedInput> inputs_;
};

// Decision of the model with parameter s set to v, on the cached input.
Decision incremental_forward(const QuantParams& q, const FaultSite& s, std::int64_t v,
                             const CachedInput& cached);

// Misclassification count per value of s's group range, indexed by
// v - range.lo. A tie counts as a misclassification. The correct value's slot
// is always 0.
std::vector<std::uint32_t> evaluate_site(const QuantParams& q, const FaultSite& s,
                                         const FaultSpace& space, const Dataset& d);

struct CampaignOptions {
  int jobs = 1;
  std::size_t sites_per_chunk = 64;
  // Fraction of (site, value, input) tuples also checked by full
  // recomputation; sampled deterministically per site.
  double oracle_sample_rate = 0.001;
  std::uint64_t oracle_seed = 0x5eed;
};

struct FaultReport {
  std::string space_label;
  nlohmann::ordered_json space;
  std::string model_hash;
  Topology topology;
  int precision = 0;
  std::array<std::uint64_t, 4> totals{};
  std::array<std::uint64_t, 4> denominators{};
  std::uint64_t total_faulty = 0;
  std::uint64_t denominator = 0;
  double percent_faults = 0.0;
  std::vector<std::uint64_t> per_site;  // aligned with enumerate_sites
  std::uint64_t oracle_samples = 0;
  std::uint64_t oracle_disagreements = 0;

  double group_percent(ParamGroup g) const;
  nlohmann::ordered_json summary_json() const;
  std::string per_site_csv() const;
};

// Fills totals, denominators and percentages from per_site.
void finalize_report(FaultReport& r);

FaultReport run_campaign(const QuantParams& q, const FaultSpace& space, const Dataset& d,
                         const CampaignOptions& opts = {});

// Ensures the model is fully correct and tie-free, as campaigns require.
void require_accepted(const QuantParams& q, const Dataset& d);

std::string format_percent(double v);

}  // namespace pft
