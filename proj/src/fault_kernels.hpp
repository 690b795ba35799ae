#pragma once

// Per-tuple fault verdict kernels shared by the brute-force campaign and the
// margin validator. Internal header.

#include <cstdint>
#include <vector>

#include "pft/fault_engine.hpp"

namespace pft::detail {

// The maximum over all logits except index k: value, lowest index and how many
// entries attain it. valid == false when k is the only output.
struct RestMax {
  bool valid = false;
  std::int64_t value = 0;
  int index = 0;
  int count = 0;
};

inline RestMax rest_excluding(const CachedInput& c, int k) {
  const std::int64_t yk = c.trace.logits[k];
  if (yk < c.top_value) return {true, c.top_value, c.top_index, c.top_count};
  if (c.top_count >= 2) {
    return {true, c.top_value, k == c.top_index ? c.top_index2 : c.top_index, c.top_count - 1};
  }
  if (!c.has_second) return {};
  return {true, c.second_value, c.second_index, c.second_count};
}

// Decision after logit k takes the value yk_new and every other logit is
// unchanged.
inline Decision decide_single_logit(const RestMax& rest, int k, std::int64_t yk_new) {
  if (!rest.valid || yk_new > rest.value) return {k, false};
  if (yk_new == rest.value) return {std::min(k, rest.index), true};
  return {rest.index, rest.count >= 2};
}

inline bool is_faulty(const Decision& d, int label) { return d.tie || d.index != label; }

// True when logits y + dh * w2row misclassify `label` (ties are faulty).
inline bool hidden_shift_faulty(const std::vector<std::int64_t>& y,
                                std::span<const std::int64_t> w2row, std::int64_t dh, int label) {
  const std::int64_t yc = y[label] + dh * w2row[label];
  const std::size_t n = y.size();
  bool faulty = false;
  for (std::size_t r = 0; r < n; ++r) {
    faulty |= (r != static_cast<std::size_t>(label)) & (y[r] + dh * w2row[r] >= yc);
  }
  return faulty;
}

struct SiteContext {
  const QuantParams& q;
  const FaultSpace& space;
  const FaultFreeCache& cache;
};

// Calls visit(value_offset, x, faulty) for every corrupted value of s (offset
// from the group range's lo) and every input, value-major then input order.
template <class Visit>
void for_each_verdict(const SiteContext& ctx, const FaultSite& s, Visit&& visit) {
  const QuantParams& q = ctx.q;
  const ValueRange range = ctx.space.range(s.group);
  const std::int64_t w = read_param(q, s);
  const std::size_t inputs = ctx.cache.size();

  if (s.group == ParamGroup::W2 || s.group == ParamGroup::B2) {
    const int k = s.group == ParamGroup::W2 ? s.j : s.i;
    struct PerInput {
      std::int64_t gain;  // logit change per unit of delta
      std::int64_t yk;
      RestMax rest;
      int label;
    };
    std::vector<PerInput> per(inputs);
    for (std::size_t x = 0; x < inputs; ++x) {
      const CachedInput& c = ctx.cache[x];
      per[x] = {s.group == ParamGroup::W2 ? c.trace.hidden[s.i] : 1, c.trace.logits[k],
                rest_excluding(c, k), c.label};
    }
    for (std::int64_t v = range.lo; v <= range.hi; ++v) {
      if (v == w) continue;
      const std::int64_t delta = v - w;
      for (std::size_t x = 0; x < inputs; ++x) {
        const PerInput& p = per[x];
        const Decision d = decide_single_logit(p.rest, k, p.yk + delta * p.gain);
        visit(v - range.lo, x, is_faulty(d, p.label));
      }
    }
    return;
  }

  // Hidden-layer parameter: shifts the pre-activation of neuron j by delta.
  const int j = s.group == ParamGroup::W1 ? s.j : s.i;
  const auto w2row = q.w2.row(j);
  for (std::int64_t v = range.lo; v <= range.hi; ++v) {
    if (v == w) continue;
    const std::int64_t delta = v - w;
    for (std::size_t x = 0; x < inputs; ++x) {
      const CachedInput& c = ctx.cache[x];
      if (s.group == ParamGroup::W1 && !input_bit(static_cast<std::uint8_t>(x), s.i)) {
        visit(v - range.lo, x, false);
        continue;
      }
      const std::int64_t a = c.trace.pre_hidden[j];
      const std::int64_t h = c.trace.hidden[j];
      const std::int64_t dh = std::max<std::int64_t>(0, a + delta) - h;
      visit(v - range.lo, x, dh != 0 && hidden_shift_faulty(c.trace.logits, w2row, dh, c.label));
    }
  }
}

// Sorted tuple indices (value_offset * inputs + x) sampled for the oracle,
// deterministic in (seed, site index).
std::vector<std::uint64_t> oracle_sample(std::uint64_t seed, std::size_t site_index,
                                         std::uint64_t tuple_count, double rate);

}  // namespace pft::detail
