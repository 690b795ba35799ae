#pragma once

#include <cstdint>
#include <utility>

#include "pft/core_model.hpp"
#include "pft/quantizer.hpp"
#include "pft/trainer.hpp"

namespace pft::test {

inline std::int64_t uniform_int(SplitMix64& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng.next() % static_cast<std::uint64_t>(hi - lo + 1));
}

// Random integer parameters in [-2^(bits-1), 2^(bits-1) - 1], b2 twice as wide.
inline QuantParams random_quant(const Topology& t, std::uint64_t seed, int bits, int precision = 1) {
  SplitMix64 rng(seed);
  QuantParams q = QuantParams::zeros(t, precision);
  const std::int64_t half = std::int64_t{1} << (bits - 1);
  for (auto& v : q.w1.data()) v = uniform_int(rng, -half, half - 1);
  for (auto& v : q.b1) v = uniform_int(rng, -half, half - 1);
  for (auto& v : q.w2.data()) v = uniform_int(rng, -half, half - 1);
  for (auto& v : q.b2) v = uniform_int(rng, -2 * half, 2 * half - 1);
  q.group_widths = {bits, bits, bits, bits + 1};
  return q;
}

// Labels every input with the model's own decision; empty when any input ties.
inline std::optional<Dataset> self_labelled(const QuantParams& q) {
  Dataset d;
  for (int x = 0; x < kSamples; ++x) {
    const Decision dec = forward_int(q, static_cast<std::uint8_t>(x)).decision;
    if (dec.tie) return std::nullopt;
    d.samples.push_back({static_cast<std::uint8_t>(x), dec.index});
  }
  return d;
}

// A random model together with a dataset it classifies perfectly and tie-free.
inline std::pair<QuantParams, Dataset> accepted_random(const Topology& t, std::uint64_t seed, int bits) {
  for (std::uint64_t s = seed;; s += 0x1000) {
    QuantParams q = random_quant(t, s, bits);
    if (auto d = self_labelled(q)) return {std::move(q), std::move(*d)};
  }
}

}  // namespace pft::test
