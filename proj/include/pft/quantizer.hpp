#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "pft/core_model.hpp"

namespace pft {

// Smallest two's-complement width (>= 1) holding every value.
int minimal_width(std::span<const std::int64_t> values);

// W1, b1, W2 -> round(v * 2^p); b2 -> round(v * 2^(2p)); ties round away from
// zero. Group widths default to the minimal fitting width; an override
// replaces it for every group (must still fit).
QuantParams quantize(const FloatParams& p, int precision,
                     std::optional<int> width_override = std::nullopt);

FloatParams dequantize(const QuantParams& q);

struct QuantReport {
  double accuracy = 0.0;
  // min over inputs of (y_label - max_{r != label} y_r), integer units
  std::int64_t min_margin = 0;
  int tie_count = 0;
};

QuantReport verify_quantized(const QuantParams& q, const Dataset& d);

}  // namespace pft
