#include "pft/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace pft {

namespace {

std::int64_t to_fixed(double v, double scale) {
  const double r = std::round(v * scale);
  if (!(std::fabs(r) < static_cast<double>(kMaxQuantMagnitude))) {
    throw Error("value " + std::to_string(v) + " is too large to quantize at this precision");
  }
  return static_cast<std::int64_t>(r);
}

}  // namespace

int minimal_width(std::span<const std::int64_t> values) {
  int width = 1;
  for (std::int64_t v : values) {
    while (v < -(std::int64_t{1} << (width - 1)) || v > (std::int64_t{1} << (width - 1)) - 1) {
      ++width;
    }
  }
  return width;
}

QuantParams quantize(const FloatParams& p, int precision, std::optional<int> width_override) {
  p.validate();
  if (precision < 0 || precision > 16) throw Error("precision must be in [0,16]");
  QuantParams q = QuantParams::zeros(p.topology, precision);
  const double s1 = std::ldexp(1.0, precision);
  const double s2 = std::ldexp(1.0, 2 * precision);
  std::transform(p.w1.data().begin(), p.w1.data().end(), q.w1.data().begin(),
                 [&](double v) { return to_fixed(v, s1); });
  std::transform(p.b1.begin(), p.b1.end(), q.b1.begin(), [&](double v) { return to_fixed(v, s1); });
  std::transform(p.w2.data().begin(), p.w2.data().end(), q.w2.data().begin(),
                 [&](double v) { return to_fixed(v, s1); });
  std::transform(p.b2.begin(), p.b2.end(), q.b2.begin(), [&](double v) { return to_fixed(v, s2); });
  for (ParamGroup g : kAllGroups) {
    const int minimal = minimal_width(q.group_values(g));
    int& w = q.group_widths[static_cast<int>(g)];
    w = width_override.value_or(minimal);
    if (w < minimal) {
      throw Error("width override " + std::to_string(w) + " cannot hold group " +
                  std::string(group_name(g)) + " (needs " + std::to_string(minimal) + " bits)");
    }
  }
  q.validate();
  return q;
}

FloatParams dequantize(const QuantParams& q) {
  FloatParams p = FloatParams::zeros(q.topology);
  const double s1 = std::ldexp(1.0, -q.precision);
  const double s2 = std::ldexp(1.0, -2 * q.precision);
  std::transform(q.w1.data().begin(), q.w1.data().end(), p.w1.data().begin(),
                 [&](std::int64_t v) { return static_cast<double>(v) * s1; });
  std::transform(q.b1.begin(), q.b1.end(), p.b1.begin(),
                 [&](std::int64_t v) { return static_cast<double>(v) * s1; });
  std::transform(q.w2.data().begin(), q.w2.data().end(), p.w2.data().begin(),
                 [&](std::int64_t v) { return static_cast<double>(v) * s1; });
  std::transform(q.b2.begin(), q.b2.end(), p.b2.begin(),
                 [&](std::int64_t v) { return static_cast<double>(v) * s2; });
  return p;
}

QuantReport verify_quantized(const QuantParams& q, const Dataset& d) {
  d.validate(q.topology.n);
  QuantReport r;
  r.min_margin = std::numeric_limits<std::int64_t>::max();
  int correct = 0;
  for (const Sample& s : d.samples) {
    const IntTrace tr = forward_int(q, s.x);
    if (tr.decision.tie) ++r.tie_count;
    if (tr.decision.index == s.label && !tr.decision.tie) ++correct;
    std::int64_t other = std::numeric_limits<std::int64_t>::min();
    for (int k = 0; k < q.topology.n; ++k) {
      if (k != s.label) other = std::max(other, tr.logits[k]);
    }
    // A single-class network has no competitor; treat its margin as unbounded.
    const std::int64_t margin = q.topology.n == 1 ? std::numeric_limits<std::int64_t>::max()
                                                  : tr.logits[s.label] - other;
    r.min_margin = std::min(r.min_margin, margin);
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(d.samples.size());
  return r;
}

}  // namespace pft
