#include "pft/margin_analysis.hpp"

#include <algorithm>

#include "fault_kernels.hpp"
#include "pft/model_io.hpp"
#include "pft/parallel.hpp"

namespace pft {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

void require_correct(const CachedInput& c) {
  if (c.top_count != 1 || c.top_index != c.label) {
    throw Error("fault-free decision on input " + std::to_string(c.x) +
                " is not the label with a positive margin");
  }
}

// Largest logit among classes other than the label.
std::int64_t runner_up(const CachedInput& c) {
  return c.has_second ? c.second_value : kNegInf;
}

// Output logit k shifts by delta * gain (gain > 0).
std::pair<std::int64_t, std::int64_t> output_bounds(const CachedInput& c, int k, std::int64_t gain) {
  require_correct(c);
  if (gain == 0) return {kNegInf, kPosInf};
  const std::int64_t yc = c.trace.logits[c.label];
  if (k != c.label) {
    // y_k + delta * gain must stay strictly below y_c.
    return {kNegInf, floor_div(yc - c.trace.logits[k] - 1, gain)};
  }
  const std::int64_t other = runner_up(c);
  if (other == kNegInf) return {kNegInf, kPosInf};
  // y_c + delta * gain must stay strictly above every other logit.
  return {ceil_div(other - yc + 1, gain), kPosInf};
}

// Hidden neuron j's pre-activation shifts by delta. The hidden output moves by
// dh = max(0, a + delta) - h, which shifts every logit k by dh * W2[j][k].
// Each pairwise constraint y_c' > y_r' is linear in dh, so the safe dh form an
// interval; it maps back to delta through the monotone ReLU.
std::pair<std::int64_t, std::int64_t> hidden_bounds(const QuantParams& q, const CachedInput& c, int j) {
  require_correct(c);
  const auto w2row = q.w2.row(j);
  const auto& y = c.trace.logits;
  const int label = c.label;
  std::int64_t dlo = kNegInf;
  std::int64_t dhi = kPosInf;
  for (int r = 0; r < static_cast<int>(y.size()); ++r) {
    if (r == label) continue;
    const std::int64_t gap = y[label] - y[r];  // >= 1
    const std::int64_t slope = w2row[label] - w2row[r];
    // need gap + dh * slope >= 1
    if (slope > 0) {
      dlo = std::max(dlo, ceil_div(1 - gap, slope));
    } else if (slope < 0) {
      dhi = std::min(dhi, floor_div(gap - 1, -slope));
    }
  }
  const std::int64_t a = c.trace.pre_hidden[j];
  const std::int64_t h = c.trace.hidden[j];
  std::int64_t lo = kNegInf;
  if (dlo != kNegInf && h + dlo > 0) lo = h + dlo - a;
  std::int64_t hi = kPosInf;
  if (dhi != kPosInf) hi = h + dhi - a;
  return {lo, hi};
}

CachedInput cache_one(const QuantParams& q, const Sample& sample) {
  Dataset single;
  single.samples.resize(kSamples);
  for (int x = 0; x < kSamples; ++x) single.samples[x] = {static_cast<std::uint8_t>(x), 0};
  single.samples[sample.x].label = sample.label;
  // Only the entry for sample.x is used; other labels are placeholders.
  return FaultFreeCache(q, single)[sample.x];
}

SafeInterval make(const FaultSite& s, std::uint8_t x, std::pair<std::int64_t, std::int64_t> b) {
  return SafeInterval{s, x, b.first, b.second};
}

SafeInterval interval_from_cache(const QuantParams& q, const FaultSite& s, const CachedInput& c) {
  switch (s.group) {
    case ParamGroup::B2: return make(s, c.x, output_bounds(c, s.i, 1));
    case ParamGroup::W2: return make(s, c.x, output_bounds(c, s.j, c.trace.hidden[s.i]));
    case ParamGroup::B1: return make(s, c.x, hidden_bounds(q, c, s.i));
    case ParamGroup::W1:
      if (!input_bit(c.x, s.i)) {
        require_correct(c);
        return SafeInterval{s, c.x};
      }
      return make(s, c.x, hidden_bounds(q, c, s.j));
  }
  throw Error("bad parameter group");
}

}  // namespace

SafeInterval output_bias_interval(const QuantParams& q, int f2, const Sample& sample) {
  return site_interval(q, {ParamGroup::B2, f2, 0}, sample);
}

SafeInterval output_weight_interval(const QuantParams& q, int f1, int f2, const Sample& sample) {
  return site_interval(q, {ParamGroup::W2, f1, f2}, sample);
}

SafeInterval hidden_bias_interval(const QuantParams& q, int f1, const Sample& sample) {
  return site_interval(q, {ParamGroup::B1, f1, 0}, sample);
}

SafeInterval input_weight_interval(const QuantParams& q, int f0, int f1, const Sample& sample) {
  return site_interval(q, {ParamGroup::W1, f0, f1}, sample);
}

SafeInterval site_interval(const QuantParams& q, const FaultSite& site, const Sample& sample) {
  read_param(q, site);  // bounds check
  return interval_from_cache(q, site, cache_one(q, sample));
}

std::uint64_t faulty_value_count(const SafeInterval& iv, std::int64_t w, const ValueRange& range) {
  const std::int64_t safe_lo = iv.lo == kNegInf ? range.lo : std::max(range.lo, w + iv.lo);
  const std::int64_t safe_hi = iv.hi == kPosInf ? range.hi : std::min(range.hi, w + iv.hi);
  const std::int64_t safe = std::max<std::int64_t>(0, safe_hi - safe_lo + 1);
  return static_cast<std::uint64_t>(range.size() - safe);
}

namespace {

// Per-(hidden neuron, input) intervals are shared by b1[j] and every W1[i][j]
// whose input bit is set.
std::vector<std::pair<std::int64_t, std::int64_t>> hidden_table(const QuantParams& q,
                                                                const FaultFreeCache& cache, int jobs) {
  const int m = q.topology.m;
  std::vector<std::pair<std::int64_t, std::int64_t>> table(static_cast<std::size_t>(m) * cache.size());
  parallel_chunks(static_cast<std::size_t>(m), jobs, 8, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j)
      for (std::size_t x = 0; x < cache.size(); ++x)
        table[j * cache.size() + x] = hidden_bounds(q, cache[x], static_cast<int>(j));
  });
  return table;
}

SafeInterval cached_interval(const QuantParams& q, const FaultSite& s, const CachedInput& c,
                             const std::vector<std::pair<std::int64_t, std::int64_t>>& hidden,
                             std::size_t inputs) {
  if (s.group == ParamGroup::B1) return make(s, c.x, hidden[static_cast<std::size_t>(s.i) * inputs + c.x]);
  if (s.group == ParamGroup::W1) {
    if (!input_bit(c.x, s.i)) return SafeInterval{s, c.x};
    return make(s, c.x, hidden[static_cast<std::size_t>(s.j) * inputs + c.x]);
  }
  return interval_from_cache(q, s, c);
}

}  // namespace

MarginReport predict_campaign(const QuantParams& q, const FaultSpace& space, const Dataset& d, int jobs) {
  require_accepted(q, d);
  const QuantParams wide = space.widen(q);
  const FaultFreeCache cache(wide, d);
  const auto hidden = hidden_table(wide, cache, jobs);
  const std::vector<FaultSite> sites = enumerate_sites(q.topology);

  MarginReport out;
  FaultReport& r = out.predicted;
  r.space = space.to_json();
  r.space_label = space.label();
  r.model_hash = model_hash(q);
  r.topology = q.topology;
  r.precision = q.precision;
  r.per_site.assign(sites.size(), 0);
  out.site_margins.assign(sites.size(), {});

  parallel_chunks(sites.size(), jobs, 256, [&](std::size_t begin, std::size_t end) {
    for (std::size_t si = begin; si < end; ++si) {
      const FaultSite& s = sites[si];
      const std::int64_t w = read_param(wide, s);
      const ValueRange range = space.range(s.group);
      SiteMargin sm;
      std::uint64_t faulty = 0;
      for (std::size_t x = 0; x < cache.size(); ++x) {
        const SafeInterval iv = cached_interval(wide, s, cache[x], hidden, cache.size());
        faulty += faulty_value_count(iv, w, range);
        if (iv.lo != kNegInf) sm.lo = sm.lo == kNegInf ? iv.lo : std::max(sm.lo, iv.lo);
        if (iv.hi != kPosInf) sm.hi = std::min(sm.hi, iv.hi);
      }
      r.per_site[si] = faulty;
      out.site_margins[si] = sm;
    }
  });
  finalize_report(r);
  return out;
}

ValidationResult validate_margins(const QuantParams& q, const FaultSpace& space, const Dataset& d, int jobs) {
  require_accepted(q, d);
  const QuantParams wide = space.widen(q);
  const FaultFreeCache cache(wide, d);
  const auto hidden = hidden_table(wide, cache, jobs);
  const std::vector<FaultSite> sites = enumerate_sites(q.topology);
  const detail::SiteContext ctx{wide, space, cache};

  std::vector<std::uint64_t> tuples(sites.size(), 0);
  std::vector<std::uint64_t> bad(sites.size(), 0);
  std::vector<std::optional<Counterexample>> firsts(sites.size());

  parallel_chunks(sites.size(), jobs, 64, [&](std::size_t begin, std::size_t end) {
    std::vector<SafeInterval> ivs(cache.size());
    for (std::size_t si = begin; si < end; ++si) {
      const FaultSite& s = sites[si];
      const std::int64_t w = read_param(wide, s);
      const std::int64_t lo = space.range(s.group).lo;
      for (std::size_t x = 0; x < cache.size(); ++x) ivs[x] = cached_interval(wide, s, cache[x], hidden, cache.size());
      detail::for_each_verdict(ctx, s, [&](std::int64_t off, std::size_t x, bool injected) {
        ++tuples[si];
        const bool predicted = !ivs[x].contains(lo + off - w);
        if (predicted != injected) {
          if (bad[si]++ == 0) {
            firsts[si] = Counterexample{s, lo + off, static_cast<std::uint8_t>(x), predicted, injected};
          }
        }
      });
    }
  });

  ValidationResult v;
  for (std::size_t si = 0; si < sites.size(); ++si) {
    v.tuples += tuples[si];
    v.disagreements += bad[si];
    if (!v.first && firsts[si]) v.first = firsts[si];
  }
  return v;
}

std::string describe(const Counterexample& c) {
  std::string s = std::string(group_name(c.site.group)) + "[" + std::to_string(c.site.i);
  if (c.site.group == ParamGroup::W1 || c.site.group == ParamGroup::W2) s += "][" + std::to_string(c.site.j);
  s += "] = " + std::to_string(c.value) + ", input " + std::to_string(c.x) + ": predicted " +
       (c.predicted_faulty ? "faulty" : "safe") + ", injection " + (c.injected_faulty ? "faulty" : "safe");
  return s;
}

nlohmann::ordered_json MarginReport::summary_json() const {
  nlohmann::ordered_json j = predicted.summary_json();
  j.erase("oracle");
  j["method"] = "margin_prediction";
  std::uint64_t fully_tolerant = 0;
  for (std::size_t s = 0; s < predicted.per_site.size(); ++s) fully_tolerant += predicted.per_site[s] == 0;
  j["fully_tolerant_sites"] = fully_tolerant;
  return j;
}

std::string MarginReport::per_site_csv() const {
  const std::vector<FaultSite> sites = enumerate_sites(predicted.topology);
  std::string out = "group,i,j,faulty_pairs,safe_delta_lo,safe_delta_hi\n";
  for (std::size_t s = 0; s < sites.size(); ++s) {
    const FaultSite& f = sites[s];
    out += group_name(f.group);
    out += ',' + std::to_string(f.i) + ',';
    if (f.group == ParamGroup::W1 || f.group == ParamGroup::W2) out += std::to_string(f.j);
    out += ',' + std::to_string(predicted.per_site[s]) + ',';
    out += site_margins[s].lo == kNegInf ? std::string("-inf") : std::to_string(site_margins[s].lo);
    out += ',';
    out += site_margins[s].hi == kPosInf ? std::string("inf") : std::to_string(site_margins[s].hi);
    out += '\n';
  }
  return out;
}

}  // namespace pft
