#include "pft/fault_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "fault_kernels.hpp"
#include "pft/model_io.hpp"
#include "pft/parallel.hpp"
#include "pft/quantizer.hpp"
#include "pft/trainer.hpp"

namespace pft {

namespace {

ValueRange width_range(int bits) {
  return {-(std::int64_t{1} << (bits - 1)), (std::int64_t{1} << (bits - 1)) - 1};
}

}  // namespace

FaultSpace FaultSpace::full_width(int bits) { return full_width(GroupWidths{bits, bits, bits, bits}); }

FaultSpace FaultSpace::full_width(const GroupWidths& widths) {
  FaultSpace s;
  s.mode_ = SpaceMode::FullWidth;
  s.widths_ = widths;
  for (int g = 0; g < 4; ++g) {
    if (widths[g] < 1 || widths[g] > 25) throw Error("fault-space width must be in [1,25]");
    s.ranges_[g] = width_range(widths[g]);
  }
  return s;
}

FaultSpace FaultSpace::observed_range(const QuantParams& q) {
  FaultSpace s;
  s.mode_ = SpaceMode::ObservedRange;
  for (ParamGroup g : kAllGroups) {
    const auto vals = q.group_values(g);
    const auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
    s.ranges_[static_cast<int>(g)] = {*mn, *mx};
    s.widths_[static_cast<int>(g)] = q.width(g);
  }
  return s;
}

FaultSpace FaultSpace::parse(std::string_view spec, const QuantParams& q) {
  if (spec == "range") return observed_range(q);
  if (spec == "fullmin") return full_width(q.group_widths);
  if (spec.starts_with("full")) {
    const std::string digits(spec.substr(4));
    if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
      return full_width(std::stoi(digits));
    }
  }
  throw Error("unknown fault space '" + std::string(spec) + "' (expected fullN, fullmin or range)");
}

FaultSpace FaultSpace::merge(const FaultSpace& a, const FaultSpace& b) {
  FaultSpace s;
  s.mode_ = a.mode_ == SpaceMode::FullWidth && b.mode_ == SpaceMode::FullWidth ? SpaceMode::FullWidth
                                                                               : SpaceMode::ObservedRange;
  s.merged_ = s.mode_ == SpaceMode::ObservedRange;
  for (int g = 0; g < 4; ++g) {
    s.ranges_[g] = {std::min(a.ranges_[g].lo, b.ranges_[g].lo), std::max(a.ranges_[g].hi, b.ranges_[g].hi)};
    s.widths_[g] = std::max(a.widths_[g], b.widths_[g]);
  }
  return s;
}

void FaultSpace::check_covers(const QuantParams& q) const {
  for (ParamGroup g : kAllGroups) {
    for (std::int64_t v : q.group_values(g)) {
      if (!range(g).contains(v)) {
        throw Error("fault space " + label() + " cannot represent value " + std::to_string(v) +
                    " of group " + std::string(group_name(g)));
      }
    }
  }
}

QuantParams FaultSpace::widen(const QuantParams& q) const {
  check_covers(q);
  QuantParams out = q;
  for (ParamGroup g : kAllGroups) {
    const int gi = static_cast<int>(g);
    out.group_widths[gi] = std::max(out.group_widths[gi], minimal_width(std::array{range(g).lo, range(g).hi}));
  }
  return out;
}

std::string FaultSpace::label() const {
  if (mode_ == SpaceMode::ObservedRange) return merged_ ? "range-union" : "range";
  if (std::all_of(widths_.begin(), widths_.end(), [&](int w) { return w == widths_[0]; })) {
    return "full" + std::to_string(widths_[0]);
  }
  return "full(" + std::to_string(widths_[0]) + "," + std::to_string(widths_[1]) + "," +
         std::to_string(widths_[2]) + "," + std::to_string(widths_[3]) + ")";
}

nlohmann::ordered_json FaultSpace::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = mode_ == SpaceMode::FullWidth ? "full_width" : "observed_range";
  j["label"] = label();
  for (ParamGroup g : kAllGroups) {
    const ValueRange& r = range(g);
    j["groups"][std::string(group_name(g))] = {{"width_bits", width(g)},
                                               {"min", r.lo},
                                               {"max", r.hi},
                                               {"corrupted_values_per_site", corrupted_per_site(g)}};
  }
  return j;
}

std::size_t group_site_count(const Topology& t, ParamGroup g) {
  switch (g) {
    case ParamGroup::W1: return static_cast<std::size_t>(t.l) * t.m;
    case ParamGroup::B1: return static_cast<std::size_t>(t.m);
    case ParamGroup::W2: return static_cast<std::size_t>(t.m) * t.n;
    case ParamGroup::B2: return static_cast<std::size_t>(t.n);
  }
  return 0;
}

std::vector<FaultSite> enumerate_sites(const Topology& t) {
  t.validate();
  std::vector<FaultSite> sites;
  sites.reserve(t.parameter_count());
  for (int i = 0; i < t.l; ++i)
    for (int j = 0; j < t.m; ++j) sites.push_back({ParamGroup::W1, i, j});
  for (int j = 0; j < t.m; ++j) sites.push_back({ParamGroup::B1, j, 0});
  for (int j = 0; j < t.m; ++j)
    for (int k = 0; k < t.n; ++k) sites.push_back({ParamGroup::W2, j, k});
  for (int k = 0; k < t.n; ++k) sites.push_back({ParamGroup::B2, k, 0});
  return sites;
}

std::size_t site_index(const Topology& t, const FaultSite& s) {
  const std::size_t w1 = group_site_count(t, ParamGroup::W1);
  const std::size_t b1 = group_site_count(t, ParamGroup::B1);
  const std::size_t w2 = group_site_count(t, ParamGroup::W2);
  switch (s.group) {
    case ParamGroup::W1: return static_cast<std::size_t>(s.i) * t.m + s.j;
    case ParamGroup::B1: return w1 + s.i;
    case ParamGroup::W2: return w1 + b1 + static_cast<std::size_t>(s.i) * t.n + s.j;
    case ParamGroup::B2: return w1 + b1 + w2 + s.i;
  }
  return 0;
}

namespace {

void check_site(const Topology& t, const FaultSite& s) {
  bool ok = s.i >= 0 && s.j >= 0;
  switch (s.group) {
    case ParamGroup::W1: ok = ok && s.i < t.l && s.j < t.m; break;
    case ParamGroup::B1: ok = ok && s.i < t.m; break;
    case ParamGroup::W2: ok = ok && s.i < t.m && s.j < t.n; break;
    case ParamGroup::B2: ok = ok && s.i < t.n; break;
  }
  if (!ok) throw Error("fault site outside topology bounds");
}

std::int64_t& param_ref(QuantParams& q, const FaultSite& s) {
  switch (s.group) {
    case ParamGroup::W1: return q.w1(s.i, s.j);
    case ParamGroup::B1: return q.b1[s.i];
    case ParamGroup::W2: return q.w2(s.i, s.j);
    case ParamGroup::B2: return q.b2[s.i];
  }
  throw Error("bad parameter group");
}

}  // namespace

std::int64_t read_param(const QuantParams& q, const FaultSite& s) {
  check_site(q.topology, s);
  return param_ref(const_cast<QuantParams&>(q), s);
}

QuantParams inject(const QuantParams& q, const FaultSite& s, std::int64_t v) {
  check_site(q.topology, s);
  const ValueRange r = width_range(q.width(s.group));
  if (!r.contains(v)) {
    throw Error("injected value " + std::to_string(v) + " does not fit the " +
                std::to_string(q.width(s.group)) + "-bit width of group " +
                std::string(group_name(s.group)));
  }
  QuantParams out = q;
  param_ref(out, s) = v;
  return out;
}

FaultFreeCache::FaultFreeCache(const QuantParams& q, const Dataset& d) {
  d.validate(q.topology.n);
  inputs_.reserve(d.samples.size());
  for (const Sample& s : d.samples) {
    CachedInput c;
    c.trace = forward_int(q, s.x);
    c.x = s.x;
    c.label = s.label;
    const auto& y = c.trace.logits;
    c.top_value = std::numeric_limits<std::int64_t>::min();
    for (int k = 0; k < static_cast<int>(y.size()); ++k) {
      if (y[k] > c.top_value) {
        c.top_value = y[k];
        c.top_index = k;
        c.top_index2 = -1;
        c.top_count = 1;
      } else if (y[k] == c.top_value) {
        if (c.top_count == 1) c.top_index2 = k;
        ++c.top_count;
      }
    }
    for (int k = 0; k < static_cast<int>(y.size()); ++k) {
      if (y[k] >= c.top_value) continue;
      if (!c.has_second || y[k] > c.second_value) {
        c.has_second = true;
        c.second_value = y[k];
        c.second_index = k;
        c.second_count = 1;
      } else if (y[k] == c.second_value) {
        ++c.second_count;
      }
    }
    inputs_.push_back(std::move(c));
  }
}

Decision incremental_forward(const QuantParams& q, const FaultSite& s, std::int64_t v,
                             const CachedInput& cached) {
  const std::int64_t w = read_param(q, s);
  const std::int64_t delta = v - w;
  if (delta == 0) return cached.trace.decision;
  if (s.group == ParamGroup::W2 || s.group == ParamGroup::B2) {
    const int k = s.group == ParamGroup::W2 ? s.j : s.i;
    const std::int64_t gain = s.group == ParamGroup::W2 ? cached.trace.hidden[s.i] : 1;
    return detail::decide_single_logit(detail::rest_excluding(cached, k), k,
                                       cached.trace.logits[k] + delta * gain);
  }
  const int j = s.group == ParamGroup::W1 ? s.j : s.i;
  if (s.group == ParamGroup::W1 && !input_bit(cached.x, s.i)) return cached.trace.decision;
  const std::int64_t a = cached.trace.pre_hidden[j];
  const std::int64_t dh = std::max<std::int64_t>(0, a + delta) - cached.trace.hidden[j];
  if (dh == 0) return cached.trace.decision;
  std::vector<std::int64_t> y = cached.trace.logits;
  const auto w2row = q.w2.row(j);
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += dh * w2row[k];
  return argmax_decision<std::int64_t>(y);
}

std::vector<std::uint32_t> evaluate_site(const QuantParams& q, const FaultSite& s,
                                         const FaultSpace& space, const Dataset& d) {
  require_accepted(q, d);
  const QuantParams wide = space.widen(q);
  const FaultFreeCache cache(wide, d);
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(space.range(s.group).size()), 0);
  detail::for_each_verdict({wide, space, cache}, s, [&](std::int64_t off, std::size_t, bool faulty) {
    counts[static_cast<std::size_t>(off)] += faulty;
  });
  return counts;
}

namespace detail {

std::vector<std::uint64_t> oracle_sample(std::uint64_t seed, std::size_t site_index,
                                         std::uint64_t tuple_count, double rate) {
  std::vector<std::uint64_t> out;
  if (!(rate > 0.0) || tuple_count == 0) return out;
  if (rate >= 1.0) {
    out.resize(tuple_count);
    for (std::uint64_t t = 0; t < tuple_count; ++t) out[t] = t;
    return out;
  }
  SplitMix64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (site_index + 1)));
  const double log_keep = std::log1p(-rate);
  // Geometric gaps give an i.i.d. Bernoulli(rate) selection over tuples.
  std::uint64_t t = 0;
  for (;;) {
    const double u = 1.0 - rng.uniform();  // (0, 1]
    const double gap = std::floor(std::log(u) / log_keep);
    if (gap >= static_cast<double>(tuple_count - t)) break;
    t += static_cast<std::uint64_t>(gap);
    out.push_back(t);
    if (++t >= tuple_count) break;
  }
  return out;
}

}  // namespace detail

void require_accepted(const QuantParams& q, const Dataset& d) {
  const QuantReport r = verify_quantized(q, d);
  if (r.min_margin <= 0) {
    throw Error("model is not fault-free correct (accuracy " + std::to_string(r.accuracy) +
                ", ties " + std::to_string(r.tie_count) + ", min margin " +
                std::to_string(r.min_margin) + ")");
  }
}

double FaultReport::group_percent(ParamGroup g) const {
  const int gi = static_cast<int>(g);
  return denominators[gi] == 0 ? 0.0 : 100.0 * static_cast<double>(totals[gi]) / static_cast<double>(denominators[gi]);
}

void finalize_report(FaultReport& r) {
  const std::vector<FaultSite> sites = enumerate_sites(r.topology);
  r.totals = {};
  r.denominators = {};
  for (std::size_t s = 0; s < sites.size(); ++s) r.totals[static_cast<int>(sites[s].group)] += r.per_site[s];
  r.total_faulty = 0;
  r.denominator = 0;
  for (ParamGroup g : kAllGroups) {
    const int gi = static_cast<int>(g);
    const auto per_site_values =
        r.space["groups"][std::string(group_name(g))]["corrupted_values_per_site"].get<std::uint64_t>();
    r.denominators[gi] = group_site_count(r.topology, g) * per_site_values * kSamples;
    r.total_faulty += r.totals[gi];
    r.denominator += r.denominators[gi];
  }
  r.percent_faults = r.denominator == 0 ? 0.0 : 100.0 * static_cast<double>(r.total_faulty) / static_cast<double>(r.denominator);
}

std::string format_percent(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

nlohmann::ordered_json FaultReport::summary_json() const {
  nlohmann::ordered_json j;
  j["model_hash"] = model_hash;
  j["topology"] = {{"l", topology.l}, {"m", topology.m}, {"n", topology.n}};
  j["precision_p"] = precision;
  j["space"] = space;
  j["inputs"] = kSamples;
  j["sites"] = per_site.size();
  j["denominator"] = denominator;
  j["faulty_outputs"] = total_faulty;
  j["percent_faults"] = percent_faults;
  for (ParamGroup g : kAllGroups) {
    const int gi = static_cast<int>(g);
    j["groups"][std::string(group_name(g))] = {{"sites", group_site_count(topology, g)},
                                               {"faulty_outputs", totals[gi]},
                                               {"denominator", denominators[gi]},
                                               {"percent_faults", group_percent(g)}};
  }
  j["oracle"] = {{"samples", oracle_samples}, {"disagreements", oracle_disagreements}};
  return j;
}

std::string FaultReport::per_site_csv() const {
  const std::vector<FaultSite> sites = enumerate_sites(topology);
  std::string out = "group,i,j,faulty_pairs\n";
  out.reserve(sites.size() * 16);
  for (std::size_t s = 0; s < sites.size(); ++s) {
    const FaultSite& f = sites[s];
    out += group_name(f.group);
    out += ',';
    out += std::to_string(f.i);
    out += ',';
    if (f.group == ParamGroup::W1 || f.group == ParamGroup::W2) out += std::to_string(f.j);
    out += ',';
    out += std::to_string(per_site[s]);
    out += '\n';
  }
  return out;
}

FaultReport run_campaign(const QuantParams& q, const FaultSpace& space, const Dataset& d,
                         const CampaignOptions& opts) {
  require_accepted(q, d);
  const QuantParams wide = space.widen(q);
  const FaultFreeCache cache(wide, d);
  const std::vector<FaultSite> sites = enumerate_sites(q.topology);

  FaultReport r;
  r.space = space.to_json();
  r.space_label = space.label();
  r.model_hash = model_hash(q);
  r.topology = q.topology;
  r.precision = q.precision;
  r.per_site.assign(sites.size(), 0);
  std::vector<std::uint64_t> samples(sites.size(), 0);
  std::vector<std::uint64_t> disagreements(sites.size(), 0);
  const detail::SiteContext ctx{wide, space, cache};

  parallel_chunks(sites.size(), opts.jobs, opts.sites_per_chunk, [&](std::size_t begin, std::size_t end) {
    QuantParams scratch = wide;  // full-recompute oracle works on this copy
    for (std::size_t si = begin; si < end; ++si) {
      const FaultSite& s = sites[si];
      const ValueRange range = space.range(s.group);
      const std::uint64_t tuples = static_cast<std::uint64_t>(range.size()) * cache.size();
      const std::vector<std::uint64_t> sample =
          detail::oracle_sample(opts.oracle_seed, si, tuples, opts.oracle_sample_rate);
      std::size_t next = 0;
      std::uint64_t faulty_count = 0;
      const std::int64_t correct = read_param(wide, s);
      detail::for_each_verdict(ctx, s, [&](std::int64_t off, std::size_t x, bool faulty) {
        faulty_count += faulty;
        const std::uint64_t t = static_cast<std::uint64_t>(off) * cache.size() + x;
        while (next < sample.size() && sample[next] < t) ++next;
        if (next < sample.size() && sample[next] == t) {
          std::int64_t& slot = param_ref(scratch, s);
          slot = range.lo + off;
          const Decision full = forward_int(scratch, static_cast<std::uint8_t>(x)).decision;
          slot = correct;
          ++samples[si];
          disagreements[si] += detail::is_faulty(full, cache[x].label) != faulty;
          ++next;
        }
      });
      r.per_site[si] = faulty_count;
    }
  });

  for (std::size_t si = 0; si < sites.size(); ++si) {
    r.oracle_samples += samples[si];
    r.oracle_disagreements += disagreements[si];
  }
  finalize_report(r);
  return r;
}

}  // namespace pft
