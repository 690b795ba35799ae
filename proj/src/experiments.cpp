#include "pft/experiments.hpp"

#include <algorithm>
#include <cstdio>

#include "pft/parallel.hpp"

namespace pft {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string lambda_text(double v) { return fmt("%.6g", v); }

void add_rows(SweepResult& out, std::uint8_t key, int hidden, int precision, const FaultReport* r,
              const std::string& status) {
  auto row = [&](std::string group) {
    SweepRow s;
    s.key = key;
    s.hidden = hidden;
    s.precision = precision;
    s.group = std::move(group);
    s.status = status;
    return s;
  };
  for (ParamGroup g : kAllGroups) {
    SweepRow s = row(std::string(group_name(g)));
    if (r) {
      const int gi = static_cast<int>(g);
      s.present = true;
      s.faulty = r->totals[gi];
      s.denominator = r->denominators[gi];
      s.percent = r->group_percent(g);
    }
    out.rows.push_back(std::move(s));
  }
  SweepRow t = row("total");
  if (r) {
    t.present = true;
    t.faulty = r->total_faulty;
    t.denominator = r->denominator;
    t.percent = r->percent_faults;
  }
  out.rows.push_back(std::move(t));
}

// Margin-predicted campaign of one quantized model, or the reason it has none.
struct CellOutcome {
  std::optional<FaultReport> report;
  std::string status;
};

// Brute-force recount of a deterministic subset of sites: the first site of
// each group and every 97th site.
void spot_check(const QuantParams& q, const FaultSpace& space, const Dataset& d, const FaultReport& r) {
  const auto sites = enumerate_sites(q.topology);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (i % 97 != 0 && (i == 0 || sites[i - 1].group == sites[i].group)) continue;
    std::uint64_t faulty = 0;
    for (std::uint32_t v : evaluate_site(q, sites[i], space, d)) faulty += v;
    if (faulty != r.per_site[i]) {
      throw Error("brute-force spot check disagrees at site " + std::to_string(i) + ": " + std::to_string(faulty) +
                  " vs predicted " + std::to_string(r.per_site[i]));
    }
  }
}

CellOutcome score(const QuantParams& q, const Dataset& d, const std::string& space_spec) {
  const QuantReport qr = verify_quantized(q, d);
  if (qr.accuracy != 1.0 || qr.tie_count != 0) {
    return {std::nullopt, "rejected: quantized accuracy " + fmt("%.6f", qr.accuracy) + ", ties " +
                              std::to_string(qr.tie_count)};
  }
  try {
    const FaultSpace space = FaultSpace::parse(space_spec, q);
    space.check_covers(q);
    FaultReport r = predict_campaign(q, space, d, 1).predicted;
    spot_check(q, space, d, r);
    return {std::move(r), "ok"};
  } catch (const Error& e) {
    return {std::nullopt, std::string("absent: ") + e.what()};
  }
}

nlohmann::ordered_json report_summary(const Candidate& c, const MarginReport& m) {
  nlohmann::ordered_json groups;
  for (ParamGroup g : kAllGroups) groups[std::string(group_name(g))] = m.predicted.totals[static_cast<int>(g)];
  return {{"lambda", c.lambda},
          {"seed", c.seed},
          {"learning_rate", c.trained.config.learning_rate},
          {"model_hash", m.predicted.model_hash},
          {"faulty_pairs", m.predicted.total_faulty},
          {"denominator", m.predicted.denominator},
          {"percent_faults", format_percent(m.predicted.percent_faults)},
          {"faulty_pairs_by_group", groups}};
}

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::string key_hex(std::uint8_t key) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "0x%02X", key);
  return buf;
}

std::uint8_t parse_key(const std::string& text) {
  std::size_t used = 0;
  long v = -1;
  try {
    v = std::stol(text, &used, 0);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || v < 0 || v > 255) throw Error("key byte must be in 0..255, got '" + text + "'");
  return static_cast<std::uint8_t>(v);
}

nlohmann::ordered_json TrainPlan::to_json() const {
  return {{"learning_rates", learning_rates},
          {"momentum", config.momentum},
          {"max_epochs", config.max_epochs},
          {"sustain_epochs", config.sustain_epochs},
          {"stop_early", config.stop_early},
          {"quantized_check_precision", config.quantized_check_precision},
          {"l2_on_biases", config.l2_on_biases}};
}

ModelFile TrainedModel::model_file() const {
  ModelFile m;
  m.key_byte = key;
  m.float_params = result.params;
  m.training = {config.seed,     config.lambda,       result.epochs_run, config.learning_rate,
                config.momentum, config.l2_on_biases, result.converged};
  return m;
}

TrainedModel train_model(std::uint8_t key, const Topology& t, const TrainPlan& plan) {
  if (plan.learning_rates.empty()) throw Error("training plan needs at least one learning rate");
  const Dataset d = make_dataset(key);
  TrainedModel out;
  out.key = key;
  for (double lr : plan.learning_rates) {
    out.config = plan.config;
    out.config.topology = t;
    out.config.learning_rate = lr;
    out.result = train(d, out.config);
    if (out.result.converged) break;
  }
  return out;
}

void SweepSpec::validate() const {
  if (keys.empty() || hidden_sizes.empty() || precisions.empty()) throw Error("sweep lists must be non-empty");
  for (int m : hidden_sizes) Topology{kInputBits, m, kClasses}.validate();
  for (int p : precisions) {
    if (p < 0 || p > 12) throw Error("precision must be in [0,12]");
  }
}

const SweepRow* SweepResult::find(std::uint8_t key, int hidden, int precision, std::string_view group) const {
  for (const SweepRow& r : rows) {
    if (r.key == key && r.hidden == hidden && r.precision == precision && r.group == group) return &r;
  }
  return nullptr;
}

std::string SweepResult::csv() const {
  std::string out = "key,hidden,precision,group,status,faulty_pairs,denominator,percent_faults\n";
  for (const SweepRow& r : rows) {
    out += key_hex(r.key) + "," + std::to_string(r.hidden) + "," + std::to_string(r.precision) + "," + r.group +
           ",\"" + r.status + "\",";
    if (r.present) {
      out += std::to_string(r.faulty) + "," + std::to_string(r.denominator) + "," + format_percent(r.percent);
    } else {
      out += ",,";
    }
    out += "\n";
  }
  return out;
}

SweepResult sweep_precision(const SweepSpec& spec) {
  spec.validate();
  const Topology t{kInputBits, spec.hidden_sizes.back(), kClasses};
  std::vector<TrainedModel> models(spec.keys.size());
  std::vector<std::vector<CellOutcome>> cells(spec.keys.size());
  parallel_chunks(spec.keys.size(), spec.jobs, 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      models[k] = train_model(spec.keys[k], t, spec.plan);
      const Dataset d = make_dataset(spec.keys[k]);
      for (int p : spec.precisions) {
        try {
          cells[k].push_back(score(quantize(models[k].result.params, p), d, spec.space));
        } catch (const Error& e) {
          cells[k].push_back({std::nullopt, std::string("absent: ") + e.what()});
        }
      }
    }
  });
  SweepResult out;
  for (std::size_t k = 0; k < spec.keys.size(); ++k) {
    for (std::size_t pi = 0; pi < spec.precisions.size(); ++pi) {
      const CellOutcome& c = cells[k][pi];
      add_rows(out, spec.keys[k], t.m, spec.precisions[pi], c.report ? &*c.report : nullptr, c.status);
    }
  }
  out.models = std::move(models);
  return out;
}

std::vector<PrecisionSlope> precision_slopes(const SweepResult& r) {
  std::vector<PrecisionSlope> out;
  auto slot = [&](std::uint8_t key, const std::string& group) -> PrecisionSlope& {
    for (PrecisionSlope& s : out) {
      if (s.key == key && s.group == group) return s;
    }
    out.push_back({key, group, 0, 0.0});
    return out.back();
  };
  struct Sums {
    double n = 0, x = 0, y = 0, xx = 0, xy = 0;
  };
  std::vector<Sums> sums;
  for (const SweepRow& row : r.rows) {
    PrecisionSlope& s = slot(row.key, row.group);
    const auto idx = static_cast<std::size_t>(&s - out.data());
    if (sums.size() <= idx) sums.resize(idx + 1);
    if (!row.present) continue;
    Sums& a = sums[idx];
    a.n += 1;
    a.x += row.precision;
    a.y += row.percent;
    a.xx += static_cast<double>(row.precision) * row.precision;
    a.xy += row.precision * row.percent;
    ++s.points;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Sums& a = sums[i];
    const double den = a.n * a.xx - a.x * a.x;
    out[i].slope = out[i].points >= 2 && den != 0.0 ? (a.n * a.xy - a.x * a.y) / den : 0.0;
  }
  return out;
}

std::string slopes_csv(const std::vector<PrecisionSlope>& slopes) {
  std::string out = "key,group,points,slope_percent_per_bit\n";
  for (const PrecisionSlope& s : slopes) {
    out += key_hex(s.key) + "," + s.group + "," + std::to_string(s.points) + "," + fmt("%.6e", s.slope) + "\n";
  }
  return out;
}

SweepResult sweep_hidden(const SweepSpec& spec) {
  spec.validate();
  const int p = spec.precisions.front();
  const std::size_t cols = spec.hidden_sizes.size();
  const std::size_t count = spec.keys.size() * cols;
  std::vector<TrainedModel> models(count);
  std::vector<CellOutcome> cells(count);
  parallel_chunks(count, spec.jobs, 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const std::uint8_t key = spec.keys[c / cols];
      const Topology t{kInputBits, spec.hidden_sizes[c % cols], kClasses};
      models[c] = train_model(key, t, spec.plan);
      try {
        cells[c] = score(quantize(models[c].result.params, p), make_dataset(key), spec.space);
      } catch (const Error& e) {
        cells[c] = {std::nullopt, std::string("absent: ") + e.what()};
      }
    }
  });
  SweepResult out;
  for (std::size_t c = 0; c < count; ++c) {
    add_rows(out, spec.keys[c / cols], spec.hidden_sizes[c % cols], p, cells[c].report ? &*cells[c].report : nullptr,
             cells[c].status);
  }
  out.models = std::move(models);
  return out;
}

void SearchSpec::validate() const {
  topology.validate();
  if (lambdas.empty() || seeds.empty()) throw Error("search needs at least one lambda and one seed");
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw Error("lambda must be non-negative");
  }
}

SearchResult constrained_search(const SearchSpec& spec) {
  spec.validate();
  SearchResult out;
  out.spec = spec;
  auto add = [&](double l, std::uint64_t s) {
    Candidate c;
    c.lambda = l;
    c.seed = s;
    out.candidates.push_back(std::move(c));
  };
  for (std::uint64_t s : spec.seeds) add(0.0, s);
  for (double l : spec.lambdas) {
    if (l == 0.0) continue;
    for (std::uint64_t s : spec.seeds) add(l, s);
  }
  std::vector<Candidate>& cs = out.candidates;
  const Dataset d = make_dataset(spec.key);

  std::vector<QuantParams> quant(cs.size());
  parallel_chunks(cs.size(), spec.jobs, 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      TrainPlan plan = spec.plan;
      plan.config.lambda = cs[i].lambda;
      plan.config.seed = cs[i].seed;
      cs[i].trained = train_model(spec.key, spec.topology, plan);
      try {
        quant[i] = quantize(cs[i].trained.result.params, spec.precision);
      } catch (const Error& e) {
        cs[i].reason = e.what();
        continue;
      }
      cs[i].quant = verify_quantized(quant[i], d);
      cs[i].accepted = cs[i].quant.accuracy == 1.0 && cs[i].quant.tie_count == 0;
      if (!cs[i].accepted) {
        cs[i].reason = "quantized accuracy " + fmt("%.6f", cs[i].quant.accuracy) + ", ties " +
                       std::to_string(cs[i].quant.tie_count);
      }
    }
  });

  std::optional<FaultSpace> shared;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (!cs[i].accepted) continue;
    try {
      const FaultSpace own = FaultSpace::parse(spec.space, quant[i]);
      own.check_covers(quant[i]);
      shared = shared ? FaultSpace::merge(*shared, own) : own;
    } catch (const Error& e) {
      cs[i].accepted = false;
      cs[i].reason = e.what();
    }
  }

  parallel_chunks(cs.size(), spec.jobs, 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (!cs[i].accepted) continue;
      cs[i].shared = predict_campaign(quant[i], *shared, d, 1);
      cs[i].own = predict_campaign(quant[i], FaultSpace::parse(spec.space, quant[i]), d, 1);
    }
  });

  auto in_grid = [&](double l) { return std::find(spec.lambdas.begin(), spec.lambdas.end(), l) != spec.lambdas.end(); };
  ComparisonReport& cmp = out.comparison;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (!cs[i].accepted) continue;
    const std::uint64_t f = cs[i].shared->predicted.total_faulty;
    auto better = [&](int current) {
      return current < 0 || f < cs[static_cast<std::size_t>(current)].shared->predicted.total_faulty;
    };
    if (cs[i].lambda == 0.0 && better(cmp.baseline)) cmp.baseline = static_cast<int>(i);
    if (in_grid(cs[i].lambda) && better(cmp.constrained)) cmp.constrained = static_cast<int>(i);
  }
  if (cmp.baseline < 0 || cmp.constrained < 0) {
    std::vector<const Candidate*> misses;
    for (const Candidate& c : cs) misses.push_back(&c);
    std::stable_sort(misses.begin(), misses.end(),
                     [](const Candidate* a, const Candidate* b) { return a->quant.accuracy > b->quant.accuracy; });
    std::string msg = std::string("no accepted ") + (cmp.baseline < 0 ? "baseline" : "constrained") +
                      " candidate; nearest misses:";
    for (std::size_t i = 0; i < std::min<std::size_t>(misses.size(), 5); ++i) {
      msg += "\n  lambda " + lambda_text(misses[i]->lambda) + " seed " + std::to_string(misses[i]->seed) + ": " +
             (misses[i]->accepted ? std::string("accepted") : misses[i]->reason);
    }
    throw Error(msg);
  }
  const FaultReport& b = cs[static_cast<std::size_t>(cmp.baseline)].shared->predicted;
  const FaultReport& c = cs[static_cast<std::size_t>(cmp.constrained)].shared->predicted;
  cmp.space = shared->to_json();
  cmp.baseline_faulty = b.total_faulty;
  cmp.constrained_faulty = c.total_faulty;
  cmp.baseline_percent = b.percent_faults;
  cmp.constrained_percent = c.percent_faults;
  cmp.all_safe = c.total_faulty == 0;
  cmp.factor = ratio(b.total_faulty, c.total_faulty);
  return out;
}

nlohmann::ordered_json SearchResult::summary_json() const {
  const ComparisonReport& cmp = comparison;
  const Candidate& b = candidates[static_cast<std::size_t>(cmp.baseline)];
  const Candidate& c = candidates[static_cast<std::size_t>(cmp.constrained)];
  std::vector<std::string> lambdas;
  for (double l : spec.lambdas) lambdas.push_back(lambda_text(l));
  nlohmann::ordered_json j;
  j["key_byte"] = key_hex(spec.key);
  j["topology"] = {{"l", spec.topology.l}, {"m", spec.topology.m}, {"n", spec.topology.n}};
  j["precision_p"] = spec.precision;
  j["lambdas"] = lambdas;
  j["seeds"] = spec.seeds;
  j["training"] = spec.plan.to_json();
  j["space_spec"] = spec.space;
  j["space"] = cmp.space;
  j["baseline"] = report_summary(b, *b.shared);
  j["constrained"] = report_summary(c, *c.shared);
  if (cmp.all_safe) {
    j["improvement_factor"] = "all-safe";
  } else {
    j["improvement_factor"] = fmt("%.4f", *cmp.factor);
  }
  j["reference_improvement_factor"] = fmt("%.4f", kReferenceImprovementFactor);
  // Each model scored in its own space; informational, the spaces differ.
  const auto own = ratio(b.own->predicted.total_faulty, c.own->predicted.total_faulty);
  j["own_space_comparison"] = {{"baseline_percent_faults", format_percent(b.own->predicted.percent_faults)},
                               {"constrained_percent_faults", format_percent(c.own->predicted.percent_faults)},
                               {"factor", own ? fmt("%.4f", *own) : "all-safe"}};
  std::size_t accepted = 0;
  for (const Candidate& x : candidates) accepted += x.accepted;
  j["candidates"] = candidates.size();
  j["accepted_candidates"] = accepted;
  return j;
}

std::string SearchResult::candidates_csv() const {
  std::string out =
      "lambda,seed,learning_rate,epochs,converged,float_accuracy,quantized_accuracy,ties,min_margin,accepted,"
      "shared_faulty_pairs,shared_percent_faults,own_faulty_pairs,own_percent_faults,model_hash,reason\n";
  for (const Candidate& c : candidates) {
    const TrainResult& r = c.trained.result;
    out += lambda_text(c.lambda) + "," + std::to_string(c.seed) + "," + lambda_text(c.trained.config.learning_rate) +
           "," + std::to_string(r.epochs_run) + "," + (r.converged ? "1" : "0") + "," + fmt("%.6f", r.final_accuracy) +
           "," + fmt("%.6f", c.quant.accuracy) + "," + std::to_string(c.quant.tie_count) + "," +
           std::to_string(c.quant.min_margin) + "," + (c.accepted ? "1" : "0") + ",";
    if (c.shared) {
      out += std::to_string(c.shared->predicted.total_faulty) + "," + format_percent(c.shared->predicted.percent_faults) +
             "," + std::to_string(c.own->predicted.total_faulty) + "," + format_percent(c.own->predicted.percent_faults) +
             "," + c.shared->predicted.model_hash;
    } else {
      out += ",,,,";
    }
    out += ",\"" + c.reason + "\"\n";
  }
  return out;
}

nlohmann::ordered_json fault_map_json(const FaultReport& r) {
  const Topology& t = r.topology;
  nlohmann::ordered_json j;
  std::size_t offset = 0;
  std::uint64_t total = 0;
  for (ParamGroup g : kAllGroups) {
    const bool bias = g == ParamGroup::B1 || g == ParamGroup::B2;
    const std::size_t count = group_site_count(t, g);
    const std::size_t cols = bias ? count : (g == ParamGroup::W1 ? static_cast<std::size_t>(t.m) : static_cast<std::size_t>(t.n));
    nlohmann::ordered_json grid = nlohmann::ordered_json::array();
    for (std::size_t row = 0; row < count / cols; ++row) {
      std::vector<std::uint64_t> line(r.per_site.begin() + static_cast<std::ptrdiff_t>(offset + row * cols),
                                      r.per_site.begin() + static_cast<std::ptrdiff_t>(offset + (row + 1) * cols));
      for (std::uint64_t v : line) total += v;
      grid.push_back(line);
    }
    j["grids"][std::string(group_name(g))] = grid;
    offset += count;
  }
  j["total_faulty_pairs"] = total;
  return j;
}

std::string fault_map_csv(const FaultReport& r) {
  std::string out = "group,row,col,faulty_pairs\n";
  const std::vector<FaultSite> sites = enumerate_sites(r.topology);
  for (std::size_t s = 0; s < sites.size(); ++s) {
    const FaultSite& f = sites[s];
    const bool bias = f.group == ParamGroup::B1 || f.group == ParamGroup::B2;
    out += std::string(group_name(f.group)) + "," + std::to_string(bias ? 0 : f.i) + "," +
           std::to_string(bias ? f.i : f.j) + "," + std::to_string(r.per_site[s]) + "\n";
  }
  return out;
}

}  // namespace pft
