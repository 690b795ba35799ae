#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pft/datapath.hpp"
#include "pft/experiments.hpp"

namespace fs = std::filesystem;
using namespace pft;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

// Timings go to stderr so that stdout and every output file stay deterministic.
void log_time(const char* what, const Timer& t) { std::fprintf(stderr, "%s: %.2f s\n", what, t.seconds()); }

void write(const fs::path& dir, const std::string& name, const std::string& text) {
  fs::create_directories(dir);
  write_text_file(dir / name, text);
  std::printf("wrote %s\n", (dir / name).string().c_str());
}

void write_json(const fs::path& dir, const std::string& name, const nlohmann::ordered_json& j) {
  write(dir, name, dump_json(j));
}

struct Common {
  std::string key = "0x25";
  int hidden = 128;
  int precision = 1;
  double lambda = 0.0;
  std::uint64_t seed = 1;
  std::string space = "full8";
  int jobs = 1;
  std::string out = "out";
};

struct TrainFlags {
  std::vector<double> learning_rates = {5.0, 1.0, 0.2};
  double momentum = 0.9;
  int epochs = 20000;
  int sustain = 50;
  int check_precision = 1;
  bool l2_on_biases = false;
  bool fixed_budget = false;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--lr", f.learning_rates, "Learning rates, tried in order until one converges")
      ->delimiter(',')
      ->capture_default_str();
  app->add_option("--momentum", f.momentum, "Momentum coefficient")->capture_default_str();
  app->add_option("--epochs", f.epochs, "Maximum epochs per run")->capture_default_str();
  app->add_option("--sustain", f.sustain, "Epochs at full accuracy before stopping")->capture_default_str();
  app->add_option("--check-precision", f.check_precision,
                  "Also require the model quantized at this precision to be correct (-1 disables)")
      ->capture_default_str();
  app->add_flag("--l2-biases", f.l2_on_biases, "Apply the L2 penalty to biases too");
  app->add_flag("--fixed-budget,!--early-stop", f.fixed_budget, "Always train for --epochs epochs")
      ->capture_default_str();
}

TrainPlan make_plan(const TrainFlags& f, double lambda, std::uint64_t seed) {
  TrainPlan p;
  p.learning_rates = f.learning_rates;
  p.config.momentum = f.momentum;
  p.config.max_epochs = f.epochs;
  p.config.sustain_epochs = f.sustain;
  p.config.quantized_check_precision = f.check_precision;
  p.config.l2_on_biases = f.l2_on_biases;
  p.config.stop_early = !f.fixed_budget;
  p.config.lambda = lambda;
  p.config.seed = seed;
  return p;
}

std::vector<std::uint8_t> parse_keys(const std::vector<std::string>& texts) {
  std::vector<std::uint8_t> keys;
  for (const std::string& t : texts) keys.push_back(parse_key(t));
  return keys;
}

std::vector<std::string> default_key_texts() {
  std::vector<std::string> out;
  for (std::uint8_t k : kDefaultKeys) out.push_back(key_hex(k));
  return out;
}

Dataset dataset_for(const ModelFile& m, const std::string& key_flag) {
  if (m.key_byte) return make_dataset(*m.key_byte);
  return make_dataset(parse_key(key_flag));
}

void print_report(const char* what, const FaultReport& r) {
  std::printf("%s: space %s, faulty %llu of %llu (%s %%Faults)\n", what, r.space_label.c_str(),
              static_cast<unsigned long long>(r.total_faulty), static_cast<unsigned long long>(r.denominator),
              format_percent(r.percent_faults).c_str());
  for (ParamGroup g : kAllGroups) {
    std::printf("  %-2s %llu faulty (%s %%)\n", std::string(group_name(g)).c_str(),
                static_cast<unsigned long long>(r.totals[static_cast<int>(g)]), format_percent(r.group_percent(g)).c_str());
  }
}

int cmd_train(const Common& c, const TrainFlags& f) {
  const std::uint8_t key = parse_key(c.key);
  const Timer t;
  const TrainedModel tm = train_model(key, {kInputBits, c.hidden, kClasses}, make_plan(f, c.lambda, c.seed));
  log_time("train", t);
  const fs::path out(c.out);
  save_model(tm.model_file(), out / "model.json");
  std::printf("wrote %s\n", (out / "model.json").string().c_str());
  write(out, "loss_history.csv", loss_history_csv(tm.result));
  std::printf("key %s, 8-%d-256, lr %g: %s after %d epochs, loss %.6g, accuracy %.6f\n", key_hex(key).c_str(),
              c.hidden, tm.config.learning_rate, tm.result.converged ? "converged" : "NOT converged",
              tm.result.epochs_run, tm.result.final_loss, tm.result.final_accuracy);
  return tm.result.converged ? 0 : 3;
}

int cmd_quantize(const Common& c, const std::string& model_path, int width) {
  const ModelFile m = load_model(model_path);
  const Dataset d = dataset_for(m, c.key);
  ModelFile q = m;
  q.float_params.reset();
  q.quant_params = quantize(m.real(), c.precision, width > 0 ? std::optional<int>(width) : std::nullopt);
  const QuantReport r = verify_quantized(*q.quant_params, d);
  const fs::path out(c.out);
  save_model(q, out / "quantized.json");
  std::printf("wrote %s\n", (out / "quantized.json").string().c_str());
  nlohmann::ordered_json j = {{"model_hash", model_hash(*q.quant_params)},
                              {"precision_p", c.precision},
                              {"group_widths",
                               {{"W1", q.quant_params->group_widths[0]},
                                {"b1", q.quant_params->group_widths[1]},
                                {"W2", q.quant_params->group_widths[2]},
                                {"b2", q.quant_params->group_widths[3]}}},
                              {"accuracy", r.accuracy},
                              {"tie_count", r.tie_count},
                              {"min_margin", r.min_margin},
                              {"accepted", r.accuracy == 1.0 && r.tie_count == 0}};
  write_json(out, "quantize_report.json", j);
  std::printf("p=%d: accuracy %.6f, ties %d, min margin %lld\n", c.precision, r.accuracy, r.tie_count,
              static_cast<long long>(r.min_margin));
  return r.accuracy == 1.0 && r.tie_count == 0 ? 0 : 3;
}

int cmd_faults(const Common& c, const std::string& model_path, double oracle_rate) {
  const ModelFile m = load_model(model_path);
  const QuantParams& q = m.quantized();
  const Dataset d = dataset_for(m, c.key);
  const FaultSpace space = FaultSpace::parse(c.space, q);
  CampaignOptions opts;
  opts.jobs = c.jobs;
  opts.oracle_sample_rate = oracle_rate;
  const Timer t;
  const FaultReport r = run_campaign(q, space, d, opts);
  log_time("campaign", t);
  const fs::path out(c.out);
  write_json(out, "faults_summary.json", r.summary_json());
  write(out, "faults_per_site.csv", r.per_site_csv());
  write_json(out, "fault_map.json", fault_map_json(r));
  write(out, "fault_map.csv", fault_map_csv(r));
  print_report("brute force", r);
  std::printf("oracle: %llu sampled tuples, %llu disagreements\n", static_cast<unsigned long long>(r.oracle_samples),
              static_cast<unsigned long long>(r.oracle_disagreements));
  return r.oracle_disagreements == 0 ? 0 : 4;
}

int cmd_margins(const Common& c, const std::string& model_path, bool validate) {
  const ModelFile m = load_model(model_path);
  const QuantParams& q = m.quantized();
  const Dataset d = dataset_for(m, c.key);
  const FaultSpace space = FaultSpace::parse(c.space, q);
  Timer t;
  const MarginReport r = predict_campaign(q, space, d, c.jobs);
  log_time("prediction", t);
  const fs::path out(c.out);
  write_json(out, "margins_summary.json", r.summary_json());
  write(out, "margins_per_site.csv", r.per_site_csv());
  print_report("margin prediction", r.predicted);
  if (!validate) return 0;
  t = Timer{};
  const ValidationResult v = validate_margins(q, space, d, c.jobs);
  log_time("validation", t);
  nlohmann::ordered_json j = {{"model_hash", r.predicted.model_hash},
                              {"space", space.to_json()},
                              {"tuples", v.tuples},
                              {"disagreements", v.disagreements},
                              {"agreement", v.ok() ? "100%" : "partial"},
                              {"first_counterexample", v.first ? describe(*v.first) : ""}};
  write_json(out, "margins_validation.json", j);
  std::printf("validation: %llu tuples, %llu disagreements\n", static_cast<unsigned long long>(v.tuples),
              static_cast<unsigned long long>(v.disagreements));
  if (v.first) std::printf("first counterexample: %s\n", describe(*v.first).c_str());
  return v.ok() ? 0 : 4;
}

struct EmulateFlags {
  int input = -1;
  std::string overflow = "error";
  std::vector<std::string> inject;
};

int cmd_emulate(const Common& c, const std::string& model_path, const EmulateFlags& f) {
  const ModelFile m = load_model(model_path);
  QuantParams q = m.quantized();
  const Dataset d = dataset_for(m, c.key);
  DatapathConfig cfg;
  if (f.overflow == "wrap") {
    cfg.overflow = OverflowMode::Wrap;
  } else if (f.overflow != "error") {
    throw Error("--overflow must be error or wrap");
  }
  nlohmann::ordered_json j;
  j["model_hash"] = model_hash(q);
  if (!f.inject.empty()) {
    if (f.inject.size() != 3 && f.inject.size() != 4) throw Error("--inject takes GROUP,I[,J],VALUE");
    FaultSite s;
    s.group = parse_group(f.inject[0]);
    s.i = std::stoi(f.inject[1]);
    if (f.inject.size() == 4) s.j = std::stoi(f.inject[2]);
    const std::int64_t v = std::stoll(f.inject.back());
    q = inject(FaultSpace::full_width(25).widen(q), s, v);
    j["injected"] = {{"group", group_name(s.group)}, {"i", s.i}, {"j", s.j}, {"value", v}};
  }
  j["config"] = cfg.to_json();
  const QuantParams& ref = q;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  int agree = 0, correct = 0;
  std::int64_t cycles = 0;
  for (const Sample& s : d.samples) {
    if (f.input >= 0 && s.x != f.input) continue;
    const Emulation e = emulate(q, s.x, cfg);
    const Decision r = forward_int(ref, s.x).decision;
    agree += e.decision == r;
    correct += e.decision.index == s.label && !e.decision.tie;
    cycles = e.trace.cycles;
    rows.push_back({{"x", s.x},
                    {"label", s.label},
                    {"emulated", e.decision.index},
                    {"emulated_tie", e.decision.tie},
                    {"reference", r.index},
                    {"reference_tie", r.tie}});
    if (f.input >= 0) j["trace"] = e.trace.to_json();
  }
  const Emulation probe = emulate(q, 0, cfg);
  j["inputs"] = rows.size();
  j["agreements"] = agree;
  j["correct"] = correct;
  j["hidden_iterations"] = probe.trace.hidden_iterations;
  j["output_iterations"] = probe.trace.output_iterations;
  j["output_executions"] = probe.trace.output_executions;
  j["cycles"] = cycles;
  j["calibration"] = calibrate_cycles(cfg).to_json();
  j["decisions"] = rows;
  write_json(fs::path(c.out), "emulate.json", j);
  std::printf("emulator agrees with integer inference on %d of %zu inputs; %d correct; %lld cycles per inference\n",
              agree, rows.size(), correct, static_cast<long long>(cycles));
  return agree == static_cast<int>(rows.size()) ? 0 : 4;
}

void save_sweep_models(const SweepResult& r, const fs::path& dir) {
  for (const TrainedModel& m : r.models) {
    const fs::path p = dir / "models" / (key_hex(m.key) + "_m" + std::to_string(m.config.topology.m) + ".json");
    fs::create_directories(p.parent_path());
    save_model(m.model_file(), p);
  }
}

int cmd_sweep_precision(const Common& c, const TrainFlags& f, const std::vector<std::string>& keys,
                        const std::vector<int>& precisions) {
  SweepSpec spec;
  spec.keys = parse_keys(keys);
  spec.hidden_sizes = {c.hidden};
  spec.precisions = precisions;
  spec.space = c.space;
  spec.plan = make_plan(f, c.lambda, c.seed);
  spec.jobs = c.jobs;
  const Timer t;
  const SweepResult r = sweep_precision(spec);
  log_time("sweep", t);
  const fs::path out(c.out);
  write(out, "sweep_precision.csv", r.csv());
  write(out, "precision_slopes.csv", slopes_csv(precision_slopes(r)));
  save_sweep_models(r, out);
  return 0;
}

int cmd_sweep_hidden(const Common& c, const TrainFlags& f, const std::vector<std::string>& keys,
                     const std::vector<int>& hidden_sizes) {
  SweepSpec spec;
  spec.keys = parse_keys(keys);
  spec.hidden_sizes = hidden_sizes;
  spec.precisions = {c.precision};
  spec.space = c.space;
  spec.plan = make_plan(f, c.lambda, c.seed);
  spec.jobs = c.jobs;
  const Timer t;
  const SweepResult r = sweep_hidden(spec);
  log_time("sweep", t);
  const fs::path out(c.out);
  write(out, "sweep_hidden.csv", r.csv());
  save_sweep_models(r, out);
  for (std::uint8_t k : spec.keys) {
    const SweepRow* lo = r.find(k, hidden_sizes.front(), c.precision, "total");
    const SweepRow* hi = r.find(k, hidden_sizes.back(), c.precision, "total");
    if (lo && hi && lo->present && hi->present) {
      std::printf("key %s: m=%d %s %%, m=%d %s %%\n", key_hex(k).c_str(), hidden_sizes.front(),
                  format_percent(lo->percent).c_str(), hidden_sizes.back(), format_percent(hi->percent).c_str());
    }
  }
  return 0;
}

int cmd_search(const Common& c, const TrainFlags& f, const std::vector<double>& lambdas,
               const std::vector<std::uint64_t>& seeds, bool validate_winner) {
  SearchSpec spec;
  spec.key = parse_key(c.key);
  spec.topology = {kInputBits, c.hidden, kClasses};
  spec.precision = c.precision;
  spec.lambdas = lambdas;
  spec.seeds = seeds;
  spec.space = c.space;
  spec.plan = make_plan(f, 0.0, 0);
  spec.jobs = c.jobs;
  const Timer t;
  const SearchResult r = constrained_search(spec);
  log_time("search", t);
  const fs::path out(c.out);
  nlohmann::ordered_json summary = r.summary_json();
  const Candidate& winner = r.candidates[static_cast<std::size_t>(r.comparison.constrained)];
  const Candidate& base = r.candidates[static_cast<std::size_t>(r.comparison.baseline)];
  auto save_quantized = [&](const Candidate& cand, const char* name) {
    ModelFile m = cand.trained.model_file();
    m.float_params.reset();
    m.quant_params = quantize(cand.trained.result.params, spec.precision);
    save_model(m, out / name);
    std::printf("wrote %s\n", (out / name).string().c_str());
    return *m.quant_params;
  };
  fs::create_directories(out);
  const QuantParams wq = save_quantized(winner, "constrained_model.json");
  save_quantized(base, "baseline_model.json");
  int status = 0;
  if (validate_winner) {
    const FaultSpace space = FaultSpace::parse(spec.space, wq);
    const ValidationResult v = validate_margins(wq, space, make_dataset(spec.key), c.jobs);
    summary["winner_validation"] = {{"space", space.label()}, {"tuples", v.tuples}, {"disagreements", v.disagreements}};
    if (!v.ok()) status = 4;
  }
  write_json(out, "search_summary.json", summary);
  write(out, "search_candidates.csv", r.candidates_csv());
  write_json(out, "constrained_fault_map.json", fault_map_json(winner.shared->predicted));
  write_json(out, "baseline_fault_map.json", fault_map_json(base.shared->predicted));
  print_report("baseline", base.shared->predicted);
  print_report("constrained", winner.shared->predicted);
  std::printf("improvement factor: %s (reference: %.0fx)\n", summary["improvement_factor"].get<std::string>().c_str(),
              kReferenceImprovementFactor);
  return status;
}

// Bundles the JSON and CSV outputs of earlier commands with content hashes.
int cmd_report(const Common& c, const std::vector<std::string>& inputs) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  nlohmann::ordered_json summaries;
  nlohmann::ordered_json denominators = nlohmann::ordered_json::array();
  for (const std::string& in : inputs) {
    std::vector<fs::path> paths;
    for (const auto& e : fs::recursive_directory_iterator(in)) {
      if (e.is_regular_file()) paths.push_back(e.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const fs::path& p : paths) {
      std::ifstream f(p, std::ios::binary);
      const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
      char hash[24];
      std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
      const std::string rel = p.lexically_relative(fs::path(in).parent_path()).generic_string();
      files.push_back({{"path", rel}, {"bytes", text.size()}, {"fnv1a64", hash}});
      const std::string name = p.filename().string();
      if (p.extension() == ".json" && name.find("summary") != std::string::npos) {
        const nlohmann::ordered_json s = nlohmann::ordered_json::parse(text);
        summaries[rel] = s;
        if (s.contains("denominator")) denominators.push_back({{"source", rel}, {"denominator", s["denominator"]}});
        if (s.contains("baseline") && s["baseline"].contains("denominator")) {
          denominators.push_back({{"source", rel}, {"denominator", s["baseline"]["denominator"]}});
        }
        if (s.contains("improvement_factor")) {
          j["improvement_factor"] = s["improvement_factor"];
          j["reference_improvement_factor"] = s["reference_improvement_factor"];
        }
      }
    }
  }
  j["files"] = files;
  j["denominators"] = denominators;
  j["summaries"] = summaries;
  write_json(fs::path(c.out), "report.json", j);
  return 0;
}

void add_common(CLI::App* app, Common& c, bool model_flags) {
  app->add_option("--key", c.key, "Key byte, e.g. 0x25")->capture_default_str();
  if (model_flags) {
    app->add_option("--hidden", c.hidden, "Hidden neurons m")->capture_default_str();
    app->add_option("--lambda", c.lambda, "L2 coefficient")->capture_default_str();
    app->add_option("--seed", c.seed, "Initialisation seed")->capture_default_str();
  }
  app->add_option("--jobs", c.jobs, "Worker threads")->capture_default_str();
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partial fault tolerance of a quantized 8-m-256 S-box network"};
  app.require_subcommand(1);
  Common c;
  TrainFlags tf;

  auto* train = app.add_subcommand("train", "Train a float model for SBox(x ^ key)");
  add_common(train, c, true);
  add_train_flags(train, tf);

  std::string model_path;
  int width = 0;
  auto* quant = app.add_subcommand("quantize", "Quantize a float model at precision p");
  add_common(quant, c, false);
  quant->add_option("--model", model_path, "Float model JSON")->required();
  quant->add_option("--precision", c.precision, "Fractional bits p")->capture_default_str();
  quant->add_option("--width", width, "Storage width for every group (default: minimal)");

  double oracle_rate = 0.001;
  auto* faults = app.add_subcommand("faults", "Exhaustive single-parameter fault campaign");
  add_common(faults, c, false);
  faults->add_option("--model", model_path, "Quantized model JSON")->required();
  faults->add_option("--space", c.space, "fullN, fullmin or range")->capture_default_str();
  faults->add_option("--oracle-rate", oracle_rate, "Fraction of tuples rechecked by full recomputation")
      ->capture_default_str();

  bool validate = false;
  auto* margins = app.add_subcommand("margins", "Margin-predicted fault campaign");
  add_common(margins, c, false);
  margins->add_option("--model", model_path, "Quantized model JSON")->required();
  margins->add_option("--space", c.space, "fullN, fullmin or range")->capture_default_str();
  margins->add_flag("--validate", validate, "Compare every tuple against brute-force injection");

  EmulateFlags ef;
  auto* emu = app.add_subcommand("emulate", "Run the iterative datapath emulator");
  add_common(emu, c, false);
  emu->add_option("--model", model_path, "Quantized model JSON")->required();
  emu->add_option("--input", ef.input, "Single input byte with full trace (default: all inputs)");
  emu->add_option("--overflow", ef.overflow, "error or wrap")->capture_default_str();
  emu->add_option("--inject", ef.inject, "Fault GROUP,I[,J],VALUE")->delimiter(',');

  std::vector<std::string> keys = default_key_texts();
  std::vector<int> precisions = {1, 2, 3, 4};
  auto* sp = app.add_subcommand("sweep-precision", "%Faults per group across precisions");
  add_common(sp, c, true);
  add_train_flags(sp, tf);
  sp->add_option("--keys", keys, "Key bytes")->delimiter(',')->capture_default_str();
  sp->add_option("--precisions", precisions, "Precisions")->delimiter(',')->capture_default_str();
  sp->add_option("--space", c.space, "fullN, fullmin or range")->capture_default_str();

  std::vector<int> hidden_sizes = {8, 16, 32, 64, 128};
  int sweep_p = 3;
  std::string sweep_space = "full12";
  auto* sh = app.add_subcommand("sweep-hidden", "%Faults per group across hidden sizes");
  add_common(sh, c, false);
  add_train_flags(sh, tf);
  sh->add_option("--lambda", c.lambda, "L2 coefficient")->capture_default_str();
  sh->add_option("--seed", c.seed, "Initialisation seed")->capture_default_str();
  sh->add_option("--keys", keys, "Key bytes")->delimiter(',')->capture_default_str();
  sh->add_option("--hidden-sizes", hidden_sizes, "Hidden sizes")->delimiter(',')->capture_default_str();
  sh->add_option("--precision", sweep_p, "Fractional bits p")->capture_default_str();
  sh->add_option("--space", sweep_space, "fullN, fullmin or range")->capture_default_str();

  SearchSpec search_defaults;
  std::vector<double> lambdas = search_defaults.lambdas;
  std::vector<std::uint64_t> seeds = search_defaults.seeds;
  int search_p = search_defaults.precision;
  std::string search_space = search_defaults.space;
  TrainFlags search_tf;
  search_tf.epochs = 5000;
  search_tf.fixed_budget = true;
  bool validate_winner = false;
  auto* search = app.add_subcommand("search", "L2 grid search against an unconstrained baseline");
  add_common(search, c, false);
  add_train_flags(search, search_tf);
  search->add_option("--hidden", c.hidden, "Hidden neurons m")->capture_default_str();
  search->add_option("--precision", search_p, "Fractional bits p")->capture_default_str();
  search->add_option("--lambdas", lambdas, "L2 grid")->delimiter(',')->capture_default_str();
  search->add_option("--seeds", seeds, "Seeds, shared with the baseline")->delimiter(',')->capture_default_str();
  search->add_option("--space", search_space, "fullN, fullmin or range (merged over candidates)")
      ->capture_default_str();
  search->add_flag("--validate-winner", validate_winner, "Brute-force check of the winner's prediction");

  std::vector<std::string> inputs;
  auto* report = app.add_subcommand("report", "Bundle earlier outputs with content hashes");
  add_common(report, c, false);
  report->add_option("--inputs", inputs, "Output directories of earlier commands")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(c, tf);
    if (*quant) return cmd_quantize(c, model_path, width);
    if (*faults) return cmd_faults(c, model_path, oracle_rate);
    if (*margins) return cmd_margins(c, model_path, validate);
    if (*emu) return cmd_emulate(c, model_path, ef);
    if (*sp) return cmd_sweep_precision(c, tf, keys, precisions);
    if (*sh) {
      c.precision = sweep_p;
      c.space = sweep_space;
      if (sh->get_option("--check-precision")->count() == 0) tf.check_precision = sweep_p;
      return cmd_sweep_hidden(c, tf, keys, hidden_sizes);
    }
    if (*search) {
      c.precision = search_p;
      c.space = search_space;
      if (search->get_option("--check-precision")->count() == 0) search_tf.check_precision = search_p;
      return cmd_search(c, search_tf, lambdas, seeds, validate_winner);
    }
    if (*report) return cmd_report(c, inputs);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
