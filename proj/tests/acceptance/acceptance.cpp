// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "pft/experiments.hpp"

namespace fs = std::filesystem;
using namespace pft;
using Json = nlohmann::json;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <class... Args>
std::string strf(const char* f, Args... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Json read_json(const fs::path& p) { return Json::parse(read_file(p)); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.emplace_back();
    } else {
      out.back() += ch;
    }
  }
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) rows.push_back(split_csv_line(line));
  return rows;
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

const std::vector<std::string> kKeys = {"0x00", "0x25", "0x5A"};

struct Context {
  int jobs = 8;
  fs::path work;
  std::string cli;

  // Runs the CLI in `dir` with output captured to `log`; returns the exit code
  // and the wall-clock time.
  std::pair<int, double> run(const fs::path& dir, const std::string& args, const std::string& log) const {
    fs::create_directories(dir);
    const std::string cmd = "cd " + quote(dir.string()) + " && " + quote(cli) + " " + args + " > " + quote(log) +
                            " 2>&1";
    const Timer t;
    const int status = std::system(cmd.c_str());
    const double secs = t.seconds();
    const int code = status == -1 ? -1 : WIFEXITED(status) ? WEXITSTATUS(status) : 128;
    return {code, secs};
  }

  fs::path model_dir(const std::string& key) const { return work / "c1" / key; }
};

Outcome training(const Context& c) {
  bool pass = true;
  std::string detail;
  for (const std::string& key : kKeys) {
    const fs::path dir = c.model_dir(key);
    const auto [train_rc, train_s] = c.run(dir, "train --key " + key + " --hidden 128 --out train", "train.log");
    const auto [quant_rc, quant_s] =
        c.run(dir, "quantize --key " + key + " --model train/model.json --precision 1 --out quant", "quant.log");
    (void)quant_s;
    if (train_rc != 0 || quant_rc != 0) {
      pass = false;
      detail += strf("%s train exit %d, quantize exit %d; ", key.c_str(), train_rc, quant_rc);
      continue;
    }
    const Json r = read_json(dir / "quant" / "quantize_report.json");
    const double acc = r["accuracy"].get<double>();
    const int ties = r["tie_count"].get<int>();
    const bool ok = acc == 1.0 && ties == 0 && train_s < 600.0;
    pass = pass && ok;
    detail += strf("%s float 256/256 in %.1f s, p=1 %d/256 ties %d; ", key.c_str(), train_s,
                   static_cast<int>(std::lround(acc * 256)), ties);
  }
  return {pass, detail};
}

// Exhaustive injection with whole-network recomputation on a random 8-2-4
// network labelled with its own tie-free decisions.
Outcome toy_equivalence() {
  SplitMix64 rng(2);
  QuantParams toy;
  Dataset d;
  for (;;) {
    toy = QuantParams::zeros({kInputBits, 2, 4}, 1);
    for (ParamGroup g : kAllGroups) {
      for (std::int64_t& v : toy.group_values(g)) v = static_cast<std::int64_t>(rng.next() % 15) - 7;
    }
    toy.group_widths = {4, 4, 4, 4};
    d.samples.clear();
    bool tie = false;
    for (int x = 0; x < 256; ++x) {
      const Decision dec = forward_int(toy, static_cast<std::uint8_t>(x)).decision;
      tie = tie || dec.tie;
      d.samples.push_back({static_cast<std::uint8_t>(x), dec.index});
    }
    if (!tie) break;
  }
  const FaultSpace space = FaultSpace::full_width(8);
  const Timer t;
  const MarginReport predicted = predict_campaign(toy, space, d);
  const ValidationResult v = validate_margins(toy, space, d);
  const double secs = t.seconds();

  const QuantParams wide = space.widen(toy);
  const auto sites = enumerate_sites(toy.topology);
  bool recount = true;
  for (std::size_t si = 0; si < sites.size(); ++si) {
    std::uint64_t faulty = 0;
    for (std::int64_t value = -128; value <= 127; ++value) {
      if (value == read_param(wide, sites[si])) continue;
      const QuantParams f = inject(wide, sites[si], value);
      for (const Sample& s : d.samples) {
        const Decision dec = forward_int(f, s.x).decision;
        faulty += dec.tie || dec.index != s.label;
      }
    }
    recount = recount && faulty == predicted.predicted.per_site[si];
  }
  return {v.ok() && recount && secs < 1.0,
          strf("toy 8-2-4 full8: %llu tuples, %llu disagreements, per-site recount %s (%.3f s)",
               static_cast<unsigned long long>(v.tuples), static_cast<unsigned long long>(v.disagreements),
               recount ? "equal" : "DIFFERENT", secs)};
}

Outcome oracle_equivalence(const Context& c) {
  const fs::path dir = c.work / "c2";
  const auto [train_rc, train_s] = c.run(dir, "train --key 0x25 --hidden 16 --out train", "train.log");
  const auto [quant_rc, quant_s] =
      c.run(dir, "quantize --key 0x25 --model train/model.json --precision 1 --out quant", "quant.log");
  (void)train_s;
  (void)quant_s;
  if (train_rc != 0 || quant_rc != 0) {
    return {false, strf("8-16-256 train exit %d, quantize exit %d", train_rc, quant_rc)};
  }
  const auto [rc, secs] =
      c.run(dir,
            strf("margins --key 0x25 --model quant/quantized.json --space full8 --validate --jobs %d --out margins",
                 c.jobs),
            "margins.log");
  const Json v = read_json(dir / "margins" / "margins_validation.json");
  const auto tuples = v["tuples"].get<std::uint64_t>();
  const auto disagreements = v["disagreements"].get<std::uint64_t>();
  const Outcome toy = toy_equivalence();
  std::string detail = strf("8-16-256 p=1 full8: %llu tuples (expected %llu), %llu disagreements, %.1f s with %d jobs; ",
                            static_cast<unsigned long long>(tuples), 4496ull * 255 * 256,
                            static_cast<unsigned long long>(disagreements), secs, c.jobs);
  if (disagreements) detail += "first counterexample " + v["first_counterexample"].get<std::string>() + "; ";
  return {rc == 0 && disagreements == 0 && tuples == 4496ull * 255 * 256 && secs < 1800.0 && toy.pass,
          detail + toy.detail};
}

Outcome constrained(const Context& c) {
  const fs::path dir = c.work / "c3";
  const auto [rc, secs] = c.run(dir, strf("search --key 0x25 --jobs %d --out search", c.jobs), "search.log");
  if (rc != 0) {
    return {false, strf("search exit %d: %s", rc, read_file(dir / "search.log").c_str())};
  }
  const Json j = read_json(dir / "search" / "search_summary.json");
  const std::string factor = j["improvement_factor"].get<std::string>();
  const bool pass = factor == "all-safe" || std::stod(factor) >= 10.0;
  const Json& b = j["baseline"];
  const Json& w = j["constrained"];
  return {pass, strf("space %s; baseline lambda 0 seed %llu %llu faulty pairs (%s %%); best lambda %g seed %llu "
                     "%llu faulty pairs (%s %%); our factor %s, reference factor %s, required 10 (%.0f s)",
                     j["space"]["label"].get<std::string>().c_str(), b["seed"].get<unsigned long long>(),
                     b["faulty_pairs"].get<unsigned long long>(), b["percent_faults"].get<std::string>().c_str(),
                     w["lambda"].get<double>(), w["seed"].get<unsigned long long>(),
                     w["faulty_pairs"].get<unsigned long long>(), w["percent_faults"].get<std::string>().c_str(),
                     factor.c_str(), j["reference_improvement_factor"].get<std::string>().c_str(), secs)};
}

Outcome hidden_trend(const Context& c) {
  const fs::path dir = c.work / "c4";
  const auto [rc, secs] = c.run(dir,
                                strf("sweep-hidden --keys 0x00,0x25,0x5A --hidden-sizes 8,32,128 --precision 3 "
                                     "--space full12 --jobs %d --out sweep",
                                     c.jobs),
                                "sweep.log");
  if (rc != 0) return {false, strf("sweep-hidden exit %d", rc)};
  std::map<std::pair<std::string, int>, std::vector<std::string>> total;
  for (const auto& row : read_csv(dir / "sweep" / "sweep_hidden.csv")) {
    if (row.size() == 8 && row[3] == "total") total[{row[0], std::stoi(row[1])}] = row;
  }
  bool pass = true;
  std::string detail = "p=3, full12: ";
  for (const std::string& key : kKeys) {
    const auto lo = total.find({key, 8});
    const auto hi = total.find({key, 128});
    const bool present = lo != total.end() && hi != total.end() && lo->second[4] == "ok" && hi->second[4] == "ok";
    const bool ok = present && std::stod(hi->second[7]) < std::stod(lo->second[7]);
    pass = pass && ok;
    if (present) {
      detail += strf("%s m=8 %s %%, m=32 %s %%, m=128 %s %%; ", key.c_str(), lo->second[7].c_str(),
                     total[{key, 32}].size() == 8 ? total[{key, 32}][7].c_str() : "absent", hi->second[7].c_str());
    } else {
      detail += key + " missing cells; ";
    }
  }
  return {pass, detail + strf("(%.0f s)", secs)};
}

struct Campaign {
  int rc = -1;
  double seconds = 0.0;
};

Campaign full_campaign(const Context& c) {
  const fs::path dir = c.model_dir("0x25");
  const auto [rc, secs] =
      c.run(dir, strf("faults --key 0x25 --model quant/quantized.json --space full8 --jobs %d --out faults", c.jobs),
            "faults.log");
  return {rc, secs};
}

Outcome bookkeeping(const Context& c, const Campaign& run) {
  if (run.rc != 0) return {false, strf("faults exit %d", run.rc)};
  const fs::path dir = c.model_dir("0x25") / "faults";
  const Json s = read_json(dir / "faults_summary.json");
  std::map<std::string, std::uint64_t> sums;
  std::size_t rows = 0;
  for (const auto& row : read_csv(dir / "faults_per_site.csv")) {
    sums[row[0]] += std::stoull(row[3]);
    ++rows;
  }
  std::uint64_t total = 0;
  bool groups = true;
  for (const auto& [name, sum] : sums) {
    total += sum;
    groups = groups && s["groups"][name]["faulty_outputs"].get<std::uint64_t>() == sum;
  }
  const auto denominator = s["denominator"].get<std::uint64_t>();
  const auto faulty = s["faulty_outputs"].get<std::uint64_t>();
  const bool pass = denominator == 34176ull * 255 * 256 && denominator == 2231009280ull && rows == 34176 &&
                    sums.size() == 4 && groups && total == faulty;
  return {pass, strf("denominator %llu = 34176 x 255 x 256; CSV %zu sites summing to %llu, summary %llu, per-group "
                     "sums %s",
                     static_cast<unsigned long long>(denominator), rows, static_cast<unsigned long long>(total),
                     static_cast<unsigned long long>(faulty), groups ? "equal" : "DIFFERENT")};
}

std::vector<double*> all_params(FloatParams& p) {
  std::vector<double*> out;
  for (ParamGroup g : kAllGroups) {
    std::vector<double>& v = g == ParamGroup::W1 ? p.w1.data()
                              : g == ParamGroup::B1 ? p.b1
                              : g == ParamGroup::W2 ? p.w2.data()
                                                    : p.b2;
    for (double& x : v) out.push_back(&x);
  }
  return out;
}

Outcome gradients() {
  SplitMix64 rng(2024);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Dataset d = make_dataset(static_cast<std::uint8_t>(rng.next()));
    for (Sample& s : d.samples) s.label %= 16;
    FloatParams p = init_params({kInputBits, 4, 16}, rng.next());
    auto kink_distance = [&] {
      double best = 1e300;
      for (int x = 0; x < 256; ++x) {
        for (double a : forward_float(p, static_cast<std::uint8_t>(x)).pre_hidden) best = std::min(best, std::abs(a));
      }
      return best;
    };
    do {
      for (double& b : p.b1) b = rng.uniform() - 0.5;
    } while (kink_distance() < 1e-3);
    for (double& b : p.b2) b = rng.uniform() - 0.5;
    const double lambda = trial % 2 ? 0.05 * rng.uniform() : 0.0;
    const bool biases = trial % 4 == 1;
    LossAndGrads lg = loss_and_grads(p, d, lambda, biases);
    const auto analytic = all_params(lg.grads);
    const auto params = all_params(p);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double h = 1e-4;
      const double w = *params[i];
      auto at = [&](double v) {
        *params[i] = v;
        return loss_and_grads(p, d, lambda, biases).loss;
      };
      const double numeric = (at(w - 2 * h) - 8 * at(w - h) + 8 * at(w + h) - at(w + 2 * h)) / (12 * h);
      *params[i] = w;
      const double a = *analytic[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
      ++checked;
    }
  }
  return {worst < 1e-5, strf("100 random 8-4-16 networks, %zu partial derivatives, max relative error %.3e", checked,
                             worst)};
}

Outcome datapath(const Context& c) {
  const fs::path dir = c.model_dir("0x25");
  const auto [rc, secs] = c.run(dir, "emulate --key 0x25 --model quant/quantized.json --out emulate", "emulate.log");
  (void)secs;
  if (rc != 0) return {false, strf("emulate exit %d: %s", rc, read_file(dir / "emulate.log").c_str())};
  const Json j = read_json(dir / "emulate" / "emulate.json");
  const int agree = j["agreements"].get<int>();
  const int hidden = j["hidden_iterations"].get<int>();
  const int outputs = j["output_iterations"].get<int>();
  const auto executions = j["output_executions"].get<std::int64_t>();
  std::string cal;
  for (const Json& row : j["calibration"]["rows"]) {
    cal += strf("%s ref %lld fit %+.0f cfg %+lld, ", row["design"].get<std::string>().c_str(),
                row["reference_cycles"].get<long long>(), row["least_squares_residual"].get<double>(),
                row["config_residual"].get<long long>());
  }
  const bool pass = agree == 256 && j["inputs"].get<int>() == 256 && hidden == 128 && outputs == 256 &&
                    executions == 256 * 16;
  return {pass, strf("%d/256 decisions equal integer inference, no overflow at default widths; %d hidden "
                     "iterations, %d x %lld output executions; %lld cycles; calibration residuals (informational): %s",
                     agree, hidden, outputs, static_cast<long long>(executions / std::max(outputs, 1)),
                     j["cycles"].get<long long>(), cal.substr(0, cal.size() - 2).c_str())};
}

std::vector<std::string> differing_files(const fs::path& a, const fs::path& b) {
  std::vector<std::string> diff;
  std::vector<fs::path> names;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file() && e.path().extension() != ".log") names.push_back(fs::relative(e.path(), a));
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file() && e.path().extension() != ".log" && !fs::exists(a / fs::relative(e.path(), b))) {
      diff.push_back(fs::relative(e.path(), b).string());
    }
  }
  for (const fs::path& n : names) {
    if (!fs::exists(b / n) || read_file(a / n) != read_file(b / n)) diff.push_back(n.string());
  }
  return diff;
}

Outcome determinism(const Context& c) {
  const std::vector<std::string> commands = {
      "train --key 0x25 --hidden 16 --out train",
      "quantize --key 0x25 --model train/model.json --precision 1 --out quant",
      "faults --key 0x25 --model quant/quantized.json --space full8 --oracle-rate 0.01 --out faults",
      "margins --key 0x25 --model quant/quantized.json --space full8 --validate --out margins",
      "emulate --key 0x25 --model quant/quantized.json --out emulate",
      "sweep-precision --keys 0x25 --hidden 16 --precisions 1,2 --space full8 --out sweep_precision",
      "sweep-hidden --keys 0x25,0x5A --hidden-sizes 8,16 --out sweep_hidden",
      "search --key 0x25 --hidden 32 --precision 3 --lambdas 1e-5,1e-4 --seeds 1,2 --epochs 2000 --out search",
      "report --inputs train quant faults margins emulate sweep_precision sweep_hidden search --out report",
  };
  const std::vector<std::pair<std::string, int>> runs = {{"a", 1}, {"b", c.jobs}, {"c", 1}};
  std::string failures;
  for (const auto& [name, jobs] : runs) {
    const fs::path root = c.work / "c8" / name;
    fs::remove_all(root);
    for (std::size_t k = 0; k < commands.size(); ++k) {
      const auto [rc, secs] = c.run(root, commands[k] + strf(" --jobs %d", jobs), strf("%zu.log", k));
      (void)secs;
      if (rc != 0) failures += strf("run %s command %zu exit %d; ", name.c_str(), k, rc);
    }
  }
  const fs::path base = c.work / "c8";
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(base / "a")) {
    files += e.is_regular_file() && e.path().extension() != ".log";
  }
  std::vector<std::string> diff = differing_files(base / "a", base / "b");
  for (const std::string& f : differing_files(base / "a", base / "c")) diff.push_back(f);
  std::string detail = strf("%zu commands x 3 runs (jobs 1, %d, 1): %zu output files, %zu differing", commands.size(),
                            c.jobs, files, diff.size());
  for (std::size_t k = 0; k < std::min<std::size_t>(diff.size(), 5); ++k) detail += (k ? ", " : ": ") + diff[k];
  if (!failures.empty()) detail += "; " + failures;
  return {failures.empty() && diff.empty() && files > 0, detail};
}

Outcome performance(const Context& c, const Campaign& run) {
  if (run.rc != 0) return {false, strf("faults exit %d", run.rc)};
  const fs::path dir = c.model_dir("0x25");
  const auto [rc, secs] =
      c.run(dir, strf("margins --key 0x25 --model quant/quantized.json --space full8 --jobs %d --out margins", c.jobs),
            "margins.log");
  if (rc != 0) return {false, strf("margins exit %d", rc)};
  const Json f = read_json(dir / "faults" / "faults_summary.json");
  const Json m = read_json(dir / "margins" / "margins_summary.json");
  const auto samples = f["oracle"]["samples"].get<std::uint64_t>();
  const auto disagreements = f["oracle"]["disagreements"].get<std::uint64_t>();
  const bool same = read_file(dir / "faults" / "faults_per_site.csv") ==
                    [&] {
                      std::istringstream in(read_file(dir / "margins" / "margins_per_site.csv"));
                      std::string line, out = "group,i,j,faulty_pairs\n";
                      std::getline(in, line);
                      while (std::getline(in, line)) {
                        auto cells = split_csv_line(line);
                        out += cells[0] + "," + cells[1] + "," + cells[2] + "," + cells[3] + "\n";
                      }
                      return out;
                    }();
  const bool pass = run.seconds < 4 * 3600.0 && secs < 300.0 && samples > 0 && disagreements == 0 && same &&
                    m["faulty_outputs"] == f["faulty_outputs"];
  return {pass, strf("8-128-256 full8 brute force %llu verdicts in %.1f s with %d jobs (limit 14400 s); margin "
                     "prediction %.1f s (limit 300 s), per-site counts %s; oracle %llu tuples, %llu disagreements; "
                     "hardware threads available %u",
                     f["denominator"].get<unsigned long long>(), run.seconds, c.jobs, secs,
                     same ? "identical" : "DIFFERENT", static_cast<unsigned long long>(samples),
                     static_cast<unsigned long long>(disagreements), std::thread::hardware_concurrency())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Context c;
  app.add_option("--jobs", c.jobs, "Worker threads")->capture_default_str();
  app.add_option("--work", c.work, "Scratch directory")->required();
  app.add_option("--cli", c.cli, "Path to the pft executable")->required();
  CLI11_PARSE(app, argc, argv);
  c.work = fs::absolute(c.work);
  c.cli = fs::absolute(c.cli).string();
  fs::remove_all(c.work);
  fs::create_directories(c.work);

  int failed = 0;
  auto report = [&](int n, const char* name, const std::function<Outcome()>& body) {
    const Timer t;
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d %s: %s (%s) [%.0f s]\n", n, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                t.seconds());
    std::fflush(stdout);
  };

  Campaign campaign;
  report(1, "training", [&] { return training(c); });
  report(2, "oracle equivalence", [&] { return oracle_equivalence(c); });
  report(3, "constrained improvement", [&] { return constrained(c); });
  report(4, "hidden-size trend", [&] { return hidden_trend(c); });
  report(5, "denominator and bookkeeping", [&] {
    campaign = full_campaign(c);
    return bookkeeping(c, campaign);
  });
  report(6, "gradient correctness", [] { return gradients(); });
  report(7, "datapath equivalence", [&] { return datapath(c); });
  report(8, "determinism", [&] { return determinism(c); });
  report(9, "performance", [&] { return performance(c, campaign); });
  std::printf("%d of 9 criteria passed\n", 9 - failed);
  return failed == 0 ? 0 : 1;
}
