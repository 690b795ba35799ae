#include "pft/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace pft {

using nlohmann::json;
using nlohmann::ordered_json;

const Topology& ModelFile::topology() const {
  if (quant_params) return quant_params->topology;
  if (float_params) return float_params->topology;
  throw Error("model file holds no parameters");
}

const QuantParams& ModelFile::quantized() const {
  if (!quant_params) throw Error("model is not quantized; run `quantize` first");
  return *quant_params;
}

const FloatParams& ModelFile::real() const {
  if (!float_params) throw Error("model holds integer parameters, float parameters required");
  return *float_params;
}

namespace {

template <class T>
std::vector<T> read_array(const json& j, const char* key, std::size_t expected) {
  if (!j.contains(key)) throw Error(std::string("model file missing '") + key + "'");
  auto v = j.at(key).get<std::vector<T>>();
  if (v.size() != expected) {
    throw Error(std::string("model field '") + key + "' has wrong length");
  }
  return v;
}

}  // namespace

ordered_json to_json(const ModelFile& m) {
  ordered_json j;
  j["format_version"] = kModelFormatVersion;
  const Topology& t = m.topology();
  j["topology"] = {{"l", t.l}, {"m", t.m}, {"n", t.n}};
  j["input_bit_order"] = "lsb_first";
  if (m.key_byte) {
    j["key_byte"] = *m.key_byte;
  } else {
    j["key_byte"] = nullptr;
  }
  if (m.quant_params) {
    const QuantParams& q = *m.quant_params;
    j["kind"] = "quantized";
    j["precision_p"] = q.precision;
    j["group_widths"] = {{"W1", q.group_widths[0]},
                         {"b1", q.group_widths[1]},
                         {"W2", q.group_widths[2]},
                         {"b2", q.group_widths[3]}};
    j["W1"] = q.w1.data();
    j["b1"] = q.b1;
    j["W2"] = q.w2.data();
    j["b2"] = q.b2;
  } else {
    const FloatParams& p = m.real();
    j["kind"] = "float";
    j["precision_p"] = nullptr;
    j["group_widths"] = nullptr;
    j["W1"] = p.w1.data();
    j["b1"] = p.b1;
    j["W2"] = p.w2.data();
    j["b2"] = p.b2;
  }
  j["training_metadata"] = {{"seed", m.training.seed},
                            {"lambda", m.training.lambda},
                            {"epochs", m.training.epochs},
                            {"learning_rate", m.training.learning_rate},
                            {"momentum", m.training.momentum},
                            {"l2_on_biases", m.training.l2_on_biases},
                            {"converged", m.training.converged}};
  return j;
}

ModelFile model_from_json(const json& j) {
  if (j.value("format_version", 0) != kModelFormatVersion) {
    throw Error("unsupported model format_version");
  }
  if (j.value("input_bit_order", std::string("lsb_first")) != "lsb_first") {
    throw Error("only lsb_first input bit order is supported");
  }
  ModelFile m;
  Topology t;
  t.l = j.at("topology").at("l").get<int>();
  t.m = j.at("topology").at("m").get<int>();
  t.n = j.at("topology").at("n").get<int>();
  t.validate();
  if (j.contains("key_byte") && !j.at("key_byte").is_null()) {
    const int k = j.at("key_byte").get<int>();
    if (k < 0 || k > 255) throw Error("key_byte must be in [0,255]");
    m.key_byte = static_cast<std::uint8_t>(k);
  }
  if (j.contains("training_metadata")) {
    const json& tm = j.at("training_metadata");
    m.training.seed = tm.value("seed", std::uint64_t{0});
    m.training.lambda = tm.value("lambda", 0.0);
    m.training.epochs = tm.value("epochs", 0);
    m.training.learning_rate = tm.value("learning_rate", 0.0);
    m.training.momentum = tm.value("momentum", 0.0);
    m.training.l2_on_biases = tm.value("l2_on_biases", false);
    m.training.converged = tm.value("converged", false);
  }
  const std::size_t nw1 = static_cast<std::size_t>(t.l) * t.m;
  const std::size_t nw2 = static_cast<std::size_t>(t.m) * t.n;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "quantized") {
    QuantParams q = QuantParams::zeros(t, j.at("precision_p").get<int>());
    q.w1.data() = read_array<std::int64_t>(j, "W1", nw1);
    q.b1 = read_array<std::int64_t>(j, "b1", t.m);
    q.w2.data() = read_array<std::int64_t>(j, "W2", nw2);
    q.b2 = read_array<std::int64_t>(j, "b2", t.n);
    const json& gw = j.at("group_widths");
    q.group_widths = {gw.at("W1").get<int>(), gw.at("b1").get<int>(), gw.at("W2").get<int>(),
                      gw.at("b2").get<int>()};
    q.validate();
    m.quant_params = std::move(q);
  } else if (kind == "float") {
    FloatParams p = FloatParams::zeros(t);
    p.w1.data() = read_array<double>(j, "W1", nw1);
    p.b1 = read_array<double>(j, "b1", t.m);
    p.w2.data() = read_array<double>(j, "W2", nw2);
    p.b2 = read_array<double>(j, "b2", t.n);
    p.validate();
    m.float_params = std::move(p);
  } else {
    throw Error("unknown model kind '" + kind + "'");
  }
  return m;
}

std::string dump_json(const ordered_json& j) { return j.dump(2) + "\n"; }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

void save_model(const ModelFile& m, const std::filesystem::path& path) {
  write_text_file(path, dump_json(to_json(m)));
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("malformed model file " + path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string model_hash(const QuantParams& q) {
  ModelFile m;
  m.quant_params = q;
  ordered_json j = to_json(m);
  j.erase("training_metadata");
  j.erase("key_byte");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace pft
