#include "pft/core_model.hpp"

#include <algorithm>
#include <cmath>

namespace pft {

namespace {

constexpr std::uint8_t rotl8(std::uint8_t v, int s) {
  return static_cast<std::uint8_t>((v << s) | (v >> (8 - s)));
}

// Walks the multiplicative group of GF(2^8) with generator 3 and its inverse
// in lockstep, so q is always p^-1; each inverse then goes through the affine
// map.
constexpr std::array<std::uint8_t, 256> build_sbox() {
  std::array<std::uint8_t, 256> box{};
  std::uint8_t p = 1;
  std::uint8_t q = 1;
  do {
    p = static_cast<std::uint8_t>(p ^ (p << 1) ^ ((p & 0x80) ? 0x1B : 0));
    q ^= static_cast<std::uint8_t>(q << 1);
    q ^= static_cast<std::uint8_t>(q << 2);
    q ^= static_cast<std::uint8_t>(q << 4);
    if (q & 0x80) q ^= 0x09;
    const std::uint8_t affine =
        q ^ rotl8(q, 1) ^ rotl8(q, 2) ^ rotl8(q, 3) ^ rotl8(q, 4);
    box[p] = static_cast<std::uint8_t>(affine ^ 0x63);
  } while (p != 1);
  box[0] = 0x63;
  return box;
}

constexpr auto kSbox = build_sbox();

}  // namespace

void Topology::validate() const {
  if (l != kInputBits) throw Error("topology: input layer must have 8 neurons");
  if (m < 1 || m > kMaxHidden) throw Error("topology: hidden size out of range");
  if (n < 1 || n > kClasses) throw Error("topology: output size must be in [1,256]");
}

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::W1: return "W1";
    case ParamGroup::B1: return "b1";
    case ParamGroup::W2: return "W2";
    case ParamGroup::B2: return "b2";
  }
  return "?";
}

ParamGroup parse_group(std::string_view name) {
  for (ParamGroup g : kAllGroups) {
    if (group_name(g) == name) return g;
  }
  throw Error("unknown parameter group '" + std::string(name) + "'");
}

FloatParams FloatParams::zeros(const Topology& t) {
  t.validate();
  return FloatParams{t, Matrix<double>(t.l, t.m), std::vector<double>(t.m),
                     Matrix<double>(t.m, t.n), std::vector<double>(t.n)};
}

void FloatParams::validate() const {
  topology.validate();
  if (w1.rows() != topology.l || w1.cols() != topology.m ||
      b1.size() != static_cast<std::size_t>(topology.m) || w2.rows() != topology.m ||
      w2.cols() != topology.n || b2.size() != static_cast<std::size_t>(topology.n)) {
    throw Error("float parameters do not match topology");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(w1.data().begin(), w1.data().end(), finite) ||
      !std::all_of(b1.begin(), b1.end(), finite) ||
      !std::all_of(w2.data().begin(), w2.data().end(), finite) ||
      !std::all_of(b2.begin(), b2.end(), finite)) {
    throw Error("float parameters contain non-finite values");
  }
}

QuantParams QuantParams::zeros(const Topology& t, int precision) {
  t.validate();
  QuantParams q;
  q.topology = t;
  q.precision = precision;
  q.w1 = Matrix<std::int64_t>(t.l, t.m);
  q.b1.assign(t.m, 0);
  q.w2 = Matrix<std::int64_t>(t.m, t.n);
  q.b2.assign(t.n, 0);
  q.group_widths = {1, 1, 1, 1};
  return q;
}

std::size_t QuantParams::group_size(ParamGroup g) const {
  return group_values(g).size();
}

std::span<const std::int64_t> QuantParams::group_values(ParamGroup g) const {
  switch (g) {
    case ParamGroup::W1: return w1.data();
    case ParamGroup::B1: return b1;
    case ParamGroup::W2: return w2.data();
    case ParamGroup::B2: return b2;
  }
  return {};
}

std::span<std::int64_t> QuantParams::group_values(ParamGroup g) {
  switch (g) {
    case ParamGroup::W1: return w1.data();
    case ParamGroup::B1: return b1;
    case ParamGroup::W2: return w2.data();
    case ParamGroup::B2: return b2;
  }
  return {};
}

void QuantParams::validate() const {
  topology.validate();
  if (precision < 0 || precision > 16) throw Error("precision must be in [0,16]");
  if (w1.rows() != topology.l || w1.cols() != topology.m ||
      b1.size() != static_cast<std::size_t>(topology.m) || w2.rows() != topology.m ||
      w2.cols() != topology.n || b2.size() != static_cast<std::size_t>(topology.n)) {
    throw Error("quantized parameters do not match topology");
  }
  for (ParamGroup g : kAllGroups) {
    const int width = group_widths[static_cast<int>(g)];
    if (width < 1 || width > 25) {
      throw Error("group width for " + std::string(group_name(g)) + " must be in [1,25]");
    }
    const std::int64_t lo = -(std::int64_t{1} << (width - 1));
    const std::int64_t hi = (std::int64_t{1} << (width - 1)) - 1;
    for (std::int64_t v : group_values(g)) {
      if (v < lo || v > hi) {
        throw Error("value " + std::to_string(v) + " does not fit the " +
                    std::to_string(width) + "-bit width of group " + std::string(group_name(g)));
      }
    }
  }
}

void Dataset::validate(int classes) const {
  if (samples.size() != static_cast<std::size_t>(kSamples)) {
    throw Error("dataset must hold exactly 256 samples");
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].x != i) throw Error("dataset samples must be ordered by input byte");
    if (samples[i].label < 0 || samples[i].label >= classes) {
      throw Error("dataset label out of range");
    }
  }
}

std::uint8_t aes_sbox(std::uint8_t x) { return kSbox[x]; }

Dataset make_dataset(std::uint8_t key) {
  Dataset d;
  d.key_byte = key;
  d.samples.reserve(kSamples);
  for (int x = 0; x < kSamples; ++x) {
    const auto xb = static_cast<std::uint8_t>(x);
    d.samples.push_back({xb, aes_sbox(static_cast<std::uint8_t>(xb ^ key))});
  }
  return d;
}

std::array<int, kInputBits> encode_input(std::uint8_t x) {
  std::array<int, kInputBits> bits{};
  for (int i = 0; i < kInputBits; ++i) bits[i] = input_bit(x, i);
  return bits;
}

std::vector<int> encode_label(std::uint8_t y, int classes) {
  if (y >= classes) throw Error("label outside the class range");
  std::vector<int> v(classes, 0);
  v[y] = 1;
  return v;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - mx);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return out;
}

FloatTrace forward_float(const FloatParams& p, std::uint8_t x) {
  const Topology& t = p.topology;
  FloatTrace tr;
  tr.pre_hidden.assign(p.b1.begin(), p.b1.end());
  for (int i = 0; i < t.l; ++i) {
    if (!input_bit(x, i)) continue;
    const auto row = p.w1.row(i);
    for (int j = 0; j < t.m; ++j) tr.pre_hidden[j] += row[j];
  }
  tr.hidden.resize(t.m);
  for (int j = 0; j < t.m; ++j) tr.hidden[j] = std::max(0.0, tr.pre_hidden[j]);
  tr.logits.assign(p.b2.begin(), p.b2.end());
  for (int j = 0; j < t.m; ++j) {
    const double h = tr.hidden[j];
    if (h == 0.0) continue;
    const auto row = p.w2.row(j);
    for (int k = 0; k < t.n; ++k) tr.logits[k] += h * row[k];
  }
  tr.probabilities = softmax(tr.logits);
  tr.decision = argmax_decision<double>(tr.logits);
  return tr;
}

IntTrace forward_int(const QuantParams& q, std::uint8_t x) {
  const Topology& t = q.topology;
  IntTrace tr;
  tr.pre_hidden.assign(q.b1.begin(), q.b1.end());
  for (int i = 0; i < t.l; ++i) {
    if (!input_bit(x, i)) continue;
    const auto row = q.w1.row(i);
    for (int j = 0; j < t.m; ++j) tr.pre_hidden[j] += row[j];
  }
  tr.hidden.resize(t.m);
  for (int j = 0; j < t.m; ++j) tr.hidden[j] = std::max<std::int64_t>(0, tr.pre_hidden[j]);
  tr.logits.assign(q.b2.begin(), q.b2.end());
  for (int j = 0; j < t.m; ++j) {
    const std::int64_t h = tr.hidden[j];
    if (h == 0) continue;
    const auto row = q.w2.row(j);
    for (int k = 0; k < t.n; ++k) tr.logits[k] += h * row[k];
  }
  tr.decision = argmax_decision<std::int64_t>(tr.logits);
  return tr;
}

namespace {

template <class Params, class Forward>
double accuracy_impl(const Params& p, const Dataset& d, Forward fwd) {
  int correct = 0;
  for (const Sample& s : d.samples) {
    const Decision dec = fwd(p, s.x).decision;
    if (dec.index == s.label && !dec.tie) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(d.samples.size());
}

}  // namespace

double accuracy(const FloatParams& p, const Dataset& d) {
  return accuracy_impl(p, d, forward_float);
}

double accuracy(const QuantParams& q, const Dataset& d) {
  return accuracy_impl(q, d, forward_int);
}

}  // namespace pft
