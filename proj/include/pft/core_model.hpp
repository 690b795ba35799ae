#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pft {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kInputBits = 8;
inline constexpr int kClasses = 256;
inline constexpr int kSamples = 256;

// Quantized parameters are kept below this magnitude so that every integer
// forward pass fits in int64 without overflow checks (m <= kMaxHidden).
inline constexpr std::int64_t kMaxQuantMagnitude = std::int64_t{1} << 24;
inline constexpr int kMaxHidden = 1024;

// Network shape l-m-n. l is always 8 (one neuron per input bit). n is 256
// for the S-box task; smaller n is accepted for synthetic toy networks.
struct Topology {
  int l = kInputBits;
  int m = 0;
  int n = kClasses;

  void validate() const;
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(l) * m + m + static_cast<std::size_t>(m) * n + n;
  }
  friend bool operator==(const Topology&, const Topology&) = default;
};

// Dense row-major matrix.
template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }

  std::span<T> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const T> row(int r) const {
    return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

// The four parameter groups, in campaign enumeration order.
enum class ParamGroup : int { W1 = 0, B1 = 1, W2 = 2, B2 = 3 };
inline constexpr std::array<ParamGroup, 4> kAllGroups = {ParamGroup::W1, ParamGroup::B1,
                                                         ParamGroup::W2, ParamGroup::B2};
std::string_view group_name(ParamGroup g);
ParamGroup parse_group(std::string_view name);

// Real-valued parameters. w1 is l x m (input i, hidden j); w2 is m x n
// (hidden j, output k).
struct FloatParams {
  Topology topology;
  Matrix<double> w1;
  std::vector<double> b1;
  Matrix<double> w2;
  std::vector<double> b2;

  static FloatParams zeros(const Topology& t);
  void validate() const;
  friend bool operator==(const FloatParams&, const FloatParams&) = default;
};

using GroupWidths = std::array<int, 4>;

// Fixed-point parameters. w1, b1, w2 are scaled by 2^p; b2 by 2^(2p), so all
// terms of an output logit share the scale 2^(2p).
struct QuantParams {
  Topology topology;
  int precision = 0;
  Matrix<std::int64_t> w1;
  std::vector<std::int64_t> b1;
  Matrix<std::int64_t> w2;
  std::vector<std::int64_t> b2;
  GroupWidths group_widths{};

  static QuantParams zeros(const Topology& t, int precision = 0);
  void validate() const;

  int width(ParamGroup g) const { return group_widths[static_cast<int>(g)]; }
  std::size_t group_size(ParamGroup g) const;
  std::span<const std::int64_t> group_values(ParamGroup g) const;
  std::span<std::int64_t> group_values(ParamGroup g);

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

struct Sample {
  std::uint8_t x = 0;
  int label = 0;
};

struct Dataset {
  std::optional<std::uint8_t> key_byte;
  std::vector<Sample> samples;  // one per x, ordered by x

  void validate(int classes) const;
};

struct Decision {
  int index = 0;
  bool tie = false;
  friend bool operator==(const Decision&, const Decision&) = default;
};

template <class T>
struct ForwardTrace {
  std::vector<T> pre_hidden;
  std::vector<T> hidden;
  std::vector<T> logits;
  Decision decision;
};

struct FloatTrace : ForwardTrace<double> {
  std::vector<double> probabilities;
};

using IntTrace = ForwardTrace<std::int64_t>;

std::uint8_t aes_sbox(std::uint8_t x);
Dataset make_dataset(std::uint8_t key);

// LSB-first: component i is bit i of x.
std::array<int, kInputBits> encode_input(std::uint8_t x);
inline int input_bit(std::uint8_t x, int i) { return (x >> i) & 1; }
std::vector<int> encode_label(std::uint8_t y, int classes = kClasses);

// Index of the maximum; the lowest index wins a tie and the tie is flagged.
template <class T>
Decision argmax_decision(std::span<const T> values) {
  if (values.empty()) throw Error("argmax of an empty vector");
  Decision d;
  T best = values[0];
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > best) {
      best = values[k];
      d.index = static_cast<int>(k);
      d.tie = false;
    } else if (values[k] == best) {
      d.tie = true;
    }
  }
  return d;
}

// Softmax with max subtraction.
std::vector<double> softmax(std::span<const double> logits);

FloatTrace forward_float(const FloatParams& p, std::uint8_t x);
IntTrace forward_int(const QuantParams& q, std::uint8_t x);

// A sample counts as correct only when its label wins without a tie.
double accuracy(const FloatParams& p, const Dataset& d);
double accuracy(const QuantParams& q, const Dataset& d);

}  // namespace pft
