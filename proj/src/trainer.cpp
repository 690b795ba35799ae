#include "pft/trainer.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <xmmintrin.h>
#include <pmmintrin.h>

#include "pft/quantizer.hpp"

namespace pft {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMatrix input_matrix(const Dataset& d) {
  RowMatrix x(static_cast<Eigen::Index>(d.samples.size()), kInputBits);
  for (std::size_t s = 0; s < d.samples.size(); ++s) {
    for (int i = 0; i < kInputBits; ++i) {
      x(static_cast<Eigen::Index>(s), i) = input_bit(d.samples[s].x, i);
    }
  }
  return x;
}

// Owned copies keep Eigen's buffers aligned; reductions over maps of
// arbitrarily aligned storage change summation order between runs.
RowMatrix owned(const Matrix<double>& m) {
  return Eigen::Map<const RowMatrix>(m.data().data(), m.rows(), m.cols());
}
Eigen::RowVectorXd owned(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <class Dense>
void store(const Dense& src, std::vector<double>& dst) {
  const RowMatrix tmp = src;
  std::copy(tmp.data(), tmp.data() + tmp.size(), dst.begin());
}

template <class F>
void for_each_tensor(FloatParams& a, const FloatParams& b, F f) {
  f(a.w1.data(), b.w1.data());
  f(a.b1, b.b1);
  f(a.w2.data(), b.w2.data());
  f(a.b2, b.b2);
}

bool quantized_ok(const FloatParams& p, const Dataset& d, int precision) {
  if (precision < 0) return true;
  try {
    return verify_quantized(quantize(p, precision), d).min_margin > 0;
  } catch (const Error&) {
    return false;
  }
}

// Decaying weights under L2 otherwise spend most of the run in subnormal
// arithmetic. Restores the caller's mode on exit.
class FlushDenormals {
 public:
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }
  ~FlushDenormals() { _mm_setcsr(saved_); }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned int saved_;
};

}  // namespace

void TrainConfig::validate() const {
  topology.validate();
  if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("momentum must be in [0,1)");
  if (max_epochs < 0) throw Error("max_epochs must be non-negative");
  if (!(lambda >= 0.0)) throw Error("lambda must be non-negative");
  if (sustain_epochs < 1) throw Error("sustain_epochs must be positive");
}

FloatParams init_params(const Topology& t, std::uint64_t seed) {
  FloatParams p = FloatParams::zeros(t);
  SplitMix64 rng(seed);
  const double a1 = std::sqrt(6.0 / (t.l + t.m));
  for (double& w : p.w1.data()) w = -a1 + 2.0 * a1 * rng.uniform();
  const double a2 = std::sqrt(6.0 / (t.m + t.n));
  for (double& w : p.w2.data()) w = -a2 + 2.0 * a2 * rng.uniform();
  return p;
}

LossAndGrads loss_and_grads(const FloatParams& p, const Dataset& d, double lambda,
                            bool l2_on_biases) {
  const Topology& t = p.topology;
  const RowMatrix x = input_matrix(d);
  const auto samples = x.rows();
  const RowMatrix w1 = owned(p.w1);
  const RowMatrix w2 = owned(p.w2);
  const Eigen::RowVectorXd b1 = owned(p.b1);
  const Eigen::RowVectorXd b2 = owned(p.b2);

  RowMatrix z1 = x * w1;
  z1.rowwise() += b1;
  const RowMatrix h = z1.cwiseMax(0.0);
  RowMatrix z2 = h * w2;
  z2.rowwise() += b2;

  // z2 becomes dL/dz2 in place: softmax minus one-hot, over the sample count.
  double loss = 0.0;
  int correct = 0;
  for (Eigen::Index s = 0; s < samples; ++s) {
    const int label = d.samples[static_cast<std::size_t>(s)].label;
    auto row = z2.row(s);
    const Decision dec = argmax_decision<double>(
        std::span<const double>(row.data(), static_cast<std::size_t>(t.n)));
    if (dec.index == label && !dec.tie) ++correct;
    const double mx = row.maxCoeff();
    row.array() = (row.array() - mx).exp();
    const double sum = row.sum();
    loss += std::log(sum) - std::log(row(label));
    row /= sum;
    row(label) -= 1.0;
  }
  loss /= static_cast<double>(samples);
  z2 /= static_cast<double>(samples);

  RowMatrix gw2 = h.transpose() * z2;
  Eigen::RowVectorXd gb2 = z2.colwise().sum();
  RowMatrix dh = z2 * w2.transpose();
  dh = dh.cwiseProduct((z1.array() > 0.0).cast<double>().matrix());
  RowMatrix gw1 = x.transpose() * dh;
  Eigen::RowVectorXd gb1 = dh.colwise().sum();

  if (lambda > 0.0) {
    gw1 += lambda * w1;
    gw2 += lambda * w2;
    double norm = w1.squaredNorm() + w2.squaredNorm();
    if (l2_on_biases) {
      gb1 += lambda * b1;
      gb2 += lambda * b2;
      norm += b1.squaredNorm() + b2.squaredNorm();
    }
    loss += 0.5 * lambda * norm;
  }

  LossAndGrads out;
  out.loss = loss;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(samples);
  out.grads = FloatParams::zeros(t);
  store(gw1, out.grads.w1.data());
  store(gb1, out.grads.b1);
  store(gw2, out.grads.w2.data());
  store(gb2, out.grads.b2);
  return out;
}

TrainResult train(const Dataset& d, const TrainConfig& cfg) {
  cfg.validate();
  d.validate(cfg.topology.n);
  const FlushDenormals ftz;
  TrainResult r;
  r.params = init_params(cfg.topology, cfg.seed);
  FloatParams velocity = FloatParams::zeros(cfg.topology);

  int streak = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    LossAndGrads lg = loss_and_grads(r.params, d, cfg.lambda, cfg.l2_on_biases);
    // Stats describe the parameters before this epoch's update.
    r.loss_history.push_back({epoch, lg.loss, lg.accuracy});
    streak = lg.accuracy == 1.0 ? streak + 1 : 0;
    if (cfg.stop_early && streak >= cfg.sustain_epochs &&
        quantized_ok(r.params, d, cfg.quantized_check_precision)) {
      r.converged = true;
      break;
    }
    for_each_tensor(velocity, lg.grads, [&](std::vector<double>& v, const std::vector<double>& gr) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = cfg.momentum * v[i] - cfg.learning_rate * gr[i];
    });
    for_each_tensor(r.params, velocity, [](std::vector<double>& w, const std::vector<double>& v) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += v[i];
    });
    r.epochs_run = epoch + 1;
  }

  const LossAndGrads final = loss_and_grads(r.params, d, cfg.lambda, cfg.l2_on_biases);
  r.final_loss = final.loss;
  r.final_accuracy = accuracy(r.params, d);
  if (!cfg.stop_early) {
    r.converged = r.final_accuracy == 1.0 && quantized_ok(r.params, d, cfg.quantized_check_precision);
  }
  return r;
}

std::string loss_history_csv(const TrainResult& r) {
  std::string out = "epoch,loss,accuracy\n";
  char buf[96];
  for (const EpochStats& e : r.loss_history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", e.epoch, e.loss, e.accuracy);
    out += buf;
  }
  return out;
}

}  // namespace pft
