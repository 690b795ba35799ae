#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "pft/trainer.hpp"

using namespace pft;

namespace {

Dataset sixteen_class_dataset(std::uint8_t key) {
  Dataset d = make_dataset(key);
  for (Sample& s : d.samples) s.label %= 16;
  return d;
}

std::vector<double*> all_params(FloatParams& p) {
  std::vector<double*> out;
  for (double& v : p.w1.data()) out.push_back(&v);
  for (double& v : p.b1) out.push_back(&v);
  for (double& v : p.w2.data()) out.push_back(&v);
  for (double& v : p.b2) out.push_back(&v);
  return out;
}

// Smallest |pre-activation| over every hidden unit and input.
double kink_distance(const FloatParams& p) {
  double best = 1e300;
  for (int x = 0; x < 256; ++x) {
    for (double a : forward_float(p, static_cast<std::uint8_t>(x)).pre_hidden) best = std::min(best, std::abs(a));
  }
  return best;
}

}  // namespace

TEST_CASE("all-zero parameters give loss ln(256)") {
  const FloatParams p = FloatParams::zeros({8, 16, 256});
  const LossAndGrads lg = loss_and_grads(p, make_dataset(0x25), 0.0, false);
  CHECK(lg.loss == doctest::Approx(std::log(256.0)).epsilon(1e-12));
}

TEST_CASE("loss grows strictly with lambda") {
  const FloatParams p = init_params({8, 16, 256}, 3);
  const Dataset d = make_dataset(0x25);
  double prev = loss_and_grads(p, d, 0.0, false).loss;
  for (double l : {1e-4, 1e-2, 1.0}) {
    const double cur = loss_and_grads(p, d, l, false).loss;
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("analytic gradients match central finite differences on 8-4-16") {
  SplitMix64 rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Dataset d = sixteen_class_dataset(static_cast<std::uint8_t>(rng.next()));
    FloatParams p = init_params({8, 4, 16}, rng.next());
    // The ReLU derivative is undefined at zero; keep every pre-activation
    // well clear of the finite-difference stencil.
    do {
      for (double& b : p.b1) b = rng.uniform() - 0.5;
    } while (kink_distance(p) < 1e-3);
    for (double& b : p.b2) b = rng.uniform() - 0.5;
    const double lambda = trial % 3 == 0 ? 0.0 : 0.05 * rng.uniform();
    const bool biases = trial % 2 == 0;
    LossAndGrads lg = loss_and_grads(p, d, lambda, biases);
    auto analytic = all_params(lg.grads);
    auto params = all_params(p);
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
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, err);
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("initialisation is deterministic and Glorot bounded") {
  const Topology t{8, 32, 256};
  CHECK(init_params(t, 5) == init_params(t, 5));
  CHECK_FALSE(init_params(t, 5) == init_params(t, 6));
  const FloatParams p = init_params(t, 5);
  const double a1 = std::sqrt(6.0 / 40.0);
  for (double w : p.w1.data()) CHECK(std::abs(w) <= a1);
  for (double b : p.b1) CHECK(b == 0.0);
}

TEST_CASE("training converges and is reproducible") {
  TrainConfig cfg;
  cfg.topology = {8, 32, 256};
  cfg.max_epochs = 3000;
  const Dataset d = make_dataset(0x5A);
  const TrainResult a = train(d, cfg);
  const TrainResult b = train(d, cfg);
  CHECK(a.converged);
  CHECK(a.final_accuracy == 1.0);
  CHECK(a.params == b.params);
  CHECK(a.loss_history.size() == static_cast<std::size_t>(a.epochs_run) + (a.converged ? 1 : 0));
  CHECK(loss_history_csv(a).rfind("epoch,loss,accuracy\n", 0) == 0);
}

TEST_CASE("a fixed budget runs every epoch") {
  TrainConfig cfg;
  cfg.topology = {8, 16, 256};
  cfg.max_epochs = 40;
  cfg.stop_early = false;
  cfg.quantized_check_precision = -1;
  const TrainResult r = train(make_dataset(1), cfg);
  CHECK(r.epochs_run == 40);
  CHECK(r.loss_history.size() == 40);
}

TEST_CASE("configuration validation") {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
