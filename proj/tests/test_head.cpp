#include <random>

#include "doctest.h"
#include "dreammem/evaluation.hpp"
#include "dreammem/head.hpp"
#include "head_fd.hpp"
#include "oracles.hpp"

using namespace dreammem;

namespace {

Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

double weight_norm(const HeadModel& m) { return std::sqrt(m.w1.squaredNorm() + m.w2.squaredNorm()); }

}  // namespace

TEST_CASE("default recipe") {
  const TrainConfig cfg;
  CHECK(cfg.epochs == 50);
  CHECK(cfg.max_lr == 1e-3);
  CHECK(cfg.weight_decay == 1e-2);
  CHECK(cfg.warmup_fraction == 0.3);
  CHECK(cfg.final_div == 25.0);
}

TEST_CASE("one-cycle schedule shape") {
  TrainConfig cfg;
  const int total = 100;
  CHECK(one_cycle_lr(0, total, cfg) == doctest::Approx(cfg.max_lr / 25));
  CHECK(one_cycle_lr(30, total, cfg) == doctest::Approx(cfg.max_lr));
  CHECK(one_cycle_lr(99, total, cfg) == doctest::Approx(cfg.max_lr / 25));
  double peak = 0.0;
  for (int s = 0; s < total; ++s) {
    const double lr = one_cycle_lr(s, total, cfg);
    CHECK(lr <= cfg.max_lr * (1 + 1e-12));
    CHECK(lr >= cfg.max_lr / 25 * (1 - 1e-12));
    if (s > 0 && s <= 30) CHECK(lr > one_cycle_lr(s - 1, total, cfg));
    if (s > 30) CHECK(lr < one_cycle_lr(s - 1, total, cfg));
    peak = std::max(peak, lr);
  }
  CHECK(peak == doctest::Approx(cfg.max_lr));
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.max_lr = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.weight_decay = -1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("analytic gradients match central differences on a random 8x10 batch") {
  std::mt19937_64 rng(1);
  TrainConfig cfg;
  cfg.hidden = 16;
  for (int point = 0; point < 10; ++point) {
    cfg.seed = static_cast<std::uint64_t>(point);
    const Eigen::MatrixXd X = gaussian(rng, 8, 10);
    const Eigen::VectorXd y = gaussian(rng, 8, 1);
    const HeadModel m = init_head(X, cfg);
    CHECK(oracle::head_gradient_error(m, X, y, cfg.weight_decay) < 1e-4);
    CHECK(grad_check(m, X, y) < 1e-4);
  }
}

TEST_CASE("zero batch at zero weights has an exactly zero gradient") {
  TrainConfig cfg;
  cfg.hidden = 4;
  HeadModel m = init_head(Eigen::MatrixXd::Zero(3, 5), cfg);
  m.w1.setZero();
  m.b1.setZero();
  m.w2.setZero();
  m.b2 = 0.0;
  const HeadGradient g = head_gradient(m, Eigen::MatrixXd::Zero(3, 5), Eigen::VectorXd::Zero(3), 0.01);
  CHECK(g.w1.isZero(0.0));
  CHECK(g.b1.isZero(0.0));
  CHECK(g.w2.isZero(0.0));
  CHECK(g.b2 == 0.0);
}

TEST_CASE("a head without a hidden layer is unsupported") {
  TrainConfig cfg;
  cfg.hidden = 0;
  CHECK_THROWS_WITH_AS(init_head(Eigen::MatrixXd::Ones(4, 2), cfg), doctest::Contains("unsupported"),
                       ValidationError);
  HeadModel m;
  m.w1.resize(0, 2);
  m.x_mean = m.x_scale = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_WITH_AS(grad_check(m, Eigen::MatrixXd::Ones(4, 2), Eigen::VectorXd::Ones(4)),
                       doctest::Contains("unsupported"), ValidationError);
}

TEST_CASE("zero weights output the bias") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd X = gaussian(rng, 6, 3);
  HeadModel m = init_head(X, {});
  m.w2.setZero();
  m.b2 = 0.42;
  const Eigen::VectorXd out = predict_head(m, X);
  for (Eigen::Index i = 0; i < out.size(); ++i) CHECK(out[i] == 0.42);
  CHECK(clamp_score(1.2) == 1.0);
  CHECK(clamp_score(-0.1) == 0.0);
  CHECK(clamp_score(0.3) == 0.3);
}

TEST_CASE("constant targets are learned by the bias") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd X = gaussian(rng, 64, 8);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(64, 0.6);
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.epochs = 1500;
  cfg.max_lr = 1e-2;
  const HeadModel m = fit_head(X, y, cfg);
  CHECK(m.final_train_mse < 1e-6);
}

TEST_CASE("planted linear data is fit well") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd X = gaussian(rng, 256, 6);
  const Eigen::VectorXd w = gaussian(rng, 6, 1);
  const Eigen::VectorXd y = X * w;
  const double var = (y.array() - y.mean()).square().mean();
  TrainConfig cfg;
  cfg.epochs = 200;
  const HeadModel m = fit_head(X, y, cfg);
  CHECK(m.final_train_mse < var / 100);
}

TEST_CASE("training is bit-for-bit deterministic and the loss trace stays finite") {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd X = gaussian(rng, 50, 7);
  const Eigen::VectorXd y = gaussian(rng, 50, 1);
  TrainConfig cfg;
  cfg.seed = 99;
  cfg.batch_size = 8;
  int steps = 0;
  bool finite = true;
  const HeadModel a = fit_head(X, y, cfg, [&](const HeadStep& s) {
    ++steps;
    finite = finite && std::isfinite(s.loss);
  });
  const HeadModel b = fit_head(X, y, cfg);
  CHECK(finite);
  CHECK(steps == cfg.epochs * 7);
  CHECK(encode_head(a) == encode_head(b));
  cfg.seed = 100;
  CHECK(encode_head(fit_head(X, y, cfg)) != encode_head(a));
}

TEST_CASE("weight norm decreases after warmup on a constant batch with zero targets") {
  const Eigen::MatrixXd X = Eigen::MatrixXd::Constant(16, 5, 0.7);
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(16);
  TrainConfig cfg;
  cfg.weight_decay = 0.1;
  cfg.epochs = 200;
  cfg.batch_size = 16;
  const int warmup = static_cast<int>(std::floor(cfg.warmup_fraction * cfg.epochs));
  double prev = std::numeric_limits<double>::infinity();
  bool monotone = true;
  fit_head(X, y, cfg, [&](const HeadStep& s) {
    const double norm = weight_norm(s.model);
    if (s.step >= warmup) {
      if (!(norm < prev)) monotone = false;
    }
    prev = norm;
  });
  CHECK(monotone);
}

TEST_CASE("non-finite training loss is reported with step context") {
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd X = gaussian(rng, 10, 3);
  Eigen::VectorXd y = gaussian(rng, 10, 1);
  y *= 1e300;
  TrainConfig cfg;
  CHECK_THROWS_WITH_AS(fit_head(X, y, cfg), doctest::Contains("step"), TrainingError);
}

TEST_CASE("HEAD round-trip is exact") {
  oracle::TempDir tmp("head");
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd X = gaussian(rng, 20, 4);
  const Eigen::VectorXd y = gaussian(rng, 20, 1);
  TrainConfig cfg;
  cfg.epochs = 3;
  const HeadModel m = fit_head(X, y, cfg);
  save_head(m, tmp.path() / "m.head");
  const HeadModel back = load_head(tmp.path() / "m.head");
  CHECK(back.w1 == m.w1);
  CHECK(back.b1 == m.b1);
  CHECK(back.w2 == m.w2);
  CHECK(back.b2 == m.b2);
  CHECK(back.x_mean == m.x_mean);
  CHECK(back.x_scale == m.x_scale);
  CHECK(back.config == m.config);
  CHECK(predict_head(back, X) == predict_head(m, X));
  const Bytes bytes = encode_head(m);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "HEAD");
  Bytes bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_head(bad), ValidationError);
  CHECK_THROWS_AS(decode_head(Bytes(bytes.begin(), bytes.end() - 1)), ValidationError);
}
