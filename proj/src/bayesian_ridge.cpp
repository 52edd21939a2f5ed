#include "dreammem/bayesian_ridge.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace dreammem {

namespace {

constexpr std::string_view kMagic = "BRR1";
constexpr std::uint32_t kVersion = 1;

void check_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw ValidationError("X and y have different row counts");
  if (X.rows() < 2) throw ValidationError("bayesian ridge needs at least 2 rows");
  if (X.cols() < 1) throw ValidationError("bayesian ridge needs at least 1 column");
  if (!X.allFinite() || !y.allFinite()) throw ValidationError("non-finite input to bayesian ridge");
}

// Centered problem with its thin SVD.
struct Decomposed {
  Eigen::MatrixXd xc;
  Eigen::VectorXd yc;
  Eigen::VectorXd x_means;
  double y_mean;
  Eigen::VectorXd s;
  Eigen::VectorXd s2;
  Eigen::MatrixXd v;
  Eigen::VectorXd uty;  // U^T yc

  explicit Decomposed(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    x_means = X.colwise().mean().transpose();
    y_mean = y.mean();
    xc = X.rowwise() - x_means.transpose();
    yc = y.array() - y_mean;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
    s = svd.singularValues();
    s2 = s.array().square();
    v = svd.matrixV();
    uty = svd.matrixU().transpose() * yc;
  }

  Eigen::VectorXd weights(double alpha, double lambda) const {
    const double ratio = lambda / alpha;
    const Eigen::VectorXd scale = s.array() / (s2.array() + ratio);
    return v * (scale.array() * uty.array()).matrix();
  }

  double gamma(double alpha, double lambda) const {
    return (alpha * s2.array() / (lambda + alpha * s2.array())).sum();
  }
};

Precisions update(const Decomposed& dec, const Eigen::VectorXd& w, double alpha, double lambda,
                  const BayesianRidgeOptions& o) {
  const double n = static_cast<double>(dec.xc.rows());
  const double gamma = dec.gamma(alpha, lambda);
  const double sse = (dec.yc - dec.xc * w).squaredNorm();
  return {(n - gamma + 2.0 * o.alpha_shape) / (sse + 2.0 * o.alpha_rate),
          (gamma + 2.0 * o.lambda_shape) / (w.squaredNorm() + 2.0 * o.lambda_rate)};
}

}  // namespace

BayesianRidgeModel fit_bayesian_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                      const BayesianRidgeOptions& options) {
  check_inputs(X, y);
  if (options.max_iter < 1) throw ValidationError("max_iter must be >= 1");
  const Decomposed dec(X, y);

  const double var_y = dec.yc.squaredNorm() / static_cast<double>(dec.yc.size());
  double alpha = var_y > 0.0 ? 1.0 / var_y : 1.0;
  double lambda = 1.0;

  BayesianRidgeModel m;
  Eigen::VectorXd w_old;
  for (int iter = 0; iter < options.max_iter; ++iter) {
    const Eigen::VectorXd w = dec.weights(alpha, lambda);
    const Precisions next = update(dec, w, alpha, lambda, options);
    alpha = next.alpha;
    lambda = next.lambda;
    m.n_iterations_run = iter + 1;
    if (iter > 0 && (w_old - w).cwiseAbs().maxCoeff() < options.tol) {
      m.converged = true;
      break;
    }
    w_old = w;
  }

  m.alpha = alpha;
  m.lambda = lambda;
  m.weights = dec.weights(alpha, lambda);
  m.x_means = dec.x_means;
  m.y_mean = dec.y_mean;
  m.intercept = dec.y_mean - dec.x_means.dot(m.weights);

  // Sigma = V diag(1 / (alpha s^2 + lambda)) V^T on the row space of X, 1/lambda elsewhere.
  const Eigen::Index d = X.cols();
  const Eigen::VectorXd inner =
      (1.0 / (alpha * dec.s2.array() + lambda)) - 1.0 / lambda;
  m.posterior_covariance = Eigen::MatrixXd::Identity(d, d) / lambda;
  m.posterior_covariance.noalias() += dec.v * inner.asDiagonal() * dec.v.transpose();
  m.posterior_covariance =
      0.5 * (m.posterior_covariance + m.posterior_covariance.transpose()).eval();
  return m;
}

Precisions evidence_update(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha,
                           double lambda, const BayesianRidgeOptions& options) {
  check_inputs(X, y);
  const Decomposed dec(X, y);
  return update(dec, dec.weights(alpha, lambda), alpha, lambda, options);
}

PredictiveDistribution predict_bayesian_ridge(const BayesianRidgeModel& model,
                                              const Eigen::MatrixXd& X) {
  if (X.cols() != model.dim())
    throw ValidationError("bayesian ridge expects " + std::to_string(model.dim()) +
                          " columns, got " + std::to_string(X.cols()));
  const Eigen::MatrixXd xc = X.rowwise() - model.x_means.transpose();
  PredictiveDistribution p;
  p.mean = (xc * model.weights).array() + model.y_mean;
  const Eigen::VectorXd quad = (xc * model.posterior_covariance).cwiseProduct(xc).rowwise().sum();
  p.std = (quad.array().max(0.0) + 1.0 / model.alpha).sqrt();
  return p;
}

Bytes encode_bayesian_ridge(const BayesianRidgeModel& m) {
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put_u32(kVersion);
  const auto d = static_cast<std::uint32_t>(m.dim());
  w.put_u32(d);
  for (double x : m.weights) w.put_f64(x);
  w.put_f64(m.intercept);
  w.put_f64(m.alpha);
  w.put_f64(m.lambda);
  for (Eigen::Index i = 0; i < m.dim(); ++i)
    for (Eigen::Index j = 0; j < m.dim(); ++j) w.put_f64(m.posterior_covariance(i, j));
  for (double x : m.x_means) w.put_f64(x);
  w.put_f64(m.y_mean);
  w.put_u32(static_cast<std::uint32_t>(m.n_iterations_run));
  w.put_u8(m.converged ? 1 : 0);
  return w.bytes();
}

BayesianRidgeModel decode_bayesian_ridge(std::span<const std::uint8_t> data) {
  ByteReader r(data, "BRR1");
  if (r.get_bytes(4) != kMagic) throw ValidationError("BRR1: magic mismatch");
  if (r.get_u32() != kVersion) throw ValidationError("BRR1: unsupported version");
  const std::uint32_t d = r.get_u32();
  if (r.remaining() < (std::uint64_t{d} * d + 2 * std::uint64_t{d} + 4) * 8)
    throw ValidationError("BRR1: truncated payload");
  BayesianRidgeModel m;
  m.weights.resize(d);
  for (auto& x : m.weights) x = r.get_f64();
  m.intercept = r.get_f64();
  m.alpha = r.get_f64();
  m.lambda = r.get_f64();
  m.posterior_covariance.resize(d, d);
  for (std::uint32_t i = 0; i < d; ++i)
    for (std::uint32_t j = 0; j < d; ++j) m.posterior_covariance(i, j) = r.get_f64();
  m.x_means.resize(d);
  for (auto& x : m.x_means) x = r.get_f64();
  m.y_mean = r.get_f64();
  m.n_iterations_run = static_cast<int>(r.get_u32());
  m.converged = r.get_u8() != 0;
  if (r.remaining() != 0) throw ValidationError("BRR1: trailing bytes");
  return m;
}

void save_bayesian_ridge(const BayesianRidgeModel& model, const std::filesystem::path& path) {
  write_file(path, encode_bayesian_ridge(model));
}

BayesianRidgeModel load_bayesian_ridge(const std::filesystem::path& path) {
  return decode_bayesian_ridge(read_file(path));
}

}  // namespace dreammem
