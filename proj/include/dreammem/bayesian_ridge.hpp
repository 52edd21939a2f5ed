#pragma once

#include <Eigen/Dense>

#include <filesystem>

#include "dreammem/common.hpp"

namespace dreammem {

/// Gamma hyperpriors and stopping rule. Defaults match the common library
/// defaults: all four hyperpriors 1e-6, 300 iterations, tolerance 1e-3.
struct BayesianRidgeOptions {
  double alpha_shape = 1e-6;   // noise precision prior
  double alpha_rate = 1e-6;
  double lambda_shape = 1e-6;  // weight precision prior
  double lambda_rate = 1e-6;
  int max_iter = 300;
  double tol = 1e-3;  // on the largest absolute weight change
};

struct BayesianRidgeModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double alpha = 1.0;   // noise precision
  double lambda = 1.0;  // weight precision
  Eigen::MatrixXd posterior_covariance;
  Eigen::VectorXd x_means;
  double y_mean = 0.0;
  int n_iterations_run = 0;
  bool converged = false;

  Eigen::Index dim() const { return weights.size(); }
};

/// Evidence-maximization fit on centered data.
///
/// The centered design is decomposed once (X = U S V^T). With ratio
/// r = lambda / alpha, the posterior mean is V diag(s / (s^2 + r)) U^T y and
/// gamma = sum s^2 / (s^2 + r). Each iteration computes the weights at the
/// current precisions and then updates
///   lambda <- (gamma + 2 lambda_shape) / (|w|^2 + 2 lambda_rate)
///   alpha  <- (n - gamma + 2 alpha_shape) / (|y - Xw|^2 + 2 alpha_rate)
/// until the weights move by less than tol. The stored weights and covariance
/// are recomputed at the final (alpha, lambda).
BayesianRidgeModel fit_bayesian_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                      const BayesianRidgeOptions& options = {});

struct Precisions {
  double alpha;
  double lambda;
};

/// One evidence update starting from the given precisions.
Precisions evidence_update(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha,
                           double lambda, const BayesianRidgeOptions& options = {});

struct PredictiveDistribution {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

/// mean = X w + intercept; variance = 1/alpha + xc^T Sigma xc with xc = x - x_means.
PredictiveDistribution predict_bayesian_ridge(const BayesianRidgeModel& model,
                                              const Eigen::MatrixXd& X);

Bytes encode_bayesian_ridge(const BayesianRidgeModel& model);
BayesianRidgeModel decode_bayesian_ridge(std::span<const std::uint8_t> data);
void save_bayesian_ridge(const BayesianRidgeModel& model, const std::filesystem::path& path);
BayesianRidgeModel load_bayesian_ridge(const std::filesystem::path& path);

}  // namespace dreammem
