#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>

#include "dreammem/common.hpp"

namespace dreammem {

/// Fine-tune recipe for the regression head: AdamW (beta 0.9/0.999, eps 1e-8)
/// under a one-cycle learning-rate schedule.
struct TrainConfig {
  int epochs = 50;
  double max_lr = 1e-3;
  double weight_decay = 1e-2;
  int batch_size = 32;
  int hidden = 64;
  std::uint64_t seed = 0;
  double warmup_fraction = 0.3;
  double final_div = 25.0;  // schedule floor is max_lr / final_div

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// One-cycle schedule over `total_steps` optimizer steps: linear ramp from
/// max_lr/final_div to max_lr across the first floor(warmup_fraction * total)
/// steps, then cosine decay back to max_lr/final_div at the last step.
double one_cycle_lr(int step, int total_steps, const TrainConfig& cfg);

/// input -> standardize -> dense(hidden) -> ReLU -> dense(1).
///
/// Standardization constants are fitted on the training inputs and then
/// frozen; they are not trained.
struct HeadModel {
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_scale;
  Eigen::MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;  // hidden
  double b2 = 0.0;
  TrainConfig config;
  double final_train_mse = 0.0;

  Eigen::Index input_dim() const { return w1.cols(); }
  Eigen::Index hidden() const { return w1.rows(); }
  void validate() const;
};

struct HeadGradient {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
  double b2 = 0.0;
};

/// Training diverged; carries the offending step and learning rate.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fan-in uniform initialization: every parameter of a layer with fan-in k is
/// drawn from U(-1/sqrt(k), 1/sqrt(k)) using a mt19937_64 seeded with cfg.seed.
HeadModel init_head(const Eigen::MatrixXd& X, const TrainConfig& cfg);

/// mean((f(x) - y)^2) + weight_decay / 2 * (|w1|^2 + |w2|^2); biases are not decayed.
double head_objective(const HeadModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      double weight_decay);
HeadGradient head_gradient(const HeadModel& model, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& y, double weight_decay);

struct HeadStep {
  int step;
  double lr;
  double loss;  // batch MSE before the update
  const HeadModel& model;  // after the update
};

/// Mini-batch AdamW with decoupled weight decay on w1 and w2. Deterministic for
/// a fixed cfg.seed. Throws TrainingError on a non-finite loss.
HeadModel fit_head(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const TrainConfig& cfg,
                   const std::function<void(const HeadStep&)>& observer = {});

/// Raw network outputs (no clamping).
Eigen::VectorXd predict_head(const HeadModel& model, const Eigen::MatrixXd& X);

/// Largest |g_analytic - g_fd| / max(1e-8, |g_analytic| + |g_fd|) over all
/// parameters, with central differences of head_objective at step epsilon and
/// the model's configured weight decay.
double grad_check(const HeadModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  double epsilon = 1e-6);

Bytes encode_head(const HeadModel& model);
HeadModel decode_head(std::span<const std::uint8_t> data);
void save_head(const HeadModel& model, const std::filesystem::path& path);
HeadModel load_head(const std::filesystem::path& path);

}  // namespace dreammem
