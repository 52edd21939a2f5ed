#pragma once

// Central-difference gradient oracle for the regression head, computed from
// the objective alone.

#include <algorithm>
#include <cmath>

#include "dreammem/head.hpp"

namespace oracle {

template <class Fn>
void for_each_head_param(dreammem::HeadModel& m, Fn&& fn) {
  using G = dreammem::HeadGradient;
  for (Eigen::Index i = 0; i < m.w1.size(); ++i) fn(m.w1.data()[i], [i](const G& g) { return g.w1.data()[i]; });
  for (Eigen::Index i = 0; i < m.b1.size(); ++i) fn(m.b1[i], [i](const G& g) { return g.b1[i]; });
  for (Eigen::Index i = 0; i < m.w2.size(); ++i) fn(m.w2[i], [i](const G& g) { return g.w2[i]; });
  fn(m.b2, [](const G& g) { return g.b2; });
}

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, 1e-7) over all parameters.
inline double head_gradient_error(dreammem::HeadModel m, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, double wd, double eps = 1e-6) {
  const dreammem::HeadGradient analytic = dreammem::head_gradient(m, X, y, wd);
  double worst = 0.0;
  for_each_head_param(m, [&](double& p, auto&& pick) {
    const double saved = p;
    p = saved + eps;
    const double up = dreammem::head_objective(m, X, y, wd);
    p = saved - eps;
    const double down = dreammem::head_objective(m, X, y, wd);
    p = saved;
    const double numeric = (up - down) / (2 * eps);
    const double a = pick(analytic);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-7});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  });
  return worst;
}

}  // namespace oracle
