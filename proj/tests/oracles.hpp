#pragma once

// Reference implementations used only by tests. They deliberately avoid the
// library's code paths (no Eigen decompositions, no shared rank helper).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace oracle {

/// Fractional ranks by enumerating, for each value, the 1-based positions
/// its copies occupy in the sorted sequence and averaging them.
inline std::vector<double> enumerate_ranks(const std::vector<double>& v) {
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t p = 0; p < sorted.size(); ++p) {
      if (sorted[p] == v[i]) {
        sum += static_cast<double>(p + 1);
        ++count;
      }
    }
    ranks[i] = sum / count;
  }
  return ranks;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double brute_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(enumerate_ranks(a), enumerate_ranks(b));
}

/// 1 - 6 sum d^2 / (n (n^2 - 1)) for tie-free data, with d from explicit ranks.
inline double closed_form_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = enumerate_ranks(a);
  const auto rb = enumerate_ranks(b);
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  const double n = static_cast<double>(a.size());
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

using Matrix = std::vector<std::vector<double>>;  // row-major

/// Gaussian elimination with partial pivoting.
inline std::vector<double> solve(Matrix A, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(A[i][k]) > std::abs(A[piv][k])) piv = i;
    if (A[piv][k] == 0.0) throw std::runtime_error("singular system");
    std::swap(A[k], A[piv]);
    std::swap(b[k], b[piv]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = A[i][k] / A[k][k];
      for (std::size_t j = k; j < n; ++j) A[i][j] -= f * A[k][j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= A[k][j] * x[j];
    x[k] = s / A[k][k];
  }
  return x;
}

/// Posterior mean of Bayesian ridge at fixed precisions, on centered data:
/// (alpha X'X + lambda I) w = alpha X'y.
inline std::vector<double> ridge_solve(const Matrix& X, const std::vector<double>& y, double alpha,
                                       double lambda) {
  const std::size_t n = X.size(), d = X[0].size();
  std::vector<double> xm(d, 0.0);
  double ym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) xm[j] += X[i][j] / n;
    ym += y[i] / n;
  }
  Matrix A(d, std::vector<double>(d, 0.0));
  std::vector<double> rhs(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double xj = X[i][j] - xm[j];
      rhs[j] += alpha * xj * (y[i] - ym);
      for (std::size_t k = 0; k < d; ++k) A[j][k] += alpha * xj * (X[i][k] - xm[k]);
    }
  }
  for (std::size_t j = 0; j < d; ++j) A[j][j] += lambda;
  return solve(A, rhs);
}

/// Histogram recount: bin index from a linear search over explicit edges.
inline std::vector<std::size_t> recount(const std::vector<double>& values, std::size_t bins,
                                        double lo, double hi) {
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) edges[i] = lo + (hi - lo) * i / bins;
  edges[bins] = hi;
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    if (v < lo || v > hi) continue;
    std::size_t b = bins - 1;
    for (std::size_t i = 0; i < bins; ++i) {
      if (v >= edges[i] && v < edges[i + 1]) {
        b = i;
        break;
      }
    }
    ++counts[b];
  }
  return counts;
}

/// Per-test scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("dreammem_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
