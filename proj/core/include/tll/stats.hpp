// Streaming mean / standard-error accumulation over realizations where an
// entry may be absent in some of them (holes): each cell keeps its own count,
// and cells never seen finish as NaN.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace tll::stats {

struct WelfordMat {
  Eigen::MatrixXd sum, sumsq;
  Eigen::MatrixXi count;

  void init(int r, int c) {
    sum.setZero(r, c);
    sumsq.setZero(r, c);
    count.setZero(r, c);
  }

  void add(int i, int j, double v) {
    sum(i, j) += v;
    sumsq(i, j) += v * v;
    count(i, j) += 1;
  }

  void finish(Eigen::MatrixXd& mean, Eigen::MatrixXd& err) const {
    const int r = static_cast<int>(sum.rows()), c = static_cast<int>(sum.cols());
    mean.setConstant(r, c, std::numeric_limits<double>::quiet_NaN());
    err.setConstant(r, c, std::numeric_limits<double>::quiet_NaN());
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) {
        const int k = count(i, j);
        if (k == 0) continue;
        const double m = sum(i, j) / k;
        mean(i, j) = m;
        const double var = std::max(0.0, sumsq(i, j) / k - m * m);
        err(i, j) = k > 1 ? std::sqrt(var / (k - 1)) : 0.0;
      }
  }
};

// Scalar flavour for per-trajectory summary numbers.
struct WelfordScalar {
  double sum = 0, sumsq = 0;
  int count = 0;

  void add(double v) {
    sum += v;
    sumsq += v * v;
    count += 1;
  }

  double mean() const {
    return count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
  }

  double stderror() const {
    if (count == 0) return std::numeric_limits<double>::quiet_NaN();
    if (count == 1) return 0.0;
    const double m = sum / count;
    const double var = std::max(0.0, sumsq / count - m * m);
    return std::sqrt(var / (count - 1));
  }
};

}  // namespace tll::stats
