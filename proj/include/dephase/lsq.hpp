#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "dephase/error.hpp"

namespace dephase {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Residual vector r(p) (already weighted) and its Jacobian dr/dp.
struct LsqProblem {
  std::function<Vec(const Vec&)> residuals;
  std::function<Mat(const Vec&)> jacobian;
};

struct LsqOptions {
  double rel_rss_tol = 1e-10;
  double step_tol = 1e-12;
  int max_iterations = 500;
  double initial_damping = 1e-3;
  /// Converged once the RSS falls to this level (a fit that reproduces the
  /// data to working precision). Zero disables the test.
  double rss_floor = 0.0;
};

struct LsqResult {
  Vec params;
  double rss = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Levenberg-Marquardt with Marquardt's diagonal scaling.
///
/// Stops when an accepted step lowers the RSS by less than rel_rss_tol
/// (relative), when the step is below step_tol relative to the parameter
/// norm, when the RSS reaches rss_floor, or when no damping level produces a decrease (the RSS is at its
/// floating-point floor). Hitting max_iterations leaves converged = false.
inline LsqResult levenberg_marquardt(const LsqProblem& prob, Vec p0,
                                     const LsqOptions& opt = {}) {
  LsqResult out;
  out.params = std::move(p0);
  Vec r = prob.residuals(out.params);
  require(r.allFinite(), ErrorKind::IllConditioned, "least squares: non-finite initial residuals");
  out.rss = r.squaredNorm();
  double damping = opt.initial_damping;
  const auto n = out.params.size();

  for (int it = 1; it <= opt.max_iterations; ++it) {
    out.iterations = it;
    const Mat J = prob.jacobian(out.params);
    require(J.allFinite(), ErrorKind::IllConditioned, "least squares: non-finite Jacobian");
    const Mat A = J.transpose() * J;
    const Vec g = J.transpose() * r;
    Vec scale = A.diagonal();
    for (Eigen::Index i = 0; i < n; ++i)
      require(scale[i] > 0.0, ErrorKind::IllConditioned,
              "least squares: parameter " + std::to_string(i) + " has no influence on the residuals");

    bool accepted = false;
    Vec step;
    double new_rss = 0.0;
    Vec new_r;
    while (damping < 1e20) {
      Mat M = A;
      M.diagonal() += damping * scale;
      Eigen::LDLT<Mat> ldlt(M);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        damping *= 10.0;
        continue;
      }
      step = -ldlt.solve(g);
      if (!step.allFinite()) {
        damping *= 10.0;
        continue;
      }
      const Vec trial = out.params + step;
      new_r = prob.residuals(trial);
      new_rss = new_r.allFinite() ? new_r.squaredNorm() : std::numeric_limits<double>::infinity();
      if (new_rss < out.rss) {
        accepted = true;
        out.params = trial;
        break;
      }
      damping *= 10.0;
    }
    if (!accepted) {
      // No descent direction left at any damping: we are at the minimum to
      // working precision.
      out.converged = true;
      return out;
    }
    const double drop = (out.rss - new_rss) / std::max(out.rss, std::numeric_limits<double>::min());
    out.rss = new_rss;
    r = std::move(new_r);
    damping = std::max(damping / 10.0, 1e-15);
    if (drop < opt.rel_rss_tol || out.rss <= opt.rss_floor || step.norm() < opt.step_tol * (out.params.norm() + opt.step_tol)) {
      out.converged = true;
      return out;
    }
  }
  return out;
}

/// Linearized covariance s^2 (J^T J)^+ with s^2 = rss / (n - k). Directions
/// the data do not constrain (singular values below 1e-12 of the largest)
/// are dropped from the pseudo-inverse.
inline Mat linearized_covariance(const Mat& J, double rss) {
  const auto n = J.rows();
  const auto k = J.cols();
  const double s2 = n > k ? rss / double(n - k) : 0.0;
  Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& sv = svd.singularValues();
  const double cut = sv.size() ? sv[0] * 1e-12 : 0.0;
  Vec inv_sq = Vec::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > cut) inv_sq[i] = 1.0 / (sv[i] * sv[i]);
  const Mat& V = svd.matrixV();
  return s2 * V * inv_sq.asDiagonal() * V.transpose();
}

}  // namespace dephase
