#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace physsym::detail {

// Box-constrained Levenberg-Marquardt with a forward-difference Jacobian.
// residual(theta, r) fills r and returns false if it is not finite.
// Returns the final sum of squares; theta is updated in place.
template <class Residual>
double levenberg_marquardt(Residual&& residual, Eigen::VectorXd& theta, const Eigen::VectorXd& lo,
                           const Eigen::VectorXd& hi, int max_iterations = 30)
{
    auto const p = theta.size();
    Eigen::VectorXd r;
    if (!residual(theta, r)) {
        return INFINITY;
    }
    double sse = r.squaredNorm();
    double damping = 1e-3;
    Eigen::MatrixXd jac(r.size(), p);
    Eigen::VectorXd trial_r;
    for (int iter = 0; iter < max_iterations && sse > 0.0; ++iter) {
        for (Eigen::Index j = 0; j < p; ++j) {
            double h = 1e-7 * std::max(1.0, std::abs(theta[j]));
            Eigen::VectorXd shifted = theta;
            if (shifted[j] + h > hi[j]) {
                h = -h;
            }
            shifted[j] += h;
            if (!residual(shifted, trial_r)) {
                return sse;
            }
            jac.col(j) = (trial_r - r) / h;
        }
        Eigen::MatrixXd const hess = jac.transpose() * jac;
        Eigen::VectorXd const grad = jac.transpose() * r;
        bool accepted = false;
        for (int attempt = 0; attempt < 12; ++attempt) {
            Eigen::MatrixXd lhs = hess;
            for (Eigen::Index j = 0; j < p; ++j) {
                lhs(j, j) += damping * std::max(hess(j, j), 1e-12);
            }
            Eigen::VectorXd const step = lhs.ldlt().solve(-grad);
            Eigen::VectorXd candidate = (theta + step).cwiseMax(lo).cwiseMin(hi);
            if (!step.allFinite() || (candidate - theta).norm() <= 1e-15 * (1.0 + theta.norm())) {
                damping *= 4.0;
                continue;
            }
            if (residual(candidate, trial_r)) {
                double const trial = trial_r.squaredNorm();
                if (trial < sse) {
                    double const gain = sse - trial;
                    theta = candidate;
                    r = trial_r;
                    sse = trial;
                    damping = std::max(damping / 3.0, 1e-12);
                    accepted = true;
                    if (gain <= 1e-15 * sse) {
                        return sse;
                    }
                    break;
                }
            }
            damping *= 4.0;
        }
        if (!accepted) {
            break;
        }
    }
    return sse;
}

}  // namespace physsym::detail
