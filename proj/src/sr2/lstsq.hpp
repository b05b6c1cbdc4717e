#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace physsym::detail {

struct LeastSquares {
    Eigen::VectorXd coef;  // intercept first when requested
    Eigen::VectorXd residual;  // fitted minus target
    double mse = 0.0;
    Eigen::Index rank = 0;
    bool finite = true;
};

// Minimum-norm least squares of target on the given columns.
inline LeastSquares least_squares(const std::vector<const double*>& columns, std::size_t n, const double* target,
                                  bool intercept)
{
    LeastSquares out;
    auto const offset = static_cast<Eigen::Index>(intercept ? 1 : 0);
    auto const cols = static_cast<Eigen::Index>(columns.size()) + offset;
    auto const rows = static_cast<Eigen::Index>(n);
    Eigen::Map<const Eigen::VectorXd> y(target, rows);
    if (cols == 0) {
        out.coef.resize(0);
        out.residual = -y;
        out.mse = y.squaredNorm() / static_cast<double>(n);
        out.finite = std::isfinite(out.mse);
        return out;
    }
    Eigen::MatrixXd a(rows, cols);
    if (intercept) {
        a.col(0).setOnes();
    }
    for (std::size_t j = 0; j < columns.size(); ++j) {
        a.col(static_cast<Eigen::Index>(j) + offset) = Eigen::Map<const Eigen::VectorXd>(columns[j], rows);
    }
    if (!a.allFinite()) {
        out.finite = false;
        out.mse = INFINITY;
        out.coef = Eigen::VectorXd::Zero(cols);
        return out;
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(1e-11);
    cod.compute(a);
    out.rank = cod.rank();
    out.coef = cod.solve(y);
    out.residual = a * out.coef - y;
    out.mse = out.residual.squaredNorm() / static_cast<double>(n);
    out.finite = std::isfinite(out.mse) && out.coef.allFinite();
    if (!out.finite) {
        out.mse = INFINITY;
    }
    return out;
}

}  // namespace physsym::detail
