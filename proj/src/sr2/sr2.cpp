#include "physsym/sr2.hpp"

#include <cmath>

namespace physsym {

ResidualField residual_field(const Trajectory& traj, const Expr& ansatz)
{
    if (auto const params = parameters_of(ansatz); !params.empty()) {
        throw UnboundParameter(*params.begin());
    }
    ResidualField field;
    field.x = traj.x;
    field.v = traj.v;
    field.t = traj.t;
    field.target.resize(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        field.target[i] = traj.a[i] - evaluate(ansatz, Binding{traj.x[i], traj.v[i], traj.t[i], nullptr, 0.0});
    }
    return field;
}

Expr realign(const Expr& ansatz, const Expr& residual_expr) { return canonicalize(ansatz + residual_expr); }

MseReport post_mse_report(const Expr& formula, const Trajectory& traj)
{
    if (auto const params = parameters_of(formula); !params.empty()) {
        throw UnboundParameter(*params.begin());
    }
    MseReport report;
    double s = 0.0;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        double const d = traj.a[i] - evaluate_unchecked(formula, Binding{traj.x[i], traj.v[i], traj.t[i], nullptr, 0.0});
        s += d * d;
    }
    if (!std::isfinite(s)) {
        report.mse = INFINITY;
        report.non_finite = true;
    } else {
        report.mse = traj.empty() ? 0.0 : s / static_cast<double>(traj.size());
    }
    return report;
}

double post_mse(const Expr& formula, const Trajectory& traj) { return post_mse_report(formula, traj).mse; }

RefineResult refine(const Expr& ansatz, const Trajectory& traj, const GPConfig& config, const FitOptions& fit)
{
    RefineResult out;
    out.ansatz = canonicalize(ansatz);
    if (!parameters_of(out.ansatz).empty()) {
        out.ansatz = fit_coefficients(out.ansatz, traj, fit).bound;
        out.fitted = true;
    }
    out.ansatz_mse = post_mse(out.ansatz, traj);
    auto const field = residual_field(traj, out.ansatz);
    out.gp = run_gp(field, config);
    out.residual = out.gp.best.expr;
    out.final_expr = realign(out.ansatz, out.residual);
    out.final_mse = post_mse(out.final_expr, traj);
    if (!(out.final_mse <= out.ansatz_mse)) {
        out.final_expr = out.ansatz;
        out.final_mse = out.ansatz_mse;
        out.kept_ansatz = true;
    }
    return out;
}

}  // namespace physsym
