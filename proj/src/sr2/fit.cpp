#include "physsym/sr2.hpp"

#include "lm.hpp"
#include "lstsq.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace physsym {

namespace {

void params_outside_noise(const Expr& e, std::set<std::string>& out)
{
    if (e.is(Kind::Noise)) {
        return;
    }
    if (e.is(Kind::Parameter)) {
        out.insert(e.name());
    }
    for (const auto& c : e.children()) {
        params_outside_noise(c, out);
    }
}

// Splits parameters into those that enter linearly (as a bare factor of a
// top-level term) and the rest. Parameters only found inside noise(...) are
// reported separately; they do not affect the noise-free fit.
void classify(const Expr& e, std::vector<std::string>& linear, std::vector<std::string>& nonlinear,
              std::vector<std::string>& noise_only)
{
    std::set<std::string> outside;
    params_outside_noise(e, outside);
    for (const auto& p : parameters_of(e)) {
        if (!outside.contains(p)) {
            noise_only.push_back(p);
        }
    }
    std::set<std::string> lin = outside;
    auto const terms = decompose_terms(e);
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& term : terms) {
            auto const split = split_coefficient(term);
            std::vector<std::string> direct;
            for (const auto& f : split.factors) {
                if (f.is(Kind::Parameter)) {
                    direct.push_back(f.name());
                } else {
                    std::set<std::string> nested;
                    params_outside_noise(f, nested);
                    for (const auto& p : nested) {
                        changed |= lin.erase(p) > 0;
                    }
                }
            }
            std::vector<std::string> live;
            for (const auto& p : direct) {
                if (lin.contains(p)) {
                    live.push_back(p);
                }
            }
            // a product of parameters keeps only its first one linear
            for (std::size_t i = 1; i < live.size(); ++i) {
                changed |= lin.erase(live[i]) > 0;
            }
        }
    }
    for (const auto& p : outside) {
        (lin.contains(p) ? linear : nonlinear).push_back(p);
    }
}

ParamRange range_for(const std::string& name, const FitOptions& options)
{
    if (auto it = options.ranges.find(name); it != options.ranges.end()) {
        return it->second;
    }
    for (const auto& spec : library()) {
        if (auto it = spec.param_ranges.find(name); it != spec.param_ranges.end()) {
            return it->second;
        }
    }
    return options.default_range;
}

struct LinearProblem {
    const Trajectory& traj;
    const std::vector<std::string>& linear;
    const std::vector<std::string>& silent;  // noise scales, irrelevant at noise 0
    std::vector<std::vector<double>> columns;
    std::vector<double> target;

    // Builds offset and per-parameter columns of an expression that is
    // affine in the linear parameters, then solves for them.
    detail::LeastSquares solve(const Expr& e)
    {
        std::size_t const n = traj.size();
        std::map<std::string, double> values;
        for (const auto& p : linear) {
            values[p] = 0.0;
        }
        for (const auto& p : silent) {
            values[p] = 0.0;
        }
        auto eval_into = [&](std::vector<double>& out) {
            out.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                out[i] = evaluate_unchecked(e, Binding{traj.x[i], traj.v[i], traj.t[i], &values, 0.0});
            }
        };
        std::vector<double> offset;
        eval_into(offset);
        columns.resize(linear.size());
        for (std::size_t j = 0; j < linear.size(); ++j) {
            values[linear[j]] = 1.0;
            eval_into(columns[j]);
            values[linear[j]] = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                columns[j][i] -= offset[i];
            }
        }
        target.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            target[i] = traj.a[i] - offset[i];
        }
        std::vector<const double*> ptrs;
        for (const auto& c : columns) {
            ptrs.push_back(c.data());
        }
        return detail::least_squares(ptrs, n, target.data(), false);
    }
};

Expr bind_all(const Expr& e, const std::map<std::string, double>& values)
{
    std::map<std::string, Expr> repl;
    for (const auto& [k, v] : values) {
        repl.emplace(k, constant(v));
    }
    return canonicalize(substitute(e, repl));
}

}  // namespace

FitResult fit_coefficients(const Expr& skeleton, const Trajectory& traj, const FitOptions& options)
{
    if (traj.empty()) {
        throw std::invalid_argument("cannot fit coefficients to an empty trajectory");
    }
    Expr const e = canonicalize(skeleton);
    FitResult result;
    std::vector<std::string> noise_only;
    classify(e, result.linear, result.nonlinear, noise_only);
    if (result.nonlinear.size() > options.max_nonlinear) {
        throw TooManyParameters("skeleton has " + std::to_string(result.nonlinear.size()) +
                                " nonlinear parameters; at most " + std::to_string(options.max_nonlinear) +
                                " are supported");
    }

    LinearProblem problem{traj, result.linear, noise_only, {}, {}};
    auto const nl = static_cast<Eigen::Index>(result.nonlinear.size());
    Eigen::VectorXd lo(nl), hi(nl), theta(nl);
    for (Eigen::Index j = 0; j < nl; ++j) {
        auto const r = range_for(result.nonlinear[static_cast<std::size_t>(j)], options);
        lo[j] = r.lo;
        hi[j] = r.hi;
    }
    auto with_nonlinear = [&](const Eigen::VectorXd& th) {
        std::map<std::string, double> values;
        for (Eigen::Index j = 0; j < nl; ++j) {
            values[result.nonlinear[static_cast<std::size_t>(j)]] = th[j];
        }
        return bind_all(e, values);
    };

    if (nl > 0) {
        // bounded grid, then local refinement from the best node
        auto const per_dim = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(options.grid_budget), 1.0 / static_cast<double>(nl)))),
            2, 512);
        std::vector<std::size_t> idx(static_cast<std::size_t>(nl), 0);
        double best = INFINITY;
        Eigen::VectorXd point(nl);
        while (true) {
            for (Eigen::Index j = 0; j < nl; ++j) {
                point[j] = lo[j] + (hi[j] - lo[j]) * static_cast<double>(idx[static_cast<std::size_t>(j)]) /
                                       static_cast<double>(per_dim - 1);
            }
            double const mse = problem.solve(with_nonlinear(point)).mse;
            if (mse < best) {
                best = mse;
                theta = point;
            }
            std::size_t k = 0;
            while (k < idx.size() && ++idx[k] == per_dim) {
                idx[k++] = 0;
            }
            if (k == idx.size()) {
                break;
            }
        }
        if (!std::isfinite(best)) {
            theta = (lo + hi) / 2.0;
        }
        detail::levenberg_marquardt(
            [&](const Eigen::VectorXd& th, Eigen::VectorXd& r) {
                auto const ls = problem.solve(with_nonlinear(th));
                r = ls.residual;
                return ls.finite;
            },
            theta, lo, hi, 60);
    }

    Expr const partly = with_nonlinear(theta);
    auto const ls = problem.solve(partly);
    result.rank_deficient = ls.rank < static_cast<Eigen::Index>(result.linear.size());
    if (result.rank_deficient && options.strict) {
        throw SingularFit("design matrix has rank " + std::to_string(ls.rank) + " for " +
                          std::to_string(result.linear.size()) + " linear parameters");
    }
    for (Eigen::Index j = 0; j < nl; ++j) {
        result.values[result.nonlinear[static_cast<std::size_t>(j)]] = theta[j];
    }
    for (std::size_t j = 0; j < result.linear.size(); ++j) {
        result.values[result.linear[j]] = ls.finite ? ls.coef[static_cast<Eigen::Index>(j)] : 0.0;
    }
    // the noise scale is not identifiable from a mean-zero fit; use the
    // residual RMS as its estimate
    double const rms = std::isfinite(ls.mse) ? std::sqrt(ls.mse) : 0.0;
    for (const auto& p : noise_only) {
        result.values[p] = rms;
    }
    result.bound = bind_all(e, result.values);
    result.mse = post_mse(result.bound, traj);
    return result;
}

}  // namespace physsym
