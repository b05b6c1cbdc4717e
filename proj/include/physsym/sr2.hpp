#pragma once

#include "physsym/expr.hpp"
#include "physsym/sim.hpp"
#include "physsym/terms.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace physsym {

/// Pointwise acceleration residual of an ansatz against a trajectory.
struct ResidualField {
    std::vector<double> x;
    std::vector<double> v;
    std::vector<double> t;
    std::vector<double> target;

    std::size_t size() const { return target.size(); }
};

/// target[i] = a[i] - ansatz(x[i], v[i], t[i]) with noise at its mean (0).
/// Throws UnboundParameter if the ansatz still has parameters.
ResidualField residual_field(const Trajectory& traj, const Expr& ansatz);

// ---- coefficient fitting ----------------------------------------------------

class TooManyParameters : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class SingularFit : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FitOptions {
    /// Throw SingularFit on a rank-deficient design instead of returning
    /// the minimum-norm solution.
    bool strict = false;
    std::size_t max_nonlinear = 4;
    /// Total grid evaluations shared across the nonlinear dimensions.
    std::size_t grid_budget = 4096;
    /// Search ranges for nonlinear parameters; names not listed here fall
    /// back to the term library, then to default_range.
    std::map<std::string, ParamRange> ranges;
    ParamRange default_range{0.01, 10.0};
};

struct FitResult {
    Expr bound;
    std::map<std::string, double> values;
    double mse = 0.0;
    bool rank_deficient = false;
    std::vector<std::string> linear;
    std::vector<std::string> nonlinear;
};

FitResult fit_coefficients(const Expr& skeleton, const Trajectory& traj, const FitOptions& options = {});

// ---- genetic programming ----------------------------------------------------

struct GPConfig {
    std::size_t population = 500;
    std::size_t generations = 40;
    std::size_t tournament = 5;
    double p_crossover = 0.7;
    double p_subtree_mutation = 0.1;
    double p_point_mutation = 0.1;
    double p_constant_jitter = 0.05;
    std::size_t max_depth = 7;
    std::size_t max_nodes = 48;
    std::size_t init_min_depth = 2;
    std::size_t init_max_depth = 4;
    bool use_sin = true;
    bool use_cos = true;
    bool use_cube = true;
    bool use_quintic = true;
    /// Per-node penalty; when unset, 1e-4 times the target variance.
    std::optional<double> parsimony;
    double constant_jitter_scale = 0.1;
    double constant_range = 5.0;
    /// Candidates per generation whose constants are tuned locally.
    std::size_t optimize_top = 5;
    /// Further untuned candidates with a trig frequency tuned per generation.
    std::size_t optimize_periodic = 4;
    std::uint64_t seed = 0;

    /// Throws ConfigError.
    void validate() const;
};

struct Candidate {
    Expr expr;
    double mse = 0.0;
    std::size_t complexity = 0;
    double fitness = 0.0;
};

/// mse of expr on the field plus lambda * complexity(expr).
Candidate score_candidate(const Expr& expr, const ResidualField& field, double lambda);

struct GPResult {
    Candidate best;
    /// Best internal fitness after each generation.
    std::vector<double> history;
    std::size_t evaluations = 0;
    bool used_mean = false;
};

GPResult run_gp(const ResidualField& field, const GPConfig& config = {});
Expr symbolic_regress(const ResidualField& field, const GPConfig& config = {});

/// Number of run_gp calls in this process.
std::size_t gp_invocations();

// ---- realignment ------------------------------------------------------------

Expr realign(const Expr& ansatz, const Expr& residual_expr);

struct MseReport {
    double mse = 0.0;
    bool non_finite = false;
};

/// Mean squared acceleration error with noise at 0; +inf (flagged) when the
/// formula is non-finite on the data.
MseReport post_mse_report(const Expr& formula, const Trajectory& traj);
double post_mse(const Expr& formula, const Trajectory& traj);

struct RefineResult {
    Expr ansatz;  // with fitted coefficients
    Expr residual;
    Expr final_expr;
    double ansatz_mse = 0.0;
    double final_mse = 0.0;
    bool fitted = false;
    bool kept_ansatz = false;  // regression made things worse, ansatz returned
    GPResult gp;
};

/// Fit (if needed), regress the residual, realign.
RefineResult refine(const Expr& ansatz, const Trajectory& traj, const GPConfig& config = {},
                    const FitOptions& fit = {});

}  // namespace physsym
