#include <doctest.h>

#include "physsym/rng.hpp"
#include "physsym/sr2.hpp"
#include "support/oracle.hpp"

#include <cmath>

using namespace physsym;
using physsym::testing::oracle_eval;
using physsym::testing::OraclePoint;

namespace {

// Field with a prescribed target on a simple oscillating trajectory.
ResidualField field_from(const Trajectory& traj, const std::function<double(double, double, double)>& target)
{
    ResidualField f;
    f.x = traj.x;
    f.v = traj.v;
    f.t = traj.t;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        f.target.push_back(target(traj.x[i], traj.v[i], traj.t[i]));
    }
    return f;
}

Trajectory reference_motion() { return simulate(parse("-x - 0.2*v + 0.8*sin(1.3*t)"), 1.0, 0.0, 0); }

bool skeleton_has(const Expr& e, const std::string& term)
{
    auto const want = skeleton_set(parse(term));
    auto const got = skeleton_set(e);
    return got.contains(*want.begin());
}

}  // namespace

TEST_CASE("residual field")
{
    auto const traj = simulate(parse("-x - 0.1*v"), 1.0, 0.0, 0);
    auto const field = residual_field(traj, parse("-x"));
    REQUIRE(field.size() == traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        REQUIRE(std::abs(field.target[i] - (-0.1 * traj.v[i])) <= 1e-15 * std::max(1.0, std::abs(traj.x[i])));
    }
    auto const same = residual_field(traj, parse("-x - 0.1*v"));
    for (double const r : same.target) {
        REQUIRE(std::abs(r) < 1e-15);
    }
    auto const zero = residual_field(traj, parse("0"));
    CHECK(zero.target == traj.a);
    CHECK_THROWS_AS(residual_field(traj, parse("-k*x")), UnboundParameter);

    // noise in the ansatz is taken at its mean
    auto const noisy = residual_field(traj, parse("-x - 0.1*v + noise(0.3)"));
    for (double const r : noisy.target) {
        REQUIRE(std::abs(r) < 1e-15);
    }
}

TEST_CASE("fit coefficients, linear parameters")
{
    auto const one = fit_coefficients(parse("-k*x"), simulate(parse("-2.5*x"), 1.0, 0.0, 0));
    CHECK(std::abs(one.values.at("k") - 2.5) < 1e-6);
    CHECK(one.linear == std::vector<std::string>{"k"});
    CHECK(one.nonlinear.empty());

    auto const two = fit_coefficients(parse("-k*x - c*v"), simulate(parse("-1.0*x - 0.3*v"), 1.0, 0.5, 0));
    CHECK(std::abs(two.values.at("k") - 1.0) < 1e-6);
    CHECK(std::abs(two.values.at("c") - 0.3) < 1e-6);
    CHECK(two.mse < 1e-12);
    CHECK(parameters_of(two.bound).empty());

    // no parameters: returned as is
    auto const none = fit_coefficients(parse("-x"), simulate(parse("-x"), 1.0, 0.0, 0));
    CHECK(none.bound == parse("-x"));
}

TEST_CASE("fit coefficients, nonlinear parameters")
{
    auto const traj = simulate(parse("-x - 0.2*v + 2*sin(3*t)"), 0.0, 0.0, 0);
    auto const fit = fit_coefficients(parse("-x - 0.2*v + F*sin(w*t)"), traj);
    CHECK(fit.nonlinear == std::vector<std::string>{"w"});
    CHECK(std::abs(fit.values.at("F") - 2.0) < 1e-3);
    CHECK(std::abs(fit.values.at("w") - 3.0) < 1e-3);

    auto const spatial = simulate(parse("-2*x + 1.5*sin(2*x)"), 1.5, 0.0, 0);
    auto const sfit = fit_coefficients(parse("-k*x + Fx*sin(wx*x)"), spatial);
    CHECK(std::abs(sfit.values.at("wx") - 2.0) < 1e-3);
    CHECK(sfit.mse < 1e-8);
}

TEST_CASE("fit coefficients, errors and degenerate designs")
{
    auto const traj = simulate(parse("-2.5*x"), 1.0, 0.0, 0);
    CHECK_THROWS_AS(fit_coefficients(parse("sin(a*t) + sin(b*t) + sin(c*t) + sin(d*t) + sin(e*t)"), traj),
                    TooManyParameters);
    FitOptions strict;
    strict.strict = true;
    CHECK_THROWS_AS(fit_coefficients(parse("-k*x - c*x"), traj, strict), SingularFit);
    auto const loose = fit_coefficients(parse("-k*x - c*x"), traj);
    CHECK(loose.rank_deficient);
    // minimum-norm split of the shared coefficient
    CHECK(std::abs(loose.values.at("k") - 1.25) < 1e-6);
    CHECK(std::abs(loose.values.at("c") - 1.25) < 1e-6);

    // a noise scale is estimated from the residual spread
    auto const noisy = simulate(parse("-x + noise(0.3)"), 1.0, 0.0, 3);
    auto const nfit = fit_coefficients(parse("-k*x + noise(sigma)"), noisy);
    CHECK(std::abs(nfit.values.at("k") - 1.0) < 0.05);
    CHECK(nfit.values.at("sigma") > 0.2);
    CHECK(nfit.values.at("sigma") < 0.4);
}

TEST_CASE("symbolic regression recovers a damping residual")
{
    auto const traj = reference_motion();
    auto const field = field_from(traj, [](double, double v, double) { return -0.1 * v; });
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        GPConfig cfg;
        cfg.seed = seed;
        Expr const e = symbolic_regress(field, cfg);
        auto const terms = decompose_terms(e);
        if (terms.size() == 1 && skeleton_has(e, "-v") &&
            std::abs(split_coefficient(terms[0]).coefficient + 0.1) < 1e-3) {
            ++hits;
        }
    }
    CHECK(hits >= 18);
}

TEST_CASE("symbolic regression recovers a periodic forcing")
{
    auto const traj = reference_motion();
    auto const field = field_from(traj, [](double, double, double t) { return 1.5 * std::sin(2.0 * t); });
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        GPConfig cfg;
        cfg.seed = seed;
        hits += skeleton_has(symbolic_regress(field, cfg), "sin(t)") ? 1 : 0;
    }
    CHECK(hits >= 16);
}

TEST_CASE("symbolic regression of a zero residual is the constant 0")
{
    auto const traj = reference_motion();
    auto const field = field_from(traj, [](double, double, double) { return 0.0; });
    auto const result = run_gp(field, {});
    CHECK(result.used_mean);
    CHECK(result.best.expr == parse("0"));
}

TEST_CASE("gp bookkeeping")
{
    auto const traj = reference_motion();
    auto const field = field_from(traj, [](double x, double v, double) { return -0.5 * x * v + 0.2 * x * x * x; });
    GPConfig cfg;
    cfg.population = 200;
    cfg.generations = 15;
    cfg.seed = 9;
    auto const before = gp_invocations();
    auto const a = run_gp(field, cfg);
    auto const b = run_gp(field, cfg);
    CHECK(gp_invocations() == before + 2);
    CHECK(a.best.expr == b.best.expr);
    CHECK(a.history == b.history);
    REQUIRE(a.history.size() == cfg.generations);
    for (std::size_t g = 1; g < a.history.size(); ++g) {
        REQUIRE(a.history[g] <= a.history[g - 1]);
    }
    double const lambda = 1e-4 * [&] {
        double m = 0.0, s = 0.0;
        for (double const r : field.target) {
            m += r;
        }
        m /= static_cast<double>(field.size());
        for (double const r : field.target) {
            s += (r - m) * (r - m);
        }
        return s / static_cast<double>(field.size());
    }();
    auto const again = score_candidate(a.best.expr, field, lambda);
    CHECK(again.mse == a.best.mse);
    CHECK(again.fitness == a.best.fitness);
    CHECK(again.complexity == complexity(a.best.expr));
}

TEST_CASE("gp config validation")
{
    GPConfig bad;
    bad.p_crossover = 1.2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    GPConfig sum;
    sum.p_crossover = 0.9;
    sum.p_subtree_mutation = 0.2;
    CHECK_THROWS_AS(sum.validate(), ConfigError);
    GPConfig depth;
    depth.init_max_depth = 9;
    CHECK_THROWS_AS(depth.validate(), ConfigError);
    CHECK_NOTHROW(GPConfig{}.validate());
}

TEST_CASE("realign")
{
    CHECK(realign(parse("-x"), parse("-0.1*v")) == parse("-x - 0.1*v"));
    CHECK(render(realign(parse("-x"), parse("-0.1*v"))) == "-x - 0.1*v");
    CHECK(realign(parse("-x"), parse("0")) == parse("-x"));
    CHECK(realign(parse("-1.0*x"), parse("-0.2*x")) == parse("-1.2*x"));
}

TEST_CASE("post mse")
{
    auto const traj = simulate(parse("-x - 0.1*v"), 1.0, 0.0, 0);
    CHECK(post_mse(parse("-x - 0.1*v"), traj) <= 1e-18);

    Trajectory flat;
    flat.t = {0.0, 1.0, 2.0};
    flat.x = {0.0, 1.0, 2.0};
    flat.v = {1.0, 1.0, 1.0};
    flat.a = {2.0, 2.0, 2.0};
    CHECK(post_mse(parse("0"), flat) == 4.0);
    auto const report = post_mse_report(parse("x**-1"), flat);
    CHECK(report.non_finite);
    CHECK(std::isinf(report.mse));
}

TEST_CASE("residual identity")
{
    Expr const gt = parse("-2*x - 0.3*v**3 + 1.5*sin(2*t)");
    auto const traj = simulate(gt, 0.5, 0.0, 0);
    Expr const final_expr = realign(parse("-2*x - 0.3*v**3"), parse("1.5*sin(2*t)"));
    for (std::size_t i = 0; i < traj.size(); ++i) {
        OraclePoint const p{traj.x[i], traj.v[i], traj.t[i], 0.0, {}};
        REQUIRE(std::abs(oracle_eval(final_expr, p) - oracle_eval(gt, p)) < 1e-12);
    }
}

TEST_CASE("refine never increases the error")
{
    SamplerConfig scfg;
    GPConfig cfg;
    cfg.population = 150;
    cfg.generations = 10;
    Rng rng(21);
    int done = 0;
    for (std::uint64_t seed = 0; done < 12; ++seed) {
        auto const sys = sample_formula(seed, scfg);
        Trajectory traj;
        try {
            traj = simulate(sys);
        } catch (const SimulationError&) {
            continue;
        }
        auto terms = decompose_terms(sys.formula);
        terms.erase(terms.begin() + static_cast<std::ptrdiff_t>(rng.below(terms.size())));
        terms.push_back(constant(rng.uniform(-0.5, 0.5)) * variable(Var::V));
        cfg.seed = seed;
        auto const result = refine(add(terms), traj, cfg);
        CAPTURE(render(sys.formula));
        REQUIRE(result.final_mse <= result.ansatz_mse + 1e-12);
        auto const again = refine(add(terms), traj, cfg);
        CHECK(again.final_expr == result.final_expr);
        ++done;
    }
}

TEST_CASE("refine fits placeholder coefficients first")
{
    auto const traj = simulate(parse("-1.5*x - 0.4*v"), 1.0, 0.0, 0);
    GPConfig cfg;
    cfg.population = 100;
    cfg.generations = 5;
    auto const result = refine(parse("-k*x - c*v"), traj, cfg);
    CHECK(result.fitted);
    CHECK(result.ansatz_mse < 1e-12);
    CHECK(parameters_of(result.final_expr).empty());
}
