#include "physsym/expr.hpp"
#include "physsym/rng.hpp"

#include <algorithm>
#include <cmath>

namespace physsym {

ExprList decompose_terms(const Expr& e)
{
    if (e.is(Kind::Add)) {
        return e.children();
    }
    return {e};
}

std::strong_ordering operator<=>(const SkeletonTerm& a, const SkeletonTerm& b)
{
    if (auto c = a.sign <=> b.sign; c != 0) {
        return c;
    }
    return compare(a.shape, b.shape);
}

namespace {

Expr unitize(const Expr& e)
{
    switch (e.kind()) {
    case Kind::Constant:
    case Kind::Parameter: return constant(1.0);
    case Kind::Variable: return e;
    case Kind::Noise: return noise(constant(1.0));
    case Kind::Pow: return pow(unitize(e.child()), e.exponent());
    case Kind::Neg: return unitize(e.child());
    case Kind::Sin: return sin(unitize(e.child()));
    case Kind::Cos: return cos(unitize(e.child()));
    case Kind::Add:
    case Kind::Mul: {
        ExprList cs;
        cs.reserve(e.children().size());
        for (const auto& c : e.children()) {
            cs.push_back(unitize(c));
        }
        return e.is(Kind::Add) ? add(std::move(cs)) : mul(std::move(cs));
    }
    }
    return e;
}

}  // namespace

SkeletonTerm skeletonize(const Expr& term)
{
    Expr const c = canonicalize(term);
    auto split = c.is(Kind::Add) ? SplitTerm{1.0, {c}} : split_coefficient(c);
    SkeletonTerm s;
    s.sign = split.coefficient < 0.0 ? -1 : 1;
    // Re-canonicalizing can fold freshly created unit constants (x + 1 + 1)
    // or merge terms that only differed by a parameter; iterate to a fixpoint.
    Expr shape = canonicalize(unitize(mul(split.factors)));
    for (int i = 0; i < 16; ++i) {
        Expr next = canonicalize(unitize(shape));
        if (next == shape) {
            break;
        }
        shape = std::move(next);
    }
    s.shape = std::move(shape);
    return s;
}

std::set<SkeletonTerm> skeleton_set(const Expr& e)
{
    std::set<SkeletonTerm> out;
    for (const auto& t : decompose_terms(canonicalize(e))) {
        out.insert(skeletonize(t));
    }
    return out;
}

bool numerically_equal(const Expr& a, const Expr& b, const ProbeOptions& options)
{
    auto names = parameters_of(a);
    names.merge(parameters_of(b));  // a parameter may cancel on one side only
    bool const has_noise = contains_kind(a, Kind::Noise) || contains_kind(b, Kind::Noise);
    Rng rng(options.seed);
    std::map<std::string, double> params;
    int compared = 0;
    for (int i = 0; i < options.points; ++i) {
        Binding bind;
        bind.x = rng.uniform(-2.0, 2.0);
        bind.v = rng.uniform(-2.0, 2.0);
        bind.t = rng.uniform(-2.0, 2.0);
        for (const auto& n : names) {
            params[n] = rng.uniform(0.1, 2.0);
        }
        bind.params = &params;
        // Noise is probed at 0 and again at 1 so that differing noise scales
        // are not hidden by the zero draw.
        for (double nv : {0.0, 1.0}) {
            if (nv != 0.0 && !has_noise) {
                continue;
            }
            bind.noise_value = nv;
            double const va = evaluate_unchecked(a, bind);
            double const vb = evaluate_unchecked(b, bind);
            if (!std::isfinite(va) || !std::isfinite(vb)) {
                continue;
            }
            double const scale = std::max({1.0, std::abs(va), std::abs(vb)});
            if (std::abs(va - vb) > options.tolerance * scale) {
                return false;
            }
            ++compared;
        }
    }
    return compared > 0;
}

bool symbolic_equal(const Expr& a, const Expr& b)
{
    Expr const ca = canonicalize(a);
    Expr const cb = canonicalize(b);
    if (ca == cb) {
        return true;
    }
    return numerically_equal(ca, cb, ProbeOptions{});
}

}  // namespace physsym
