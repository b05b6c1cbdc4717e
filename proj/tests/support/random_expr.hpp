#pragma once

// Random formula generator used by property tests. It draws raw (possibly
// non-canonical) trees from the same grammar the parser accepts.

#include "physsym/expr.hpp"
#include "physsym/rng.hpp"

#include <array>
#include <string>

namespace physsym::testing {

struct RandomExprOptions {
    int max_depth = 4;
    bool allow_noise = true;
    bool allow_parameters = true;
};

inline const std::array<std::string, 6>& test_parameter_names()
{
    static const std::array<std::string, 6> names{"k", "c", "F", "w", "beta", "gamma"};
    return names;
}

inline Expr random_leaf(Rng& rng, const RandomExprOptions& opt)
{
    switch (rng.below(opt.allow_parameters ? 3 : 2)) {
    case 0: return constant(rng.uniform(-5.0, 5.0));
    case 1: return variable(static_cast<Var>(rng.below(3)));
    default: return parameter(test_parameter_names()[rng.below(test_parameter_names().size())]);
    }
}

inline Expr random_expr(Rng& rng, const RandomExprOptions& opt, int depth = 0)
{
    if (depth >= opt.max_depth || (depth > 0 && rng.bernoulli(0.3))) {
        return random_leaf(rng, opt);
    }
    int const choice = static_cast<int>(rng.below(opt.allow_noise ? 8 : 7));
    auto sub = [&] { return random_expr(rng, opt, depth + 1); };
    switch (choice) {
    case 0:
    case 1: {
        ExprList cs;
        int const n = rng.uniform_int(2, 4);
        for (int i = 0; i < n; ++i) {
            cs.push_back(sub());
        }
        return add(std::move(cs));
    }
    case 2: {
        ExprList cs;
        int const n = rng.uniform_int(2, 3);
        for (int i = 0; i < n; ++i) {
            cs.push_back(sub());
        }
        return mul(std::move(cs));
    }
    case 3: return neg(sub());
    case 4: {
        static constexpr std::array<int, 3> exps{2, 3, 5};
        return pow(sub(), exps[rng.below(3)]);
    }
    case 5: return sin(sub());
    case 6: return cos(sub());
    default: return noise(random_leaf(rng, {opt.max_depth, false, opt.allow_parameters}));
    }
}

}  // namespace physsym::testing
