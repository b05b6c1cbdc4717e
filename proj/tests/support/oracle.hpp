#pragma once

// Brute-force tree-walk interpreter kept independent of physsym::evaluate:
// it walks the raw node structure and uses std::pow for powers. The long double
// variant keeps its own rounding far below comparison tolerances.

#include "physsym/expr.hpp"

#include <cmath>
#include <map>
#include <string>

namespace physsym::testing {

struct OraclePoint {
    double x = 0.0;
    double v = 0.0;
    double t = 0.0;
    double noise = 0.0;
    std::map<std::string, double> params;
};

template <class Real>
Real oracle_eval_as(const Node& n, const OraclePoint& p)
{
    switch (n.kind) {
    case Kind::Constant: return n.value;
    case Kind::Parameter: return p.params.at(n.name);
    case Kind::Variable: return n.var == Var::X ? p.x : (n.var == Var::V ? p.v : p.t);
    case Kind::Add: {
        Real s = 0;
        for (const auto& c : n.children) {
            s += oracle_eval_as<Real>(c.node(), p);
        }
        return s;
    }
    case Kind::Mul: {
        Real s = 1;
        for (const auto& c : n.children) {
            s *= oracle_eval_as<Real>(c.node(), p);
        }
        return s;
    }
    case Kind::Neg: return -oracle_eval_as<Real>(n.children[0].node(), p);
    case Kind::Pow: return std::pow(oracle_eval_as<Real>(n.children[0].node(), p), static_cast<Real>(n.exponent));
    case Kind::Sin: return std::sin(oracle_eval_as<Real>(n.children[0].node(), p));
    case Kind::Cos: return std::cos(oracle_eval_as<Real>(n.children[0].node(), p));
    case Kind::Noise: return oracle_eval_as<Real>(n.children[0].node(), p) * p.noise;
    }
    return NAN;
}

inline double oracle_eval(const Expr& e, const OraclePoint& p) { return oracle_eval_as<double>(e.node(), p); }

inline double oracle_eval_precise(const Expr& e, const OraclePoint& p)
{
    return static_cast<double>(oracle_eval_as<long double>(e.node(), p));
}

inline bool close(double a, double b, double tol)
{
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace physsym::testing
