#include "physsym/expr.hpp"

#include <cmath>

namespace physsym {

UnboundParameter::UnboundParameter(std::string name)
    : std::runtime_error("parameter '" + name + "' has no binding"), name_(std::move(name))
{
}

namespace {

double integer_power(double base, int n)
{
    bool const invert = n < 0;
    unsigned e = invert ? static_cast<unsigned>(-(n + 1)) + 1U : static_cast<unsigned>(n);
    double result = 1.0;
    while (e != 0U) {
        if ((e & 1U) != 0U) {
            result *= base;
        }
        base *= base;
        e >>= 1U;
    }
    return invert ? 1.0 / result : result;
}

}  // namespace

double evaluate_unchecked(const Expr& e, const Binding& b)
{
    switch (e.kind()) {
    case Kind::Constant: return e.value();
    case Kind::Parameter: {
        if (b.params != nullptr) {
            if (auto it = b.params->find(e.name()); it != b.params->end()) {
                return it->second;
            }
        }
        throw UnboundParameter(e.name());
    }
    case Kind::Variable:
        switch (e.var()) {
        case Var::X: return b.x;
        case Var::V: return b.v;
        case Var::T: return b.t;
        }
        return 0.0;
    case Kind::Add: {
        double s = 0.0;
        for (const auto& c : e.children()) {
            s += evaluate_unchecked(c, b);
        }
        return s;
    }
    case Kind::Mul: {
        double p = 1.0;
        for (const auto& c : e.children()) {
            p *= evaluate_unchecked(c, b);
        }
        return p;
    }
    case Kind::Neg: return -evaluate_unchecked(e.child(), b);
    case Kind::Pow: return integer_power(evaluate_unchecked(e.child(), b), e.exponent());
    case Kind::Sin: return std::sin(evaluate_unchecked(e.child(), b));
    case Kind::Cos: return std::cos(evaluate_unchecked(e.child(), b));
    case Kind::Noise: return evaluate_unchecked(e.child(), b) * b.noise_value;
    }
    return 0.0;
}

double evaluate(const Expr& e, const Binding& binding)
{
    double const r = evaluate_unchecked(e, binding);
    if (!std::isfinite(r)) {
        throw NonFinite();
    }
    return r;
}

}  // namespace physsym
