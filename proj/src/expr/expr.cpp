#include "physsym/expr.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace physsym {

std::string_view var_name(Var v)
{
    switch (v) {
    case Var::X: return "x";
    case Var::V: return "v";
    case Var::T: return "t";
    }
    return "?";
}

namespace {

Expr make_node(Node n) { return Expr(std::make_shared<const Node>(std::move(n))); }

Expr unary(Kind k, Expr child)
{
    Node n;
    n.kind = k;
    n.children.push_back(std::move(child));
    return make_node(std::move(n));
}

Expr nary(Kind k, ExprList children)
{
    Node n;
    n.kind = k;
    n.children = std::move(children);
    return make_node(std::move(n));
}

std::strong_ordering compare_doubles(double a, double b)
{
    // -0 == +0; NaN sorts after everything and equals itself.
    bool const na = std::isnan(a);
    bool const nb = std::isnan(b);
    if (na || nb) {
        return na == nb ? std::strong_ordering::equal
                        : (na ? std::strong_ordering::greater : std::strong_ordering::less);
    }
    if (a < b) {
        return std::strong_ordering::less;
    }
    if (b < a) {
        return std::strong_ordering::greater;
    }
    return std::strong_ordering::equal;
}

std::strong_ordering compare_lists(const ExprList& a, const ExprList& b)
{
    std::size_t const n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (auto c = compare(a[i], b[i]); c != 0) {
            return c;
        }
    }
    return a.size() <=> b.size();
}

}  // namespace

Expr::Expr() : node_(std::make_shared<const Node>()) {}

Expr constant(double v)
{
    Node n;
    n.kind = Kind::Constant;
    n.value = v == 0.0 ? 0.0 : v;
    return make_node(std::move(n));
}

Expr parameter(std::string name)
{
    Node n;
    n.kind = Kind::Parameter;
    n.name = std::move(name);
    return make_node(std::move(n));
}

Expr variable(Var v)
{
    Node n;
    n.kind = Kind::Variable;
    n.var = v;
    return make_node(std::move(n));
}

Expr add(ExprList terms)
{
    if (terms.empty()) {
        return constant(0.0);
    }
    if (terms.size() == 1) {
        return std::move(terms.front());
    }
    return nary(Kind::Add, std::move(terms));
}

Expr mul(ExprList factors)
{
    if (factors.empty()) {
        return constant(1.0);
    }
    if (factors.size() == 1) {
        return std::move(factors.front());
    }
    return nary(Kind::Mul, std::move(factors));
}

Expr neg(Expr e) { return unary(Kind::Neg, std::move(e)); }

Expr pow(Expr base, int exponent)
{
    if (exponent == 0) {
        throw std::invalid_argument("power exponent must be nonzero");
    }
    if (exponent == 1) {
        return base;
    }
    Node n;
    n.kind = Kind::Pow;
    n.exponent = exponent;
    n.children.push_back(std::move(base));
    return make_node(std::move(n));
}

Expr sin(Expr e) { return unary(Kind::Sin, std::move(e)); }
Expr cos(Expr e) { return unary(Kind::Cos, std::move(e)); }
Expr noise(Expr scale) { return unary(Kind::Noise, std::move(scale)); }

Expr operator+(const Expr& a, const Expr& b) { return add({a, b}); }
Expr operator-(const Expr& a, const Expr& b) { return add({a, neg(b)}); }
Expr operator*(const Expr& a, const Expr& b) { return mul({a, b}); }
Expr operator-(const Expr& a) { return neg(a); }

std::strong_ordering compare(const Expr& a, const Expr& b)
{
    if (&a.node() == &b.node()) {
        return std::strong_ordering::equal;
    }
    if (auto c = a.kind() <=> b.kind(); c != 0) {
        return c;
    }
    switch (a.kind()) {
    case Kind::Constant: return compare_doubles(a.value(), b.value());
    case Kind::Parameter: return a.name() <=> b.name();
    case Kind::Variable: return a.var() <=> b.var();
    case Kind::Pow:
        if (auto c = compare(a.child(), b.child()); c != 0) {
            return c;
        }
        return a.exponent() <=> b.exponent();
    default: return compare_lists(a.children(), b.children());
    }
}

// ---- canonicalization -------------------------------------------------------

namespace {

Expr make_mul(ExprList factors);
Expr make_add(ExprList terms);

Expr make_pow(const Expr& base, int n)
{
    if (n == 1) {
        return base;
    }
    switch (base.kind()) {
    case Kind::Constant:
        if (base.value() == 0.0 && n < 0) {
            return pow(base, n);
        }
        return constant(std::pow(base.value(), n));
    case Kind::Pow: {
        int const e = base.exponent() * n;
        return e == 0 ? constant(1.0) : make_pow(base.child(), e);
    }
    case Kind::Mul: {
        ExprList parts;
        parts.reserve(base.children().size());
        for (const auto& f : base.children()) {
            parts.push_back(make_pow(f, n));
        }
        return make_mul(std::move(parts));
    }
    default: return pow(base, n);
    }
}

struct Power {
    Expr base;
    int exponent;
};

Expr make_mul(ExprList factors)
{
    double coef = 1.0;
    std::vector<Power> powers;
    auto take = [&](const Expr& f, auto& self) -> void {
        switch (f.kind()) {
        case Kind::Constant: coef *= f.value(); break;
        case Kind::Mul:
            for (const auto& g : f.children()) {
                self(g, self);
            }
            break;
        case Kind::Pow:
            if (f.child().is(Kind::Constant)) {
                powers.push_back({f, 1});  // unfoldable 0**-n stays opaque
            } else {
                powers.push_back({f.child(), f.exponent()});
            }
            break;
        default: powers.push_back({f, 1}); break;
        }
    };
    for (const auto& f : factors) {
        take(f, take);
    }
    if (coef == 0.0) {
        return constant(0.0);
    }
    std::stable_sort(powers.begin(), powers.end(),
                     [](const Power& a, const Power& b) { return compare(a.base, b.base) < 0; });

    ExprList merged;
    for (std::size_t i = 0; i < powers.size();) {
        std::size_t j = i;
        int e = 0;
        while (j < powers.size() && compare(powers[j].base, powers[i].base) == 0) {
            e += powers[j].exponent;
            ++j;
        }
        if (e != 0) {
            merged.push_back(e == 1 ? powers[i].base : pow(powers[i].base, e));
        }
        i = j;
    }
    std::sort(merged.begin(), merged.end(), [](const Expr& a, const Expr& b) { return compare(a, b) < 0; });

    if (merged.empty()) {
        return constant(coef);
    }
    if (merged.size() == 1) {
        if (coef == 1.0) {
            return merged.front();
        }
        if (merged.front().is(Kind::Add)) {
            ExprList distributed;
            distributed.reserve(merged.front().children().size());
            for (const auto& t : merged.front().children()) {
                distributed.push_back(make_mul({constant(coef), t}));
            }
            return make_add(std::move(distributed));
        }
    }
    ExprList out;
    out.reserve(merged.size() + 1);
    if (coef != 1.0) {
        out.push_back(constant(coef));
    }
    for (auto& m : merged) {
        out.push_back(std::move(m));
    }
    return nary(Kind::Mul, std::move(out));
}

struct TermKey {
    double coefficient;
    ExprList factors;
    ExprList stripped;  // factors without parameters
};

TermKey term_key(const Expr& term)
{
    auto split = split_coefficient(term);
    TermKey key{split.coefficient, std::move(split.factors), {}};
    for (const auto& f : key.factors) {
        if (!f.is(Kind::Parameter)) {
            key.stripped.push_back(f);
        }
    }
    return key;
}

bool term_less(const TermKey& a, const TermKey& b)
{
    if (auto c = compare_lists(a.stripped, b.stripped); c != 0) {
        return c < 0;
    }
    if (auto c = compare_lists(a.factors, b.factors); c != 0) {
        return c < 0;
    }
    return compare_doubles(a.coefficient, b.coefficient) < 0;
}

Expr make_add(ExprList terms)
{
    double constant_sum = 0.0;
    std::vector<TermKey> keys;
    auto take = [&](const Expr& t, auto& self) -> void {
        if (t.is(Kind::Add)) {
            for (const auto& u : t.children()) {
                self(u, self);
            }
        } else if (t.is(Kind::Constant)) {
            constant_sum += t.value();
        } else {
            keys.push_back(term_key(t));
        }
    };
    for (const auto& t : terms) {
        take(t, take);
    }

    // Merge like terms in first-seen order so the floating-point sum is
    // independent of the final sort.
    std::vector<TermKey> merged;
    for (auto& k : keys) {
        auto it = std::find_if(merged.begin(), merged.end(),
                               [&](const TermKey& m) { return compare_lists(m.factors, k.factors) == 0; });
        if (it == merged.end()) {
            merged.push_back(std::move(k));
        } else {
            it->coefficient += k.coefficient;
        }
    }
    std::erase_if(merged, [](const TermKey& k) { return k.coefficient == 0.0; });
    std::sort(merged.begin(), merged.end(), term_less);

    ExprList out;
    out.reserve(merged.size() + 1);
    for (auto& k : merged) {
        ExprList parts;
        parts.reserve(k.factors.size() + 1);
        parts.push_back(constant(k.coefficient));
        for (auto& f : k.factors) {
            parts.push_back(std::move(f));
        }
        Expr t = make_mul(std::move(parts));
        if (t.is(Kind::Add)) {
            // coefficient distributed over a sum: fold it back in
            for (const auto& u : t.children()) {
                out.push_back(u);
            }
        } else {
            out.push_back(std::move(t));
        }
    }
    if (out.size() != merged.size()) {
        // distribution produced new terms; merge again
        if (constant_sum != 0.0) {
            out.push_back(constant(constant_sum));
        }
        return make_add(std::move(out));
    }
    if (constant_sum != 0.0 || out.empty()) {
        out.push_back(constant(constant_sum));
    }
    if (out.size() == 1) {
        return out.front();
    }
    return nary(Kind::Add, std::move(out));
}

}  // namespace

Expr canonicalize(const Expr& e)
{
    switch (e.kind()) {
    case Kind::Constant: return e.value() == 0.0 ? constant(0.0) : e;
    case Kind::Parameter:
    case Kind::Variable: return e;
    case Kind::Neg: return make_mul({constant(-1.0), canonicalize(e.child())});
    case Kind::Sin:
    case Kind::Cos: {
        Expr c = canonicalize(e.child());
        if (c.is(Kind::Constant)) {
            return constant(e.is(Kind::Sin) ? std::sin(c.value()) : std::cos(c.value()));
        }
        // pull a negative coefficient out of the argument: sin is odd, cos even
        if (c.is(Kind::Mul) && c.children().front().is(Kind::Constant) &&
            c.children().front().value() < 0.0) {
            Expr flipped = make_mul({constant(-1.0), c});
            if (e.is(Kind::Cos)) {
                return unary(Kind::Cos, std::move(flipped));
            }
            return make_mul({constant(-1.0), unary(Kind::Sin, std::move(flipped))});
        }
        return unary(e.kind(), std::move(c));
    }
    case Kind::Noise: {
        Expr c = canonicalize(e.child());
        if (c.is_constant(0.0)) {
            return c;
        }
        return noise(std::move(c));
    }
    case Kind::Pow: return make_pow(canonicalize(e.child()), e.exponent());
    case Kind::Add:
    case Kind::Mul: {
        ExprList cs;
        cs.reserve(e.children().size());
        for (const auto& c : e.children()) {
            cs.push_back(canonicalize(c));
        }
        return e.is(Kind::Add) ? make_add(std::move(cs)) : make_mul(std::move(cs));
    }
    }
    return e;
}

SplitTerm split_coefficient(const Expr& term)
{
    if (term.is(Kind::Constant)) {
        return {term.value(), {}};
    }
    if (term.is(Kind::Mul)) {
        const auto& cs = term.children();
        if (cs.front().is(Kind::Constant)) {
            return {cs.front().value(), ExprList(cs.begin() + 1, cs.end())};
        }
        return {1.0, cs};
    }
    return {1.0, {term}};
}

std::size_t complexity(const Expr& e)
{
    std::size_t n = 1;
    for (const auto& c : e.children()) {
        n += complexity(c);
    }
    return n;
}

bool contains_kind(const Expr& e, Kind k)
{
    if (e.is(k)) {
        return true;
    }
    return std::any_of(e.children().begin(), e.children().end(),
                       [k](const Expr& c) { return contains_kind(c, k); });
}

namespace {
void collect_parameters(const Expr& e, std::set<std::string>& out)
{
    if (e.is(Kind::Parameter)) {
        out.insert(e.name());
    }
    for (const auto& c : e.children()) {
        collect_parameters(c, out);
    }
}
}  // namespace

std::set<std::string> parameters_of(const Expr& e)
{
    std::set<std::string> out;
    collect_parameters(e, out);
    return out;
}

Expr substitute(const Expr& e, const std::map<std::string, Expr>& replacements)
{
    if (e.is(Kind::Parameter)) {
        auto it = replacements.find(e.name());
        return it == replacements.end() ? e : it->second;
    }
    if (e.children().empty()) {
        return e;
    }
    Node n = e.node();
    for (auto& c : n.children) {
        c = substitute(c, replacements);
    }
    return make_node(std::move(n));
}

}  // namespace physsym
