#include "physsym/expr.hpp"

#include <array>
#include <charconv>
#include <cmath>

namespace physsym {

std::string format_number(double v)
{
    if (v == 0.0) {
        return "0";
    }
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

namespace {

void render_into(const Expr& e, std::string& out);

bool is_negative_term(const Expr& t)
{
    if (t.is(Kind::Constant)) {
        return t.value() < 0.0;
    }
    return t.is(Kind::Mul) && t.children().front().is(Kind::Constant) && t.children().front().value() < 0.0;
}

void render_factor(const Expr& f, std::string& out)
{
    if (f.is(Kind::Add) || f.is(Kind::Mul) || (f.is(Kind::Constant) && f.value() < 0.0)) {
        out += '(';
        render_into(f, out);
        out += ')';
    } else {
        render_into(f, out);
    }
}

void render_product(double coefficient, const ExprList& factors, std::size_t first, std::string& out)
{
    if (coefficient == -1.0 && first < factors.size() && !factors[first].is(Kind::Add)) {
        // "-(a + b)*c" would re-parse as a distributed negation
        out += '-';
    } else if (coefficient != 1.0 || first >= factors.size()) {
        out += format_number(coefficient);
        if (first < factors.size()) {
            out += '*';
        }
    }
    for (std::size_t i = first; i < factors.size(); ++i) {
        if (i > first) {
            out += '*';
        }
        render_factor(factors[i], out);
    }
}

void render_into(const Expr& e, std::string& out)
{
    switch (e.kind()) {
    case Kind::Constant: out += format_number(e.value()); break;
    case Kind::Parameter: out += e.name(); break;
    case Kind::Variable: out += var_name(e.var()); break;
    case Kind::Neg:
        out += '-';
        render_factor(e.child(), out);
        break;
    case Kind::Pow:
        render_factor(e.child(), out);
        out += "**";
        out += std::to_string(e.exponent());
        break;
    case Kind::Sin:
    case Kind::Cos:
    case Kind::Noise:
        out += e.is(Kind::Sin) ? "sin(" : (e.is(Kind::Cos) ? "cos(" : "noise(");
        render_into(e.child(), out);
        out += ')';
        break;
    case Kind::Mul: {
        const auto& cs = e.children();
        if (cs.front().is(Kind::Constant)) {
            render_product(cs.front().value(), cs, 1, out);
        } else {
            render_product(1.0, cs, 0, out);
        }
        break;
    }
    case Kind::Add: {
        bool first = true;
        for (const auto& t : e.children()) {
            if (first) {
                render_into(t, out);
                first = false;
                continue;
            }
            if (!is_negative_term(t)) {
                out += " + ";
                render_into(t, out);
                continue;
            }
            out += " - ";
            if (t.is(Kind::Constant)) {
                out += format_number(-t.value());
            } else {
                render_product(-t.children().front().value(), t.children(), 1, out);
            }
        }
        break;
    }
    }
}

}  // namespace

std::string render(const Expr& e)
{
    std::string out;
    render_into(e, out);
    return out;
}

std::string render(const SkeletonTerm& s)
{
    std::string out = s.sign < 0 ? "(-, " : "(+, ";
    out += render(s.shape);
    out += ')';
    return out;
}

}  // namespace physsym
