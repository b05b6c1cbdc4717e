#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace physsym {

/// Node kinds, listed in canonical sort order.
enum class Kind : std::uint8_t {
    Constant,
    Parameter,
    Variable,
    Pow,
    Mul,
    Add,
    Sin,
    Cos,
    Noise,
    Neg,
};

/// The three state variables of a one-dimensional mechanical system.
enum class Var : std::uint8_t { X, V, T };

std::string_view var_name(Var v);

class Expr;
using ExprList = std::vector<Expr>;

struct Node {
    Kind kind = Kind::Constant;
    double value = 0.0;  // Constant
    std::string name;    // Parameter
    Var var = Var::X;    // Variable
    int exponent = 1;    // Pow
    ExprList children;   // Add/Mul: operands; Pow/Sin/Cos/Neg/Noise: one child
};

/// Immutable symbolic expression. Copies share the underlying tree.
///
/// Trees built through the free factory functions are structurally valid but
/// not necessarily canonical; `canonicalize` produces the normal form used by
/// every comparison in the library.
class Expr {
public:
    Expr();  // Constant 0
    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

    Kind kind() const { return node_->kind; }
    double value() const { return node_->value; }
    const std::string& name() const { return node_->name; }
    Var var() const { return node_->var; }
    int exponent() const { return node_->exponent; }
    const ExprList& children() const { return node_->children; }
    const Expr& child() const { return node_->children.front(); }

    bool is(Kind k) const { return node_->kind == k; }
    bool is_constant(double v) const { return is(Kind::Constant) && value() == v; }

    const Node& node() const { return *node_; }

private:
    std::shared_ptr<const Node> node_;
};

// Factories. add/mul with a single operand return the operand; with none they
// return the identity element.
Expr constant(double v);
Expr parameter(std::string name);
Expr variable(Var v);
Expr add(ExprList terms);
Expr mul(ExprList factors);
Expr neg(Expr e);
Expr pow(Expr base, int exponent);
Expr sin(Expr e);
Expr cos(Expr e);
Expr noise(Expr scale);

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);

/// Total order: node kind first, then recursive structure.
std::strong_ordering compare(const Expr& a, const Expr& b);
inline bool operator==(const Expr& a, const Expr& b) { return compare(a, b) == 0; }
inline std::strong_ordering operator<=>(const Expr& a, const Expr& b) { return compare(a, b); }

/// Normal form: nested sums and products flattened, constants folded, like
/// terms and like factors merged, operands sorted, negation folded into a
/// leading -1 coefficient. A bare numeric coefficient times a sum is
/// distributed over the sum.
Expr canonicalize(const Expr& e);

/// Number of nodes in the tree.
std::size_t complexity(const Expr& e);

bool contains_kind(const Expr& e, Kind k);
std::set<std::string> parameters_of(const Expr& e);

/// Replace named parameters with expressions (typically constants).
Expr substitute(const Expr& e, const std::map<std::string, Expr>& replacements);

/// Splits a canonical term into its numeric coefficient and the remaining
/// factor list, e.g. -2*k*x -> (-2, [k, x]).
struct SplitTerm {
    double coefficient = 1.0;
    ExprList factors;
};
SplitTerm split_coefficient(const Expr& term);

// ---- Parsing and printing -------------------------------------------------

class SyntaxError : public std::runtime_error {
public:
    SyntaxError(std::size_t position, std::string expected, std::string_view text);
    std::size_t position() const { return position_; }
    const std::string& expected() const { return expected_; }

private:
    std::size_t position_;
    std::string expected_;
};

class UnknownSymbol : public std::runtime_error {
public:
    UnknownSymbol(std::string symbol, std::size_t position);
    const std::string& symbol() const { return symbol_; }
    std::size_t position() const { return position_; }

private:
    std::string symbol_;
    std::size_t position_;
};

struct ParseOptions {
    /// When set, only these identifiers are accepted as parameters.
    std::optional<std::set<std::string>> allowed_parameters;
};

/// Parses infix formula text into a canonical Expr.
///
/// Grammar:
///   expr   := term (('+'|'-') term)*
///   term   := factor ('*' factor)*
///   factor := ['-'] atom [('**'|'^') integer]
///   atom   := number | ident | func '(' expr ')' | '(' expr ')'
///   func   := 'sin' | 'cos' | 'noise'
Expr parse(std::string_view text, const ParseOptions& options = {});

/// Parses without canonicalizing; mostly useful for tests.
Expr parse_raw(std::string_view text, const ParseOptions& options = {});

/// Deterministic text form of the canonical expression.
std::string render(const Expr& e);

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

// ---- Evaluation -------------------------------------------------------------

class UnboundParameter : public std::runtime_error {
public:
    explicit UnboundParameter(std::string name);
    const std::string& parameter() const { return name_; }

private:
    std::string name_;
};

class NonFinite : public std::runtime_error {
public:
    NonFinite() : std::runtime_error("expression evaluated to a non-finite value") {}
};

struct Binding {
    double x = 0.0;
    double v = 0.0;
    double t = 0.0;
    const std::map<std::string, double>* params = nullptr;
    double noise_value = 0.0;
};

/// Evaluates e at the given point. Noise(scale) contributes scale * noise_value.
double evaluate(const Expr& e, const Binding& binding);

/// As `evaluate` but returns NaN/Inf instead of throwing NonFinite.
double evaluate_unchecked(const Expr& e, const Binding& binding);

// ---- Structure ----------------------------------------------------------------

/// Top-level additive terms of a canonical expression.
ExprList decompose_terms(const Expr& e);

struct SkeletonTerm {
    int sign = 1;  // +1 or -1
    Expr shape;

    friend std::strong_ordering operator<=>(const SkeletonTerm& a, const SkeletonTerm& b);
    friend bool operator==(const SkeletonTerm& a, const SkeletonTerm& b) { return (a <=> b) == 0; }
};

std::string render(const SkeletonTerm& s);

/// Coefficient-free form of a single term: every constant and parameter
/// becomes 1 and the sign of the numeric coefficient is kept separately.
SkeletonTerm skeletonize(const Expr& term);

/// Skeletons of all additive terms of e (a set: repeated shapes collapse).
std::set<SkeletonTerm> skeleton_set(const Expr& e);

/// Canonical equality, falling back to numeric probing at 32 random points.
bool symbolic_equal(const Expr& a, const Expr& b);

struct ProbeOptions {
    int points = 32;
    double tolerance = 1e-9;
    std::uint64_t seed = 0x5eed'c0de'1234'abcdULL;
};
bool numerically_equal(const Expr& a, const Expr& b, const ProbeOptions& options);

}  // namespace physsym
