#include "physsym/expr.hpp"

#include <cctype>
#include <charconv>
#include <climits>

namespace physsym {

SyntaxError::SyntaxError(std::size_t position, std::string expected, std::string_view text)
    : std::runtime_error("syntax error at position " + std::to_string(position) + ": expected " + expected +
                         " in \"" + std::string(text) + "\""),
      position_(position), expected_(std::move(expected))
{
}

UnknownSymbol::UnknownSymbol(std::string symbol, std::size_t position)
    : std::runtime_error("unknown symbol '" + symbol + "' at position " + std::to_string(position)),
      symbol_(std::move(symbol)), position_(position)
{
}

namespace {

enum class Tok { Number, Ident, Plus, Minus, Star, Power, LParen, RParen, End };

struct Token {
    Tok kind;
    std::size_t pos;
    std::string_view text;
    double number = 0.0;
};

class Lexer {
public:
    explicit Lexer(std::string_view text) : text_(text) {}

    Token next()
    {
        while (i_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[i_]))) {
            ++i_;
        }
        std::size_t const start = i_;
        if (i_ >= text_.size()) {
            return {Tok::End, start, {}};
        }
        char const c = text_[i_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            return number(start);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (i_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[i_])) || text_[i_] == '_')) {
                ++i_;
            }
            return {Tok::Ident, start, text_.substr(start, i_ - start)};
        }
        ++i_;
        switch (c) {
        case '+': return {Tok::Plus, start, text_.substr(start, 1)};
        case '-': return {Tok::Minus, start, text_.substr(start, 1)};
        case '^': return {Tok::Power, start, text_.substr(start, 1)};
        case '(': return {Tok::LParen, start, text_.substr(start, 1)};
        case ')': return {Tok::RParen, start, text_.substr(start, 1)};
        case '*':
            if (i_ < text_.size() && text_[i_] == '*') {
                ++i_;
                return {Tok::Power, start, text_.substr(start, 2)};
            }
            return {Tok::Star, start, text_.substr(start, 1)};
        default: throw SyntaxError(start, "a number, identifier, operator or parenthesis", text_);
        }
    }

private:
    Token number(std::size_t start)
    {
        auto digits = [&] {
            std::size_t n = 0;
            while (i_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[i_]))) {
                ++i_;
                ++n;
            }
            return n;
        };
        std::size_t mantissa = digits();
        if (i_ < text_.size() && text_[i_] == '.') {
            ++i_;
            mantissa += digits();
        }
        if (mantissa == 0) {
            throw SyntaxError(start, "a digit", text_);
        }
        if (i_ < text_.size() && (text_[i_] == 'e' || text_[i_] == 'E')) {
            std::size_t const save = i_;
            ++i_;
            if (i_ < text_.size() && (text_[i_] == '+' || text_[i_] == '-')) {
                ++i_;
            }
            if (digits() == 0) {
                i_ = save;  // not an exponent; let the parser complain about the identifier
            }
        }
        Token t{Tok::Number, start, text_.substr(start, i_ - start)};
        auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
        if (ec != std::errc{} || ptr != t.text.data() + t.text.size()) {
            throw SyntaxError(start, "a representable number", text_);
        }
        return t;
    }

    std::string_view text_;
    std::size_t i_ = 0;
};

class Parser {
public:
    Parser(std::string_view text, const ParseOptions& options) : text_(text), lexer_(text), options_(options)
    {
        advance();
    }

    Expr parse_all()
    {
        Expr e = expr();
        if (tok_.kind != Tok::End) {
            fail("an operator or end of input");
        }
        return e;
    }

private:
    void advance() { tok_ = lexer_.next(); }

    [[noreturn]] void fail(const std::string& expected) const { throw SyntaxError(tok_.pos, expected, text_); }

    void expect(Tok k, const char* what)
    {
        if (tok_.kind != k) {
            fail(what);
        }
        advance();
    }

    Expr expr()
    {
        ExprList terms;
        terms.push_back(term());
        while (tok_.kind == Tok::Plus || tok_.kind == Tok::Minus) {
            bool const minus = tok_.kind == Tok::Minus;
            advance();
            Expr t = term();
            terms.push_back(minus ? neg(std::move(t)) : std::move(t));
        }
        return add(std::move(terms));
    }

    Expr term()
    {
        ExprList factors;
        factors.push_back(factor());
        while (tok_.kind == Tok::Star) {
            advance();
            factors.push_back(factor());
        }
        return mul(std::move(factors));
    }

    Expr factor()
    {
        bool negated = false;
        if (tok_.kind == Tok::Minus) {
            negated = true;
            advance();
        }
        Expr base = atom();
        if (tok_.kind == Tok::Power) {
            advance();
            bool negative_exponent = false;
            if (tok_.kind == Tok::Minus) {
                negative_exponent = true;
                advance();
            }
            if (tok_.kind != Tok::Number || tok_.text.find_first_not_of("0123456789") != std::string_view::npos) {
                fail("an integer exponent");
            }
            long long n = 0;
            auto [ptr, ec] = std::from_chars(tok_.text.data(), tok_.text.data() + tok_.text.size(), n);
            if (ec != std::errc{} || n == 0 || n > INT_MAX) {
                fail("a nonzero integer exponent");
            }
            advance();
            base = pow(std::move(base), negative_exponent ? -static_cast<int>(n) : static_cast<int>(n));
        }
        return negated ? neg(std::move(base)) : base;
    }

    Expr atom()
    {
        switch (tok_.kind) {
        case Tok::Number: {
            double const v = tok_.number;
            advance();
            return constant(v);
        }
        case Tok::LParen: {
            advance();
            Expr e = expr();
            expect(Tok::RParen, "')'");
            return e;
        }
        case Tok::Ident: return identifier();
        default: fail("a number, identifier or '('");
        }
    }

    Expr identifier()
    {
        std::string_view const name = tok_.text;
        std::size_t const pos = tok_.pos;
        advance();
        if (tok_.kind == Tok::LParen) {
            if (name != "sin" && name != "cos" && name != "noise") {
                throw UnknownSymbol(std::string(name), pos);
            }
            advance();
            Expr arg = expr();
            expect(Tok::RParen, "')'");
            if (name == "sin") {
                return sin(std::move(arg));
            }
            if (name == "cos") {
                return cos(std::move(arg));
            }
            return noise(std::move(arg));
        }
        if (name == "x") {
            return variable(Var::X);
        }
        if (name == "v") {
            return variable(Var::V);
        }
        if (name == "t") {
            return variable(Var::T);
        }
        if (name == "sin" || name == "cos" || name == "noise") {
            fail("'(' after function name");
        }
        if (options_.allowed_parameters && !options_.allowed_parameters->contains(std::string(name))) {
            throw UnknownSymbol(std::string(name), pos);
        }
        return parameter(std::string(name));
    }

    std::string_view text_;
    Lexer lexer_;
    const ParseOptions& options_;
    Token tok_{Tok::End, 0, {}};
};

}  // namespace

Expr parse_raw(std::string_view text, const ParseOptions& options) { return Parser(text, options).parse_all(); }

Expr parse(std::string_view text, const ParseOptions& options) { return canonicalize(parse_raw(text, options)); }

}  // namespace physsym
