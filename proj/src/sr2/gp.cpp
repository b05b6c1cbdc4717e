#include "physsym/rng.hpp"
#include "physsym/sr2.hpp"

#include "lm.hpp"
#include "lstsq.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

namespace physsym {

namespace {

std::atomic<std::size_t> g_invocations{0};

enum class Op : std::uint8_t { Add, Sub, Mul, Sin, Cos, Cube, Quintic, Const, X, V, T };

int arity(Op op)
{
    switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul: return 2;
    case Op::Sin:
    case Op::Cos:
    case Op::Cube:
    case Op::Quintic: return 1;
    default: return 0;
    }
}

struct Gene {
    Op op;
    double value = 0.0;
};

// Prefix-order program.
using Program = std::vector<Gene>;

std::size_t subtree_end(const Program& p, std::size_t i)
{
    int need = 1;
    while (need > 0) {
        need += arity(p[i].op) - 1;
        ++i;
    }
    return i;
}

std::size_t depth_at(const Program& p, std::size_t& i)
{
    int const a = arity(p[i].op);
    ++i;
    std::size_t d = 0;
    for (int k = 0; k < a; ++k) {
        d = std::max(d, depth_at(p, i));
    }
    return d + 1;
}

std::size_t depth(const Program& p)
{
    std::size_t i = 0;
    return depth_at(p, i);
}

Expr to_expr_at(const Program& p, std::size_t& i)
{
    Gene const g = p[i++];
    switch (g.op) {
    case Op::Const: return constant(g.value);
    case Op::X: return variable(Var::X);
    case Op::V: return variable(Var::V);
    case Op::T: return variable(Var::T);
    case Op::Sin: return sin(to_expr_at(p, i));
    case Op::Cos: return cos(to_expr_at(p, i));
    case Op::Cube: return pow(to_expr_at(p, i), 3);
    case Op::Quintic: return pow(to_expr_at(p, i), 5);
    default: break;
    }
    Expr a = to_expr_at(p, i);
    Expr b = to_expr_at(p, i);
    switch (g.op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    default: return a * b;
    }
}

Expr to_expr(const Program& p, std::size_t begin = 0)
{
    std::size_t i = begin;
    return to_expr_at(p, i);
}

// Top-level additive pieces; each gets its own least-squares coefficient.
void collect_genes(const Program& p, std::size_t i, std::vector<std::pair<std::size_t, std::size_t>>& out)
{
    if (p[i].op == Op::Add || p[i].op == Op::Sub) {
        std::size_t const left = i + 1;
        std::size_t const right = subtree_end(p, left);
        collect_genes(p, left, out);
        collect_genes(p, right, out);
        return;
    }
    out.emplace_back(i, subtree_end(p, i));
}

struct Individual {
    Program program;
    double fitness = INFINITY;
    double mse = INFINITY;
    bool tuned = false;
};

class Evaluator {
public:
    explicit Evaluator(const ResidualField& field) : field_(field), n_(field.size()) {}

    // Evaluates program[begin, end) into out. Returns false if non-finite.
    bool eval(const Program& p, std::size_t begin, std::size_t end, std::vector<double>& out)
    {
        std::size_t top = 0;
        for (std::size_t k = end; k-- > begin;) {
            Gene const& g = p[k];
            int const a = arity(g.op);
            if (a == 0) {
                auto& dst = slot(top++);
                switch (g.op) {
                case Op::Const: std::fill(dst.begin(), dst.end(), g.value); break;
                case Op::X: std::copy(field_.x.begin(), field_.x.end(), dst.begin()); break;
                case Op::V: std::copy(field_.v.begin(), field_.v.end(), dst.begin()); break;
                default: std::copy(field_.t.begin(), field_.t.end(), dst.begin()); break;
                }
            } else if (a == 1) {
                auto& d = stack_[top - 1];
                switch (g.op) {
                case Op::Sin:
                    for (auto& u : d) {
                        u = std::sin(u);
                    }
                    break;
                case Op::Cos:
                    for (auto& u : d) {
                        u = std::cos(u);
                    }
                    break;
                case Op::Cube:
                    for (auto& u : d) {
                        u = u * u * u;
                    }
                    break;
                default:
                    for (auto& u : d) {
                        double const s = u * u;
                        u = s * s * u;
                    }
                    break;
                }
            } else {
                // operands: left on top of the stack, right beneath it
                auto& l = stack_[top - 1];
                auto& r = stack_[top - 2];
                switch (g.op) {
                case Op::Add:
                    for (std::size_t i = 0; i < n_; ++i) {
                        r[i] = l[i] + r[i];
                    }
                    break;
                case Op::Sub:
                    for (std::size_t i = 0; i < n_; ++i) {
                        r[i] = l[i] - r[i];
                    }
                    break;
                default:
                    for (std::size_t i = 0; i < n_; ++i) {
                        r[i] = l[i] * r[i];
                    }
                    break;
                }
                --top;
            }
        }
        out = stack_[0];
        return std::all_of(out.begin(), out.end(), [](double u) { return std::isfinite(u); });
    }

    // Least-squares fit of intercept + one coefficient per gene.
    detail::LeastSquares fit(const Program& p)
    {
        ++evaluations;
        genes_.clear();
        collect_genes(p, 0, genes_);
        columns_.resize(genes_.size());
        std::vector<const double*> ptrs;
        for (std::size_t j = 0; j < genes_.size(); ++j) {
            if (!eval(p, genes_[j].first, genes_[j].second, columns_[j])) {
                detail::LeastSquares bad;
                bad.finite = false;
                bad.mse = INFINITY;
                return bad;
            }
            ptrs.push_back(columns_[j].data());
        }
        return detail::least_squares(ptrs, n_, field_.target.data(), true);
    }

    Expr scaled_expr(const Program& p, const detail::LeastSquares& ls)
    {
        genes_.clear();
        collect_genes(p, 0, genes_);
        ExprList terms{constant(ls.coef[0])};
        for (std::size_t j = 0; j < genes_.size(); ++j) {
            terms.push_back(constant(ls.coef[static_cast<Eigen::Index>(j) + 1]) * to_expr(p, genes_[j].first));
        }
        return canonicalize(add(std::move(terms)));
    }

    std::size_t evaluations = 0;

private:
    std::vector<double>& slot(std::size_t k)
    {
        while (stack_.size() <= k) {
            stack_.emplace_back(n_);
        }
        return stack_[k];
    }

    const ResidualField& field_;
    std::size_t n_;
    std::vector<std::vector<double>> stack_;
    std::vector<std::pair<std::size_t, std::size_t>> genes_;
    std::vector<std::vector<double>> columns_;
};

class Engine {
public:
    Engine(const ResidualField& field, const GPConfig& cfg, double lambda)
        : cfg_(cfg), lambda_(lambda), rng_(cfg.seed, 0x6770), eval_(field)
    {
        binary_ = {Op::Add, Op::Sub, Op::Mul};
        if (cfg.use_sin) {
            unary_.push_back(Op::Sin);
        }
        if (cfg.use_cos) {
            unary_.push_back(Op::Cos);
        }
        if (cfg.use_cube) {
            unary_.push_back(Op::Cube);
        }
        if (cfg.use_quintic) {
            unary_.push_back(Op::Quintic);
        }
    }

    GPResult run()
    {
        GPResult result;
        std::vector<Individual> pop = initial_population();
        for (auto& ind : pop) {
            score(ind);
        }
        for (std::size_t gen = 0; gen < cfg_.generations; ++gen) {
            rank_and_tune(pop);
            result.history.push_back(pop.front().fitness);
            if (gen + 1 == cfg_.generations) {
                break;
            }
            std::vector<Individual> next;
            next.reserve(pop.size());
            next.push_back(pop.front());
            while (next.size() < pop.size()) {
                next.push_back(offspring(pop));
                if (!std::isfinite(next.back().fitness)) {
                    score(next.back());
                }
            }
            pop = std::move(next);
        }
        if (cfg_.generations == 0) {
            rank_and_tune(pop);
            result.history.push_back(pop.front().fitness);
        }
        best_program_ = pop.front().program;
        result.evaluations = eval_.evaluations;
        return result;
    }

    Expr best_expr()
    {
        auto const ls = eval_.fit(best_program_);
        if (!ls.finite) {
            return constant(0.0);
        }
        return eval_.scaled_expr(best_program_, ls);
    }

private:
    // ---- construction ----
    Gene random_terminal()
    {
        std::uint64_t const pick = rng_.below(4);
        if (pick == 3) {
            return {Op::Const, rng_.uniform(-cfg_.constant_range, cfg_.constant_range)};
        }
        return {pick == 0 ? Op::X : (pick == 1 ? Op::V : Op::T), 0.0};
    }

    Op random_function()
    {
        std::size_t const total = binary_.size() + unary_.size();
        std::size_t const k = static_cast<std::size_t>(rng_.below(total));
        return k < binary_.size() ? binary_[k] : unary_[k - binary_.size()];
    }

    void grow(Program& out, std::size_t max_depth, bool full)
    {
        std::size_t const functions = binary_.size() + unary_.size();
        std::size_t const terminals = 4;
        bool const leaf = max_depth <= 1 ||
                          (!full && rng_.below(functions + terminals) >= functions);
        if (leaf) {
            out.push_back(random_terminal());
            return;
        }
        Op const op = random_function();
        out.push_back({op, 0.0});
        for (int k = 0; k < arity(op); ++k) {
            grow(out, max_depth - 1, full);
        }
    }

    std::vector<Individual> initial_population()
    {
        std::vector<Individual> pop(cfg_.population);
        std::size_t const lo = cfg_.init_min_depth;
        std::size_t const span = cfg_.init_max_depth - lo + 1;
        for (std::size_t i = 0; i < pop.size(); ++i) {
            std::size_t const d = lo + i % span;
            grow(pop[i].program, d, (i / span) % 2 == 0);
        }
        return pop;
    }

    // ---- scoring ----
    void score(Individual& ind)
    {
        auto const ls = eval_.fit(ind.program);
        ind.mse = ls.mse;
        ind.fitness = ls.finite ? ls.mse + lambda_ * static_cast<double>(ind.program.size()) : INFINITY;
    }

    std::vector<std::size_t> constant_slots(const Program& p) const
    {
        std::vector<std::size_t> slots;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i].op == Op::Const) {
                slots.push_back(i);
            }
        }
        return slots;
    }

    // Constants that scale a trig argument, e.g. the 3 in sin(3*t).
    std::vector<std::size_t> frequency_slots(const Program& p) const
    {
        std::vector<std::size_t> slots;
        for (std::size_t i = 0; i + 2 < p.size(); ++i) {
            if ((p[i].op == Op::Sin || p[i].op == Op::Cos) && p[i + 1].op == Op::Mul) {
                std::size_t const left = i + 2;
                std::size_t const right = subtree_end(p, left);
                if (p[left].op == Op::Const && arity(p[right].op) == 0 && p[right].op != Op::Const) {
                    slots.push_back(left);
                } else if (p[right].op == Op::Const && arity(p[left].op) == 0 && p[left].op != Op::Const) {
                    slots.push_back(right);
                }
            }
        }
        return slots;
    }

    void tune(Individual& ind)
    {
        ind.tuned = true;
        Program p = ind.program;
        // coarse scan of trig frequencies, which local search cannot cross
        for (std::size_t const slot : frequency_slots(p)) {
            double best_w = p[slot].value;
            double best = eval_.fit(p).mse;
            for (double w = 0.05; w <= 6.0 + 1e-9; w += 0.05) {
                p[slot].value = w;
                double const mse = eval_.fit(p).mse;
                if (mse < best) {
                    best = mse;
                    best_w = w;
                }
            }
            p[slot].value = best_w;
        }
        auto const slots = constant_slots(p);
        if (!slots.empty() && slots.size() <= 8) {
            auto const k = static_cast<Eigen::Index>(slots.size());
            Eigen::VectorXd theta(k);
            for (Eigen::Index j = 0; j < k; ++j) {
                theta[j] = p[slots[static_cast<std::size_t>(j)]].value;
            }
            Eigen::VectorXd const lo = Eigen::VectorXd::Constant(k, -1e6);
            Eigen::VectorXd const hi = Eigen::VectorXd::Constant(k, 1e6);
            detail::levenberg_marquardt(
                [&](const Eigen::VectorXd& th, Eigen::VectorXd& r) {
                    for (Eigen::Index j = 0; j < k; ++j) {
                        p[slots[static_cast<std::size_t>(j)]].value = th[j];
                    }
                    auto const ls = eval_.fit(p);
                    r = ls.residual;
                    return ls.finite;
                },
                theta, lo, hi, 20);
            for (Eigen::Index j = 0; j < k; ++j) {
                p[slots[static_cast<std::size_t>(j)]].value = theta[j];
            }
        }
        Individual trial{p, INFINITY, INFINITY, true};
        score(trial);
        if (trial.fitness < ind.fitness) {
            ind = std::move(trial);
        }
    }

    void rank_and_tune(std::vector<Individual>& pop)
    {
        auto by_fitness = [](const Individual& a, const Individual& b) { return a.fitness < b.fitness; };
        std::stable_sort(pop.begin(), pop.end(), by_fitness);
        std::size_t const top = std::min(cfg_.optimize_top, pop.size());
        bool changed = false;
        for (std::size_t i = 0; i < top; ++i) {
            if (!pop[i].tuned && std::isfinite(pop[i].fitness)) {
                tune(pop[i]);
                changed = true;
            }
        }
        // a trig term with the wrong frequency scores poorly however good
        // its structure is, so the best few of those are tuned as well
        std::size_t periodic = 0;
        for (std::size_t i = top; i < pop.size() && periodic < cfg_.optimize_periodic; ++i) {
            if (!pop[i].tuned && std::isfinite(pop[i].fitness) && !frequency_slots(pop[i].program).empty()) {
                tune(pop[i]);
                changed = true;
                ++periodic;
            }
        }
        if (changed) {
            std::stable_sort(pop.begin(), pop.end(), by_fitness);
        }
    }

    // ---- variation ----
    const Individual& select(const std::vector<Individual>& pop)
    {
        std::size_t best = static_cast<std::size_t>(rng_.below(pop.size()));
        for (std::size_t k = 1; k < cfg_.tournament; ++k) {
            std::size_t const c = static_cast<std::size_t>(rng_.below(pop.size()));
            if (pop[c].fitness < pop[best].fitness) {
                best = c;
            }
        }
        return pop[best];
    }

    std::size_t pick_point(const Program& p)
    {
        // internal nodes 90% of the time, as usual for subtree crossover
        std::vector<std::size_t> internal;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (arity(p[i].op) > 0) {
                internal.push_back(i);
            }
        }
        if (!internal.empty() && rng_.bernoulli(0.9)) {
            return internal[static_cast<std::size_t>(rng_.below(internal.size()))];
        }
        return static_cast<std::size_t>(rng_.below(p.size()));
    }

    bool acceptable(const Program& p) const { return p.size() <= cfg_.max_nodes && depth(p) <= cfg_.max_depth; }

    Program splice(const Program& base, std::size_t at, const Program& donor, std::size_t from, std::size_t to)
    {
        Program child(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(at));
        child.insert(child.end(), donor.begin() + static_cast<std::ptrdiff_t>(from),
                     donor.begin() + static_cast<std::ptrdiff_t>(to));
        child.insert(child.end(), base.begin() + static_cast<std::ptrdiff_t>(subtree_end(base, at)), base.end());
        return child;
    }

    Program crossover(const Program& a, const Program& b)
    {
        for (int attempt = 0; attempt < 4; ++attempt) {
            std::size_t const i = pick_point(a);
            std::size_t const j = pick_point(b);
            Program child = splice(a, i, b, j, subtree_end(b, j));
            if (acceptable(child)) {
                return child;
            }
        }
        return a;
    }

    Program subtree_mutation(const Program& a)
    {
        for (int attempt = 0; attempt < 4; ++attempt) {
            std::size_t const i = static_cast<std::size_t>(rng_.below(a.size()));
            Program fresh;
            grow(fresh, 1 + static_cast<std::size_t>(rng_.below(3)), false);
            Program child = splice(a, i, fresh, 0, fresh.size());
            if (acceptable(child)) {
                return child;
            }
        }
        return a;
    }

    Program point_mutation(Program p)
    {
        std::size_t const i = static_cast<std::size_t>(rng_.below(p.size()));
        Gene& g = p[i];
        switch (arity(g.op)) {
        case 2: g.op = binary_[static_cast<std::size_t>(rng_.below(binary_.size()))]; break;
        case 1:
            if (!unary_.empty()) {
                g.op = unary_[static_cast<std::size_t>(rng_.below(unary_.size()))];
            }
            break;
        default:
            if (g.op == Op::Const && rng_.bernoulli(0.5)) {
                g.value += rng_.normal() * cfg_.constant_jitter_scale * std::max(1.0, std::abs(g.value));
            } else {
                g = random_terminal();
            }
            break;
        }
        return p;
    }

    Program jitter(Program p)
    {
        for (auto& g : p) {
            if (g.op == Op::Const) {
                g.value += rng_.normal() * cfg_.constant_jitter_scale * std::max(0.1, std::abs(g.value));
            }
        }
        return p;
    }

    Individual offspring(const std::vector<Individual>& pop)
    {
        double const u = rng_.uniform01();
        double edge = cfg_.p_crossover;
        const Individual& parent = select(pop);
        Individual child;
        if (u < edge) {
            child.program = crossover(parent.program, select(pop).program);
        } else if (u < (edge += cfg_.p_subtree_mutation)) {
            child.program = subtree_mutation(parent.program);
        } else if (u < (edge += cfg_.p_point_mutation)) {
            child.program = point_mutation(parent.program);
        } else if (u < (edge += cfg_.p_constant_jitter)) {
            child.program = jitter(parent.program);
        } else {
            return parent;
        }
        return child;
    }

    const GPConfig& cfg_;
    double lambda_;
    Rng rng_;
    Evaluator eval_;
    std::vector<Op> binary_;
    std::vector<Op> unary_;
    Program best_program_;
};

double mean_of(const std::vector<double>& v)
{
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance_of(const std::vector<double>& v)
{
    double const m = mean_of(v);
    double s = 0.0;
    for (double const u : v) {
        s += (u - m) * (u - m);
    }
    return s / static_cast<double>(v.size());
}

struct TermFit {
    ExprList shapes;
    bool intercept = true;
    Eigen::VectorXd coef;
    double mse = INFINITY;
};

TermFit fit_terms(const ExprList& shapes, bool intercept, const ResidualField& field)
{
    std::size_t const n = field.size();
    std::vector<std::vector<double>> cols(shapes.size(), std::vector<double>(n));
    std::vector<const double*> ptrs;
    for (std::size_t j = 0; j < shapes.size(); ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            cols[j][i] = evaluate_unchecked(shapes[j], Binding{field.x[i], field.v[i], field.t[i], nullptr, 0.0});
        }
        ptrs.push_back(cols[j].data());
    }
    auto const ls = detail::least_squares(ptrs, n, field.target.data(), intercept);
    return {shapes, intercept, ls.coef, ls.finite ? ls.mse : INFINITY};
}

Expr assemble(const TermFit& fit)
{
    ExprList terms;
    Eigen::Index k = 0;
    if (fit.intercept) {
        terms.push_back(constant(fit.coef[k++]));
    }
    for (const auto& shape : fit.shapes) {
        terms.push_back(constant(fit.coef[k++]) * shape);
    }
    return canonicalize(add(std::move(terms)));
}

Expr replace_node(const Expr& e, const Expr& target, const Expr& replacement)
{
    if (compare(e, target) == 0) {
        return replacement;
    }
    if (e.children().empty()) {
        return e;
    }
    ExprList cs;
    for (const auto& c : e.children()) {
        cs.push_back(replace_node(c, target, replacement));
    }
    switch (e.kind()) {
    case Kind::Add: return add(std::move(cs));
    case Kind::Mul: return mul(std::move(cs));
    case Kind::Pow: return pow(cs.front(), e.exponent());
    case Kind::Sin: return sin(cs.front());
    case Kind::Cos: return cos(cs.front());
    case Kind::Noise: return noise(cs.front());
    default: return neg(cs.front());
    }
}

void find_phased_trig(const Expr& e, ExprList& out)
{
    if ((e.is(Kind::Sin) || e.is(Kind::Cos)) && e.child().is(Kind::Add)) {
        for (const auto& t : e.child().children()) {
            if (t.is(Kind::Constant)) {
                out.push_back(e);
                break;
            }
        }
    }
    for (const auto& c : e.children()) {
        find_phased_trig(c, out);
    }
}

// sin/cos(u + phase) rewritten as sin(u) and cos(u).
ExprList phase_free_variants(const Expr& shape)
{
    ExprList nodes;
    find_phased_trig(shape, nodes);
    ExprList out;
    for (const auto& node : nodes) {
        ExprList rest;
        for (const auto& t : node.child().children()) {
            if (!t.is(Kind::Constant)) {
                rest.push_back(t);
            }
        }
        Expr const arg = add(rest);
        for (const Expr& repl : {sin(arg), cos(arg)}) {
            Expr const v = canonicalize(replace_node(shape, node, repl));
            auto const split = split_coefficient(v);
            if (!split.factors.empty()) {
                out.push_back(canonicalize(mul(split.factors)));
            }
        }
    }
    return out;
}

bool contains_shape(const ExprList& shapes, const Expr& s, std::size_t skip)
{
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (i != skip && compare(shapes[i], s) == 0) {
            return true;
        }
    }
    return false;
}

// Term-wise refit, simplification of trig phases, then greedy removal of
// terms (and the intercept) whose contribution does not pay for their size.
Expr polish(const Expr& e, const ResidualField& field, double lambda)
{
    ExprList shapes;
    for (const auto& term : decompose_terms(canonicalize(e))) {
        auto const split = split_coefficient(term);
        if (!split.factors.empty()) {
            shapes.push_back(canonicalize(mul(split.factors)));
        }
    }
    TermFit current = fit_terms(shapes, true, field);
    if (!std::isfinite(current.mse)) {
        return e;
    }
    for (bool improved = true; improved;) {
        improved = false;
        for (std::size_t j = 0; j < current.shapes.size() && !improved; ++j) {
            for (const auto& variant : phase_free_variants(current.shapes[j])) {
                if (contains_shape(current.shapes, variant, j)) {
                    continue;
                }
                ExprList trial_shapes = current.shapes;
                trial_shapes[j] = variant;
                TermFit trial = fit_terms(trial_shapes, current.intercept, field);
                double const saved = lambda * (static_cast<double>(complexity(current.shapes[j])) -
                                               static_cast<double>(complexity(variant)));
                if (trial.mse <= current.mse + saved) {
                    current = std::move(trial);
                    improved = true;
                    break;
                }
            }
        }
    }
    while (!current.shapes.empty() || current.intercept) {
        // candidate removals: each term, then the intercept
        TermFit best;
        double best_saved = 0.0;
        for (std::size_t j = 0; j <= current.shapes.size(); ++j) {
            TermFit trial;
            double saved = lambda;
            if (j < current.shapes.size()) {
                ExprList fewer = current.shapes;
                fewer.erase(fewer.begin() + static_cast<std::ptrdiff_t>(j));
                trial = fit_terms(fewer, current.intercept, field);
                saved = lambda * static_cast<double>(complexity(current.shapes[j]) + 1);
            } else if (current.intercept) {
                trial = fit_terms(current.shapes, false, field);
            } else {
                continue;
            }
            if (trial.mse - saved < best.mse - best_saved) {
                best = std::move(trial);
                best_saved = saved;
            }
        }
        if (!(best.mse - current.mse <= best_saved)) {
            break;
        }
        current = std::move(best);
    }
    return assemble(current);
}

}  // namespace

void GPConfig::validate() const
{
    for (double const p : {p_crossover, p_subtree_mutation, p_point_mutation, p_constant_jitter}) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ConfigError("GP operator probabilities must lie in [0, 1]");
        }
    }
    if (p_crossover + p_subtree_mutation + p_point_mutation + p_constant_jitter > 1.0 + 1e-12) {
        throw ConfigError("GP operator probabilities sum to more than 1");
    }
    if (population < 2 || tournament < 1) {
        throw ConfigError("GP population must be at least 2 and tournament at least 1");
    }
    if (init_min_depth < 1 || init_min_depth > init_max_depth || init_max_depth > max_depth) {
        throw ConfigError("GP depth limits are inconsistent");
    }
    if (parsimony && !(*parsimony >= 0.0)) {
        throw ConfigError("parsimony coefficient must be non-negative");
    }
}

Candidate score_candidate(const Expr& expr, const ResidualField& field, double lambda)
{
    Candidate c;
    c.expr = expr;
    double s = 0.0;
    for (std::size_t i = 0; i < field.size(); ++i) {
        double const d = field.target[i] - evaluate_unchecked(expr, Binding{field.x[i], field.v[i], field.t[i], nullptr, 0.0});
        s += d * d;
    }
    c.mse = std::isfinite(s) ? s / static_cast<double>(field.size()) : INFINITY;
    c.complexity = complexity(expr);
    c.fitness = c.mse + lambda * static_cast<double>(c.complexity);
    return c;
}

GPResult run_gp(const ResidualField& field, const GPConfig& config)
{
    config.validate();
    if (field.size() == 0) {
        throw std::invalid_argument("residual field is empty");
    }
    ++g_invocations;
    double const var = variance_of(field.target);
    double const lambda = config.parsimony.value_or(1e-4 * var);
    Candidate const mean_candidate = score_candidate(canonicalize(constant(mean_of(field.target))), field, lambda);

    GPResult result;
    if (!(var > 0.0)) {
        result.best = mean_candidate;
        result.used_mean = true;
        return result;
    }
    Engine engine(field, config, lambda);
    auto run = engine.run();
    result.history = std::move(run.history);
    result.evaluations = run.evaluations;

    Candidate const raw = score_candidate(engine.best_expr(), field, lambda);
    Candidate const polished = score_candidate(polish(raw.expr, field, lambda), field, lambda);
    Candidate best = polished.fitness <= raw.fitness ? polished : raw;
    if (!(best.mse < 0.999 * var)) {
        best = mean_candidate;
        result.used_mean = true;
    }
    result.best = best;
    return result;
}

Expr symbolic_regress(const ResidualField& field, const GPConfig& config) { return run_gp(field, config).best.expr; }

std::size_t gp_invocations() { return g_invocations.load(); }

}  // namespace physsym
