#include "physsym/terms.hpp"

#include <algorithm>
#include <cmath>

namespace physsym {

namespace {

TermSpec make_spec(std::string id, std::string category, std::string_view formula,
                   std::map<std::string, ParamRange> ranges)
{
    TermSpec s;
    s.id = std::move(id);
    s.category = std::move(category);
    s.symbolic = parse(formula);
    s.param_ranges = std::move(ranges);
    s.parameter_free = s.param_ranges.empty();
    return s;
}

std::vector<TermSpec> build_library()
{
    return {
        make_spec("linear", "linear", "-k*x", {{"k", {0.1, 10.0}}}),
        make_spec("cubic", "cubic", "-beta*x**3", {{"beta", {0.01, 5.0}}}),
        make_spec("quintic", "quintic", "-delta*x**5", {{"delta", {0.001, 1.0}}}),
        make_spec("linear_damping", "linear_damping", "-c*v", {{"c", {0.01, 2.0}}}),
        make_spec("cubic_damping", "cubic_damping", "-alpha*v**3", {{"alpha", {0.01, 5.0}}}),
        make_spec("quintic_damping", "quintic_damping", "-eta*v**5", {{"eta", {0.001, 1.0}}}),
        make_spec("forcing_time", "forcing_time", "F*sin(w*t)", {{"F", {0.1, 5.0}}, {"w", {0.5, 5.0}}}),
        make_spec("forcing_space", "forcing_space", "Fx*sin(wx*x)", {{"Fx", {0.1, 5.0}}, {"wx", {0.5, 5.0}}}),
        make_spec("coupling", "coupling", "-gamma*x*v", {{"gamma", {0.01, 5.0}}}),
        make_spec("trig_xcos", "trig", "-x*cos(x)", {}),
        make_spec("trig_xsin", "trig", "-x*sin(x)", {}),
        make_spec("noise", "noise", "noise(sigma)", {{"sigma", {0.01, 0.5}}}),
    };
}

const std::vector<TermSpec>& library_storage()
{
    static const std::vector<TermSpec> lib = build_library();
    return lib;
}

}  // namespace

std::span<const TermSpec> library() { return library_storage(); }

const std::vector<std::string>& categories()
{
    static const std::vector<std::string> cats = [] {
        std::vector<std::string> out;
        for (const auto& s : library_storage()) {
            if (std::find(out.begin(), out.end(), s.category) == out.end()) {
                out.push_back(s.category);
            }
        }
        return out;
    }();
    return cats;
}

const TermSpec& lookup(std::string_view id)
{
    for (const auto& s : library_storage()) {
        if (s.id == id) {
            return s;
        }
    }
    throw std::out_of_range("unknown term id '" + std::string(id) + "'");
}

bool SamplerConfig::enabled(const std::string& category) const
{
    auto it = category_enabled.find(category);
    return it == category_enabled.end() || it->second;
}

void SamplerConfig::validate() const
{
    double total = 0.0;
    int largest = 0;
    for (const auto& [count, w] : term_count_weights) {
        if (count < 2 || count > 5) {
            throw ConfigError("term count " + std::to_string(count) + " outside 2..5");
        }
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw ConfigError("term count weights must be finite and non-negative");
        }
        total += w;
        if (w > 0.0) {
            largest = std::max(largest, count);
        }
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("term count weights sum to " + std::to_string(total) + ", expected 1");
    }
    if (!enabled(std::string(kLinearTerm))) {
        throw ConfigError("the linear restoring term cannot be disabled");
    }
    int available = 0;
    for (const auto& c : categories()) {
        if (c != kLinearTerm && enabled(c)) {
            ++available;
        }
    }
    if (available < largest - 1) {
        throw ConfigError("only " + std::to_string(available) + " optional categories enabled, need " +
                          std::to_string(largest - 1));
    }
}

BoundTerm instantiate_term(const TermSpec& spec, Rng& rng)
{
    BoundTerm out;
    out.id = spec.id;
    out.symbolic = spec.symbolic;
    std::map<std::string, Expr> replacements;
    for (const auto& [name, range] : spec.param_ranges) {
        double const value = rng.uniform(range.lo, range.hi);
        out.values[name] = value;
        replacements[name] = constant(value);
    }
    out.numeric = canonicalize(substitute(spec.symbolic, replacements));
    return out;
}

Expr instantiate(const TermSpec& spec, Rng& rng) { return instantiate_term(spec, rng).numeric; }

GeneratedSystem sample_formula(std::uint64_t seed, const SamplerConfig& config)
{
    config.validate();
    Rng rng(seed);

    double const u = rng.uniform01();
    int count = 0;
    double acc = 0.0;
    for (const auto& [c, w] : config.term_count_weights) {
        if (w <= 0.0) {
            continue;
        }
        acc += w;
        count = c;
        if (u < acc) {
            break;
        }
    }

    std::vector<std::string> pool;
    for (const auto& c : categories()) {
        if (c != kLinearTerm && config.enabled(c)) {
            pool.push_back(c);
        }
    }
    // partial Fisher-Yates
    for (int i = 0; i < count - 1; ++i) {
        auto const j = static_cast<std::size_t>(i) + rng.below(pool.size() - static_cast<std::size_t>(i));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(count - 1));

    std::vector<const TermSpec*> specs{&lookup(kLinearTerm)};
    for (const auto& cat : pool) {
        std::vector<const TermSpec*> variants;
        for (const auto& s : library()) {
            if (s.category == cat) {
                variants.push_back(&s);
            }
        }
        specs.push_back(variants[rng.below(variants.size())]);
    }

    GeneratedSystem sys;
    sys.seed = seed;
    ExprList numeric;
    ExprList symbolic;
    for (const auto* spec : specs) {
        auto bound = instantiate_term(*spec, rng);
        sys.term_ids.push_back(bound.id);
        sys.parameter_values.insert(bound.values.begin(), bound.values.end());
        numeric.push_back(bound.numeric);
        symbolic.push_back(bound.symbolic);
    }
    sys.x0 = rng.uniform(-1.0, 1.0);
    sys.v0 = rng.uniform(-1.0, 1.0);
    sys.formula = canonicalize(add(std::move(numeric)));
    sys.formula_symbolic = canonicalize(add(std::move(symbolic)));
    return sys;
}

}  // namespace physsym
