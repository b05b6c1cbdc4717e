#pragma once

#include "physsym/expr.hpp"
#include "physsym/rng.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace physsym {

struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const { return v >= lo && v <= hi; }
    friend bool operator==(const ParamRange&, const ParamRange&) = default;
};

/// One entry of the physics term library.
struct TermSpec {
    std::string id;        // e.g. "linear_damping", "trig_xcos"
    std::string category;  // physical phenomenon; trig_xcos and trig_xsin share one
    Expr symbolic;         // template with named parameters
    std::map<std::string, ParamRange> param_ranges;
    bool parameter_free = false;
};

/// All term templates (12), grouped into the library's 11 categories.
std::span<const TermSpec> library();

/// The 11 distinct categories, in library order.
const std::vector<std::string>& categories();

/// Looks up a term by id. Throws std::out_of_range for unknown ids.
const TermSpec& lookup(std::string_view id);

/// Id of the mandatory linear restoring term.
inline constexpr std::string_view kLinearTerm = "linear";

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SamplerConfig {
    /// Probability of each total term count (linear term included).
    std::map<int, double> term_count_weights{{2, 0.28}, {3, 0.38}, {4, 0.22}, {5, 0.12}};
    /// Categories that may be drawn; absent entries count as enabled.
    std::map<std::string, bool> category_enabled;
    std::uint64_t corpus_seed = 0;

    bool enabled(const std::string& category) const;
    /// Throws ConfigError when the weights are not a distribution over 2..5
    /// or too few categories are enabled for the largest count.
    void validate() const;
};

struct BoundTerm {
    std::string id;
    Expr symbolic;
    Expr numeric;
    std::map<std::string, double> values;
};

/// Draws every parameter of the spec uniformly from its range.
BoundTerm instantiate_term(const TermSpec& spec, Rng& rng);

/// Template with each parameter bound to a uniform draw within its range.
Expr instantiate(const TermSpec& spec, Rng& rng);

struct GeneratedSystem {
    Expr formula;           // all parameters bound to numbers
    Expr formula_symbolic;  // same structure with named parameters
    std::vector<std::string> term_ids;
    std::map<std::string, double> parameter_values;
    std::uint64_t seed = 0;
    double x0 = 0.0;
    double v0 = 0.0;

    std::size_t term_count() const { return term_ids.size(); }
};

/// Samples 2-5 library terms (one of them the linear restoring force, the
/// others distinct categories), parameters and initial conditions.
/// Deterministic for a fixed seed.
GeneratedSystem sample_formula(std::uint64_t seed, const SamplerConfig& config);

}  // namespace physsym
