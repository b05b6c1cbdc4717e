#pragma once

#include "physsym/expr.hpp"
#include "physsym/terms.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace physsym {

/// Uniformly sampled (t, x, v, a) series.
struct Trajectory {
    std::vector<double> t;
    std::vector<double> x;
    std::vector<double> v;
    std::vector<double> a;

    std::size_t size() const { return t.size(); }
    bool empty() const { return t.empty(); }
    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Standard-normal values held constant on cells of width grid_dt.
class NoiseProcess {
public:
    NoiseProcess(std::uint64_t seed, double grid_dt);

    std::size_t cell(double t) const;
    double value(double t) const;
    double cell_value(std::size_t k) const;
    double grid_dt() const { return dt_; }

private:
    std::uint64_t seed_;
    double dt_;
    mutable std::vector<double> cache_;
};

struct SimConfig {
    double t_end = 20.0;
    std::size_t n_points = 1000;
    double rtol = 1e-8;
    double atol = 1e-10;
    double initial_step = 0.02;
    double noise_dt = 0.02;
    double divergence_threshold = 1e3;
    double min_step = 1e-12;
    std::size_t max_steps = 2'000'000;
};

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// |x| or |v| left the stability box, or the state became non-finite.
class Diverged : public SimulationError {
public:
    using SimulationError::SimulationError;
};

/// The step-size controller could not make progress.
class StepSizeUnderflow : public SimulationError {
public:
    using SimulationError::SimulationError;
};

/// Right-hand side a = f(x, v, t) of the second-order system.
using Acceleration = std::function<double(double x, double v, double t)>;

/// Dormand-Prince 5(4) with dense output. Integrates x' = v, v' = f from
/// t0 to t1 starting at (x0, v0) and reports the state at each requested
/// output time (which must lie in [t0, t1] and be non-decreasing).
struct OdeState {
    double x;
    double v;
};

struct IntegrationStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t evaluations = 0;
    double last_step = 0.0;
};

OdeState integrate(const Acceleration& f, OdeState start, double t0, double t1,
                   const std::vector<double>& output_times, std::vector<OdeState>& outputs,
                   const SimConfig& config, IntegrationStats* stats = nullptr, double* step_hint = nullptr);

/// Simulates a generated system on the uniform output grid. Noise terms are
/// realized by a NoiseProcess seeded from system.seed.
Trajectory simulate(const GeneratedSystem& system, const SimConfig& config = {});

/// Same, for an arbitrary numeric formula.
Trajectory simulate(const Expr& formula, double x0, double v0, std::uint64_t noise_seed,
                    const SimConfig& config = {});

/// Uniform output grid of the configuration.
std::vector<double> output_grid(const SimConfig& config);

class BadCount : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Keeps n uniformly spaced samples including both endpoints.
Trajectory subsample(const Trajectory& traj, std::size_t n = 100);

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// CSV with header t,x,v,a and 17 significant digits.
void write_csv(const Trajectory& traj, std::ostream& out);
std::string to_csv(const Trajectory& traj);
Trajectory read_csv(std::istream& in);
Trajectory parse_csv(const std::string& text);

void export_csv(const Trajectory& traj, const std::filesystem::path& path);
Trajectory import_csv(const std::filesystem::path& path);

}  // namespace physsym
