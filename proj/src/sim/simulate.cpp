#include "physsym/rng.hpp"
#include "physsym/sim.hpp"

#include <algorithm>
#include <cmath>

namespace physsym {

NoiseProcess::NoiseProcess(std::uint64_t seed, double grid_dt) : seed_(seed), dt_(grid_dt)
{
    if (!(grid_dt > 0.0)) {
        throw std::invalid_argument("noise grid step must be positive");
    }
}

std::size_t NoiseProcess::cell(double t) const
{
    double const k = std::floor(t / dt_);
    return k <= 0.0 ? 0 : static_cast<std::size_t>(k);
}

double NoiseProcess::cell_value(std::size_t k) const
{
    if (k >= cache_.size()) {
        // values are drawn sequentially from one stream, so extending the
        // cache never changes earlier cells
        Rng rng(seed_, 0x6e6f697365ULL);
        std::size_t const n = std::max(k + 1, cache_.size() * 2);
        std::vector<double> fresh;
        fresh.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            fresh.push_back(rng.normal());
        }
        cache_ = std::move(fresh);
    }
    return cache_[k];
}

double NoiseProcess::value(double t) const { return cell_value(cell(t)); }

std::vector<double> output_grid(const SimConfig& config)
{
    std::vector<double> t(config.n_points);
    if (config.n_points == 1) {
        t[0] = 0.0;
        return t;
    }
    double const denom = static_cast<double>(config.n_points - 1);
    for (std::size_t i = 0; i < config.n_points; ++i) {
        t[i] = config.t_end * static_cast<double>(i) / denom;
    }
    t.back() = config.t_end;
    return t;
}

Trajectory simulate(const Expr& formula, double x0, double v0, std::uint64_t noise_seed, const SimConfig& config)
{
    if (!parameters_of(formula).empty()) {
        throw UnboundParameter(*parameters_of(formula).begin());
    }
    if (!(config.rtol > 0.0) || !(config.atol > 0.0) || config.n_points < 2 || !(config.t_end > 0.0)) {
        throw std::invalid_argument("invalid simulation configuration");
    }
    bool const noisy = contains_kind(formula, Kind::Noise);
    NoiseProcess const noise(noise_seed, config.noise_dt);

    Trajectory traj;
    traj.t = output_grid(config);
    std::vector<OdeState> states;
    states.reserve(traj.t.size());

    if (!noisy) {
        Acceleration const f = [&](double x, double v, double t) {
            return evaluate_unchecked(formula, Binding{x, v, t, nullptr, 0.0});
        };
        integrate(f, {x0, v0}, 0.0, config.t_end, traj.t, states, config);
    } else {
        // The forcing is piecewise constant, so integrate one noise cell at a
        // time; every segment is smooth for the adaptive controller.
        OdeState s{x0, v0};
        double hint = config.initial_step;
        std::size_t next = 0;
        std::size_t const cells =
            std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(config.t_end / config.noise_dt)));
        std::vector<double> times;
        for (std::size_t k = 0; k < cells; ++k) {
            bool const final_cell = k + 1 == cells;
            double const a = static_cast<double>(k) * config.noise_dt;
            double const b = final_cell ? config.t_end : std::min(static_cast<double>(k + 1) * config.noise_dt, config.t_end);
            times.clear();
            while (next < traj.t.size() && (final_cell || noise.cell(traj.t[next]) <= k)) {
                times.push_back(traj.t[next]);
                ++next;
            }
            double const nv = noise.cell_value(k);
            Acceleration const f = [&](double x, double v, double t) {
                return evaluate_unchecked(formula, Binding{x, v, t, nullptr, nv});
            };
            double const end = times.empty() ? b : std::max(b, times.back());
            s = integrate(f, s, a, end, times, states, config, nullptr, &hint);
        }
    }

    traj.x.resize(traj.t.size());
    traj.v.resize(traj.t.size());
    traj.a.resize(traj.t.size());
    for (std::size_t i = 0; i < traj.t.size(); ++i) {
        traj.x[i] = states[i].x;
        traj.v[i] = states[i].v;
        double const nv = noisy ? noise.value(traj.t[i]) : 0.0;
        traj.a[i] = evaluate_unchecked(formula, Binding{traj.x[i], traj.v[i], traj.t[i], nullptr, nv});
        if (!std::isfinite(traj.a[i])) {
            throw Diverged("non-finite acceleration at t=" + std::to_string(traj.t[i]));
        }
    }
    return traj;
}

Trajectory simulate(const GeneratedSystem& system, const SimConfig& config)
{
    return simulate(system.formula, system.x0, system.v0, system.seed, config);
}

Trajectory subsample(const Trajectory& traj, std::size_t n)
{
    if (n < 2) {
        throw BadCount("subsample needs at least 2 points");
    }
    if (n > traj.size()) {
        throw BadCount("cannot subsample " + std::to_string(traj.size()) + " points to " + std::to_string(n));
    }
    Trajectory out;
    std::size_t const last = traj.size() - 1;
    for (std::size_t i = 0; i < n; ++i) {
        // rounded uniform spacing, exact endpoints
        std::size_t const idx = (i * last * 2 + (n - 1)) / (2 * (n - 1));
        out.t.push_back(traj.t[idx]);
        out.x.push_back(traj.x[idx]);
        out.v.push_back(traj.v[idx]);
        out.a.push_back(traj.a[idx]);
    }
    return out;
}

}  // namespace physsym
