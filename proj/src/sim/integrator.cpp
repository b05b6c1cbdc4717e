#include "physsym/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace physsym {

namespace {

// Dormand-Prince 5(4) tableau (Hairer, Norsett & Wanner), with the
// coefficients of its 4th-order continuous extension.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0,
                 a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                 e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

using Vec = std::array<double, 2>;

struct System {
    const Acceleration& f;
    std::size_t* evaluations;
    Vec operator()(double t, const Vec& y) const
    {
        ++*evaluations;
        return {y[1], f(y[0], y[1], t)};
    }
};

Vec axpy(const Vec& y, double h, std::initializer_list<std::pair<double, const Vec*>> terms)
{
    Vec out = y;
    for (std::size_t i = 0; i < 2; ++i) {
        double s = 0.0;
        for (const auto& [c, k] : terms) {
            s += c * (*k)[i];
        }
        out[i] += h * s;
    }
    return out;
}

}  // namespace

OdeState integrate(const Acceleration& f, OdeState start, double t0, double t1,
                   const std::vector<double>& output_times, std::vector<OdeState>& outputs,
                   const SimConfig& config, IntegrationStats* stats, double* step_hint)
{
    IntegrationStats local;
    IntegrationStats& st = stats != nullptr ? *stats : local;
    System const sys{f, &st.evaluations};

    Vec y{start.x, start.v};
    double t = t0;
    std::size_t next_out = 0;
    auto emit_exact = [&](double at, const Vec& state) {
        while (next_out < output_times.size() && output_times[next_out] == at) {
            outputs.push_back({state[0], state[1]});
            ++next_out;
        }
    };
    emit_exact(t, y);
    if (t1 <= t0) {
        while (next_out < output_times.size()) {
            outputs.push_back({y[0], y[1]});
            ++next_out;
        }
        return start;
    }

    double h = std::min(step_hint != nullptr && *step_hint > 0.0 ? *step_hint : config.initial_step, t1 - t0);
    Vec k1 = sys(t, y);
    double facmax = 10.0;
    std::size_t steps = 0;

    while (t < t1) {
        if (++steps > config.max_steps) {
            throw StepSizeUnderflow("step budget exhausted at t=" + std::to_string(t));
        }
        bool const last = t + h >= t1;
        if (last) {
            h = t1 - t;
        }
        Vec const k2 = sys(t + c2 * h, axpy(y, h, {{a21, &k1}}));
        Vec const k3 = sys(t + c3 * h, axpy(y, h, {{a31, &k1}, {a32, &k2}}));
        Vec const k4 = sys(t + c4 * h, axpy(y, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
        Vec const k5 = sys(t + c5 * h, axpy(y, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
        Vec const k6 = sys(t + h, axpy(y, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
        Vec const y1 = axpy(y, h, {{a71, &k1}, {a73, &k3}, {a74, &k4}, {a75, &k5}, {a76, &k6}});
        double const t_new = last ? t1 : t + h;
        Vec const k7 = sys(t_new, y1);

        double err = 0.0;
        for (std::size_t i = 0; i < 2; ++i) {
            double const e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            double const sk = config.atol + config.rtol * std::max(std::abs(y[i]), std::abs(y1[i]));
            err += (e / sk) * (e / sk);
        }
        err = std::sqrt(err / 2.0);

        if (!std::isfinite(err) || err > 1.0) {
            ++st.rejected;
            double const fac = std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.2;
            h *= fac;
            facmax = 1.0;
            if (h < config.min_step * std::max(1.0, std::abs(t))) {
                throw StepSizeUnderflow("step size underflow at t=" + std::to_string(t));
            }
            continue;
        }

        ++st.accepted;
        st.last_step = h;
        // dense output between t and t_new
        while (next_out < output_times.size() && output_times[next_out] < t_new) {
            double const theta = (output_times[next_out] - t) / h;
            double const theta1 = 1.0 - theta;
            OdeState s{};
            for (std::size_t i = 0; i < 2; ++i) {
                double const ydiff = y1[i] - y[i];
                double const bspl = h * k1[i] - ydiff;
                double const r4 = ydiff - h * k7[i] - bspl;
                double const r5 = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
                double const val = y[i] + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5)));
                (i == 0 ? s.x : s.v) = val;
            }
            outputs.push_back(s);
            ++next_out;
        }
        y = y1;
        k1 = k7;
        t = t_new;
        if (!std::isfinite(y[0]) || !std::isfinite(y[1]) || std::abs(y[0]) > config.divergence_threshold ||
            std::abs(y[1]) > config.divergence_threshold) {
            throw Diverged("state left the stability box at t=" + std::to_string(t));
        }
        emit_exact(t, y);

        double const fac = err == 0.0 ? facmax : std::min(facmax, std::max(0.2, 0.9 * std::pow(err, -0.2)));
        h *= fac;
        facmax = 10.0;
    }
    while (next_out < output_times.size()) {
        outputs.push_back({y[0], y[1]});
        ++next_out;
    }
    if (step_hint != nullptr) {
        *step_hint = h;
    }
    return {y[0], y[1]};
}

}  // namespace physsym
