#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include "lipfd/linalg.hpp"
#include "lipfd/model.hpp"

namespace lipfd {

struct TimeGrid {
    double t0 = 0.0;
    double dt = 1e-4;
    std::size_t steps = 100000;

    [[nodiscard]] Eigen::Index samples() const { return static_cast<Eigen::Index>(steps) + 1; }
    [[nodiscard]] double time(Eigen::Index k) const { return t0 + static_cast<double>(k) * dt; }
    [[nodiscard]] double t_end() const { return time(samples() - 1); }

    void validate() const {
        require(dt > 0.0 && std::isfinite(dt), "time grid: dt must be positive");
        require(steps >= 1, "time grid: need at least one step");
    }

    static TimeGrid over(double duration, double dt, double t0 = 0.0) {
        const auto n = static_cast<std::size_t>(std::llround(duration / dt));
        return TimeGrid{t0, dt, n};
    }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

/// Rows are grid samples, columns are channels.
using Trajectory = Matrix;

using Signal = std::function<Vector(double)>;

enum class NoiseKind { none, proportional_gaussian };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::none;
    double fraction = 0.0;
    std::uint64_t seed = 0;
    Vector amplitude_reference;  // per output channel, e.g. max |y_i| of a fault-free run
};

class SimulationError : public std::runtime_error {
public:
    SimulationError(const std::string& what, Eigen::Index step) : std::runtime_error(what), step_(step) {}
    [[nodiscard]] Eigen::Index step() const { return step_; }

private:
    Eigen::Index step_;
};

/// Zero-mean Gaussian samples with per-channel sigma = fraction * reference[i].
/// One draw per sample and channel, row-major order, from a private seeded stream.
inline Trajectory noise_sequence(const NoiseSpec& spec, Eigen::Index samples, Eigen::Index channels) {
    Trajectory out = Trajectory::Zero(samples, channels);
    if (spec.kind == NoiseKind::none || spec.fraction == 0.0) return out;
    require(spec.fraction >= 0.0, "noise: fraction must be nonnegative");
    require(spec.amplitude_reference.size() == channels, "noise: missing amplitude reference");
    require((spec.amplitude_reference.array() > 0.0).all(), "noise: amplitude reference must be positive");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index k = 0; k < samples; ++k) {
        for (Eigen::Index i = 0; i < channels; ++i) out(k, i) = spec.fraction * spec.amplitude_reference(i) * normal(rng);
    }
    return out;
}

inline Trajectory apply_noise(const Trajectory& y_clean, const NoiseSpec& spec) {
    if (spec.kind == NoiseKind::none) return y_clean;
    return y_clean + noise_sequence(spec, y_clean.rows(), y_clean.cols());
}

struct UncertaintyRealization {
    UncertaintyEnvelope envelope;
    Matrix F;
};

struct InjectionProfile {
    Signal disturbance;  // t -> k1
    Signal fault;        // t -> k2
    NoiseSpec noise;
    std::optional<UncertaintyRealization> uncertainty;

    static InjectionProfile none(Eigen::Index k1, Eigen::Index k2) {
        return InjectionProfile{[k1](double) { return Vector(Vector::Zero(k1)); },
                                [k2](double) { return Vector(Vector::Zero(k2)); }, NoiseSpec{}, std::nullopt};
    }
};

inline Signal constant_signal(Vector value) {
    return [v = std::move(value)](double) { return v; };
}

/// Sinusoidal manipulator disturbance (5 sin 10t, 2 sin 10t, sin 20t).
inline Vector sinusoidal_disturbance(double t) {
    Vector d(3);
    d << 5.0 * std::sin(10.0 * t), 2.0 * std::sin(10.0 * t), std::sin(20.0 * t);
    return d;
}

/// `amplitude` on `channel` while t is in [onset, onset + width), zero elsewhere.
inline Vector fault_abrupt(double t, double onset, double width, double amplitude, Eigen::Index channel, Eigen::Index k2) {
    require(width > 0.0, "fault_abrupt: width must be positive");
    require(channel >= 0 && channel < k2, "fault_abrupt: channel out of range");
    Vector f = Vector::Zero(k2);
    if (t >= onset && t < onset + width) f(channel) = amplitude;
    return f;
}

/// Ramp min(slope (t - onset), saturation) on `channel` for t >= onset.
inline Vector fault_gradual(double t, double onset, double slope, double saturation, Eigen::Index channel, Eigen::Index k2) {
    require(slope > 0.0 && saturation > 0.0, "fault_gradual: slope and saturation must be positive");
    require(channel >= 0 && channel < k2, "fault_gradual: channel out of range");
    Vector f = Vector::Zero(k2);
    if (t >= onset) f(channel) = std::min(slope * (t - onset), saturation);
    return f;
}

struct SimOutput {
    TimeGrid grid;
    Trajectory x, x_hat;
    Trajectory y_clean, y_measured, y_hat, e_y;
    Trajectory u, d, f;
};

/// Plant and Luenberger observer advanced together with fixed-step classical RK4.
/// The observer runs on the nominal plant and consumes the noisy measurement; noise
/// is drawn once per grid point and held over the step.
inline SimOutput integrate_coupled(const LipschitzPlant& plant, const Matrix& L, const Signal& input,
                                   const InjectionProfile& inj, const TimeGrid& grid, const Vector& x0,
                                   const Vector& xhat0) {
    plant.validate();
    grid.validate();
    const auto n = plant.n(), l = plant.l();
    require_shape(L, n, l, "observer gain L");
    require_size(x0, n, "x0");
    require_size(xhat0, n, "xhat0");

    const LipschitzPlant truth =
        inj.uncertainty ? wrap_uncertain(plant, inj.uncertainty->envelope, inj.uncertainty->F) : plant;
    const Eigen::Index samples = grid.samples();
    const Trajectory noise = noise_sequence(inj.noise, samples, l);

    SimOutput out;
    out.grid = grid;
    out.x.resize(samples, n);
    out.x_hat.resize(samples, n);
    out.y_clean.resize(samples, l);
    out.y_measured.resize(samples, l);
    out.y_hat.resize(samples, l);
    out.e_y.resize(samples, l);
    out.u.resize(samples, plant.m());
    out.d.resize(samples, plant.k1());
    out.f.resize(samples, plant.k2());

    struct Stage {
        Vector dx, dxhat;
    };
    auto rhs = [&](double t, const Vector& x, const Vector& xh, const Vector& v) {
        const Vector u = input(t), d = inj.disturbance(t), f = inj.fault(t);
        Vector y = evaluate_output(truth, x, d, f);
        y += v;
        Stage s;
        s.dx = evaluate_dynamics(truth, x, u, d, f);
        s.dxhat = plant.A * xh;
        s.dxhat += plant.B * u;
        s.dxhat += plant.phi(xh, u);
        s.dxhat += L * (y - plant.C * xh);
        return s;
    };
    auto record = [&](Eigen::Index k, const Vector& x, const Vector& xh) {
        const double t = grid.time(k);
        const Vector u = input(t), d = inj.disturbance(t), f = inj.fault(t);
        const Vector y = evaluate_output(truth, x, d, f);
        const Vector yhat = plant.C * xh;
        out.x.row(k) = x.transpose();
        out.x_hat.row(k) = xh.transpose();
        out.y_clean.row(k) = y.transpose();
        out.y_measured.row(k) = (y + noise.row(k).transpose()).transpose();
        out.y_hat.row(k) = yhat.transpose();
        out.e_y.row(k) = out.y_measured.row(k) - out.y_hat.row(k);
        out.u.row(k) = u.transpose();
        out.d.row(k) = d.transpose();
        out.f.row(k) = f.transpose();
    };

    Vector x = x0, xh = xhat0;
    record(0, x, xh);
    const double h = grid.dt;
    for (Eigen::Index k = 0; k + 1 < samples; ++k) {
        const double t = grid.time(k);
        const Vector v = noise.row(k).transpose();
        const Stage k1 = rhs(t, x, xh, v);
        const Stage k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1.dx, xh + 0.5 * h * k1.dxhat, v);
        const Stage k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2.dx, xh + 0.5 * h * k2.dxhat, v);
        const Stage k4 = rhs(t + h, x + h * k3.dx, xh + h * k3.dxhat, v);
        x += (h / 6.0) * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
        xh += (h / 6.0) * (k1.dxhat + 2.0 * k2.dxhat + 2.0 * k3.dxhat + k4.dxhat);
        if (!x.allFinite() || !xh.allFinite()) {
            throw SimulationError("non-finite state at step " + std::to_string(k + 1), k + 1);
        }
        record(k + 1, x, xh);
    }
    return out;
}

namespace detail {

inline void write_row_values(std::ostream& os, const Trajectory& m, Eigen::Index k) {
    char buf[40];
    for (Eigen::Index i = 0; i < m.cols(); ++i) {
        std::snprintf(buf, sizeof buf, ",%.17g", m(k, i));
        os << buf;
    }
}

inline void write_header_names(std::ostream& os, const char* prefix, Eigen::Index count) {
    for (Eigen::Index i = 1; i <= count; ++i) os << ',' << prefix << i;
}

}  // namespace detail

/// CSV with one row per grid point: t, x, xhat, y, ymeas, yhat, ey, u, d, f.
inline void write_sim_csv(std::ostream& os, const SimOutput& s) {
    os << 't';
    detail::write_header_names(os, "x", s.x.cols());
    detail::write_header_names(os, "xhat", s.x_hat.cols());
    detail::write_header_names(os, "y", s.y_clean.cols());
    detail::write_header_names(os, "ymeas", s.y_measured.cols());
    detail::write_header_names(os, "yhat", s.y_hat.cols());
    detail::write_header_names(os, "ey", s.e_y.cols());
    detail::write_header_names(os, "u", s.u.cols());
    detail::write_header_names(os, "d", s.d.cols());
    detail::write_header_names(os, "f", s.f.cols());
    os << '\n';
    char buf[40];
    for (Eigen::Index k = 0; k < s.grid.samples(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", s.grid.time(k));
        os << buf;
        for (const Trajectory* m : {&s.x, &s.x_hat, &s.y_clean, &s.y_measured, &s.y_hat, &s.e_y, &s.u, &s.d, &s.f}) {
            detail::write_row_values(os, *m, k);
        }
        os << '\n';
    }
}

}  // namespace lipfd
