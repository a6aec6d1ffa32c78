#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lipfd/linalg.hpp"
#include "lipfd/model.hpp"
#include "lipfd/simulator.hpp"

namespace lipfd {

enum class ResidualKind { ARR, EARR, EARR_linear, IEARR };

inline std::string to_string(ResidualKind k) {
    switch (k) {
        case ResidualKind::ARR: return "ARR";
        case ResidualKind::EARR: return "EARR";
        case ResidualKind::EARR_linear: return "EARR_linear";
        case ResidualKind::IEARR: return "IEARR";
    }
    return "?";
}

struct ResidualTrace {
    TimeGrid grid;
    Trajectory values;  // samples x r
    ResidualKind kind = ResidualKind::ARR;
};

/// Windowed L2 norms. Row i covers samples [start_index + i, start_index + i + window_len),
/// and is stamped with the time of the last sample in the window.
struct EvaluationTrace {
    TimeGrid grid;
    Trajectory J;
    Eigen::Index window_len = 0;
    Eigen::Index start_index = 0;
    ResidualKind kind = ResidualKind::ARR;

    [[nodiscard]] Eigen::Index size() const { return J.rows(); }
    [[nodiscard]] double time(Eigen::Index i) const { return grid.time(i); }
};

struct ThresholdSet {
    Vector J_th;
    std::vector<std::string> source_runs;
    double safety_factor = 1.0;
    Eigen::Index window_len = 0;
    Eigen::Index start_index = 0;
};

struct ChannelDetection {
    std::optional<Eigen::Index> first_crossing;  // index into the evaluation trace
    std::optional<double> first_crossing_time;
    double peak_ratio = 0.0;  // max J / J_th
};

struct DetectionReport {
    std::vector<ChannelDetection> channels;
    bool alarm = false;

    /// Earliest crossing over all channels, if any.
    [[nodiscard]] std::optional<double> first_alarm_time() const {
        std::optional<double> best;
        for (const auto& c : channels) {
            if (c.first_crossing_time && (!best || *c.first_crossing_time < *best)) best = c.first_crossing_time;
        }
        return best;
    }

    [[nodiscard]] double max_peak_ratio() const {
        double m = 0.0;
        for (const auto& c : channels) m = std::max(m, c.peak_ratio);
        return m;
    }
};

namespace detail {

inline void require_grid(const Trajectory& m, const TimeGrid& grid, const char* name) {
    if (m.rows() != grid.samples()) {
        throw ContractViolation(std::string(name) + ": trajectory length " + std::to_string(m.rows()) +
                                " does not match grid (" + std::to_string(grid.samples()) + " samples)");
    }
}

}  // namespace detail

/// Column-wise finite differences on a uniform grid: central in the interior,
/// second-order one-sided at the ends. order 2 applies the kernel twice.
inline Trajectory differentiate(const Trajectory& signal, double dt, int order = 1) {
    require(order == 1 || order == 2, "differentiate: order must be 1 or 2");
    require(dt > 0.0, "differentiate: dt must be positive");
    const Eigen::Index n = signal.rows();
    require(n >= 5, "differentiate: need at least 5 samples");
    Trajectory out(n, signal.cols());
    const double h2 = 2.0 * dt;
    out.row(0) = (-3.0 * signal.row(0) + 4.0 * signal.row(1) - signal.row(2)) / h2;
    for (Eigen::Index k = 1; k + 1 < n; ++k) out.row(k) = (signal.row(k + 1) - signal.row(k - 1)) / h2;
    out.row(n - 1) = (3.0 * signal.row(n - 1) - 4.0 * signal.row(n - 2) + signal.row(n - 3)) / h2;
    if (order == 2) return differentiate(out, dt, 1);
    return out;
}

/// Running trapezoidal integral, zero at the first sample.
inline Trajectory cumulative_trapezoid(const Trajectory& signal, double dt) {
    Trajectory out(signal.rows(), signal.cols());
    if (signal.rows() == 0) return out;
    out.row(0).setZero();
    for (Eigen::Index k = 1; k < signal.rows(); ++k) {
        out.row(k) = out.row(k - 1) + 0.5 * dt * (signal.row(k - 1) + signal.row(k));
    }
    return out;
}

/// r = M1 y'' + M2 y' + M3 y + N1 u'' + N2 u' + N3 u + Psi(y, u) on measured signals.
inline ResidualTrace eval_arr(const ResidualStructure& rs, const Trajectory& y, const Trajectory& u,
                              const TimeGrid& grid) {
    rs.validate();
    detail::require_grid(y, grid, "ARR: y");
    detail::require_grid(u, grid, "ARR: u");
    require(y.cols() == rs.l() && u.cols() == rs.m(), "ARR: channel count mismatch");
    const double dt = grid.dt;
    const Trajectory dy = differentiate(y, dt, 1), ddy = differentiate(y, dt, 2);
    const Trajectory du = differentiate(u, dt, 1), ddu = differentiate(u, dt, 2);

    ResidualTrace tr{grid, Trajectory(y.rows(), rs.r()), ResidualKind::ARR};
    tr.values = ddy * rs.M1.transpose() + dy * rs.M2.transpose() + y * rs.M3.transpose() +
                ddu * rs.N1.transpose() + du * rs.N2.transpose() + u * rs.N3.transpose();
    for (Eigen::Index k = 0; k < y.rows(); ++k) {
        tr.values.row(k) += rs.eval_psi(y.row(k).transpose(), u.row(k).transpose()).transpose();
    }
    return tr;
}

/// Error-based relation on e_y = y - yhat. Nonlinear form:
///   M1 e'' + M2 e' + M3 e + Psi(y, u) - Psi(yhat, u)
/// linearized form replaces the Psi difference with the M3n coefficient.
inline ResidualTrace eval_earr(const ResidualStructure& rs, const Trajectory& e_y, const Trajectory& y,
                               const Trajectory& y_hat, const Trajectory& u, const TimeGrid& grid, bool linearized) {
    rs.validate();
    detail::require_grid(e_y, grid, "EARR: e_y");
    require(e_y.cols() == rs.l(), "EARR: channel count mismatch");
    const double dt = grid.dt;
    const Trajectory de = differentiate(e_y, dt, 1), dde = differentiate(e_y, dt, 2);

    ResidualTrace tr{grid, {}, linearized ? ResidualKind::EARR_linear : ResidualKind::EARR};
    if (linearized) {
        tr.values = dde * rs.M1.transpose() + de * rs.M2.transpose() + e_y * rs.M3n.transpose();
        return tr;
    }
    detail::require_grid(y, grid, "EARR: y");
    detail::require_grid(y_hat, grid, "EARR: yhat");
    detail::require_grid(u, grid, "EARR: u");
    tr.values = dde * rs.M1.transpose() + de * rs.M2.transpose() + e_y * rs.M3.transpose();
    for (Eigen::Index k = 0; k < e_y.rows(); ++k) {
        const Vector uk = u.row(k).transpose();
        tr.values.row(k) +=
            (rs.eval_psi(y.row(k).transpose(), uk) - rs.eval_psi(y_hat.row(k).transpose(), uk)).transpose();
    }
    return tr;
}

inline ResidualTrace eval_earr(const ResidualStructure& rs, const SimOutput& sim, bool linearized) {
    return eval_earr(rs, sim.e_y, sim.y_measured, sim.y_hat, sim.u, sim.grid, linearized);
}

namespace detail {

inline Trajectory iearr_segment(const ResidualStructure& rs, const Trajectory& e, double dt) {
    const Eigen::Index n = e.rows();
    Vector t(n);
    for (Eigen::Index k = 0; k < n; ++k) t(k) = static_cast<double>(k) * dt;
    const Vector t2 = t.cwiseProduct(t);
    const Trajectory te = t.asDiagonal() * e;
    const Trajectory t2e = t2.asDiagonal() * e;

    const Trajectory inner2 = 2.0 * e * rs.M1.transpose() - 2.0 * te * rs.M2.transpose() + t2e * rs.M3n.transpose();
    const Trajectory inner1 = -4.0 * te * rs.M1.transpose() + t2e * rs.M2.transpose();
    return cumulative_trapezoid(cumulative_trapezoid(inner2, dt), dt) + cumulative_trapezoid(inner1, dt) +
           t2e * rs.M1.transpose();
}

}  // namespace detail

/// Integral form of the linearized error relation:
///   iint(2 M1 e - 2 M2 t e + M3n t^2 e) + int(-4 M1 t e + M2 t^2 e) + M1 t^2 e
/// with t from the grid start. A nonzero reset_period restarts the time origin and all
/// integrals every reset_period samples.
inline ResidualTrace eval_iearr(const ResidualStructure& rs, const Trajectory& e_y, const TimeGrid& grid,
                                Eigen::Index reset_period = 0) {
    rs.validate();
    detail::require_grid(e_y, grid, "IEARR: e_y");
    require(e_y.cols() == rs.l(), "IEARR: channel count mismatch");
    require(reset_period >= 0, "IEARR: reset period must be nonnegative");
    ResidualTrace tr{grid, Trajectory(e_y.rows(), rs.r()), ResidualKind::IEARR};
    const Eigen::Index n = e_y.rows();
    const Eigen::Index seg = reset_period > 0 ? reset_period : n;
    for (Eigen::Index s = 0; s < n; s += seg) {
        const Eigen::Index len = std::min(seg, n - s);
        tr.values.middleRows(s, len) = detail::iearr_segment(rs, e_y.middleRows(s, len), grid.dt);
    }
    return tr;
}

/// Reference for eval_iearr: iint tau^2 EARR_linear(tau), trapezoidal.
inline ResidualTrace iearr_oracle(const ResidualTrace& earr) {
    require(earr.kind == ResidualKind::EARR_linear, "iearr_oracle: needs a linearized EARR trace");
    const Eigen::Index n = earr.values.rows();
    Vector t2(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * earr.grid.dt;
        t2(k) = t * t;
    }
    const Trajectory weighted = t2.asDiagonal() * earr.values;
    return ResidualTrace{earr.grid, cumulative_trapezoid(cumulative_trapezoid(weighted, earr.grid.dt), earr.grid.dt),
                         ResidualKind::IEARR};
}

/// J[i] = sqrt(sum_{k=i}^{i+L_w-1} r_k^2 dt) per channel, for i = t0_index .. end - L_w.
inline EvaluationTrace eval_window_norm(const ResidualTrace& r, Eigen::Index t0_index, Eigen::Index window_len) {
    require(window_len >= 1, "window norm: L_w must be at least 1");
    require(t0_index >= 0, "window norm: t0 must be nonnegative");
    const Eigen::Index n = r.values.rows(), ch = r.values.cols();
    require(t0_index + window_len <= n, "window norm: window exceeds trace");
    const Eigen::Index count = n - t0_index - window_len + 1;
    const double dt = r.grid.dt;

    EvaluationTrace ev;
    ev.window_len = window_len;
    ev.start_index = t0_index;
    ev.kind = r.kind;
    ev.grid = TimeGrid{r.grid.time(t0_index + window_len - 1), dt, static_cast<std::size_t>(count - 1)};
    ev.J.resize(count, ch);
    for (Eigen::Index c = 0; c < ch; ++c) {
        // prefix sums in extended precision keep the sliding difference clean
        std::vector<long double> prefix(static_cast<std::size_t>(n) + 1, 0.0L);
        for (Eigen::Index k = 0; k < n; ++k) {
            const long double v = r.values(k, c);
            prefix[static_cast<std::size_t>(k) + 1] = prefix[static_cast<std::size_t>(k)] + v * v;
        }
        for (Eigen::Index i = 0; i < count; ++i) {
            const auto a = static_cast<std::size_t>(t0_index + i);
            const long double s = prefix[a + static_cast<std::size_t>(window_len)] - prefix[a];
            ev.J(i, c) = std::sqrt(static_cast<double>(std::max(s, 0.0L)) * dt);
        }
    }
    return ev;
}

/// Per-channel worst case over fault-free evaluations, times safety_factor.
inline ThresholdSet calibrate_threshold(const std::vector<EvaluationTrace>& fault_free, double safety_factor = 1.0,
                                        std::vector<std::string> source_runs = {}) {
    require(!fault_free.empty(), "calibrate_threshold: empty calibration set");
    require(safety_factor >= 1.0, "calibrate_threshold: safety factor must be >= 1");
    const Eigen::Index ch = fault_free.front().J.cols();
    ThresholdSet th;
    th.J_th = Vector::Zero(ch);
    for (const auto& ev : fault_free) {
        require(ev.J.cols() == ch, "calibrate_threshold: channel count mismatch");
        if (ev.J.rows() > 0) th.J_th = th.J_th.cwiseMax(ev.J.colwise().maxCoeff().transpose());
    }
    th.J_th *= safety_factor;
    th.safety_factor = safety_factor;
    th.source_runs = std::move(source_runs);
    th.window_len = fault_free.front().window_len;
    th.start_index = fault_free.front().start_index;
    return th;
}

inline DetectionReport detect(const EvaluationTrace& ev, const ThresholdSet& th) {
    require(ev.J.cols() == th.J_th.size(), "detect: channel count mismatch");
    DetectionReport rep;
    rep.channels.resize(static_cast<std::size_t>(ev.J.cols()));
    for (Eigen::Index c = 0; c < ev.J.cols(); ++c) {
        auto& ch = rep.channels[static_cast<std::size_t>(c)];
        const double jth = th.J_th(c);
        double peak = 0.0;
        for (Eigen::Index i = 0; i < ev.J.rows(); ++i) {
            const double j = ev.J(i, c);
            peak = std::max(peak, j);
            if (!ch.first_crossing && j > jth) {
                ch.first_crossing = i;
                ch.first_crossing_time = ev.time(i);
            }
        }
        if (jth > 0.0) ch.peak_ratio = peak / jth;
        else ch.peak_ratio = peak > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        rep.alarm = rep.alarm || ch.first_crossing.has_value();
    }
    return rep;
}

/// `t,r1..rr`
inline void write_residual_csv(std::ostream& os, const ResidualTrace& tr, Eigen::Index stride = 1) {
    require(stride >= 1, "residual csv: stride must be positive");
    os << 't';
    detail::write_header_names(os, "r", tr.values.cols());
    os << '\n';
    char buf[40];
    for (Eigen::Index k = 0; k < tr.values.rows(); k += stride) {
        std::snprintf(buf, sizeof buf, "%.17g", tr.grid.time(k));
        os << buf;
        detail::write_row_values(os, tr.values, k);
        os << '\n';
    }
}

/// `t,J1..Jr,Jth1..Jthr,alarm`
inline void write_evaluation_csv(std::ostream& os, const EvaluationTrace& ev, const ThresholdSet& th,
                                 Eigen::Index stride = 1) {
    require(ev.J.cols() == th.J_th.size(), "evaluation csv: channel count mismatch");
    require(stride >= 1, "evaluation csv: stride must be positive");
    os << 't';
    detail::write_header_names(os, "J", ev.J.cols());
    detail::write_header_names(os, "Jth", ev.J.cols());
    os << ",alarm\n";
    char buf[40];
    for (Eigen::Index i = 0; i < ev.J.rows(); i += stride) {
        std::snprintf(buf, sizeof buf, "%.17g", ev.time(i));
        os << buf;
        bool alarm = false;
        for (Eigen::Index c = 0; c < ev.J.cols(); ++c) {
            std::snprintf(buf, sizeof buf, ",%.17g", ev.J(i, c));
            os << buf;
            alarm = alarm || ev.J(i, c) > th.J_th(c);
        }
        for (Eigen::Index c = 0; c < ev.J.cols(); ++c) {
            std::snprintf(buf, sizeof buf, ",%.17g", th.J_th(c));
            os << buf;
        }
        os << ',' << (alarm ? 1 : 0) << '\n';
    }
}

}  // namespace lipfd
