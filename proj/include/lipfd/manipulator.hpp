#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lipfd/linalg.hpp"
#include "lipfd/model.hpp"
#include "lipfd/residuals.hpp"
#include "lipfd/simulator.hpp"

namespace lipfd::manipulator {

/// Single-link flexible-joint arm driven by a DC motor.
struct Params {
    double Jl = 9.3e-3;    // link inertia
    double Jm = 3.7e-3;    // motor inertia
    double K = 1.8e-1;     // shaft stiffness
    double m = 2.1e-1;     // link mass
    double h = 0.15;       // distance to link centre of mass
    double k_tau = 8e-2;   // motor torque constant
    double Bm = 4.6e-2;    // motor viscous friction
    double g = 9.8;

    [[nodiscard]] double mgh() const { return m * g * h; }

    void validate() const {
        for (double v : {Jl, Jm, K, m, h, k_tau, Bm, g}) require(v > 0.0 && std::isfinite(v), "manipulator: parameters must be positive");
    }
};

enum class Preset { symbolic, paper_literal };

inline std::string to_string(Preset p) { return p == Preset::symbolic ? "symbolic" : "paper-literal"; }

inline Preset parse_preset(const std::string& s) {
    if (s == "symbolic") return Preset::symbolic;
    if (s == "paper-literal" || s == "paper_literal" || s == "literal") return Preset::paper_literal;
    throw ContractViolation("unknown preset '" + s + "' (expected symbolic or paper-literal)");
}

namespace detail {

inline void fill_printed_channels(LipschitzPlant& p) {
    p.C.resize(2, 4);
    p.C << 0, 1, 0, 1,
           0, 0, 0, 1;
    p.D1.resize(4, 3);
    p.D1 << -0.0004, 0.0001, -0.0001,
            -0.3000, 0.0300, -0.0600,
             0.0019, 0.0002, -0.0004,
             0.1000, -0.0200, 0.0400;
    p.D2.resize(2, 3);
    p.D2 << -0.001, 0, 0.003,
             0, -0.010, -0.002;
    p.Q1.resize(4, 2);
    p.Q1 << 0.08, 1,
            0, 0,
            0, 0,
            0, 0;
    p.Q2.resize(2, 2);
    p.Q2 << 0, 0.01,
            0.001, 0;
}

}  // namespace detail

/// State (Jm wm, thm - thl, Jl wl, thl); outputs (thm, thl).
/// The symbolic preset derives A, B and the gravity amplitude from the parameters; the
/// literal preset uses the printed matrices as given (they disagree with the parameters
/// in several entries). Disturbance and fault channels are the printed ones in both.
inline LipschitzPlant build_plant(const Params& prm, Preset kind) {
    prm.validate();
    LipschitzPlant p;
    p.A.resize(4, 4);
    p.B = Matrix::Zero(4, 1);
    if (kind == Preset::symbolic) {
        p.A << -prm.Bm / prm.Jm, -prm.K, 0, 0,
               1.0 / prm.Jm, 0, -1.0 / prm.Jl, 0,
               0, prm.K, 0, 0,
               0, 0, 1.0 / prm.Jl, 0;
        p.B(0, 0) = prm.k_tau;
        p.phi = NonlinearMap::manipulator_gravity(prm.mgh(), 4, 1, 2, 3);
    } else {
        p.A << -1.2432, -0.1800, 0, 0,
               270.2703, 0, -270.2703, 0,
               0, 0.1800, 0, 1,
               0, 0, 107.5269, 0;
        p.B(0, 0) = 0.08;
        p.phi = NonlinearMap::manipulator_gravity(0.33, 4, 1, 2, 3);
    }
    detail::fill_printed_channels(p);
    p.validate();
    return p;
}

/// Maps textbook coordinates (thm, wm, thl, wl) to the bond-graph state.
inline Matrix state_transform(const Params& prm) {
    Matrix T(4, 4);
    T << 0, prm.Jm, 0, 0,
         1, 0, -1, 0,
         0, 0, 0, prm.Jl,
         0, 0, 1, 0;
    return T;
}

/// Textbook realization in (thm, wm, thl, wl). Disturbance and fault channels are
/// pulled back from the bond-graph ones so that transforming with state_transform
/// reproduces the symbolic preset.
inline LipschitzPlant textbook_plant(const Params& prm) {
    prm.validate();
    const LipschitzPlant bg = build_plant(prm, Preset::symbolic);
    const Matrix Tinv = state_transform(prm).inverse();
    LipschitzPlant p;
    p.A.resize(4, 4);
    p.A << 0, 1, 0, 0,
           -prm.K / prm.Jm, -prm.Bm / prm.Jm, prm.K / prm.Jm, 0,
           0, 0, 0, 1,
           prm.K / prm.Jl, 0, -prm.K / prm.Jl, 0;
    p.B = Matrix::Zero(4, 1);
    p.B(1, 0) = prm.k_tau / prm.Jm;
    p.C.resize(2, 4);
    p.C << 1, 0, 0, 0,
           0, 0, 1, 0;
    p.D1 = Tinv * bg.D1;
    p.Q1 = Tinv * bg.Q1;
    p.D2 = bg.D2;
    p.Q2 = bg.Q2;
    p.phi = NonlinearMap::manipulator_gravity(prm.mgh() / prm.Jl, 4, 1, 3, 2);
    p.validate();
    return p;
}

/// Observer gain printed with the reference design (beta = 1, lambda = 0.2).
inline Matrix reference_gain() {
    Matrix L(4, 2);
    L << 0.2141, 0.1343,
         1.9888, -0.6297,
         0.2487, 0.1899,
         5.3438, 4.0916;
    return 1e3 * L;
}

/// Motor:  Jm y1'' + Bm y1' + K (y1 - y2) - k_tau u
/// Link:   Jl y2'' - K (y1 - y2) + mgh sin y2
/// The linearized coefficient uses K - gamma in the (2,2) entry.
inline ResidualStructure build_residual_structure(const Params& prm, double gamma) {
    prm.validate();
    require(gamma >= 0.0, "residual structure: gamma must be nonnegative");
    ResidualStructure rs;
    rs.M1 = Matrix::Zero(2, 2);
    rs.M1(0, 0) = prm.Jm;
    rs.M1(1, 1) = prm.Jl;
    rs.M2 = Matrix::Zero(2, 2);
    rs.M2(0, 0) = prm.Bm;
    rs.M3.resize(2, 2);
    rs.M3 << prm.K, -prm.K,
             -prm.K, prm.K;
    rs.N1 = Matrix::Zero(2, 1);
    rs.N2 = Matrix::Zero(2, 1);
    rs.N3 = Matrix::Zero(2, 1);
    rs.N3(0, 0) = -prm.k_tau;
    const double mgh = prm.mgh();
    rs.psi = [mgh](const Vector& y, const Vector&) {
        Vector out(2);
        out << 0.0, mgh * std::sin(y(1));
        return out;
    };
    rs.Upsilon = Matrix::Zero(2, 2);
    rs.Upsilon(1, 1) = mgh;
    rs.M3n = rs.M3;
    rs.M3n(1, 1) -= gamma;
    rs.psi_kind = "manipulator_gravity_output";
    rs.psi_params = {{"mgh", mgh}, {"sign", 1.0}};
    rs.validate();
    return rs;
}

enum class FaultKind { none, abrupt, gradual };

inline std::string to_string(FaultKind f) {
    switch (f) {
        case FaultKind::none: return "none";
        case FaultKind::abrupt: return "abrupt";
        case FaultKind::gradual: return "gradual";
    }
    return "?";
}

inline FaultKind parse_fault_kind(const std::string& s) {
    if (s == "none") return FaultKind::none;
    if (s == "abrupt") return FaultKind::abrupt;
    if (s == "gradual") return FaultKind::gradual;
    throw ContractViolation("unknown fault kind '" + s + "'");
}

struct AbruptFault {
    double onset = 6.0;
    double width = 1.0;
    double amplitude = 1.0;
    Eigen::Index channel = 0;  // actuator

    friend bool operator==(const AbruptFault&, const AbruptFault&) = default;
};

struct GradualFault {
    double onset = 5.0;
    double slope = 0.2;
    double saturation = 1.0;
    Eigen::Index channel = 1;  // second fault column (motor friction)

    [[nodiscard]] double time_to_fraction(double fraction) const { return onset + fraction * saturation / slope; }

    friend bool operator==(const GradualFault&, const GradualFault&) = default;
};

struct ScenarioSpec {
    int id = 1;
    bool disturbance_on = true;
    bool noise_on = false;
    FaultKind fault = FaultKind::none;
    AbruptFault abrupt;
    GradualFault gradual;
    Eigen::Index window_t0 = 80;
    Eigen::Index window_len = 1000;
    double duration = 10.0;
    double dt = 1e-4;
    double input = 1.0;  // constant motor voltage
    double noise_fraction = 0.02;
    std::uint64_t seed = 1;

    [[nodiscard]] TimeGrid grid() const { return TimeGrid::over(duration, dt); }

    [[nodiscard]] std::optional<double> fault_onset() const {
        if (fault == FaultKind::abrupt) return abrupt.onset;
        if (fault == FaultKind::gradual) return gradual.onset;
        return std::nullopt;
    }

    void validate() const {
        require(id >= 1 && id <= 5, "scenario id must be in 1..5");
        require(dt > 0.0 && duration > 0.0, "scenario: duration and dt must be positive");
        require(window_t0 >= 0 && window_len >= 1, "scenario: bad window");
        require(window_t0 + window_len <= grid().samples(), "scenario: window exceeds run");
        require(noise_fraction >= 0.0, "scenario: noise fraction must be nonnegative");
    }

    /// 1 disturbance only, 2 abrupt fault, 3 gradual fault, 4 noise, 5 noise + abrupt fault.
    static ScenarioSpec preset(int id, std::uint64_t seed = 1) {
        ScenarioSpec s;
        s.id = id;
        s.seed = seed;
        switch (id) {
            case 1: break;
            case 2: s.fault = FaultKind::abrupt; break;
            case 3: s.fault = FaultKind::gradual; break;
            case 4: s.noise_on = true; break;
            case 5: s.noise_on = true; s.fault = FaultKind::abrupt; break;
            default: throw ContractViolation("scenario id must be in 1..5");
        }
        return s;
    }
};

inline InjectionProfile injections(const ScenarioSpec& s, const Vector& noise_reference) {
    InjectionProfile inj = InjectionProfile::none(3, 2);
    if (s.disturbance_on) inj.disturbance = sinusoidal_disturbance;
    if (s.fault == FaultKind::abrupt) {
        inj.fault = [f = s.abrupt](double t) { return fault_abrupt(t, f.onset, f.width, f.amplitude, f.channel, 2); };
    } else if (s.fault == FaultKind::gradual) {
        inj.fault = [f = s.gradual](double t) {
            return fault_gradual(t, f.onset, f.slope, f.saturation, f.channel, 2);
        };
    }
    if (s.noise_on && s.noise_fraction > 0.0) {
        require(noise_reference.size() == 2, "scenario: noise needs a reference amplitude per output");
        inj.noise = NoiseSpec{NoiseKind::proportional_gaussian, s.noise_fraction, s.seed, noise_reference};
    }
    return inj;
}

inline SimOutput simulate(const LipschitzPlant& plant, const Matrix& L, const ScenarioSpec& s,
                          const Vector& noise_reference = {}) {
    s.validate();
    const Vector u0 = Vector::Constant(1, s.input);
    return integrate_coupled(plant, L, constant_signal(u0), injections(s, noise_reference), s.grid(),
                             Vector::Zero(4), Vector::Zero(4));
}

/// Per-output max |y| of a clean run: the reference for proportional noise.
inline Vector amplitude_reference(const SimOutput& clean) {
    return clean.y_clean.cwiseAbs().colwise().maxCoeff().transpose();
}

/// Residual families used by the bench. EARR is the exact (nonlinear) form; IEARR is
/// built from e_y with the linearized coefficient.
inline ResidualTrace compute_residual(ResidualKind kind, const ResidualStructure& rs, const SimOutput& sim) {
    switch (kind) {
        case ResidualKind::ARR: return eval_arr(rs, sim.y_measured, sim.u, sim.grid);
        case ResidualKind::EARR: return eval_earr(rs, sim, false);
        case ResidualKind::EARR_linear: return eval_earr(rs, sim, true);
        case ResidualKind::IEARR: return eval_iearr(rs, sim.e_y, sim.grid);
    }
    throw ContractViolation("unknown residual kind");
}

}  // namespace lipfd::manipulator
