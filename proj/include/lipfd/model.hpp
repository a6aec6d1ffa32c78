#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lipfd/linalg.hpp"

namespace lipfd {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    [[nodiscard]] double width() const { return hi - lo; }
    [[nodiscard]] bool finite() const { return std::isfinite(lo) && std::isfinite(hi) && lo <= hi; }
};

/// Default sampling box: [-pi, pi] on angular coordinates, [-10, 10] elsewhere.
inline std::vector<Interval> default_domain_box(Eigen::Index n, const std::vector<bool>& angular = {}) {
    std::vector<Interval> box(static_cast<std::size_t>(n), Interval{-10.0, 10.0});
    for (std::size_t i = 0; i < angular.size() && i < box.size(); ++i) {
        if (angular[i]) box[i] = Interval{-std::numbers::pi, std::numbers::pi};
    }
    return box;
}

/// phi(x, u) together with a declared Lipschitz bound in x.
///
/// The evaluator is opaque; `kind` and `params` name a registry entry so that plants
/// built from registered maps can be written to disk. Maps produced by composition
/// (uncertainty wrapping, coordinate changes) carry kind "custom" and cannot be
/// serialized.
struct NonlinearMap {
    using Evaluator = std::function<Vector(const Vector& x, const Vector& u)>;

    Evaluator evaluator;
    double declared_lipschitz_bound = 0.0;
    std::vector<Interval> domain_box;
    Eigen::Index state_dim = 0;
    Eigen::Index input_dim = 0;
    std::string kind = "custom";
    std::map<std::string, double> params;

    [[nodiscard]] Vector operator()(const Vector& x, const Vector& u) const {
        require_size(x, state_dim, "phi: state");
        require_size(u, input_dim, "phi: input");
        Vector out = evaluator(x, u);
        require_size(out, state_dim, "phi: output");
        return out;
    }

    void validate() const {
        require(static_cast<bool>(evaluator), "phi: missing evaluator");
        require(declared_lipschitz_bound >= 0.0, "phi: declared Lipschitz bound must be nonnegative");
        require(domain_box.size() == static_cast<std::size_t>(state_dim), "phi: domain box dimension mismatch");
    }

    static NonlinearMap zero(Eigen::Index n, Eigen::Index m) {
        NonlinearMap map;
        map.evaluator = [n](const Vector&, const Vector&) { return Vector::Zero(n); };
        map.state_dim = n;
        map.input_dim = m;
        map.domain_box = default_domain_box(n);
        map.kind = "none";
        return map;
    }

    /// phi = -amplitude * sin(x[angle_index]) placed in row `row`; all else zero.
    static NonlinearMap manipulator_gravity(double amplitude, Eigen::Index n, Eigen::Index m, Eigen::Index row = 2,
                                            Eigen::Index angle_index = 3, std::vector<bool> angular = {}) {
        require(row >= 0 && row < n && angle_index >= 0 && angle_index < n, "manipulator_gravity: index out of range");
        NonlinearMap map;
        map.evaluator = [=](const Vector& x, const Vector&) {
            Vector out = Vector::Zero(n);
            out(row) = -amplitude * std::sin(x(angle_index));
            return out;
        };
        map.declared_lipschitz_bound = std::abs(amplitude);
        map.state_dim = n;
        map.input_dim = m;
        if (angular.empty()) {
            angular.assign(static_cast<std::size_t>(n), false);
            angular[static_cast<std::size_t>(angle_index)] = true;
        }
        map.domain_box = default_domain_box(n, angular);
        map.kind = "manipulator_gravity";
        map.params = {{"mgh", amplitude},
                      {"row", static_cast<double>(row)},
                      {"angle_index", static_cast<double>(angle_index)}};
        return map;
    }
};

/// x' = A x + B u + phi(x,u) + D1 d + Q1 f,  y = C x + D2 d + Q2 f.
struct LipschitzPlant {
    Matrix A, B, C, D1, D2, Q1, Q2;
    NonlinearMap phi;

    [[nodiscard]] Eigen::Index n() const { return A.rows(); }
    [[nodiscard]] Eigen::Index m() const { return B.cols(); }
    [[nodiscard]] Eigen::Index l() const { return C.rows(); }
    [[nodiscard]] Eigen::Index k1() const { return D1.cols(); }
    [[nodiscard]] Eigen::Index k2() const { return Q1.cols(); }

    void validate() const {
        const auto nn = n();
        require_shape(A, nn, nn, "A");
        require_shape(B, nn, m(), "B");
        require_shape(C, l(), nn, "C");
        require_shape(D1, nn, k1(), "D1");
        require_shape(D2, l(), k1(), "D2");
        require_shape(Q1, nn, k2(), "Q1");
        require_shape(Q2, l(), k2(), "Q2");
        phi.validate();
        require(phi.state_dim == nn && phi.input_dim == m(), "phi dimensions do not match plant");
    }
};

/// Second-order analytical redundancy relation
///   r = M1 y'' + M2 y' + M3 y + N1 u'' + N2 u' + N3 u + Psi(y, u)
/// plus the bound matrix Upsilon for Psi and the linearized coefficient M3n used by
/// the linear error-based form.
struct ResidualStructure {
    using PsiFn = std::function<Vector(const Vector& y, const Vector& u)>;

    Matrix M1, M2, M3, N1, N2, N3;
    PsiFn psi;
    Matrix Upsilon;
    Matrix M3n;
    std::string psi_kind = "custom";
    std::map<std::string, double> psi_params;

    [[nodiscard]] Eigen::Index r() const { return M1.rows(); }
    [[nodiscard]] Eigen::Index l() const { return M1.cols(); }
    [[nodiscard]] Eigen::Index m() const { return N3.cols(); }

    void validate() const {
        const auto rr = r();
        require_shape(M2, rr, l(), "M2");
        require_shape(M3, rr, l(), "M3");
        require_shape(M3n, rr, l(), "M3n");
        require_shape(N1, rr, m(), "N1");
        require_shape(N2, rr, m(), "N2");
        require_shape(N3, rr, m(), "N3");
        require_shape(Upsilon, rr, l(), "Upsilon");
        require((Upsilon.array() >= 0.0).all(), "Upsilon entries must be nonnegative");
        require(static_cast<bool>(psi), "Psi missing");
    }

    [[nodiscard]] Vector eval_psi(const Vector& y, const Vector& u) const {
        Vector out = psi(y, u);
        require_size(out, r(), "Psi output");
        return out;
    }
};

/// Delta A = Ma F Na, Delta B = Mb F Nb with ||F||_2 <= 1.
struct UncertaintyEnvelope {
    Matrix Ma, Na, Mb, Nb;
    double contraction_bound = 1.0;
};

inline Vector evaluate_dynamics(const LipschitzPlant& plant, const Vector& x, const Vector& u, const Vector& d,
                                const Vector& f) {
    require_size(x, plant.n(), "state");
    require_size(u, plant.m(), "input");
    require_size(d, plant.k1(), "disturbance");
    require_size(f, plant.k2(), "fault");
    Vector dx = plant.A * x;
    dx += plant.B * u;
    dx += plant.phi(x, u);
    dx += plant.D1 * d;
    dx += plant.Q1 * f;
    return dx;
}

inline Vector evaluate_output(const LipschitzPlant& plant, const Vector& x, const Vector& d, const Vector& f) {
    require_size(x, plant.n(), "state");
    require_size(d, plant.k1(), "disturbance");
    require_size(f, plant.k2(), "fault");
    Vector y = plant.C * x;
    y += plant.D2 * d;
    y += plant.Q2 * f;
    return y;
}

namespace detail {

/// Draws a pair (x, x') inside `box`. Every third pair differs in a single random
/// coordinate, the others along an isotropic direction; step lengths are log-uniform
/// so that both local slopes and long chords are explored.
inline std::pair<Vector, Vector> draw_pair(const std::vector<Interval>& box, std::mt19937_64& rng, std::size_t index) {
    const auto n = static_cast<Eigen::Index>(box.size());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector x(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& iv = box[static_cast<std::size_t>(i)];
        x(i) = iv.lo + unit(rng) * iv.width();
    }
    Vector dir = Vector::Zero(n);
    if (index % 3 == 0) {
        for (Eigen::Index i = 0; i < n; ++i) dir(i) = normal(rng);
    } else {
        const auto axis = static_cast<Eigen::Index>(std::min<double>(static_cast<double>(n) - 1, unit(rng) * n));
        dir(axis) = 1.0;
    }
    const double norm = dir.norm();
    if (norm > 0.0) dir /= norm;
    const double scale = std::pow(10.0, -6.0 + 5.0 * unit(rng));
    Vector xp(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& iv = box[static_cast<std::size_t>(i)];
        xp(i) = std::clamp(x(i) + scale * iv.width() * dir(i), iv.lo, iv.hi);
    }
    return {x, xp};
}

}  // namespace detail

/// Sampled lower estimate of the Lipschitz constant of `map` over its domain box,
/// with the input held at `u` (zero when empty). Pairs come from a single seeded
/// stream, so a larger sample count only extends the sequence.
inline double estimate_lipschitz_bound(const NonlinearMap& map, std::size_t samples, std::uint64_t seed,
                                       Vector u = {}) {
    require(samples >= 2, "estimate_lipschitz_bound: need at least 2 samples");
    require(!map.domain_box.empty(), "estimate_lipschitz_bound: empty domain box");
    for (const auto& iv : map.domain_box) require(iv.finite(), "estimate_lipschitz_bound: domain box not finite");
    if (u.size() == 0) u = Vector::Zero(map.input_dim);
    std::mt19937_64 rng(seed);
    double best = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        auto [x, xp] = detail::draw_pair(map.domain_box, rng, s);
        const double dx = (x - xp).norm();
        if (dx <= 0.0) continue;
        const double ratio = (map(x, u) - map(xp, u)).norm() / dx;
        best = std::max(best, ratio);
    }
    return best;
}

/// Checks |Psi(y,u) - Psi(y',u)| <= Upsilon |y - y'| componentwise on sampled pairs.
/// Returns the largest violation (<= 0 means the bound held everywhere).
inline double residual_bound_violation(const ResidualStructure& rs, const std::vector<Interval>& output_box,
                                       std::size_t samples, std::uint64_t seed, Vector u = {}) {
    if (u.size() == 0) u = Vector::Zero(rs.m());
    std::mt19937_64 rng(seed);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < samples; ++s) {
        auto [y, yp] = detail::draw_pair(output_box, rng, s);
        const Vector lhs = (rs.eval_psi(y, u) - rs.eval_psi(yp, u)).cwiseAbs();
        const Vector rhs = rs.Upsilon * (y - yp).cwiseAbs();
        worst = std::max(worst, (lhs - rhs).maxCoeff());
    }
    return worst;
}

/// Folds parametric uncertainty into the nonlinearity:
/// phi2(x,u) = Ma F Na x + Mb F Nb u + phi1(x,u), bound grows by ||Ma|| ||Na||.
inline LipschitzPlant wrap_uncertain(const LipschitzPlant& plant, const UncertaintyEnvelope& env, const Matrix& F,
                                     double tolerance = 1e-9) {
    plant.validate();
    require(linalg::spectral_norm(F) <= env.contraction_bound + tolerance, "wrap_uncertain: ||F||_2 exceeds 1");
    const auto n = plant.n();
    const bool has_a = env.Ma.size() > 0 && env.Na.size() > 0;
    const bool has_b = env.Mb.size() > 0 && env.Nb.size() > 0;
    if (has_a) {
        require(env.Ma.rows() == n && env.Ma.cols() == F.rows(), "wrap_uncertain: Ma dimensions");
        require(env.Na.cols() == n && env.Na.rows() == F.cols(), "wrap_uncertain: Na dimensions");
    }
    if (has_b) {
        require(env.Mb.rows() == n && env.Mb.cols() == F.rows(), "wrap_uncertain: Mb dimensions");
        require(env.Nb.cols() == plant.m() && env.Nb.rows() == F.cols(), "wrap_uncertain: Nb dimensions");
    }
    const Matrix dA = has_a ? Matrix(env.Ma * F * env.Na) : Matrix::Zero(n, n);
    const Matrix dB = has_b ? Matrix(env.Mb * F * env.Nb) : Matrix::Zero(n, plant.m());

    LipschitzPlant out = plant;
    out.phi.evaluator = [dA, dB, inner = plant.phi.evaluator](const Vector& x, const Vector& u) {
        Vector v = dA * x;
        v += dB * u;
        v += inner(x, u);
        return v;
    };
    if (has_a) {
        out.phi.declared_lipschitz_bound += linalg::spectral_norm(env.Ma) * linalg::spectral_norm(env.Na);
    }
    if (dA.isZero(0.0) && dB.isZero(0.0)) return plant;
    out.phi.kind = "custom";
    out.phi.params.clear();
    return out;
}

/// Similarity change z = T x. The domain box becomes the interval hull of T * box and
/// the declared bound is inflated by cond(T).
inline LipschitzPlant transform_coordinates(const LipschitzPlant& plant, const Matrix& T, double max_condition = 1e12) {
    plant.validate();
    require_shape(T, plant.n(), plant.n(), "T");
    const double cond = linalg::condition_number(T);
    require(std::isfinite(cond) && cond <= max_condition, "transform_coordinates: T is singular or ill-conditioned");
    const Matrix Tinv = T.inverse();

    LipschitzPlant out;
    out.A = T * plant.A * Tinv;
    out.B = T * plant.B;
    out.C = plant.C * Tinv;
    out.D1 = T * plant.D1;
    out.D2 = plant.D2;
    out.Q1 = T * plant.Q1;
    out.Q2 = plant.Q2;
    out.phi = plant.phi;
    if (T.isIdentity(0.0)) return out;

    out.phi.evaluator = [T, Tinv, inner = plant.phi.evaluator](const Vector& z, const Vector& u) {
        return Vector(T * inner(Tinv * z, u));
    };
    out.phi.declared_lipschitz_bound = plant.phi.declared_lipschitz_bound * cond;
    std::vector<Interval> box(plant.phi.domain_box.size());
    for (Eigen::Index i = 0; i < T.rows(); ++i) {
        double lo = 0.0, hi = 0.0;
        for (Eigen::Index j = 0; j < T.cols(); ++j) {
            const auto& iv = plant.phi.domain_box[static_cast<std::size_t>(j)];
            const double a = T(i, j) * iv.lo, b = T(i, j) * iv.hi;
            lo += std::min(a, b);
            hi += std::max(a, b);
        }
        box[static_cast<std::size_t>(i)] = Interval{lo, hi};
    }
    out.phi.domain_box = std::move(box);
    out.phi.kind = "custom";
    out.phi.params.clear();
    return out;
}

}  // namespace lipfd
