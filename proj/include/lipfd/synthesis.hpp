#pragma once

// Robust H-infinity observer synthesis for Lipschitz systems.
//
// The error system e' = (A - LC) e + (phi - phi_hat) + (D1 - L D2) d with output
// e_y = C e + D2 d is certified by V = e'Pe with decay rate beta, Lipschitz
// constant gamma and L2 gain mu = sqrt(eps). The inequality is posed over five
// block rows (e, lips, pp, proj, dist) and the gain is recovered as L = X^-T N.
//
// Two layouts of the block LMI are provided:
//   printed - the projection multiplier acts only on the e' row. Its (e, e) block
//             C'C + 2 beta P is positive definite for every P > 0, so the LMI has no
//             solution; kept so it can be assembled, audited and shown infeasible.
//   dilated - the multiplier [X; lambda X; 0] acts on both e and e' rows, which adds
//             X'A_cl + A_cl'X to the (e, e) block and -X' to the (e, proj) block.
//             This is the form used for synthesis.

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lipfd/linalg.hpp"
#include "lipfd/model.hpp"
#include "lipfd/sdp.hpp"

namespace lipfd {

enum class LmiForm { printed, dilated };

inline std::string to_string(LmiForm f) { return f == LmiForm::printed ? "printed" : "dilated"; }

inline LmiForm parse_lmi_form(const std::string& s) {
    if (s == "printed") return LmiForm::printed;
    if (s == "dilated") return LmiForm::dilated;
    throw ContractViolation("unknown LMI form '" + s + "'");
}

struct SynthesisProblem {
    Matrix A, C, D1, D2;
    double beta = 1.0;
    double lambda = 0.2;
    double delta = 1e-7;

    [[nodiscard]] Eigen::Index n() const { return A.rows(); }
    [[nodiscard]] Eigen::Index l() const { return C.rows(); }
    [[nodiscard]] Eigen::Index k1() const { return D1.cols(); }

    /// Strictness margin 1e-7 * (1 + ||A||_F).
    static double default_delta(const Matrix& A) { return 1e-7 * (1.0 + A.norm()); }

    static SynthesisProblem from_plant(const LipschitzPlant& plant, double beta = 1.0, double lambda = 0.2) {
        SynthesisProblem p{plant.A, plant.C, plant.D1, plant.D2, beta, lambda, default_delta(plant.A)};
        p.validate();
        return p;
    }

    void validate() const {
        require(beta > 0.0, "synthesis: beta must be positive");
        require(lambda > 0.0, "synthesis: lambda must be positive");
        require(delta > 0.0, "synthesis: delta must be positive");
        require_shape(A, n(), n(), "A");
        require_shape(C, l(), n(), "C");
        require_shape(D1, n(), k1(), "D1");
        require_shape(D2, l(), k1(), "D2");
    }
};

/// Values of the decision variables (P, X, N, eps, gamma).
struct Decision {
    Matrix P, X, N;
    double eps = 0.0;
    double gamma = 0.0;
};

/// Positions of the decision variables in the stacked vector
/// [svec(P), vec(X), vec(N), eps, gamma]; X and N are stacked column-major.
struct VariableLayout {
    Eigen::Index n = 0, l = 0;

    [[nodiscard]] Eigen::Index p_count() const { return static_cast<Eigen::Index>(linalg::svec_size(static_cast<std::size_t>(n))); }
    [[nodiscard]] Eigen::Index x_offset() const { return p_count(); }
    [[nodiscard]] Eigen::Index n_offset() const { return x_offset() + n * n; }
    [[nodiscard]] Eigen::Index eps_index() const { return n_offset() + n * l; }
    [[nodiscard]] Eigen::Index gamma_index() const { return eps_index() + 1; }
    [[nodiscard]] Eigen::Index size() const { return gamma_index() + 1; }

    [[nodiscard]] Vector pack(const Decision& d) const {
        Vector v(size());
        v.head(p_count()) = linalg::svec(d.P);
        v.segment(x_offset(), n * n) = Eigen::Map<const Vector>(d.X.data(), n * n);
        v.segment(n_offset(), n * l) = Eigen::Map<const Vector>(d.N.data(), n * l);
        v(eps_index()) = d.eps;
        v(gamma_index()) = d.gamma;
        return v;
    }

    [[nodiscard]] Decision unpack(const Vector& v) const {
        require_size(v, size(), "decision vector");
        Decision d;
        d.P = linalg::smat(v.head(p_count()), n);
        d.X = Eigen::Map<const Matrix>(v.data() + x_offset(), n, n);
        d.N = Eigen::Map<const Matrix>(v.data() + n_offset(), n, l);
        d.eps = v(eps_index());
        d.gamma = v(gamma_index());
        return d;
    }

    [[nodiscard]] std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i <= j; ++i) out.push_back("P[" + std::to_string(i) + "," + std::to_string(j) + "]");
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < n; ++i) out.push_back("X[" + std::to_string(i) + "," + std::to_string(j) + "]");
        for (Eigen::Index j = 0; j < l; ++j)
            for (Eigen::Index i = 0; i < n; ++i) out.push_back("N[" + std::to_string(i) + "," + std::to_string(j) + "]");
        out.emplace_back("eps");
        out.emplace_back("gamma");
        return out;
    }
};

namespace detail {

/// Block LMI at the given decision values. With `with_constant` false only the part
/// that is linear in the decision variables is produced.
inline Matrix lmi_blocks(const SynthesisProblem& p, LmiForm form, const Decision& d, bool with_constant) {
    const auto n = p.n(), k = p.k1();
    const double lam = p.lambda;
    const double c = with_constant ? 1.0 : 0.0;
    const Matrix I = Matrix::Identity(n, n);

    const Matrix XA = d.X.transpose() * p.A - d.N * p.C;    // X' A_cl with N = X' L
    const Matrix XD = d.X.transpose() * p.D1 - d.N * p.D2;  // X' D_cl

    Matrix b11 = c * p.C.transpose() * p.C + 2.0 * p.beta * d.P;
    Matrix b14 = d.P + lam * XA.transpose();
    Matrix b15 = c * p.C.transpose() * p.D2;
    if (form == LmiForm::dilated) {
        b11 += XA + XA.transpose();
        b14 -= d.X.transpose();
        b15 += XD;
    }

    Matrix M = Matrix::Zero(4 * n + k, 4 * n + k);
    M.block(0, 0, n, n) = b11;
    M.block(0, n, n, n) = d.gamma * I;
    M.block(0, 2 * n, n, n) = d.P;
    M.block(0, 3 * n, n, n) = b14;
    M.block(0, 4 * n, n, k) = b15;
    M.block(n, n, n, n) = -c * I;
    M.block(2 * n, 2 * n, n, n) = -c * I;
    M.block(3 * n, 3 * n, n, n) = -lam * (d.X + d.X.transpose());
    M.block(3 * n, 4 * n, n, k) = lam * XD;
    M.block(4 * n, 4 * n, k, k) = c * p.D2.transpose() * p.D2 - d.eps * Matrix::Identity(k, k);
    // Symmetric completion.
    M.triangularView<Eigen::StrictlyLower>() = M.transpose().triangularView<Eigen::StrictlyLower>();
    return M;
}

}  // namespace detail

/// The block LMI as an affine matrix function M(v) = constant + sum_i v_i coefficients[i].
struct LmiBlockSpec {
    struct Triplet {
        Eigen::Index row, col;
        std::string variable;  // decision-variable name or "const"
        double coefficient;
    };

    LmiForm form = LmiForm::dilated;
    std::vector<std::pair<std::string, Eigen::Index>> block_rows;
    VariableLayout layout;
    Matrix constant;
    std::vector<Matrix> coefficients;

    [[nodiscard]] Eigen::Index size() const { return constant.rows(); }

    [[nodiscard]] Matrix evaluate(const Vector& v) const {
        require_size(v, layout.size(), "LMI decision vector");
        Matrix M = constant;
        for (std::size_t i = 0; i < coefficients.size(); ++i) M += v(static_cast<Eigen::Index>(i)) * coefficients[i];
        return M;
    }

    [[nodiscard]] Matrix evaluate(const Decision& d) const { return evaluate(layout.pack(d)); }

    /// Nonzero upper-triangle entries, 0-based indices.
    [[nodiscard]] std::vector<Triplet> triplets() const {
        std::vector<Triplet> out;
        const auto names = layout.names();
        for (Eigen::Index j = 0; j < size(); ++j) {
            for (Eigen::Index i = 0; i <= j; ++i) {
                if (constant(i, j) != 0.0) out.push_back({i, j, "const", constant(i, j)});
                for (std::size_t v = 0; v < coefficients.size(); ++v) {
                    const double a = coefficients[v](i, j);
                    if (a != 0.0) out.push_back({i, j, names[v], a});
                }
            }
        }
        return out;
    }

    void write_triplets(std::ostream& os) const {
        os << "# lipfd LMI triplets: form=" << to_string(form) << " size=" << size() << " vars=" << layout.size() << "\n";
        os << "# row col variable coefficient (0-based, upper triangle)\n";
        char buf[64];
        for (const auto& t : triplets()) {
            std::snprintf(buf, sizeof buf, "%.17g", t.coefficient);
            os << t.row << ' ' << t.col << ' ' << t.variable << ' ' << buf << '\n';
        }
    }
};

inline LmiBlockSpec assemble_lmi(const SynthesisProblem& p, LmiForm form = LmiForm::printed) {
    p.validate();
    LmiBlockSpec spec;
    spec.form = form;
    spec.block_rows = {{"e", p.n()}, {"lips", p.n()}, {"pp", p.n()}, {"proj", p.n()}, {"dist", p.k1()}};
    spec.layout = VariableLayout{p.n(), p.l()};
    const Vector zero = Vector::Zero(spec.layout.size());
    spec.constant = detail::lmi_blocks(p, form, spec.layout.unpack(zero), true);
    spec.coefficients.reserve(static_cast<std::size_t>(spec.layout.size()));
    for (Eigen::Index i = 0; i < spec.layout.size(); ++i) {
        Vector e = zero;
        e(i) = 1.0;
        spec.coefficients.push_back(detail::lmi_blocks(p, form, spec.layout.unpack(e), false));
    }
    return spec;
}

struct CertificateReport {
    double lmi_max_eig = std::numeric_limits<double>::quiet_NaN();
    double preschur_max_eig = std::numeric_limits<double>::quiet_NaN();
    double closedloop_spectral_abscissa = std::numeric_limits<double>::quiet_NaN();
    double decay_max_eig = std::numeric_limits<double>::quiet_NaN();
    /// Null-space compressed dissipation inequality N_U' Z N_U (informational).
    double projection_max_eig = std::numeric_limits<double>::quiet_NaN();
    bool pass = false;
};

using SolverStatus = sdp::Status;

struct ObserverDesign {
    Matrix L, P, X, N;
    double epsilon = 0.0;
    double mu = 0.0;
    double gamma = 0.0;
    SolverStatus solver_status = SolverStatus::numerical_failure;
    LmiForm form = LmiForm::dilated;
    CertificateReport certificates;
    std::string solver_message;

    [[nodiscard]] bool usable() const {
        return solver_status == SolverStatus::optimal || solver_status == SolverStatus::near_optimal;
    }

    [[nodiscard]] Decision decision() const { return Decision{P, X, N, epsilon, gamma}; }
};

struct SynthesisOptions {
    LmiForm form = LmiForm::dilated;
    double objective_weight = 1.0;  // minimize eps - w * gamma
    sdp::Options solver;
};

/// Dissipation matrix Z of the e/e'/d quadratic form, and U = [A_cl, -I, D_cl].
inline Matrix dissipation_matrix(const SynthesisProblem& p, const Decision& d) {
    const auto n = p.n(), k = p.k1();
    Matrix Z = Matrix::Zero(2 * n + k, 2 * n + k);
    Z.block(0, 0, n, n) = p.C.transpose() * p.C + 2.0 * p.beta * d.P + d.P * d.P +
                          d.gamma * d.gamma * Matrix::Identity(n, n);
    Z.block(0, n, n, n) = d.P;
    Z.block(n, 0, n, n) = d.P;
    Z.block(0, 2 * n, n, k) = p.C.transpose() * p.D2;
    Z.block(2 * n, 0, k, n) = p.D2.transpose() * p.C;
    Z.block(2 * n, 2 * n, k, k) = p.D2.transpose() * p.D2 - d.eps * Matrix::Identity(k, k);
    return Z;
}

/// Pre-Schur inequality rebuilt from the recovered gain: PP and gamma^2 I appear
/// explicitly, A_cl = A - LC and D_cl = D1 - L D2.
inline Matrix preschur_matrix(const SynthesisProblem& p, LmiForm form, const Decision& d, const Matrix& L) {
    const auto n = p.n(), k = p.k1();
    const Matrix Acl = p.A - L * p.C;
    const Matrix Dcl = p.D1 - L * p.D2;
    Matrix b11 = 2.0 * p.beta * d.P + d.P * d.P + d.gamma * d.gamma * Matrix::Identity(n, n) + p.C.transpose() * p.C;
    Matrix b12 = d.P + p.lambda * Acl.transpose() * d.X;
    Matrix b13 = p.C.transpose() * p.D2;
    if (form == LmiForm::dilated) {
        b11 += Acl.transpose() * d.X + d.X.transpose() * Acl;
        b12 -= d.X.transpose();
        b13 += d.X.transpose() * Dcl;
    }
    Matrix M(2 * n + k, 2 * n + k);
    M.block(0, 0, n, n) = b11;
    M.block(0, n, n, n) = b12;
    M.block(0, 2 * n, n, k) = b13;
    M.block(n, n, n, n) = -p.lambda * (d.X + d.X.transpose());
    M.block(n, 2 * n, n, k) = p.lambda * d.X.transpose() * Dcl;
    M.block(2 * n, 2 * n, k, k) = p.D2.transpose() * p.D2 - d.eps * Matrix::Identity(k, k);
    M.triangularView<Eigen::StrictlyLower>() = M.transpose().triangularView<Eigen::StrictlyLower>();
    return M;
}

inline CertificateReport verify_certificates(const SynthesisProblem& p, const ObserverDesign& design) {
    require(design.usable(), "verify_certificates: design has no solution");
    CertificateReport r;
    const Decision d = design.decision();
    const Matrix Acl = p.A - design.L * p.C;
    const Matrix Dcl = p.D1 - design.L * p.D2;

    r.lmi_max_eig = linalg::max_eigenvalue(linalg::symmetrize(assemble_lmi(p, design.form).evaluate(d)));
    r.preschur_max_eig = linalg::max_eigenvalue(linalg::symmetrize(preschur_matrix(p, design.form, d, design.L)));
    r.closedloop_spectral_abscissa = linalg::spectral_abscissa(Acl);
    r.decay_max_eig = linalg::max_eigenvalue(linalg::symmetrize(
        Acl.transpose() * d.P + d.P * Acl + 2.0 * p.beta * d.P + d.P * d.P +
        d.gamma * d.gamma * Matrix::Identity(p.n(), p.n())));

    Matrix U(p.n(), 2 * p.n() + p.k1());
    U << Acl, -Matrix::Identity(p.n(), p.n()), Dcl;
    const Matrix NU = linalg::null_space(U);
    r.projection_max_eig =
        linalg::max_eigenvalue(linalg::symmetrize(NU.transpose() * dissipation_matrix(p, d) * NU));

    r.pass = r.lmi_max_eig < 0.0 && r.preschur_max_eig < 0.0 && r.closedloop_spectral_abscissa < 0.0 &&
             r.decay_max_eig < 0.0;
    return r;
}

inline sdp::ConicProblem build_conic_problem(const SynthesisProblem& p, const SynthesisOptions& opts) {
    const LmiBlockSpec spec = assemble_lmi(p, opts.form);
    const VariableLayout& layout = spec.layout;
    const auto nv = layout.size();
    sdp::ConicProblem cp;
    cp.c = Vector::Zero(nv);
    cp.c(layout.eps_index()) = 1.0;
    cp.c(layout.gamma_index()) = -opts.objective_weight;

    // -M(v) - delta I >= 0
    sdp::LmiConstraint lmi;
    lmi.F0 = -spec.constant - p.delta * Matrix::Identity(spec.size(), spec.size());
    lmi.F.resize(static_cast<std::size_t>(nv));
    for (Eigen::Index i = 0; i < nv; ++i) {
        const auto& Mi = spec.coefficients[static_cast<std::size_t>(i)];
        if (!Mi.isZero(0.0)) lmi.F[static_cast<std::size_t>(i)] = -Mi;
    }
    cp.lmis.push_back(std::move(lmi));

    // P - delta I >= 0
    sdp::LmiConstraint pos;
    const auto n = p.n();
    pos.F0 = -p.delta * Matrix::Identity(n, n);
    pos.F.resize(static_cast<std::size_t>(nv));
    for (Eigen::Index i = 0; i < layout.p_count(); ++i) {
        Vector e = Vector::Zero(layout.p_count());
        e(i) = 1.0;
        pos.F[static_cast<std::size_t>(i)] = linalg::smat(e, n);
    }
    cp.lmis.push_back(std::move(pos));

    // eps - delta >= 0, gamma >= 0
    cp.G = Matrix::Zero(2, nv);
    cp.h = Vector::Zero(2);
    cp.G(0, layout.eps_index()) = 1.0;
    cp.h(0) = -p.delta;
    cp.G(1, layout.gamma_index()) = 1.0;
    return cp;
}

/// min eps - w gamma subject to the block LMI; recovers L = X^-T N and mu = sqrt(eps)
/// and attaches the certificate report.
inline ObserverDesign solve_design(const SynthesisProblem& p, const SynthesisOptions& opts = {}) {
    p.validate();
    const auto cp = build_conic_problem(p, opts);
    const auto res = sdp::solve(cp, opts.solver);
    const VariableLayout layout{p.n(), p.l()};

    ObserverDesign design;
    design.form = opts.form;
    design.solver_status = res.status;
    design.solver_message = res.message;
    if (res.x.size() == layout.size()) {
        const Decision d = layout.unpack(res.x);
        design.P = d.P;
        design.X = d.X;
        design.N = d.N;
        design.epsilon = d.eps;
        design.gamma = d.gamma;
        design.mu = std::sqrt(std::max(0.0, d.eps));
    }
    if (!design.usable()) {
        design.L.resize(0, 0);
        return design;
    }
    Eigen::FullPivLU<Matrix> lu(design.X.transpose());
    if (!lu.isInvertible()) {
        design.solver_status = SolverStatus::numerical_failure;
        design.solver_message = "X is singular; gain cannot be recovered";
        design.L.resize(0, 0);
        return design;
    }
    design.L = lu.solve(design.N);
    design.certificates = verify_certificates(p, design);
    return design;
}

/// True iff the plant's declared Lipschitz bound is covered by the synthesized gamma.
inline bool lipschitz_margin_check(const ObserverDesign& design, const LipschitzPlant& plant) {
    require(design.certificates.pass, "lipschitz_margin_check: design certificates do not pass");
    return plant.phi.declared_lipschitz_bound <= design.gamma;
}

}  // namespace lipfd
