#pragma once

// Small dense conic solver for problems in "LMI form":
//
//   minimize    c' v
//   subject to  F0_j + sum_i v_i F_ij  >= 0   (PSD, one block per j)
//               G v + h                >= 0   (nonnegative orthant)
//
// Solved by a primal-dual interior-point method on the standard primal-dual pair.
// A log-det barrier phase-I search classifies runs that stall. Sized for
// observer-synthesis problems (tens of variables, blocks of a few dozen rows);
// every Newton system is formed densely.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lipfd/linalg.hpp"

namespace lipfd::sdp {

/// F0 + sum_i v_i F[i] >= 0. Zero coefficient matrices may be left empty (size 0).
struct LmiConstraint {
    Matrix F0;
    std::vector<Matrix> F;

    [[nodiscard]] Eigen::Index dim() const { return F0.rows(); }

    [[nodiscard]] Matrix evaluate(const Vector& v) const {
        Matrix S = F0;
        for (std::size_t i = 0; i < F.size(); ++i) {
            if (F[i].size() != 0 && v(static_cast<Eigen::Index>(i)) != 0.0) S += v(static_cast<Eigen::Index>(i)) * F[i];
        }
        return S;
    }
};

struct ConicProblem {
    Vector c;
    std::vector<LmiConstraint> lmis;
    Matrix G;  // rows x num_vars, may be empty
    Vector h;

    [[nodiscard]] Eigen::Index num_vars() const { return c.size(); }

    /// Barrier parameter: total cone dimension.
    [[nodiscard]] double barrier_degree() const {
        double m = static_cast<double>(h.size());
        for (const auto& b : lmis) m += static_cast<double>(b.dim());
        return m;
    }

    void validate() const {
        for (const auto& b : lmis) {
            require(b.F0.rows() == b.F0.cols(), "sdp: F0 must be square");
            require(static_cast<Eigen::Index>(b.F.size()) == num_vars(), "sdp: coefficient count != num_vars");
            for (const auto& Fi : b.F) {
                require(Fi.size() == 0 || (Fi.rows() == b.dim() && Fi.cols() == b.dim()), "sdp: coefficient shape");
            }
        }
        require(G.rows() == h.size(), "sdp: G/h row mismatch");
        require(G.rows() == 0 || G.cols() == num_vars(), "sdp: G column mismatch");
    }
};

enum class Status { optimal, near_optimal, infeasible, unbounded, numerical_failure };

inline std::string to_string(Status s) {
    switch (s) {
        case Status::optimal: return "optimal";
        case Status::near_optimal: return "near_optimal";
        case Status::infeasible: return "infeasible";
        case Status::unbounded: return "unbounded";
        case Status::numerical_failure: return "numerical_failure";
    }
    return "unknown";
}

struct Options {
    double gap_tolerance = 1e-9;          // relative duality gap
    double feasibility_tolerance = 1e-9;  // relative primal/dual residuals
    double near_optimal_tolerance = 1e-6; // accepted when the iteration stalls
    int max_iterations = 120;
    int max_newton_iterations = 4000;     // phase-I budget
    double variable_bound = 1e8;          // |v_i| <= bound keeps the phase-I barrier bounded below
    bool trace = false;
};

struct Result {
    Status status = Status::numerical_failure;
    Vector x;
    double objective = std::numeric_limits<double>::quiet_NaN();
    double gap_bound = std::numeric_limits<double>::infinity();
    double phase1_margin = std::numeric_limits<double>::quiet_NaN();  // min slack found by phase I (negated)
    int newton_iterations = 0;  // interior-point iterations
    std::string message;
};

namespace detail {

struct Evaluation {
    bool feasible = false;
    double barrier = 0.0;  // -sum log det - sum log slack
    Vector grad;           // of the barrier only
    Matrix hess;
};

/// Barrier value; gradient and Hessian when `derivatives` is set.
inline Evaluation evaluate_barrier(const ConicProblem& p, const Vector& v, bool derivatives) {
    Evaluation out;
    const Eigen::Index nv = p.num_vars();
    if (derivatives) {
        out.grad = Vector::Zero(nv);
        out.hess = Matrix::Zero(nv, nv);
    }
    for (const auto& block : p.lmis) {
        const Matrix S = block.evaluate(v);
        Eigen::LLT<Matrix> llt(S);
        if (llt.info() != Eigen::Success) return out;
        const auto& Lf = llt.matrixL();
        double logdet = 0.0;
        for (Eigen::Index i = 0; i < S.rows(); ++i) {
            const double d = Lf(i, i);
            if (!(d > 0.0) || !std::isfinite(d)) return out;
            logdet += 2.0 * std::log(d);
        }
        out.barrier -= logdet;
        if (!derivatives) continue;
        // With S = L L', W_i = L^-1 F_i L^-T: grad_i = -tr(W_i), H_ab = tr(W_a W_b).
        std::vector<Matrix> W(static_cast<std::size_t>(nv));
        std::vector<Eigen::Index> active;
        for (Eigen::Index i = 0; i < nv; ++i) {
            const auto& Fi = block.F[static_cast<std::size_t>(i)];
            if (Fi.size() == 0) continue;
            Matrix tmp = llt.matrixL().solve(Fi);
            W[static_cast<std::size_t>(i)] = llt.matrixL().solve(tmp.transpose()).transpose();
            active.push_back(i);
        }
        for (std::size_t a = 0; a < active.size(); ++a) {
            const auto ia = active[a];
            const auto& Wa = W[static_cast<std::size_t>(ia)];
            out.grad(ia) -= Wa.trace();
            for (std::size_t b = a; b < active.size(); ++b) {
                const auto ib = active[b];
                const double hab = Wa.cwiseProduct(W[static_cast<std::size_t>(ib)].transpose()).sum();
                out.hess(ia, ib) += hab;
                if (ia != ib) out.hess(ib, ia) += hab;
            }
        }
    }
    if (p.h.size() > 0) {
        const Vector s = p.G * v + p.h;
        if ((s.array() <= 0.0).any() || !s.allFinite()) return out;
        out.barrier -= s.array().log().sum();
        if (derivatives) {
            const Vector inv = s.cwiseInverse();
            out.grad -= p.G.transpose() * inv;
            out.hess += p.G.transpose() * inv.cwiseAbs2().asDiagonal() * p.G;
        }
    }
    out.feasible = std::isfinite(out.barrier);
    return out;
}

struct CenteringOutcome {
    bool converged = false;
    int iterations = 0;
};

/// Newton centering on t c'v + barrier(v), starting from a strictly feasible v.
inline CenteringOutcome center(const ConicProblem& p, double t, Vector& v, int budget) {
    CenteringOutcome out;
    constexpr double alpha = 0.05;
    constexpr double shrink = 0.5;
    for (int it = 0; it < budget; ++it) {
        auto ev = evaluate_barrier(p, v, true);
        if (!ev.feasible) return out;
        const Vector grad = t * p.c + ev.grad;
        // Jacobi scaling keeps the factorization well conditioned across variable scales.
        Vector scale = ev.hess.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
        const Matrix Hs = scale.asDiagonal() * ev.hess * scale.asDiagonal();
        Eigen::LDLT<Matrix> ldlt(Hs);
        if (ldlt.info() != Eigen::Success) return out;
        Vector step = -(scale.asDiagonal() * ldlt.solve(scale.asDiagonal() * grad));
        if (!step.allFinite()) return out;
        const double decrement2 = -grad.dot(step);
        ++out.iterations;
        if (decrement2 < 0.0) return out;
        if (decrement2 * 0.5 <= 1e-10) {
            out.converged = true;
            return out;
        }
        const double f0 = t * p.c.dot(v) + ev.barrier;
        double s = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 80; ++ls) {
            const Vector trial = v + s * step;
            auto et = evaluate_barrier(p, trial, false);
            if (et.feasible && t * p.c.dot(trial) + et.barrier <= f0 - alpha * s * decrement2) {
                v = trial;
                accepted = true;
                break;
            }
            s *= shrink;
        }
        if (!accepted) {
            // No further decrease representable in double precision: treat as centered
            // if the decrement is already small relative to the barrier scale.
            out.converged = decrement2 < 1e-6;
            return out;
        }
    }
    return out;
}

inline ConicProblem with_variable_bounds(const ConicProblem& p, double bound) {
    ConicProblem out = p;
    const Eigen::Index nv = p.num_vars();
    const Eigen::Index rows = p.G.rows();
    Matrix G = Matrix::Zero(rows + 2 * nv, nv);
    Vector h(rows + 2 * nv);
    if (rows > 0) {
        G.topRows(rows) = p.G;
        h.head(rows) = p.h;
    }
    for (Eigen::Index i = 0; i < nv; ++i) {
        G(rows + 2 * i, i) = 1.0;
        h(rows + 2 * i) = bound;
        G(rows + 2 * i + 1, i) = -1.0;
        h(rows + 2 * i + 1) = bound;
    }
    out.G = std::move(G);
    out.h = std::move(h);
    return out;
}

/// min s  s.t. every cone of p shifted by s*I (or +s) is feasible, s >= -1.
inline ConicProblem phase_one(const ConicProblem& p) {
    const Eigen::Index nv = p.num_vars();
    ConicProblem q;
    q.c = Vector::Zero(nv + 1);
    q.c(nv) = 1.0;
    for (const auto& b : p.lmis) {
        LmiConstraint nb;
        nb.F0 = b.F0;
        nb.F = b.F;
        nb.F.push_back(Matrix::Identity(b.dim(), b.dim()));
        q.lmis.push_back(std::move(nb));
    }
    const Eigen::Index rows = p.G.rows();
    q.G = Matrix::Zero(rows + 1, nv + 1);
    q.h = Vector::Zero(rows + 1);
    if (rows > 0) {
        q.G.topLeftCorner(rows, nv) = p.G;
        q.G.block(0, nv, rows, 1).setOnes();
        q.h.head(rows) = p.h;
    }
    q.G(rows, nv) = 1.0;
    q.h(rows) = 1.0;
    return q;
}

/// Smallest s such that v is feasible for the shifted cones.
inline double required_shift(const ConicProblem& p, const Vector& v) {
    double shift = -std::numeric_limits<double>::infinity();
    for (const auto& b : p.lmis) shift = std::max(shift, -linalg::min_eigenvalue(linalg::symmetrize(b.evaluate(v))));
    if (p.h.size() > 0) shift = std::max(shift, -(p.G * v + p.h).minCoeff());
    return shift;
}

/// Minimum uniform shift s such that every cone of p, relaxed by s, has an interior
/// point; negative means p is strictly feasible.
inline double phase_one_shift(const ConicProblem& problem, int budget = 4000, double variable_bound = 1e8) {
    const ConicProblem p = with_variable_bounds(problem, variable_bound);
    const ConicProblem q = phase_one(p);
    const Eigen::Index nv = p.num_vars();
    Vector w = Vector::Zero(nv + 1);
    w(nv) = std::max(required_shift(p, w.head(nv)), -0.5) + 1.0;
    const double mq = q.barrier_degree();
    double t = 1.0;
    int used = 0;
    for (int outer = 0; outer < 200 && used < budget; ++outer) {
        auto c = center(q, t, w, budget - used);
        used += c.iterations;
        if (w(nv) < 0.0) break;
        if (mq / t < 1e-10 * std::max(1.0, std::abs(w(nv)))) break;
        t *= 10.0;
    }
    return w(nv);
}

}  // namespace detail

namespace detail {

/// Block-diagonal symmetric matrix: one dense block per PSD cone.
using BlockMatrix = std::vector<Matrix>;

inline double block_dot(const BlockMatrix& a, const BlockMatrix& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j].cwiseProduct(b[j]).sum();
    return s;
}

inline double block_norm(const BlockMatrix& a) { return std::sqrt(block_dot(a, a)); }

/// Largest alpha in (0, inf] keeping X + alpha dX positive semidefinite.
inline double max_step(const BlockMatrix& X, const BlockMatrix& dX) {
    double alpha = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < X.size(); ++j) {
        Eigen::LLT<Matrix> llt(X[j]);
        if (llt.info() != Eigen::Success) return 0.0;
        Matrix tmp = llt.matrixL().solve(dX[j]);
        Matrix W = llt.matrixL().solve(tmp.transpose()).transpose();
        const double lmin = linalg::min_eigenvalue(linalg::symmetrize(W));
        if (lmin < 0.0) alpha = std::min(alpha, -1.0 / lmin);
    }
    return alpha;
}

/// Problem restated in the standard primal-dual pair
///   (P) max <C, X>  s.t. <A_i, X> = a_i, X >= 0
///   (D) min a'y     s.t. Z = sum_i y_i A_i - C >= 0
/// with y = v, a = c, A_i = F_i, C = -F0. Linear rows become 1x1 blocks.
struct StandardForm {
    Vector a;
    BlockMatrix C;
    std::vector<BlockMatrix> A;                       // A[i][j]
    std::vector<std::vector<std::size_t>> active;     // blocks where A_i is nonzero

    explicit StandardForm(const ConicProblem& p) {
        const auto nv = p.num_vars();
        a = p.c;
        for (const auto& b : p.lmis) C.push_back(-b.F0);
        for (Eigen::Index r = 0; r < p.h.size(); ++r) C.push_back(Matrix::Constant(1, 1, -p.h(r)));
        A.resize(static_cast<std::size_t>(nv));
        active.resize(static_cast<std::size_t>(nv));
        for (Eigen::Index i = 0; i < nv; ++i) {
            auto& Ai = A[static_cast<std::size_t>(i)];
            for (std::size_t j = 0; j < p.lmis.size(); ++j) {
                const auto& F = p.lmis[j].F[static_cast<std::size_t>(i)];
                if (F.size() != 0 && !F.isZero(0.0)) {
                    Ai.push_back(F);
                    active[static_cast<std::size_t>(i)].push_back(j);
                } else {
                    Ai.push_back(Matrix::Zero(C[j].rows(), C[j].cols()));
                }
            }
            for (Eigen::Index r = 0; r < p.h.size(); ++r) {
                const std::size_t j = p.lmis.size() + static_cast<std::size_t>(r);
                Ai.push_back(Matrix::Constant(1, 1, p.G(r, i)));
                if (p.G(r, i) != 0.0) active[static_cast<std::size_t>(i)].push_back(j);
            }
        }
    }

    [[nodiscard]] Eigen::Index m() const { return a.size(); }

    [[nodiscard]] Vector apply(const BlockMatrix& X) const {
        Vector out = Vector::Zero(m());
        for (Eigen::Index i = 0; i < m(); ++i) {
            for (auto j : active[static_cast<std::size_t>(i)]) {
                out(i) += A[static_cast<std::size_t>(i)][j].cwiseProduct(X[j]).sum();
            }
        }
        return out;
    }

    [[nodiscard]] BlockMatrix adjoint(const Vector& y) const {
        BlockMatrix out;
        for (const auto& Cj : C) out.push_back(Matrix::Zero(Cj.rows(), Cj.cols()));
        for (Eigen::Index i = 0; i < m(); ++i) {
            for (auto j : active[static_cast<std::size_t>(i)]) out[j] += y(i) * A[static_cast<std::size_t>(i)][j];
        }
        return out;
    }
};

}  // namespace detail

/// Solves `problem` with an infeasible-start primal-dual interior-point method
/// (HKM direction, Mehrotra predictor-corrector). Never throws on numerical
/// trouble; the status reports it.
inline Result solve(const ConicProblem& problem, const Options& opts = {}) {
    problem.validate();
    Result result;
    const detail::StandardForm sf(problem);
    const Eigen::Index m = sf.m();
    const std::size_t nb = sf.C.size();
    double total_dim = 0.0;
    for (const auto& Cj : sf.C) total_dim += static_cast<double>(Cj.rows());

    double max_a_norm = 0.0, xi_ratio = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double an = detail::block_norm(sf.A[static_cast<std::size_t>(i)]);
        max_a_norm = std::max(max_a_norm, an);
        xi_ratio = std::max(xi_ratio, (1.0 + std::abs(sf.a(i))) / (1.0 + an));
    }
    const double c_norm = detail::block_norm(sf.C);
    const double a_norm = sf.a.norm();
    const double xi = std::max({10.0, std::sqrt(total_dim), total_dim * xi_ratio});
    const double eta = std::max({10.0, std::sqrt(total_dim), max_a_norm, c_norm});

    detail::BlockMatrix X, Z;
    for (const auto& Cj : sf.C) {
        X.push_back(xi * Matrix::Identity(Cj.rows(), Cj.rows()));
        Z.push_back(eta * Matrix::Identity(Cj.rows(), Cj.rows()));
    }
    Vector y = Vector::Zero(m);

    constexpr double step_fraction = 0.95;
    double best_merit = std::numeric_limits<double>::infinity();
    Vector best_y = y;
    int since_best = 0;

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        result.newton_iterations = iter;
        // Residuals.
        const Vector AX = sf.apply(X);
        const Vector rp = sf.a - AX;
        detail::BlockMatrix ATy = sf.adjoint(y);
        detail::BlockMatrix Rd(nb);
        for (std::size_t j = 0; j < nb; ++j) Rd[j] = sf.C[j] - ATy[j] + Z[j];
        const double pobj = detail::block_dot(sf.C, X);
        const double dobj = sf.a.dot(y);
        const double mu = detail::block_dot(X, Z) / total_dim;
        const double pinf = rp.norm() / (1.0 + a_norm);
        const double dinf = detail::block_norm(Rd) / (1.0 + c_norm);
        const double relgap = std::abs(dobj - pobj) / (1.0 + std::abs(pobj) + std::abs(dobj));

        if (opts.trace) {
            std::fprintf(stderr, "it=%3d pobj=% .10e dobj=% .10e gap=%.2e pinf=%.2e dinf=%.2e mu=%.2e\n", iter, pobj,
                         dobj, relgap, pinf, dinf, mu);
        }
        const double merit = std::max({relgap, pinf, dinf});
        if (dinf < 1e-6 && merit < best_merit) {
            best_merit = merit;
            best_y = y;
            since_best = 0;
        } else if (best_merit <= opts.near_optimal_tolerance && ++since_best > 8) {
            break;
        }
        result.objective = dobj;
        result.gap_bound = std::abs(dobj - pobj);
        if (relgap <= opts.gap_tolerance && pinf <= opts.feasibility_tolerance && dinf <= opts.feasibility_tolerance) {
            result.status = Status::optimal;
            result.x = y;
            return result;
        }
        // Certificates of infeasibility (homogeneous rays).
        const double xnorm = detail::block_norm(X);
        if (pobj > 0.0 && xnorm > 1e6 * xi && AX.norm() / pobj < 1e-8 * (1.0 + max_a_norm)) {
            result.status = Status::infeasible;
            result.x = y;
            result.message = "primal ray: <C,X>/||A(X)|| unbounded";
            return result;
        }
        if (dobj < 0.0 && y.norm() > 1e8) {
            detail::BlockMatrix ray = sf.adjoint(y);
            double lmin = std::numeric_limits<double>::infinity();
            for (const auto& Rj : ray) lmin = std::min(lmin, linalg::min_eigenvalue(linalg::symmetrize(Rj)));
            if (lmin >= -1e-8 * std::abs(dobj)) {
                result.status = Status::unbounded;
                result.x = y;
                result.message = "dual ray: objective decreases along a feasible direction";
                return result;
            }
        }

        // Schur complement M_ab = <A_a, X A_b Z^-1>, HKM direction.
        detail::BlockMatrix Zinv(nb);
        bool ok = true;
        for (std::size_t j = 0; j < nb; ++j) {
            Eigen::LLT<Matrix> llt(Z[j]);
            if (llt.info() != Eigen::Success) { ok = false; break; }
            Zinv[j] = llt.solve(Matrix::Identity(Z[j].rows(), Z[j].cols()));
        }
        if (!ok) break;
        Matrix M = Matrix::Zero(m, m);
        {
            std::vector<detail::BlockMatrix> T(static_cast<std::size_t>(m));
            for (Eigen::Index b = 0; b < m; ++b) {
                auto& Tb = T[static_cast<std::size_t>(b)];
                Tb.resize(nb);
                for (auto j : sf.active[static_cast<std::size_t>(b)]) {
                    Tb[j] = X[j] * sf.A[static_cast<std::size_t>(b)][j] * Zinv[j];
                }
            }
            for (Eigen::Index a = 0; a < m; ++a) {
                for (Eigen::Index b = a; b < m; ++b) {
                    double s = 0.0;
                    for (auto j : sf.active[static_cast<std::size_t>(a)]) {
                        const auto& Tb = T[static_cast<std::size_t>(b)][j];
                        if (Tb.size() == 0) continue;
                        s += sf.A[static_cast<std::size_t>(a)][j].cwiseProduct(Tb.transpose()).sum();
                    }
                    M(a, b) = s;
                    M(b, a) = s;
                }
            }
        }
        const Vector scale = M.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
        const Matrix Ms = scale.asDiagonal() * M * scale.asDiagonal();
        Eigen::LDLT<Matrix> schur(Ms);
        if (schur.info() != Eigen::Success) break;

        // Solves for (dX, dy, dZ) given the complementarity target R (XZ + ... = R).
        auto direction = [&](const detail::BlockMatrix& target, detail::BlockMatrix& dX, Vector& dy,
                             detail::BlockMatrix& dZ) {
            detail::BlockMatrix G(nb);
            for (std::size_t j = 0; j < nb; ++j) G[j] = target[j] * Zinv[j] - X[j] + X[j] * Rd[j] * Zinv[j];
            const Vector rhs = sf.apply(G) - rp;
            dy = scale.asDiagonal() * schur.solve(scale.asDiagonal() * rhs);
            dZ = sf.adjoint(dy);
            for (std::size_t j = 0; j < nb; ++j) dZ[j] -= Rd[j];
            dX.resize(nb);
            for (std::size_t j = 0; j < nb; ++j) dX[j] = linalg::symmetrize(G[j] - X[j] * dZ[j] * Zinv[j]);
        };

        // Predictor.
        detail::BlockMatrix zero_target(nb), dXa, dZa;
        for (std::size_t j = 0; j < nb; ++j) zero_target[j] = Matrix::Zero(X[j].rows(), X[j].cols());
        Vector dya;
        direction(zero_target, dXa, dya, dZa);
        const double ap = std::min(1.0, detail::max_step(X, dXa));
        const double ad = std::min(1.0, detail::max_step(Z, dZa));
        double mu_aff = 0.0;
        for (std::size_t j = 0; j < nb; ++j) mu_aff += (X[j] + ap * dXa[j]).cwiseProduct(Z[j] + ad * dZa[j]).sum();
        mu_aff /= total_dim;
        const double sigma = std::clamp(std::pow(mu_aff / std::max(mu, 1e-300), 3.0), 0.0, 1.0);

        // Corrector.
        detail::BlockMatrix target(nb), dX, dZ;
        for (std::size_t j = 0; j < nb; ++j) {
            target[j] = sigma * mu * Matrix::Identity(X[j].rows(), X[j].cols()) - dXa[j] * dZa[j];
        }
        Vector dy;
        direction(target, dX, dy, dZ);
        if (!dy.allFinite()) break;
        const double alpha_p = std::min(1.0, step_fraction * detail::max_step(X, dX));
        const double alpha_d = std::min(1.0, step_fraction * detail::max_step(Z, dZ));
        if (alpha_p < 1e-12 && alpha_d < 1e-12) break;
        for (std::size_t j = 0; j < nb; ++j) {
            X[j] += alpha_p * dX[j];
            Z[j] += alpha_d * dZ[j];
        }
        y += alpha_d * dy;
    }

    // Stalled: accept the best dual-feasible iterate when it is close enough.
    result.x = best_y;
    result.objective = sf.a.dot(best_y);
    if (best_merit <= opts.near_optimal_tolerance) {
        result.status = Status::near_optimal;
        result.message = "stalled near optimum";
        return result;
    }
    // Classify a stall: a phase-I search tells an infeasible problem from numerical trouble.
    const double shift = detail::phase_one_shift(problem);
    result.phase1_margin = -shift;
    result.status = shift >= 0.0 ? Status::infeasible : Status::numerical_failure;
    result.message = shift >= 0.0 ? "no strictly feasible point (phase I)" : "interior-point iteration stalled";
    return result;
}

}  // namespace lipfd::sdp
