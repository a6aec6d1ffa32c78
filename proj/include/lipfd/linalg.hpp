#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <algorithm>
#include <limits>

#include <Eigen/Dense>

namespace lipfd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown when an operation's preconditions (dimensions, ranges) are not met.
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ContractViolation(message);
}

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ContractViolation(std::string(name) + ": expected " + std::to_string(rows) + "x" +
                                std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()));
    }
}

inline void require_size(const Vector& v, Eigen::Index n, const char* name) {
    if (v.size() != n) {
        throw ContractViolation(std::string(name) + ": expected length " + std::to_string(n) + ", got " +
                                std::to_string(v.size()));
    }
}

namespace linalg {

inline double spectral_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

inline double condition_number(const Matrix& m) {
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    const double smin = s(s.size() - 1);
    return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

inline double max_eigenvalue(const Matrix& symmetric) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

inline double min_eigenvalue(const Matrix& symmetric) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// Largest real part over the spectrum of a general square matrix.
inline double spectral_abscissa(const Matrix& m) {
    Eigen::EigenSolver<Matrix> es(m, false);
    return es.eigenvalues().real().maxCoeff();
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline bool is_symmetric(const Matrix& m, double tol = 0.0) {
    return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

/// Length of the scaled upper-triangle stacking of an n x n symmetric matrix.
constexpr std::size_t svec_size(std::size_t n) { return n * (n + 1) / 2; }

/// Scaled upper-triangle stacking, column by column: off-diagonal entries carry a
/// factor sqrt(2) so that svec(A).dot(svec(B)) == trace(A * B).
inline Vector svec(const Matrix& s) {
    const auto n = s.rows();
    Vector out(static_cast<Eigen::Index>(svec_size(static_cast<std::size_t>(n))));
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i <= j; ++i) {
            out(k++) = (i == j) ? s(i, j) : std::sqrt(2.0) * s(i, j);
        }
    }
    return out;
}

inline Matrix smat(const Vector& v, Eigen::Index n) {
    require(static_cast<std::size_t>(v.size()) == svec_size(static_cast<std::size_t>(n)), "smat: length mismatch");
    Matrix s(n, n);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i <= j; ++i) {
            const double value = (i == j) ? v(k) : v(k) / std::sqrt(2.0);
            s(i, j) = value;
            s(j, i) = value;
            ++k;
        }
    }
    return s;
}

/// Orthonormal basis for the null space of m (columns), via SVD.
inline Matrix null_space(const Matrix& m, double rel_tol = 1e-12) {
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const double tol = rel_tol * std::max<double>(1.0, s.size() ? s(0) : 0.0) *
                       static_cast<double>(std::max(m.rows(), m.cols()));
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > tol) ++rank;
    }
    return svd.matrixV().rightCols(m.cols() - rank);
}

}  // namespace linalg
}  // namespace lipfd
