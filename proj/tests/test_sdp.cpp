#include <gtest/gtest.h>

#include "lipfd/sdp.hpp"

using namespace lipfd;

namespace {

sdp::ConicProblem scalar_lp(double c, double g, double h) {
    sdp::ConicProblem p;
    p.c = Vector::Constant(1, c);
    p.G = Matrix::Constant(1, 1, g);
    p.h = Vector::Constant(1, h);
    return p;
}

bool solved(sdp::Status s) { return s == sdp::Status::optimal || s == sdp::Status::near_optimal; }

}  // namespace

TEST(Sdp, LinearLowerBound) {
    // min x  s.t.  x - 1 >= 0
    const auto r = sdp::solve(scalar_lp(1.0, 1.0, -1.0));
    ASSERT_TRUE(solved(r.status)) << r.message;
    EXPECT_NEAR(r.x(0), 1.0, 1e-7);
    EXPECT_NEAR(r.objective, 1.0, 1e-7);
}

TEST(Sdp, TwoByTwoPsdCone) {
    // min t  s.t.  [[t, 1], [1, t]] >= 0  ->  t = 1
    sdp::ConicProblem p;
    p.c = Vector::Constant(1, 1.0);
    sdp::LmiConstraint c;
    c.F0 = Matrix(2, 2);
    c.F0 << 0, 1, 1, 0;
    c.F = {Matrix::Identity(2, 2)};
    p.lmis.push_back(c);
    const auto r = sdp::solve(p);
    ASSERT_TRUE(solved(r.status)) << r.message;
    EXPECT_NEAR(r.x(0), 1.0, 1e-7);
}

TEST(Sdp, LargestEigenvalue) {
    // min t  s.t.  t I - S >= 0
    Matrix S(3, 3);
    S << 2, -1, 0.5,
        -1, 3, 0.2,
        0.5, 0.2, -1;
    sdp::ConicProblem p;
    p.c = Vector::Constant(1, 1.0);
    sdp::LmiConstraint c;
    c.F0 = -S;
    c.F = {Matrix::Identity(3, 3)};
    p.lmis.push_back(c);
    const auto r = sdp::solve(p);
    ASSERT_TRUE(solved(r.status)) << r.message;
    EXPECT_NEAR(r.x(0), linalg::max_eigenvalue(S), 1e-7);
}

TEST(Sdp, MatrixVariableTraceMinimisation) {
    // min trace(P)  s.t.  P >= Q  with P = smat(v), expect P = Q
    Matrix Q(2, 2);
    Q << 2, 0.5, 0.5, 1;
    sdp::ConicProblem p;
    p.c = linalg::svec(Matrix::Identity(2, 2));
    sdp::LmiConstraint c;
    c.F0 = -Q;
    for (Eigen::Index i = 0; i < 3; ++i) {
        Vector e = Vector::Zero(3);
        e(i) = 1.0;
        c.F.push_back(linalg::smat(e, 2));
    }
    p.lmis.push_back(c);
    const auto r = sdp::solve(p);
    ASSERT_TRUE(solved(r.status)) << r.message;
    EXPECT_NEAR(r.objective, Q.trace(), 1e-7);
    EXPECT_LT((linalg::smat(r.x, 2) - Q).norm(), 1e-5);
}

TEST(Sdp, MixedConesWithEqualitySqueeze) {
    // min -x  s.t.  1 - x >= 0, [[1, x], [x, 1]] >= 0  ->  x = 1
    sdp::ConicProblem p = scalar_lp(-1.0, -1.0, 1.0);
    sdp::LmiConstraint c;
    c.F0 = Matrix::Identity(2, 2);
    Matrix F(2, 2);
    F << 0, 1, 1, 0;
    c.F = {F};
    p.lmis.push_back(c);
    const auto r = sdp::solve(p);
    ASSERT_TRUE(solved(r.status)) << r.message;
    EXPECT_NEAR(r.x(0), 1.0, 1e-6);
}

TEST(Sdp, DetectsInfeasibility) {
    // x >= 1 and x <= 0
    sdp::ConicProblem p;
    p.c = Vector::Constant(1, 1.0);
    p.G = Matrix(2, 1);
    p.G << 1, -1;
    p.h = Vector(2);
    p.h << -1, 0;
    const auto r = sdp::solve(p);
    EXPECT_EQ(r.status, sdp::Status::infeasible) << r.message;
}

TEST(Sdp, DetectsInfeasibleLmi) {
    // [[x, 0], [0, -x - 1]] >= 0 needs x >= 0 and x <= -1
    sdp::ConicProblem p;
    p.c = Vector::Constant(1, 1.0);
    sdp::LmiConstraint c;
    c.F0 = Matrix::Zero(2, 2);
    c.F0(1, 1) = -1.0;
    Matrix F = Matrix::Zero(2, 2);
    F(0, 0) = 1.0;
    F(1, 1) = -1.0;
    c.F = {F};
    p.lmis.push_back(c);
    const auto r = sdp::solve(p);
    EXPECT_EQ(r.status, sdp::Status::infeasible) << r.message;
}

TEST(Sdp, DetectsUnboundedObjective) {
    // min x  s.t.  -x >= 0
    const auto r = sdp::solve(scalar_lp(1.0, -1.0, 0.0));
    EXPECT_EQ(r.status, sdp::Status::unbounded) << r.message;
}

TEST(Sdp, StatusNames) {
    EXPECT_EQ(sdp::to_string(sdp::Status::optimal), "optimal");
    EXPECT_EQ(sdp::to_string(sdp::Status::near_optimal), "near_optimal");
    EXPECT_EQ(sdp::to_string(sdp::Status::infeasible), "infeasible");
    EXPECT_EQ(sdp::to_string(sdp::Status::unbounded), "unbounded");
    EXPECT_EQ(sdp::to_string(sdp::Status::numerical_failure), "numerical_failure");
}

TEST(Sdp, RejectsMalformedProblem) {
    sdp::ConicProblem p;
    p.c = Vector::Constant(2, 1.0);
    sdp::LmiConstraint c;
    c.F0 = Matrix::Identity(2, 2);
    c.F = {Matrix::Identity(2, 2)};  // one coefficient for two variables
    p.lmis.push_back(c);
    EXPECT_THROW(sdp::solve(p), ContractViolation);
}

TEST(Svec, InnerProductMatchesTrace) {
    Matrix A(3, 3), B(3, 3);
    A << 1, 2, 3, 2, 4, 5, 3, 5, 6;
    B << -1, 0.5, 2, 0.5, 3, -2, 2, -2, 1;
    EXPECT_NEAR(linalg::svec(A).dot(linalg::svec(B)), (A * B).trace(), 1e-12);
    EXPECT_EQ(linalg::smat(linalg::svec(A), 3), A);
}
