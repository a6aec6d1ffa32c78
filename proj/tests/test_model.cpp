#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "lipfd/manipulator.hpp"
#include "lipfd/model.hpp"
#include "lipfd/simulator.hpp"

using namespace lipfd;
namespace mp = lipfd::manipulator;

namespace {

constexpr double kPi = std::numbers::pi;

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

LipschitzPlant scalar_plant(double a) {
    LipschitzPlant p;
    p.A = Matrix::Constant(1, 1, a);
    p.B = Matrix::Zero(1, 1);
    p.C = Matrix::Constant(1, 1, 1.0);
    p.D1 = Matrix::Zero(1, 1);
    p.D2 = Matrix::Zero(1, 1);
    p.Q1 = Matrix::Zero(1, 1);
    p.Q2 = Matrix::Zero(1, 1);
    p.phi = NonlinearMap::zero(1, 1);
    return p;
}

const Vector u0 = Vector::Zero(1);
const Vector d0 = Vector::Zero(3);
const Vector f0 = Vector::Zero(2);

}  // namespace

TEST(Dynamics, ZeroStateGivesZeroDerivative) {
    const auto p = mp::build_plant({}, mp::Preset::symbolic);
    EXPECT_TRUE(evaluate_dynamics(p, Vector::Zero(4), u0, d0, f0).isZero(0.0));
}

TEST(Dynamics, GravityTermAtQuarterTurn) {
    const auto p = mp::build_plant({}, mp::Preset::symbolic);
    const Vector dx = evaluate_dynamics(p, vec({0, 0, 0, kPi / 2}), u0, d0, f0);
    EXPECT_NEAR(dx(0), 0.0, 1e-15);
    EXPECT_NEAR(dx(1), 0.0, 1e-15);
    EXPECT_NEAR(dx(2), -0.21 * 9.8 * 0.15, 1e-12);
    EXPECT_NEAR(dx(2), -0.3087, 1e-12);
    EXPECT_NEAR(dx(3), 0.0, 1e-15);
}

TEST(Dynamics, LiteralFirstColumn) {
    const auto p = mp::build_plant({}, mp::Preset::paper_literal);
    const Vector dx = evaluate_dynamics(p, vec({1, 0, 0, 0}), u0, d0, f0);
    EXPECT_DOUBLE_EQ(dx(0), -1.2432);
    EXPECT_DOUBLE_EQ(dx(1), 270.2703);
    EXPECT_DOUBLE_EQ(dx(2), 0.0);
    EXPECT_DOUBLE_EQ(dx(3), 0.0);
}

TEST(Dynamics, RejectsDimensionMismatch) {
    const auto p = mp::build_plant({}, mp::Preset::symbolic);
    EXPECT_THROW(evaluate_dynamics(p, Vector::Zero(3), u0, d0, f0), ContractViolation);
    EXPECT_THROW(evaluate_dynamics(p, Vector::Zero(4), u0, Vector::Zero(2), f0), ContractViolation);
    EXPECT_THROW(evaluate_output(p, Vector::Zero(4), d0, Vector::Zero(3)), ContractViolation);
}

TEST(Output, ZeroStateGivesZero) {
    const auto p = mp::build_plant({}, mp::Preset::symbolic);
    EXPECT_TRUE(evaluate_output(p, Vector::Zero(4), d0, f0).isZero(0.0));
}

TEST(Output, MeasuresMotorAndLinkAngles) {
    for (auto kind : {mp::Preset::symbolic, mp::Preset::paper_literal}) {
        const auto p = mp::build_plant({}, kind);
        const Vector y = evaluate_output(p, vec({0, 0.3, 0, 0.2}), d0, f0);
        EXPECT_NEAR(y(0), 0.5, 1e-15);
        EXPECT_NEAR(y(1), 0.2, 1e-15);
    }
}

TEST(Output, DisturbanceFeedthrough) {
    const auto p = mp::build_plant({}, mp::Preset::symbolic);
    const Vector y = evaluate_output(p, Vector::Zero(4), vec({1, 0, 0}), f0);
    EXPECT_DOUBLE_EQ(y(0), -0.001);
    EXPECT_DOUBLE_EQ(y(1), 0.0);
}

TEST(LipschitzEstimate, ZeroMap) {
    EXPECT_EQ(estimate_lipschitz_bound(NonlinearMap::zero(4, 1), 1000, 3), 0.0);
}

TEST(LipschitzEstimate, ManipulatorGravity) {
    const auto p = mp::build_plant({}, mp::Preset::symbolic);
    const double est = estimate_lipschitz_bound(p.phi, 10000, 42);
    EXPECT_NEAR(est, 0.3087, 0.01 * 0.3087);
    EXPECT_LE(est, p.phi.declared_lipschitz_bound * (1 + 1e-12));
}

TEST(LipschitzEstimate, LiteralGravityAmplitude) {
    const auto p = mp::build_plant({}, mp::Preset::paper_literal);
    const double est = estimate_lipschitz_bound(p.phi, 10000, 42);
    EXPECT_NEAR(est, 0.33, 0.01 * 0.33);
}

TEST(LipschitzEstimate, MonotoneInSampleCount) {
    const auto p = mp::build_plant({}, mp::Preset::symbolic);
    double prev = 0.0;
    for (std::size_t s : {10u, 100u, 1000u, 10000u}) {
        const double est = estimate_lipschitz_bound(p.phi, s, 9);
        EXPECT_GE(est, prev);
        prev = est;
    }
}

TEST(LipschitzEstimate, DeterministicForSeed) {
    const auto p = mp::build_plant({}, mp::Preset::symbolic);
    EXPECT_EQ(estimate_lipschitz_bound(p.phi, 5000, 11), estimate_lipschitz_bound(p.phi, 5000, 11));
}

TEST(LipschitzEstimate, Preconditions) {
    auto phi = NonlinearMap::zero(2, 1);
    EXPECT_THROW(estimate_lipschitz_bound(phi, 1, 0), ContractViolation);
    phi.domain_box.clear();
    EXPECT_THROW(estimate_lipschitz_bound(phi, 10, 0), ContractViolation);
}

TEST(WrapUncertain, ZeroFactorsLeavePlantUnchanged) {
    const auto p = mp::build_plant({}, mp::Preset::symbolic);
    UncertaintyEnvelope env{Matrix::Zero(4, 1), Matrix::Zero(1, 4), {}, {}};
    const auto w = wrap_uncertain(p, env, Matrix::Constant(1, 1, 0.7));
    EXPECT_EQ(w.phi.kind, p.phi.kind);
    EXPECT_EQ(w.phi.declared_lipschitz_bound, p.phi.declared_lipschitz_bound);
    const Vector x = vec({0.1, -0.2, 0.3, 1.1});
    EXPECT_EQ(w.phi(x, u0), p.phi(x, u0));
}

TEST(WrapUncertain, ScalarIdentity) {
    const auto p = scalar_plant(-1.0);
    UncertaintyEnvelope env{Matrix::Ones(1, 1), Matrix::Ones(1, 1), {}, {}};
    const auto w = wrap_uncertain(p, env, Matrix::Ones(1, 1));
    EXPECT_DOUBLE_EQ(w.phi.declared_lipschitz_bound, 1.0);
    for (double x : {-3.0, 0.0, 0.5, 7.0}) EXPECT_DOUBLE_EQ(w.phi(Vector::Constant(1, x), u0)(0), x);
    EXPECT_EQ(w.A, p.A);
}

TEST(WrapUncertain, RejectsNonContraction) {
    const auto p = scalar_plant(-1.0);
    UncertaintyEnvelope env{Matrix::Ones(1, 1), Matrix::Ones(1, 1), {}, {}};
    EXPECT_THROW(wrap_uncertain(p, env, Matrix::Constant(1, 1, 1.01)), ContractViolation);
}

TEST(WrapUncertain, SignFlipDifferenceIsExact) {
    const auto p = mp::build_plant({}, mp::Preset::symbolic);
    UncertaintyEnvelope env;
    env.Ma = Matrix::Random(4, 2) * 0.1;
    env.Na = Matrix::Random(2, 4);
    env.Mb = Matrix::Random(4, 2) * 0.1;
    env.Nb = Matrix::Random(2, 1);
    Matrix F = Matrix::Random(2, 2);
    F /= linalg::spectral_norm(F);
    const auto wp = wrap_uncertain(p, env, F);
    const auto wm = wrap_uncertain(p, env, -F);
    const Vector x = vec({0.3, -1.2, 0.4, 2.0});
    const Vector u = Vector::Constant(1, 0.8);
    const Vector diff = wp.phi(x, u) - wm.phi(x, u);
    const Vector expected = 2.0 * env.Ma * F * env.Na * x + 2.0 * env.Mb * F * env.Nb * u;
    EXPECT_LT((diff - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(WrapUncertain, StiffnessPerturbationBoundDominatesEstimate) {
    const mp::Params prm;
    const auto p = mp::build_plant(prm, mp::Preset::symbolic);
    UncertaintyEnvelope env;
    env.Ma = Matrix::Zero(4, 1);
    env.Ma(0, 0) = -0.05 * prm.K;
    env.Ma(2, 0) = 0.05 * prm.K;
    env.Na = Matrix::Zero(1, 4);
    env.Na(0, 1) = 1.0;
    const auto w = wrap_uncertain(p, env, Matrix::Ones(1, 1));
    EXPECT_NEAR(w.phi.declared_lipschitz_bound, prm.mgh() + 0.05 * prm.K * std::sqrt(2.0), 1e-12);
    const double est = estimate_lipschitz_bound(w.phi, 20000, 5);
    EXPECT_LE(est, w.phi.declared_lipschitz_bound);
    // sampling may land on the unperturbed slope but never well below it
    EXPECT_GE(est, prm.mgh() * (1.0 - 1e-3));
}

TEST(TransformCoordinates, IdentityLeavesPlantUnchanged) {
    const auto p = mp::build_plant({}, mp::Preset::symbolic);
    const auto t = transform_coordinates(p, Matrix::Identity(4, 4));
    EXPECT_EQ(t.A, p.A);
    EXPECT_EQ(t.C, p.C);
    EXPECT_EQ(t.D1, p.D1);
    EXPECT_EQ(t.phi.kind, p.phi.kind);
}

TEST(TransformCoordinates, RejectsSingular) {
    const auto p = mp::build_plant({}, mp::Preset::symbolic);
    Matrix T = Matrix::Identity(4, 4);
    T(3, 3) = 0.0;
    EXPECT_THROW(transform_coordinates(p, T), ContractViolation);
}

TEST(TransformCoordinates, TextbookRealizationMapsOntoBondGraphState) {
    const mp::Params prm;
    const auto bg = mp::build_plant(prm, mp::Preset::symbolic);
    const auto tb = mp::textbook_plant(prm);
    const auto mapped = transform_coordinates(tb, mp::state_transform(prm));
    EXPECT_LT((mapped.A - bg.A).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((mapped.B - bg.B).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((mapped.C - bg.C).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((mapped.D1 - bg.D1).cwiseAbs().maxCoeff(), 1e-12);
    const Vector z = vec({0.01, 0.2, -0.003, 1.0});
    EXPECT_LT((mapped.phi(z, u0) - bg.phi(z, u0)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(TransformCoordinates, TextbookAndBondGraphOutputsCoincide) {
    const mp::Params prm;
    const auto bg = mp::build_plant(prm, mp::Preset::symbolic);
    const auto tb = mp::textbook_plant(prm);
    const Matrix T = mp::state_transform(prm);
    InjectionProfile inj = InjectionProfile::none(3, 2);
    inj.disturbance = sinusoidal_disturbance;
    const auto grid = TimeGrid::over(1.0, 1e-4);
    const Vector x0 = vec({0.1, 0.0, -0.05, 0.2});
    const auto a = integrate_coupled(tb, Matrix::Zero(4, 2), constant_signal(Vector::Ones(1)), inj, grid, x0, x0);
    const auto b = integrate_coupled(bg, Matrix::Zero(4, 2), constant_signal(Vector::Ones(1)), inj, grid,
                                     Vector(T * x0), Vector(T * x0));
    const double scale = a.y_clean.cwiseAbs().maxCoeff();
    EXPECT_LT((a.y_clean - b.y_clean).cwiseAbs().maxCoeff(), 1e-8 * scale);
}

TEST(TransformCoordinates, RandomSimilarityPreservesOutputs) {
    const auto p = mp::build_plant({}, mp::Preset::symbolic);
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    Matrix T = Matrix::Identity(4, 4) * 2.0;
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j) T(i, j) += unit(rng);
    ASSERT_LT(linalg::condition_number(T), 100.0);
    const auto q = transform_coordinates(p, T);

    InjectionProfile inj = InjectionProfile::none(3, 2);
    inj.disturbance = sinusoidal_disturbance;
    inj.fault = [](double t) { return fault_abrupt(t, 0.5, 0.2, 1.0, 0, 2); };
    const auto grid = TimeGrid::over(1.0, 1e-4);
    const Matrix L = mp::reference_gain();
    const Vector x0 = vec({0.0, 0.1, 0.0, 0.3});
    const auto a = integrate_coupled(p, L, constant_signal(Vector::Ones(1)), inj, grid, x0, Vector::Zero(4));
    const auto b = integrate_coupled(q, Matrix(T * L), constant_signal(Vector::Ones(1)), inj, grid, Vector(T * x0),
                                     Vector::Zero(4));
    const double scale = a.y_clean.cwiseAbs().maxCoeff();
    EXPECT_LT((a.y_clean - b.y_clean).cwiseAbs().maxCoeff(), 1e-8 * scale);
    EXPECT_LT((a.e_y - b.e_y).cwiseAbs().maxCoeff(), 1e-8 * scale);
}

TEST(ResidualStructure, GravityBoundHoldsOnSampledPairs) {
    const mp::Params prm;
    const auto rs = mp::build_residual_structure(prm, 3.6529);
    EXPECT_DOUBLE_EQ(rs.Upsilon(1, 1), prm.mgh());
    EXPECT_EQ(rs.Upsilon(0, 0), 0.0);
    EXPECT_EQ(rs.Upsilon(0, 1), 0.0);
    EXPECT_EQ(rs.Upsilon(1, 0), 0.0);
    const std::vector<Interval> box{{-kPi, kPi}, {-kPi, kPi}};
    EXPECT_LE(residual_bound_violation(rs, box, 10000, 17), 1e-15);
}

TEST(ResidualStructure, TighterBoundIsCaught) {
    auto rs = mp::build_residual_structure({}, 3.6529);
    rs.Upsilon(1, 1) *= 0.5;
    const std::vector<Interval> box{{-kPi, kPi}, {-kPi, kPi}};
    EXPECT_GT(residual_bound_violation(rs, box, 10000, 17), 0.0);
}
