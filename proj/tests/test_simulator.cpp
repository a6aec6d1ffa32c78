#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "lipfd/manipulator.hpp"
#include "lipfd/simulator.hpp"
#include "lipfd/synthesis.hpp"

using namespace lipfd;
namespace mp = lipfd::manipulator;

namespace {

constexpr double kPi = std::numbers::pi;

LipschitzPlant scalar_plant(double a) {
    LipschitzPlant p;
    p.A = Matrix::Constant(1, 1, a);
    p.B = Matrix::Zero(1, 1);
    p.C = Matrix::Ones(1, 1);
    p.D1 = Matrix::Zero(1, 1);
    p.D2 = Matrix::Zero(1, 1);
    p.Q1 = Matrix::Zero(1, 1);
    p.Q2 = Matrix::Zero(1, 1);
    p.phi = NonlinearMap::zero(1, 1);
    return p;
}

double scalar_exp_error(double dt) {
    const auto p = scalar_plant(-1.0);
    const auto grid = TimeGrid::over(1.0, dt);
    const auto s = integrate_coupled(p, Matrix::Zero(1, 1), constant_signal(Vector::Zero(1)),
                                     InjectionProfile::none(1, 1), grid, Vector::Ones(1), Vector::Ones(1));
    return std::abs(s.x(grid.samples() - 1, 0) - std::exp(-1.0));
}

const ObserverDesign& symbolic_design() {
    static const ObserverDesign d =
        solve_design(SynthesisProblem::from_plant(mp::build_plant({}, mp::Preset::symbolic), 1.0, 0.2));
    return d;
}

InjectionProfile disturbed() {
    auto inj = InjectionProfile::none(3, 2);
    inj.disturbance = sinusoidal_disturbance;
    return inj;
}

Vector ones_input(double) { return Vector::Ones(1); }

}  // namespace

TEST(TimeGrid, SamplesAndTimes) {
    const auto g = TimeGrid::over(10.0, 1e-4);
    EXPECT_EQ(g.steps, 100000u);
    EXPECT_EQ(g.samples(), 100001);
    EXPECT_DOUBLE_EQ(g.t_end(), 10.0);
    EXPECT_THROW((TimeGrid{0.0, 0.0, 10}.validate()), ContractViolation);
    EXPECT_THROW((TimeGrid{0.0, 1e-3, 0}.validate()), ContractViolation);
}

TEST(Integrator, MatchedObserverHasZeroOutputError) {
    LipschitzPlant p;
    p.A = -Matrix::Identity(2, 2);
    p.B = Matrix::Zero(2, 1);
    p.C = Matrix::Identity(2, 2);
    p.D1 = Matrix::Zero(2, 1);
    p.D2 = Matrix::Zero(2, 1);
    p.Q1 = Matrix::Zero(2, 1);
    p.Q2 = Matrix::Zero(2, 1);
    p.phi = NonlinearMap::zero(2, 1);
    Vector x0(2);
    x0 << 1.0, -2.0;
    const auto s = integrate_coupled(p, Matrix::Identity(2, 2), constant_signal(Vector::Zero(1)),
                                     InjectionProfile::none(1, 1), TimeGrid::over(2.0, 1e-3), x0, x0);
    EXPECT_EQ(s.e_y.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Integrator, ScalarExponential) {
    EXPECT_LT(scalar_exp_error(1e-3), 1e-9);
}

TEST(Integrator, FourthOrderConvergence) {
    const double e1 = scalar_exp_error(0.1), e2 = scalar_exp_error(0.05), e3 = scalar_exp_error(0.025);
    EXPECT_NEAR(std::log2(e1 / e2), 4.0, 0.1);
    EXPECT_NEAR(std::log2(e2 / e3), 4.0, 0.1);
}

TEST(Integrator, FourthOrderOnNoiselessManipulator) {
    const auto plant = mp::build_plant({}, mp::Preset::symbolic);
    auto terminal = [&](double dt) {
        const auto s = integrate_coupled(plant, Matrix::Zero(4, 2), ones_input, disturbed(), TimeGrid::over(0.5, dt),
                                         Vector::Zero(4), Vector::Zero(4));
        return Vector(s.x.row(s.x.rows() - 1).transpose());
    };
    const Vector a = terminal(4e-4), b = terminal(2e-4), c = terminal(1e-4);
    const double order = std::log2((a - b).norm() / (b - c).norm());
    EXPECT_GT(order, 3.7);
    EXPECT_LT(order, 4.3);
}

TEST(Integrator, ErrorDynamicsMatchDirectIntegration) {
    // e' = (A - LC) e + phi(x) - phi(x - e) + (D1 - L D2) d + (Q1 - L Q2) f,
    // integrated alongside x with an independent RK4 loop
    const auto plant = mp::build_plant({}, mp::Preset::symbolic);
    const auto& design = symbolic_design();
    ASSERT_TRUE(design.usable());
    const Matrix& L = design.L;
    auto inj = disturbed();
    inj.fault = [](double t) { return fault_gradual(t, 0.2, 1.0, 1.0, 1, 2); };
    const auto grid = TimeGrid::over(1.0, 1e-4);
    Vector x0 = Vector::Zero(4);
    x0(3) = 0.4;
    const auto sim = integrate_coupled(plant, L, ones_input, inj, grid, x0, Vector::Zero(4));

    const Matrix Acl = plant.A - L * plant.C, Dcl = plant.D1 - L * plant.D2, Qcl = plant.Q1 - L * plant.Q2;
    auto f = [&](double t, const Vector& s) {
        const Vector x = s.head(4), e = s.tail(4);
        const Vector u = Vector::Ones(1), d = inj.disturbance(t), fa = inj.fault(t);
        Vector out(8);
        out.head(4) = evaluate_dynamics(plant, x, u, d, fa);
        out.tail(4) = Acl * e + plant.phi(x, u) - plant.phi(Vector(x - e), u) + Dcl * d + Qcl * fa;
        return out;
    };
    Vector s(8);
    s << x0, x0;
    const double h = grid.dt;
    double worst = 0.0, scale = 0.0;
    for (Eigen::Index k = 0; k + 1 < grid.samples(); ++k) {
        const double t = grid.time(k);
        const Vector k1 = f(t, s), k2 = f(t + h / 2, s + h / 2 * k1), k3 = f(t + h / 2, s + h / 2 * k2),
                     k4 = f(t + h, s + h * k3);
        s += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        const Vector e_sim = (sim.x.row(k + 1) - sim.x_hat.row(k + 1)).transpose();
        worst = std::max(worst, (e_sim - s.tail(4)).cwiseAbs().maxCoeff());
        scale = std::max(scale, e_sim.cwiseAbs().maxCoeff());
    }
    ASSERT_GT(scale, 0.0);
    EXPECT_LT(worst, 1e-8 * scale);
}

TEST(Integrator, NullResidualRunKeepsOutputErrorAtRoundoff) {
    const auto plant = mp::build_plant({}, mp::Preset::symbolic);
    const auto& design = symbolic_design();
    const auto s = integrate_coupled(plant, design.L, ones_input, InjectionProfile::none(3, 2),
                                     TimeGrid::over(10.0, 1e-4), Vector::Zero(4), Vector::Zero(4));
    EXPECT_LE(s.e_y.cwiseAbs().maxCoeff(), 1e-9 * s.y_clean.cwiseAbs().maxCoeff());
}

TEST(Integrator, DisturbedManipulatorStaysBounded) {
    const auto plant = mp::build_plant({}, mp::Preset::symbolic);
    const auto& design = symbolic_design();
    const auto s = integrate_coupled(plant, design.L, ones_input, disturbed(), TimeGrid::over(10.0, 1e-4),
                                     Vector::Zero(4), Vector::Zero(4));
    const Eigen::Index n = s.e_y.rows();
    const double first = s.e_y.topRows(n / 2).cwiseAbs().maxCoeff();
    const double second = s.e_y.bottomRows(n / 2).cwiseAbs().maxCoeff();
    EXPECT_TRUE(s.e_y.allFinite());
    EXPECT_LT(first, 1e-2);
    EXPECT_LT(second, 2.0 * first);
}

TEST(Integrator, OverflowReportsStep) {
    const auto p = scalar_plant(1e3);
    try {
        integrate_coupled(p, Matrix::Zero(1, 1), constant_signal(Vector::Zero(1)), InjectionProfile::none(1, 1),
                          TimeGrid{0.0, 1.0, 1000}, Vector::Ones(1), Vector::Ones(1));
        FAIL() << "expected SimulationError";
    } catch (const SimulationError& e) {
        EXPECT_GT(e.step(), 1);
        EXPECT_LT(e.step(), 1000);
    }
}

TEST(Integrator, RejectsBadGain) {
    const auto plant = mp::build_plant({}, mp::Preset::symbolic);
    EXPECT_THROW(integrate_coupled(plant, Matrix::Zero(2, 4), ones_input, InjectionProfile::none(3, 2),
                                   TimeGrid::over(0.01, 1e-3), Vector::Zero(4), Vector::Zero(4)),
                 ContractViolation);
}

TEST(Disturbance, ClosedForms) {
    EXPECT_TRUE(sinusoidal_disturbance(0.0).isZero(0.0));
    const Vector a = sinusoidal_disturbance(kPi / 20);
    EXPECT_NEAR(a(0), 5.0, 1e-14);
    EXPECT_NEAR(a(1), 2.0, 1e-14);
    EXPECT_NEAR(a(2), 0.0, 1e-14);
    const Vector b = sinusoidal_disturbance(kPi / 40);
    EXPECT_NEAR(b(0), 3.5355339, 1e-7);
    EXPECT_NEAR(b(1), 1.4142136, 1e-7);
    EXPECT_NEAR(b(2), 1.0, 1e-14);
}

TEST(Faults, AbruptPulse) {
    EXPECT_TRUE(fault_abrupt(5.9, 6, 1, 1, 0, 2).isZero(0.0));
    const Vector f = fault_abrupt(6.5, 6, 1, 1, 0, 2);
    EXPECT_EQ(f(0), 1.0);
    EXPECT_EQ(f(1), 0.0);
    EXPECT_TRUE(fault_abrupt(7.1, 6, 1, 1, 0, 2).isZero(0.0));
    EXPECT_EQ(fault_abrupt(6.0, 6, 1, 1, 0, 2)(0), 1.0);
    EXPECT_TRUE(fault_abrupt(7.0, 6, 1, 1, 0, 2).isZero(0.0));
    EXPECT_THROW(fault_abrupt(6.5, 6, 0, 1, 0, 2), ContractViolation);
    EXPECT_THROW(fault_abrupt(6.5, 6, 1, 1, 2, 2), ContractViolation);
}

TEST(Faults, GradualRamp) {
    EXPECT_TRUE(fault_gradual(5.0, 5, 0.2, 1, 1, 2).isZero(0.0));
    EXPECT_TRUE(fault_gradual(3.0, 5, 0.2, 1, 1, 2).isZero(0.0));
    EXPECT_NEAR(fault_gradual(7.0, 5, 0.2, 1, 1, 2)(1), 0.4, 1e-15);
    EXPECT_EQ(fault_gradual(7.0, 5, 0.2, 1, 1, 2)(0), 0.0);
    EXPECT_EQ(fault_gradual(12.0, 5, 0.2, 1, 1, 2)(1), 1.0);
    EXPECT_THROW(fault_gradual(7.0, 5, 0.0, 1, 1, 2), ContractViolation);
    EXPECT_THROW(fault_gradual(7.0, 5, 0.2, 1, -1, 2), ContractViolation);
}

TEST(Noise, NoneAndZeroFractionLeaveSignalUnchanged) {
    const Trajectory y = Trajectory::Random(50, 2);
    EXPECT_EQ(apply_noise(y, NoiseSpec{}), y);
    NoiseSpec zero{NoiseKind::proportional_gaussian, 0.0, 3, Vector::Ones(2)};
    EXPECT_EQ(apply_noise(y, zero), y);
}

TEST(Noise, ProportionalStandardDeviation) {
    Vector ref(2);
    ref << 1.0, 0.5;
    NoiseSpec spec{NoiseKind::proportional_gaussian, 0.02, 123, ref};
    const Trajectory y = Trajectory::Zero(100000, 2);
    const Trajectory v = apply_noise(y, spec);
    for (Eigen::Index c = 0; c < 2; ++c) {
        const double mean = v.col(c).mean();
        const double sd = std::sqrt((v.col(c).array() - mean).square().sum() / (v.rows() - 1));
        EXPECT_NEAR(sd, 0.02 * ref(c), 0.03 * 0.02 * ref(c));
        EXPECT_NEAR(mean, 0.0, 5.0 * 0.02 * ref(c) / std::sqrt(1e5));
    }
}

TEST(Noise, SeedDeterminism) {
    NoiseSpec a{NoiseKind::proportional_gaussian, 0.02, 7, Vector::Ones(2)};
    NoiseSpec b = a;
    b.seed = 8;
    const Trajectory y = Trajectory::Zero(1000, 2);
    EXPECT_EQ(apply_noise(y, a), apply_noise(y, a));
    EXPECT_NE(apply_noise(y, a), apply_noise(y, b));
}

TEST(Noise, MissingReferenceRejected) {
    NoiseSpec spec{NoiseKind::proportional_gaussian, 0.02, 7, Vector()};
    EXPECT_THROW(apply_noise(Trajectory::Zero(10, 2), spec), ContractViolation);
    spec.amplitude_reference = Vector::Zero(2);
    EXPECT_THROW(apply_noise(Trajectory::Zero(10, 2), spec), ContractViolation);
}

TEST(Noise, NoisyRunsAreReproducible) {
    const auto plant = mp::build_plant({}, mp::Preset::symbolic);
    const auto& design = symbolic_design();
    auto inj = disturbed();
    inj.noise = NoiseSpec{NoiseKind::proportional_gaussian, 0.02, 5, Vector::Ones(2)};
    const auto grid = TimeGrid::over(0.2, 1e-4);
    const auto a = integrate_coupled(plant, design.L, ones_input, inj, grid, Vector::Zero(4), Vector::Zero(4));
    const auto b = integrate_coupled(plant, design.L, ones_input, inj, grid, Vector::Zero(4), Vector::Zero(4));
    inj.noise.seed = 6;
    const auto c = integrate_coupled(plant, design.L, ones_input, inj, grid, Vector::Zero(4), Vector::Zero(4));
    EXPECT_EQ(a.y_measured, b.y_measured);
    EXPECT_EQ(a.x_hat, b.x_hat);
    EXPECT_NE(a.y_measured, c.y_measured);
    EXPECT_EQ(a.y_clean, c.y_clean);  // noise only touches the measurement
}

TEST(Uncertainty, RealizationDrivesTruthOnly) {
    const mp::Params prm;
    const auto plant = mp::build_plant(prm, mp::Preset::symbolic);
    const auto& design = symbolic_design();
    auto inj = InjectionProfile::none(3, 2);
    UncertaintyEnvelope env;
    env.Ma = Matrix::Zero(4, 1);
    env.Ma(0, 0) = -0.05 * prm.K;
    env.Ma(2, 0) = 0.05 * prm.K;
    env.Na = Matrix::Zero(1, 4);
    env.Na(0, 1) = 1.0;
    inj.uncertainty = UncertaintyRealization{env, Matrix::Ones(1, 1)};
    const auto s = integrate_coupled(plant, design.L, ones_input, inj, TimeGrid::over(0.5, 1e-4), Vector::Zero(4),
                                     Vector::Zero(4));
    EXPECT_GT(s.e_y.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SimCsv, HeaderAndRows) {
    const auto plant = mp::build_plant({}, mp::Preset::symbolic);
    const auto s = integrate_coupled(plant, Matrix::Zero(4, 2), ones_input, disturbed(), TimeGrid{0.0, 1e-3, 9},
                                     Vector::Zero(4), Vector::Zero(4));
    std::ostringstream os;
    write_sim_csv(os, s);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    EXPECT_EQ(header,
              "t,x1,x2,x3,x4,xhat1,xhat2,xhat3,xhat4,y1,y2,ymeas1,ymeas2,yhat1,yhat2,ey1,ey2,u1,d1,d2,d3,f1,f2");
    int rows = 0;
    std::string line;
    while (std::getline(is, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 22);
    }
    EXPECT_EQ(rows, 10);
}
