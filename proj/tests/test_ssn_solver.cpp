#include "liss/bench_oracle.hpp"
#include "liss/damage_model.hpp"
#include "liss/ssn_solver.hpp"

#include <gtest/gtest.h>

namespace liss {
namespace {

const ScalarRis& convex_oracle()
{
    static const ScalarRis oracle = ScalarRis::convex(1.0, 0.5);
    return oracle;
}

DamageProblem example1_coarse()
{
    DamageParameters p;
    p.law = ElasticLaw::from_gpa(18.0, 0.2);
    return DamageProblem(generate_mesh_example1(10.0), dirichlet_example1(), p);
}

TEST(SsnOptions, ValidatesTolerances)
{
    SsnOptions o;
    o.abs_tol = 0.0;
    EXPECT_THROW(o.validate(), InputError);
    o = SsnOptions{};
    o.max_iters = 0;
    EXPECT_THROW(o.validate(), InputError);
    o = SsnOptions{};
    o.descent_tol = -1.0;
    EXPECT_THROW(o.validate(), InputError);
}

TEST(BallResidual, ScalarHandEvaluationVanishes)
{
    const StationarySystem sys(convex_oracle(), 0.0, Vector::Zero(1), 0.1, ConstraintVariant::ball);
    NewtonState s;
    s.z = Vector::Zero(1);
    s.q = Vector::Constant(1, -0.5);
    s.lambda = 0.0;
    const Evaluation ev = convex_oracle().evaluate(0.0, s.z, true);
    const Vector f = sys.residual(s, ev, 0);
    ASSERT_EQ(f.size(), 3);
    EXPECT_EQ(f.cwiseAbs().maxCoeff(), 0.0);
}

TEST(BallResidual, NegativeMultiplierFlagged)
{
    const StationarySystem sys(convex_oracle(), 0.0, Vector::Zero(1), 0.1, ConstraintVariant::ball);
    NewtonState s;
    s.z = Vector::Zero(1);
    s.q = Vector::Constant(1, -0.5);
    s.lambda = -2.0;
    const Vector f = sys.residual(s, convex_oracle().evaluate(0.0, s.z, true), 0);
    EXPECT_GT(f[2], 0.0);
}

TEST(BallResidual, StickStepOfDamageModelVanishes)
{
    const auto prob = example1_coarse();
    const Vector z = Vector::Zero(prob.size());
    const StationarySystem sys(prob, 0.1, z, 0.5, ConstraintVariant::ball);
    const Evaluation ev = prob.evaluate(0.1, z, true);
    const NewtonState s = sys.initial_state(z, ev);
    ASSERT_LE(s.q.maxCoeff(), 0.0);
    const Vector f = sys.residual(s, ev, ev.hessian->inner_size());
    EXPECT_LE(f.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(NewtonMatrix, InactiveConstraintsDecouple)
{
    const StationarySystem sys(convex_oracle(), 0.0, Vector::Zero(1), 0.1, ConstraintVariant::ball);
    NewtonState s;
    s.z = Vector::Zero(1);
    s.q = Vector::Zero(1);
    s.lambda = 0.0;
    const auto a = sys.active_sets(s);
    EXPECT_EQ(a.alpha[0], 0);
    EXPECT_EQ(a.chi, 0);
    const SparseMatrix m = sys.newton_matrix(s, convex_oracle().hessian_blocks(0.0, s.z), a);
    EXPECT_EQ(m.coeff(1, 0), 0.0);
    EXPECT_EQ(m.coeff(1, 1), 1.0);
    EXPECT_EQ(m.coeff(2, 0), 0.0);
    EXPECT_EQ(m.coeff(2, 2), -1.0);
}

TEST(NewtonMatrix, ActiveBallRowIsTangency)
{
    const StationarySystem sys(convex_oracle(), 0.0, Vector::Zero(1), 0.1, ConstraintVariant::ball);
    NewtonState s;
    s.z = Vector::Constant(1, 0.2);
    s.q = Vector::Zero(1);
    s.lambda = 0.0;
    const auto a = sys.active_sets(s);
    EXPECT_EQ(a.chi, 1);
    const SparseMatrix m = sys.newton_matrix(s, convex_oracle().hessian_blocks(0.0, s.z), a);
    EXPECT_DOUBLE_EQ(m.coeff(2, 0), 0.2);
    EXPECT_EQ(m.coeff(2, 2), 0.0);
    EXPECT_DOUBLE_EQ(m.coeff(0, 2), 0.2);
}

TEST(SolveBall, StickBelowThreshold)
{
    const auto sp = solve_stationary(convex_oracle(), 0.4, Vector::Zero(1), 0.1);
    EXPECT_EQ(sp.state.z[0], 0.0);
    EXPECT_EQ(sp.state.lambda, 0.0);
    EXPECT_LE(sp.state.q[0], 0.0);
}

TEST(SolveBall, BoundaryCaseReproducesPlayOperator)
{
    const auto sp = solve_stationary(convex_oracle(), 1.0, Vector::Constant(1, 0.4), 0.1);
    EXPECT_NEAR(sp.state.z[0], 0.5, 1e-12);
    EXPECT_GE(sp.state.lambda, 0.0);
    EXPECT_NEAR(sp.state.lambda, 0.0, 1e-10);
    EXPECT_LE(sp.stats.iterations, 3);
}

TEST(SolveBall, ActiveBallTruncatesUpdate)
{
    const auto sp = solve_stationary(convex_oracle(), 2.0, Vector::Zero(1), 0.1);
    EXPECT_NEAR(sp.state.z[0], 0.1, 1e-12);
    // stationarity: z - l + kappa + lambda dz = 0
    EXPECT_NEAR(sp.state.lambda, (2.0 - 0.5 - 0.1) / 0.1, 1e-9);
    EXPECT_LE(sp.stats.iterations, 3);
}

TEST(SolveBall, StationaryStartNeedsNoIteration)
{
    const auto sp = solve_stationary(convex_oracle(), 1.0, Vector::Constant(1, 0.8), 0.1);
    EXPECT_EQ(sp.state.z[0], 0.8);
    EXPECT_LE(sp.stats.iterations, 1);
}

TEST(SolveBox, InteriorSolutionHasInactiveBounds)
{
    const auto sp = solve_stationary_box(convex_oracle(), 0.52, Vector::Zero(1), 0.1);
    EXPECT_NEAR(sp.state.z[0], 0.02, 1e-12);
    EXPECT_NEAR(sp.state.q[0], 0.0, 1e-12);
    EXPECT_NEAR(sp.state.upper[0], 0.0, 1e-12);
}

TEST(SolveBox, StrongDrivingForceHitsUpperBound)
{
    const auto sp = solve_stationary_box(convex_oracle(), 1.0, Vector::Zero(1), 0.1);
    EXPECT_NEAR(sp.state.z[0], 0.1, 1e-12);
    EXPECT_NEAR(sp.state.upper[0], -(0.1 - 1.0 + 0.5), 1e-10);
    EXPECT_GT(sp.state.upper[0], 0.0);
}

TEST(SolveBox, StickStepHitsLowerBound)
{
    const auto sp = solve_stationary_box(convex_oracle(), 0.3, Vector::Zero(1), 0.1);
    EXPECT_EQ(sp.state.z[0], 0.0);
    EXPECT_NEAR(sp.state.q[0], -0.2, 1e-12);
}

TEST(SolveBox, AgreesWithBallInOneDimension)
{
    for (double t : {0.3, 0.55, 0.9, 1.7}) {
        const auto ball = solve_stationary(convex_oracle(), t, Vector::Zero(1), 0.1);
        const auto box = solve_stationary_box(convex_oracle(), t, Vector::Zero(1), 0.1);
        EXPECT_NEAR(ball.state.z[0], box.state.z[0], 1e-12);
    }
}

TEST(SolveBox, TwoSidedConeMovesDown)
{
    const auto oracle = ScalarRis::convex(1.0, 0.1, AffineLoad{0.0, -1.0}, Cone::two_sided);
    const auto sp = solve_stationary_box(oracle, 1.0, Vector::Zero(1), 0.05);
    EXPECT_NEAR(sp.state.z[0], -0.05, 1e-12);
}

TEST(SolveDamage, OneStepSatisfiesOptimalityAndDescent)
{
    const auto prob = example1_coarse();
    const Vector z0 = Vector::Zero(prob.size());
    const double t_prev = 0.5, tau = 0.5;
    SsnOptions opts;
    const auto sp = solve_stationary(prob, t_prev, z0, tau, opts);
    const Vector dz = sp.state.z - z0;
    const VNormSpec& vn = prob.v_norm_spec();
    EXPECT_GE(dz.minCoeff(), 0.0);
    EXPECT_LE(v_norm(dz, vn), tau * (1.0 + 1e-10));
    EXPECT_LE(sp.state.q.maxCoeff(), 1e-10);
    EXPECT_GE(sp.state.lambda, 0.0);
    const double before = prob.energy(t_prev, z0);
    const double after = prob.energy(t_prev, sp.state.z) + dissipation_value(dz, prob.dissipation());
    EXPECT_LE(after, before + opts.descent_tol * std::max(1.0, std::abs(before)));
    EXPECT_FALSE(sp.stats.descent_flagged);
    EXPECT_LE(sp.stats.residual_history.back(), opts.abs_tol);
    // work identity R(dz) + tau dist = <-DI, dz>
    const double dist = sp.state.lambda * v_norm(dz, vn);
    const double work = -sp.at_step.gradient.dot(dz);
    EXPECT_NEAR(dissipation_value(dz, prob.dissipation(), 1e-12) + tau * dist, work, 1e-8 * std::max(1.0, work));
}

}  // namespace
}  // namespace liss
