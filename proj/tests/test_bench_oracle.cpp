#include "liss/bench_oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace liss {
namespace {

const ScalarRis& convex_oracle()
{
    static const ScalarRis oracle = ScalarRis::convex(1.0, 0.5);
    return oracle;
}

TEST(PlayExact, StickThenMove)
{
    EXPECT_EQ(play_exact(convex_oracle(), 0.0, 0.3), 0.0);
    EXPECT_EQ(play_exact(convex_oracle(), 0.0, 0.5), 0.0);
    EXPECT_DOUBLE_EQ(play_exact(convex_oracle(), 0.0, 2.0), 1.5);
}

TEST(PlayExact, ZeroThresholdFollowsLoad)
{
    const auto free = ScalarRis::convex(2.0, 0.0);
    EXPECT_DOUBLE_EQ(play_exact(free, 0.0, 1.0), 0.5);
}

TEST(PlayExact, InitialStateAboveYieldSticks)
{
    EXPECT_EQ(play_exact(convex_oracle(), 1.0, 1.2), 1.0);
    EXPECT_DOUBLE_EQ(play_exact(convex_oracle(), 1.0, 1.7), 1.2);
}

TEST(PlayExact, RejectsUnsupportedProblems)
{
    EXPECT_THROW(play_exact(ScalarRis::double_well(0.05), 0.0, 1.0), InputError);
    EXPECT_THROW(play_exact(ScalarRis::convex(1.0, 0.5, AffineLoad{0.0, -1.0}), 0.0, 1.0), InputError);
    EXPECT_THROW(ScalarRis::convex(0.0, 0.5), InputError);
}

TEST(PlayExact, ArcLengthTimeInverts)
{
    // s(t) = t + (t - 0.5) for t > 0.5
    EXPECT_NEAR(play_exact_time(convex_oracle(), 0.0, 0.4), 0.4, 1e-14);
    EXPECT_NEAR(play_exact_time(convex_oracle(), 0.0, 2.5), 1.5, 1e-14);
}

TEST(DoubleWell, DerivativesAreConsistent)
{
    const auto dw = ScalarRis::double_well(0.05);
    for (double z : {-0.5, 0.3, 1.0, 1.7, 2.4}) {
        const double h = 1e-6;
        EXPECT_NEAR((dw.phi(z + h) - dw.phi(z - h)) / (2 * h), dw.phi_prime(z), 1e-8);
        EXPECT_NEAR((dw.phi_prime(z + h) - dw.phi_prime(z - h)) / (2 * h), dw.phi_second(z), 1e-7);
    }
    EXPECT_EQ(dw.phi_prime(0.0), 0.0);
    EXPECT_EQ(dw.phi_prime(1.0), 0.0);
    EXPECT_EQ(dw.phi_prime(2.0), 0.0);
}

TEST(ReferenceRun, StepMustBeFine)
{
    EXPECT_THROW(reference_run(ScalarRis::double_well(0.05), 0.0, 1e-3, 1.0), InputError);
}

TEST(Plateau, ConvexOracleOnlyLagsOneCell)
{
    // Stick and full-step cells alternate along the moving branch, so no
    // stretch of pure state motion outlasts a couple of cells.
    const auto p = longest_plateau(scalar_run(convex_oracle(), 0.0, 0.01, 2.0));
    if (p) {
        EXPECT_LE(p->cells, 2);
    }
}

TEST(Plateau, DoubleWellJumps)
{
    const auto dw = ScalarRis::double_well(0.05);
    const Trajectory traj = scalar_run(dw, 0.0, 0.005, 1.0, ConstraintVariant::box);
    const auto p = longest_plateau(traj);
    ASSERT_TRUE(p.has_value());
    EXPECT_GT(p->cells, 100);
    EXPECT_NEAR(p->extent(), p->cells * 0.005, 1e-12);
    // The jump leaves the first well and lands beyond the second spinodal point.
    const Interpolants ip(traj);
    EXPECT_LT(ip.z_hat(p->s_begin)[0], 1.0 - 1.0 / std::sqrt(3.0) + 0.01);
    EXPECT_GT(ip.z_hat(p->s_end)[0], 1.0 + 1.0 / std::sqrt(3.0));
}

TEST(PlayError, ZeroForExactTrajectory)
{
    Trajectory traj;
    traj.tau = 0.5;
    for (int k = 0; k <= 4; ++k) {
        LissStep st;
        st.k = k;
        st.s = 0.5 * k;
        st.t = k <= 1 ? st.s : 0.5 + 0.5 * (st.s - 0.5);
        st.z = Vector::Constant(1, play_exact(convex_oracle(), 0.0, st.t));
        traj.steps.push_back(st);
    }
    EXPECT_EQ(play_error(traj, convex_oracle()), 0.0);
}

TEST(TrajectoryDistance, IdenticalRunsCoincide)
{
    const Trajectory a = scalar_run(convex_oracle(), 0.0, 0.05, 2.0);
    const auto [et, ez] = trajectory_distance(a, a);
    EXPECT_EQ(et, 0.0);
    EXPECT_EQ(ez, 0.0);
}

TEST(ConvergenceStudy, ConvexOracleIsFirstOrder)
{
    // Steps that divide the yield time 0.5; otherwise the grid phase at the
    // yield point can hold the error flat across one halving.
    const auto table = convergence_study(convex_oracle(), 0.0, 2.0, {0.02, 0.01, 0.005, 0.0025});
    EXPECT_TRUE(table.monotone);
    ASSERT_EQ(table.rows.size(), 4u);
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
        EXPECT_NEAR(table.rows[i].rate, 1.0, 0.3);
        EXPECT_LE(table.rows[i].play_error, 2.0 * table.rows[i].tau);
    }
    EXPECT_NEAR(table.rows.back().final_z, 1.5, 2 * 0.0025);
}

TEST(ConvergenceStudy, IdenticalStepsGiveNoRate)
{
    const auto table = convergence_study(convex_oracle(), 0.0, 2.0, {0.02, 0.02});
    EXPECT_EQ(table.rows[0].play_error, table.rows[1].play_error);
    EXPECT_TRUE(std::isnan(table.rows[1].rate));
}

TEST(ConvergenceStudy, NonconvexNeedsReference)
{
    EXPECT_THROW(convergence_study(ScalarRis::double_well(0.05), 0.0, 1.0, {0.01}), InputError);
    const auto dw = ScalarRis::double_well(0.05);
    const Trajectory ref = scalar_run(dw, 0.0, 0.005, 1.0, ConstraintVariant::box);
    const auto table = convergence_study(dw, 0.0, 1.0, {0.005}, &ref, ConstraintVariant::box);
    EXPECT_EQ(table.rows[0].error_t, 0.0);
    EXPECT_EQ(table.rows[0].error_z, 0.0);
}

}  // namespace
}  // namespace liss
