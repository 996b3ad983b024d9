#include "liss/damage_model.hpp"

#include <gtest/gtest.h>

#include <random>

namespace liss {
namespace {

DamageParameters default_parameters()
{
    DamageParameters p;
    p.law = ElasticLaw::from_gpa(18.0, 0.2);
    p.reg_alpha = 1.0;
    p.kappa = 0.1;
    p.softening_eps = 0.01;
    return p;
}

DamageProblem example1(double h = 10.0)
{
    return DamageProblem(generate_mesh_example1(h), dirichlet_example1(), default_parameters());
}

Vector random_state(Index n, unsigned seed, double scale = 2.0)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, scale);
    Vector z(n);
    for (Index i = 0; i < n; ++i) z[i] = u(rng);
    return z;
}

/// One triangle pulled on its hypotenuse, one free DOF.
DamageProblem single_element()
{
    Mesh m;
    m.nodes = {{0, 0}, {1, 0}, {0, 1}};
    m.triangles = {{0, 1, 2}};
    m.boundary = {{{0, 1}, BoundaryTag::Gamma2}, {{1, 2}, BoundaryTag::GammaD}, {{2, 0}, BoundaryTag::Gamma1}};
    const DirichletProfile profile{
        {BoundaryTag::Gamma1, 0, 0.0, 0.0}, {BoundaryTag::Gamma2, 1, 0.0, 0.0}, {BoundaryTag::GammaD, 0, 0.0, 1.0}};
    return DamageProblem(std::move(m), profile, default_parameters());
}

TEST(DamageProblem, RejectsInvalidParameters)
{
    auto p = default_parameters();
    p.kappa = 0.0;
    EXPECT_THROW(DamageProblem(generate_mesh_example1(10.0), dirichlet_example1(), p), InputError);
    p = default_parameters();
    p.law.poisson_ratio = 0.5;
    EXPECT_THROW(DamageProblem(generate_mesh_example1(10.0), dirichlet_example1(), p), InputError);
}

TEST(DamageProblem, UnloadedStateHasZeroDisplacementAndEnergy)
{
    const auto prob = example1();
    const Vector z = Vector::Zero(prob.size());
    EXPECT_EQ(prob.solve_elasticity(0.0, z).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(prob.energy(0.0, z), 0.0);
    EXPECT_EQ(prob.partial_t(0.0, z), 0.0);
}

TEST(DamageProblem, ConstantDamageUnloadedHasZeroEnergy)
{
    const auto prob = example1();
    EXPECT_NEAR(prob.energy(0.0, Vector::Constant(prob.size(), 0.7)), 0.0, 1e-10);
}

TEST(DamageProblem, ElasticSolveSatisfiesEquilibrium)
{
    const auto prob = example1();
    const Vector z = random_state(prob.size(), 3);
    const double t = 1.5;
    const Vector w = prob.solve_elasticity(t, z) + prob.lift(t);
    const SparseMatrix k = assemble_elasticity(prob.mesh(), z, prob.softening(), prob.parameters().law);
    const Vector r = k * w;
    double worst = 0.0;
    for (int dof : prob.constraints().free_dofs) worst = std::max(worst, std::abs(r[dof]));
    EXPECT_LE(worst, 1e-10 * (k * prob.lift(t)).cwiseAbs().maxCoeff());
}

TEST(DamageProblem, DisplacementLinearInLoad)
{
    const auto prob = example1();
    const Vector z = random_state(prob.size(), 4);
    const Vector u1 = prob.solve_elasticity(1.0, z);
    const Vector u2 = prob.solve_elasticity(2.0, z);
    EXPECT_LE((u2 - 2.0 * u1).cwiseAbs().maxCoeff(), 1e-12 * u2.cwiseAbs().maxCoeff());
}

TEST(DamageProblem, UniformDamageSoftensSingleElement)
{
    const auto prob = single_element();
    const double t = 0.01;
    const double e0 = prob.energy(t, Vector::Zero(3));
    ASSERT_GT(e0, 0.0);
    double prev = e0;
    for (double c : {0.1, 0.5, 1.0, 3.0}) {
        const double e = prob.energy(t, Vector::Constant(3, c));
        EXPECT_NEAR(e, e0 * (std::exp(-c) + 0.01) / 1.01, 1e-12 * e0);
        EXPECT_LT(e, prev);
        prev = e;
    }
}

TEST(DamageProblem, GradientAtZeroLoadIsRegularization)
{
    const auto prob = example1();
    const Vector z = random_state(prob.size(), 5);
    const Vector g = prob.grad_z(0.0, z);
    EXPECT_LE((g - prob.parameters().reg_alpha * (prob.laplace() * z)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DamageProblem, ConstantSofteningHasNoElasticGradient)
{
    DamageProblem prob(generate_mesh_example1(10.0), dirichlet_example1(), default_parameters(), Softening::constant(1.0));
    const Vector z = random_state(prob.size(), 6);
    const Vector g = prob.grad_z(3.0, z);
    EXPECT_LE((g - prob.laplace() * z).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(DamageProblem, HessianBlocksAtZeroLoad)
{
    const auto prob = example1();
    const Vector z = random_state(prob.size(), 7);
    const HessianBlocks h = prob.hessian_blocks(0.0, z);
    EXPECT_LE(SparseMatrix(h.zz - prob.laplace()).coeffs().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(h.zu.coeffs().size() == 0 ? 0.0 : h.zu.coeffs().cwiseAbs().maxCoeff(), 0.0);
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(h.uu);
    ASSERT_EQ(ldlt.info(), Eigen::Success);
    EXPECT_GT(ldlt.vectorD().minCoeff(), 0.0);
}

TEST(DamageProblem, GradientAndHessianMatchFiniteDifferences)
{
    const auto prob = example1();
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (unsigned s = 0; s < 5; ++s) {
        const Vector z = random_state(prob.size(), 100 + s);
        Vector v(prob.size());
        for (Index i = 0; i < v.size(); ++i) v[i] = u(rng);
        const auto chk = check_derivatives(prob, 0.5 + 3.0 * s, z, v);
        EXPECT_LE(chk.gradient_error, 1e-5);
        EXPECT_LE(chk.hessian_error, 1e-4);
    }
}

TEST(DamageProblem, TimeDerivativeMatchesFiniteDifferenceAndIsAffine)
{
    const auto prob = example1();
    const Vector z = random_state(prob.size(), 8);
    const double t = 2.0, h = 1e-4;
    const double fd = (prob.energy(t + h, z) - prob.energy(t - h, z)) / (2.0 * h);
    const double dt = prob.partial_t(t, z);
    EXPECT_NEAR(fd, dt, 1e-5 * std::abs(dt));
    const double d1 = prob.partial_t(1.0, z), d3 = prob.partial_t(3.0, z);
    EXPECT_NEAR(dt, 0.5 * (d1 + d3), 1e-10 * std::abs(dt));
}

TEST(DamageProblem, ReactionMethodsAgreeOnUndamagedState)
{
    const auto prob = example1(5.0);
    const Vector z = Vector::Zero(prob.size());
    const double fr = prob.reaction_force(1.0, z);
    const double ff = prob.reaction_force_from_flux(1.0, z);
    EXPECT_GT(fr, 0.0);
    EXPECT_NEAR(ff, fr, 0.1 * fr);
}

TEST(DamageProblem, ZeroDamageIsLocallyStableInitially)
{
    const auto prob = example1();
    EXPECT_TRUE(check_local_stability(prob.grad_z(0.0, Vector::Zero(prob.size())), prob.dissipation()));
}

}  // namespace
}  // namespace liss
