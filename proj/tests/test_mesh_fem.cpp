#include "liss/fem.hpp"
#include "liss/mesh.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace liss {
namespace {

/// [0,w] x [0,ht] lattice with Gamma1 on the left, Gamma2 on bottom and top,
/// GammaD on the right.
Mesh rectangle(double w, double ht, int nx, int ny)
{
    std::vector<std::vector<Point>> grid(static_cast<std::size_t>(nx + 1));
    for (int i = 0; i <= nx; ++i) {
        for (int j = 0; j <= ny; ++j) grid[static_cast<std::size_t>(i)].push_back({w * i / nx, ht * j / ny});
    }
    Mesh m = detail::lattice_mesh(grid);
    auto id = [ny](int i, int j) { return i * (ny + 1) + j; };
    for (int i = 0; i < nx; ++i) {
        m.boundary.push_back({{id(i, 0), id(i + 1, 0)}, BoundaryTag::Gamma2});
        m.boundary.push_back({{id(i + 1, ny), id(i, ny)}, BoundaryTag::Gamma2});
    }
    for (int j = 0; j < ny; ++j) {
        m.boundary.push_back({{id(nx, j), id(nx, j + 1)}, BoundaryTag::GammaD});
        m.boundary.push_back({{id(0, j + 1), id(0, j)}, BoundaryTag::Gamma1});
    }
    return m;
}

DirichletProfile uniaxial()
{
    return {{BoundaryTag::Gamma1, 0, 0.0, 0.0}, {BoundaryTag::Gamma2, 1, 0.0, 0.0}, {BoundaryTag::GammaD, 0, 0.0, 1.0}};
}

Mesh unit_triangle()
{
    Mesh m;
    m.nodes = {{0, 0}, {1, 0}, {0, 1}};
    m.triangles = {{0, 1, 2}};
    return m;
}

TEST(MeshExample1, RejectsUnresolvedLigament)
{
    EXPECT_THROW(generate_mesh_example1(40.0), InputError);
    EXPECT_THROW(generate_mesh_example1(0.0), InputError);
}

TEST(MeshExample1, AreaTagsAndClosure)
{
    for (double h : {10.0, 8.0, 5.0}) {
        const Mesh m = generate_mesh_example1(h);
        EXPECT_NEAR(m.total_area(), 4000.0, 1e-9);
        for (auto tag : {BoundaryTag::GammaD, BoundaryTag::GammaN, BoundaryTag::Gamma1, BoundaryTag::Gamma2}) {
            EXPECT_TRUE(m.has_tag(tag));
        }
        const MeshQuality q = inspect_mesh(m);
        EXPECT_TRUE(q.positive_orientation);
        EXPECT_TRUE(q.boundary_closed);
        EXPECT_LE(m.max_edge_length(), h * (1.0 + 1e-12));
    }
}

TEST(MeshExample1, CrackTipIsANode)
{
    const Mesh m = generate_mesh_example1(10.0);
    const bool found = std::any_of(m.nodes.begin(), m.nodes.end(),
                                   [](const Point& p) { return p.x == 0.0 && std::abs(p.y - 16.0) < 1e-12; });
    EXPECT_TRUE(found);
}

TEST(MeshExample2, AreaArcAndTags)
{
    const Mesh m = generate_mesh_example2(10.0);
    const double exact = 10000.0 - std::numbers::pi * 2500.0 / 4.0;
    // Chordal defect of the polygonal arc is O(h^2).
    EXPECT_NEAR(m.total_area(), exact, 0.01 * exact);
    EXPECT_GT(m.total_area(), exact);
    int on_arc = 0;
    for (const auto& p : m.nodes) {
        const double r = std::hypot(p.x, p.y);
        if (r < 50.0 + 1e-6) {
            EXPECT_NEAR(r, 50.0, 1e-9);
            ++on_arc;
        }
    }
    EXPECT_GT(on_arc, 5);
    const MeshQuality q = inspect_mesh(m);
    EXPECT_TRUE(q.boundary_closed);
    EXPECT_TRUE(q.positive_orientation);
    EXPECT_THROW(generate_mesh_example2(30.0), InputError);
}

TEST(MeshIo, RoundTripIsExact)
{
    const Mesh m = generate_mesh_example2(20.0);
    std::stringstream buf;
    write_mesh(buf, m);
    const Mesh back = read_mesh(buf);
    ASSERT_EQ(back.node_count(), m.node_count());
    ASSERT_EQ(back.triangle_count(), m.triangle_count());
    ASSERT_EQ(back.boundary.size(), m.boundary.size());
    for (int i = 0; i < m.node_count(); ++i) {
        EXPECT_EQ(back.nodes[static_cast<std::size_t>(i)].x, m.nodes[static_cast<std::size_t>(i)].x);
        EXPECT_EQ(back.nodes[static_cast<std::size_t>(i)].y, m.nodes[static_cast<std::size_t>(i)].y);
    }
    for (std::size_t e = 0; e < m.boundary.size(); ++e) EXPECT_EQ(back.boundary[e].tag, m.boundary[e].tag);
}

TEST(MeshIo, MalformedInputThrows)
{
    std::stringstream bad("nodes 2\n0 0\n");
    EXPECT_THROW(read_mesh(bad), InputError);
}

TEST(EvaluateP1, ReproducesAffineFields)
{
    const Mesh m = generate_mesh_example1(10.0);
    Vector f(m.node_count());
    for (int i = 0; i < m.node_count(); ++i) f[i] = 2.0 * m.nodes[static_cast<std::size_t>(i)].x - m.nodes[static_cast<std::size_t>(i)].y;
    EXPECT_NEAR(evaluate_p1(m, f, {33.3, 12.7}), 2.0 * 33.3 - 12.7, 1e-10);
}

TEST(Mass, UnitTriangleLocalMatrix)
{
    const SparseMatrix m = assemble_mass(unit_triangle());
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(m.coeff(i, j), (i == j ? 2.0 : 1.0) / 24.0, 1e-16);
    }
}

TEST(Mass, PartitionOfUnityAndPositiveLumping)
{
    const Mesh mesh = generate_mesh_example2(10.0);
    const SparseMatrix m = assemble_mass(mesh);
    EXPECT_NEAR(Vector::Ones(mesh.node_count()).dot(m * Vector::Ones(mesh.node_count())), mesh.total_area(),
                1e-10 * mesh.total_area());
    EXPECT_GT((m * Vector::Ones(mesh.node_count())).minCoeff(), 0.0);
}

TEST(Laplace, UnitTriangleLocalMatrix)
{
    const SparseMatrix a = assemble_laplace(unit_triangle());
    const double expected[3][3] = {{1.0, -0.5, -0.5}, {-0.5, 0.5, 0.0}, {-0.5, 0.0, 0.5}};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(a.coeff(i, j), expected[i][j], 1e-15);
    }
}

TEST(Laplace, ConstantsInKernelAndPsd)
{
    const Mesh mesh = generate_mesh_example1(8.0);
    const SparseMatrix a = assemble_laplace(mesh);
    EXPECT_LE((a * Vector::Ones(mesh.node_count())).cwiseAbs().maxCoeff(), 1e-12);
    std::mt19937 rng(1);
    std::normal_distribution<double> n01;
    for (int k = 0; k < 10; ++k) {
        Vector z(mesh.node_count());
        for (Index i = 0; i < z.size(); ++i) z[i] = n01(rng);
        EXPECT_GE(z.dot(a * z), 0.0);
    }
}

TEST(Elasticity, ConstantSofteningScalesStiffness)
{
    const Mesh mesh = generate_mesh_example1(10.0);
    const ElasticLaw law = ElasticLaw::from_gpa(18.0, 0.2);
    const SparseMatrix k0 = assemble_elasticity(mesh, Vector::Zero(mesh.node_count()), Softening::constant(1.0), law);
    const SparseMatrix k = assemble_elasticity(mesh, Vector::Zero(mesh.node_count()), Softening::exponential(0.01), law);
    EXPECT_LE((SparseMatrix(k - 1.01 * k0)).coeffs().cwiseAbs().maxCoeff(), 1e-10 * k0.coeffs().cwiseAbs().maxCoeff());
}

TEST(Elasticity, RigidMotionsInKernel)
{
    const Mesh mesh = generate_mesh_example2(10.0);
    const ElasticLaw law = ElasticLaw::from_gpa(18.0, 0.2);
    const SparseMatrix k = assemble_elasticity(mesh, Vector::Zero(mesh.node_count()), Softening::exponential(0.01), law);
    Vector tx = Vector::Zero(2 * mesh.node_count()), rot = tx;
    for (int i = 0; i < mesh.node_count(); ++i) {
        tx[2 * i] = 1.0;
        rot[2 * i] = -mesh.nodes[static_cast<std::size_t>(i)].y;
        rot[2 * i + 1] = mesh.nodes[static_cast<std::size_t>(i)].x;
    }
    const double scale = k.coeffs().cwiseAbs().maxCoeff();
    EXPECT_LE((k * tx).cwiseAbs().maxCoeff(), 1e-12 * scale);
    EXPECT_LE((k * rot).cwiseAbs().maxCoeff(), 1e-10 * scale * 100.0);
}

TEST(Elasticity, PositiveDefiniteAfterElimination)
{
    const Mesh mesh = generate_mesh_example1(10.0);
    const DofConstraints dc = build_constraints(mesh, dirichlet_example1());
    const SparseMatrix k = assemble_elasticity(mesh, Vector::Zero(mesh.node_count()), Softening::exponential(0.01),
                                               ElasticLaw::from_gpa(18.0, 0.2));
    const ReducedSystem sys = apply_dirichlet(k, dc, 0.0);
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(sys.matrix);
    ASSERT_EQ(ldlt.info(), Eigen::Success);
    EXPECT_GT(ldlt.vectorD().minCoeff(), 0.0);
}

TEST(Dirichlet, LiftFollowsProfile)
{
    const Mesh mesh = generate_mesh_example1(10.0);
    const DofConstraints dc = build_constraints(mesh, dirichlet_example1());
    EXPECT_EQ(dc.lift(0.0).cwiseAbs().maxCoeff(), 0.0);
    const Vector l = dc.lift(2.0);
    const auto on_d = mesh.tagged_nodes(BoundaryTag::GammaD);
    for (int n = 0; n < mesh.node_count(); ++n) {
        const bool d = std::binary_search(on_d.begin(), on_d.end(), n);
        EXPECT_EQ(l[2 * n], d ? 2.0 : 0.0);
        EXPECT_EQ(l[2 * n + 1], 0.0);
    }
    EXPECT_EQ(dc.pulled_component, 0);
    EXPECT_EQ(dc.pulled_dofs.size(), on_d.size());
}

TEST(Dirichlet, CornerNodeGetsBothComponents)
{
    const Mesh mesh = generate_mesh_example1(10.0);
    const DofConstraints dc = build_constraints(mesh, dirichlet_example1());
    int corner = -1;
    for (int n = 0; n < mesh.node_count(); ++n) {
        const Point& p = mesh.nodes[static_cast<std::size_t>(n)];
        if (p.x == 0.0 && p.y == 40.0) corner = n;
    }
    ASSERT_GE(corner, 0);
    EXPECT_LT(dc.free_index[static_cast<std::size_t>(2 * corner)], 0);
    EXPECT_LT(dc.free_index[static_cast<std::size_t>(2 * corner + 1)], 0);
}

TEST(Dirichlet, MissingTagIsAnError)
{
    const Mesh mesh = unit_triangle();
    EXPECT_THROW(build_constraints(mesh, dirichlet_example1()), InputError);
}

TEST(Reaction, StressFreeStateHasZeroForce)
{
    const Mesh mesh = rectangle(4.0, 2.0, 4, 2);
    const DofConstraints dc = build_constraints(mesh, uniaxial());
    const SparseMatrix k = assemble_elasticity(mesh, Vector::Zero(mesh.node_count()), Softening::exponential(0.01),
                                               ElasticLaw::from_gpa(18.0, 0.2));
    EXPECT_EQ(reaction_force_residual(k, Vector::Zero(dc.total), dc), 0.0);
}

TEST(Reaction, UniaxialPatchTestMatchesClosedForm)
{
    const double w = 4.0, ht = 2.0, t = 0.01;
    const Mesh mesh = rectangle(w, ht, 5, 3);
    const DofConstraints dc = build_constraints(mesh, uniaxial());
    const ElasticLaw law = ElasticLaw::from_gpa(18.0, 0.2);
    const Softening g = Softening::exponential(0.01);
    const Vector z = Vector::Zero(mesh.node_count());
    const SparseMatrix k = assemble_elasticity(mesh, z, g, law);
    const ReducedSystem sys = apply_dirichlet(k, dc, t);
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(sys.matrix);
    const Vector w_total = expand_free(ldlt.solve(sys.rhs), dc) + sys.lift;
    // The discrete solution is the exact affine one.
    for (int n = 0; n < mesh.node_count(); ++n) {
        EXPECT_NEAR(w_total[2 * n], t * mesh.nodes[static_cast<std::size_t>(n)].x / w, 1e-14);
        EXPECT_NEAR(w_total[2 * n + 1], 0.0, 1e-14);
    }
    const double expected = g.value(0.0) * (law.lame_lambda() + 2.0 * law.lame_mu()) * (t / w) * ht;
    EXPECT_NEAR(reaction_force_residual(k, w_total, dc), expected, 1e-10 * expected);
    EXPECT_NEAR(reaction_force_flux(mesh, w_total, z, g, law, 0), expected, 1e-10 * expected);
}

TEST(Reaction, ResidualAndFluxAgreeUnderRefinement)
{
    const ElasticLaw law = ElasticLaw::from_gpa(18.0, 0.2);
    const Softening g = Softening::exponential(0.01);
    double prev_gap = std::numeric_limits<double>::infinity();
    for (double h : {10.0, 5.0, 2.5}) {
        const Mesh mesh = generate_mesh_example1(h);
        const DofConstraints dc = build_constraints(mesh, dirichlet_example1());
        const Vector z = Vector::Zero(mesh.node_count());
        const SparseMatrix k = assemble_elasticity(mesh, z, g, law);
        const ReducedSystem sys = apply_dirichlet(k, dc, 1.0);
        Eigen::SimplicialLDLT<SparseMatrix> ldlt(sys.matrix);
        const Vector w_total = expand_free(ldlt.solve(sys.rhs), dc) + sys.lift;
        const double fr = reaction_force_residual(k, w_total, dc);
        const double ff = reaction_force_flux(mesh, w_total, z, g, law, 0);
        const double gap = std::abs(fr - ff) / std::abs(fr);
        EXPECT_LT(gap, prev_gap);
        prev_gap = gap;
    }
    EXPECT_LT(prev_gap, 0.1);
}

}  // namespace
}  // namespace liss
