#pragma once

#include "liss/mesh.hpp"
#include "liss/ris_core.hpp"

#include <Eigen/SparseCholesky>

#include <array>
#include <functional>
#include <vector>

namespace liss {

/// Isotropic linear elasticity. E is stored in MPa.
struct ElasticLaw {
    double youngs_modulus = 18000.0;
    double poisson_ratio = 0.2;
    bool plane_strain = true;

    static ElasticLaw from_gpa(double e_gpa, double nu, bool plane_strain = true)
    {
        return ElasticLaw{e_gpa * 1000.0, nu, plane_strain};
    }

    void validate() const
    {
        if (!(youngs_modulus > 0.0)) throw InputError("ElasticLaw: E must be positive");
        if (!(poisson_ratio > 0.0 && poisson_ratio < 0.5)) throw InputError("ElasticLaw: nu must lie in (0, 0.5)");
    }

    double lame_lambda() const
    {
        const double e = youngs_modulus, nu = poisson_ratio;
        return e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    }

    double lame_mu() const { return youngs_modulus / (2.0 * (1.0 + poisson_ratio)); }

    /// Voigt matrix acting on (eps11, eps22, 2 eps12).
    Eigen::Matrix3d voigt() const
    {
        validate();
        Eigen::Matrix3d c = Eigen::Matrix3d::Zero();
        if (plane_strain) {
            const double l = lame_lambda(), m = lame_mu();
            c << l + 2.0 * m, l, 0.0, l, l + 2.0 * m, 0.0, 0.0, 0.0, m;
        } else {
            const double f = youngs_modulus / (1.0 - poisson_ratio * poisson_ratio);
            c << f, f * poisson_ratio, 0.0, f * poisson_ratio, f, 0.0, 0.0, 0.0, f * (1.0 - poisson_ratio) / 2.0;
        }
        return c;
    }
};

/// Softening function with its first two derivatives.
struct Softening {
    std::function<double(double)> value;
    std::function<double(double)> first;
    std::function<double(double)> second;

    /// g(z) = exp(-z) + eps.
    static Softening exponential(double eps)
    {
        return {[eps](double z) { return std::exp(-z) + eps; }, [](double z) { return -std::exp(-z); },
                [](double z) { return std::exp(-z); }};
    }

    static Softening constant(double c)
    {
        return {[c](double) { return c; }, [](double) { return 0.0; }, [](double) { return 0.0; }};
    }
};

/// Constant-gradient data of a P1 triangle.
struct TriangleGeometry {
    double area = 0.0;
    std::array<double, 3> dphi_dx{};
    std::array<double, 3> dphi_dy{};
};

inline TriangleGeometry triangle_geometry(const Mesh& mesh, int tri)
{
    const auto& t = mesh.triangles[static_cast<std::size_t>(tri)];
    TriangleGeometry g;
    g.area = mesh.signed_area(tri);
    if (!(g.area > 0.0)) {
        throw InputError("degenerate or clockwise triangle " + std::to_string(tri));
    }
    for (int k = 0; k < 3; ++k) {
        const Point& pj = mesh.nodes[static_cast<std::size_t>(t[static_cast<std::size_t>((k + 1) % 3)])];
        const Point& pk = mesh.nodes[static_cast<std::size_t>(t[static_cast<std::size_t>((k + 2) % 3)])];
        g.dphi_dx[static_cast<std::size_t>(k)] = (pj.y - pk.y) / (2.0 * g.area);
        g.dphi_dy[static_cast<std::size_t>(k)] = (pk.x - pj.x) / (2.0 * g.area);
    }
    return g;
}

using StrainMatrix = Eigen::Matrix<double, 3, 6>;
using ElementMatrix = Eigen::Matrix<double, 6, 6>;
using ElementVector = Eigen::Matrix<double, 6, 1>;

/// Maps the local displacement vector (u1_0, u2_0, u1_1, ...) to Voigt strain.
inline StrainMatrix strain_matrix(const TriangleGeometry& g)
{
    StrainMatrix b = StrainMatrix::Zero();
    for (int k = 0; k < 3; ++k) {
        const double bx = g.dphi_dx[static_cast<std::size_t>(k)];
        const double by = g.dphi_dy[static_cast<std::size_t>(k)];
        b(0, 2 * k) = bx;
        b(1, 2 * k + 1) = by;
        b(2, 2 * k) = by;
        b(2, 2 * k + 1) = bx;
    }
    return b;
}

inline std::array<int, 6> element_dofs(const Mesh& mesh, int tri)
{
    const auto& t = mesh.triangles[static_cast<std::size_t>(tri)];
    return {2 * t[0], 2 * t[0] + 1, 2 * t[1], 2 * t[1] + 1, 2 * t[2], 2 * t[2] + 1};
}

namespace detail {

inline SparseMatrix symmetric_from_triplets(Index n, const std::vector<Triplet>& trips)
{
    SparseMatrix m(n, n);
    m.setFromTriplets(trips.begin(), trips.end());
    SparseMatrix mt = m.transpose();
    SparseMatrix sym = 0.5 * (m + mt);
    sym.makeCompressed();
    return sym;
}

}  // namespace detail

/// Consistent P1 mass matrix, element block (area/12) [[2,1,1],[1,2,1],[1,1,2]].
inline SparseMatrix assemble_mass(const Mesh& mesh)
{
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(9 * mesh.triangle_count()));
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto g = triangle_geometry(mesh, t);
        const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                trips.emplace_back(tri[static_cast<std::size_t>(a)], tri[static_cast<std::size_t>(b)],
                                   g.area / 12.0 * (a == b ? 2.0 : 1.0));
            }
        }
    }
    return detail::symmetric_from_triplets(mesh.node_count(), trips);
}

/// P1 stiffness of -Laplace without boundary conditions.
inline SparseMatrix assemble_laplace(const Mesh& mesh)
{
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(9 * mesh.triangle_count()));
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto g = triangle_geometry(mesh, t);
        const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
        for (std::size_t a = 0; a < 3; ++a) {
            for (std::size_t b = 0; b < 3; ++b) {
                const double v = g.area * (g.dphi_dx[a] * g.dphi_dx[b] + g.dphi_dy[a] * g.dphi_dy[b]);
                trips.emplace_back(tri[a], tri[b], v);
            }
        }
    }
    return detail::symmetric_from_triplets(mesh.node_count(), trips);
}

/// Element stiffness area * B^T C B with g = 1.
inline ElementMatrix element_stiffness(const TriangleGeometry& g, const Eigen::Matrix3d& c)
{
    const StrainMatrix b = strain_matrix(g);
    ElementMatrix k = g.area * b.transpose() * c * b;
    return 0.5 * (k + k.transpose());
}

/// Centroid value of a P1 field: the mean of the three vertex values.
inline double centroid_value(const Mesh& mesh, int tri, const Vector& z)
{
    const auto& t = mesh.triangles[static_cast<std::size_t>(tri)];
    return (z[t[0]] + z[t[1]] + z[t[2]]) / 3.0;
}

/// 2N x 2N stiffness with each element scaled by g(z(x_T)).
inline SparseMatrix assemble_elasticity(const Mesh& mesh, const Vector& z, const Softening& g,
                                        const ElasticLaw& law)
{
    require_same_size(z.size(), mesh.node_count(), "assemble_elasticity");
    const Eigen::Matrix3d c = law.voigt();
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(36 * mesh.triangle_count()));
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto geo = triangle_geometry(mesh, t);
        const ElementMatrix k = g.value(centroid_value(mesh, t, z)) * element_stiffness(geo, c);
        const auto dofs = element_dofs(mesh, t);
        for (int a = 0; a < 6; ++a) {
            for (int b = 0; b < 6; ++b) {
                trips.emplace_back(dofs[static_cast<std::size_t>(a)], dofs[static_cast<std::size_t>(b)], k(a, b));
            }
        }
    }
    return detail::symmetric_from_triplets(2 * mesh.node_count(), trips);
}

/// u_component = offset + rate * t on every node of the tagged boundary part.
struct DirichletCondition {
    BoundaryTag tag = BoundaryTag::GammaD;
    int component = 0;
    double offset = 0.0;
    double rate = 0.0;
};

using DirichletProfile = std::vector<DirichletCondition>;

/// Symmetry conditions plus u1 = t, u2 = 0 on GammaD.
inline DirichletProfile dirichlet_example1()
{
    return {{BoundaryTag::Gamma1, 0, 0.0, 0.0},
            {BoundaryTag::Gamma2, 1, 0.0, 0.0},
            {BoundaryTag::GammaD, 0, 0.0, 1.0},
            {BoundaryTag::GammaD, 1, 0.0, 0.0}};
}

/// Symmetry conditions plus u1 = 0, u2 = t on GammaD.
inline DirichletProfile dirichlet_example2()
{
    return {{BoundaryTag::Gamma1, 0, 0.0, 0.0},
            {BoundaryTag::Gamma2, 1, 0.0, 0.0},
            {BoundaryTag::GammaD, 0, 0.0, 0.0},
            {BoundaryTag::GammaD, 1, 0.0, 1.0}};
}

/// Fixed/free partition of the displacement DOFs and the affine lift
/// u_D(t) = offset + t * rate, supported on the fixed DOFs only.
/// A node carrying several tags gets every component any tag fixes; for a
/// component fixed twice the later condition in the profile sets the value.
struct DofConstraints {
    Index total = 0;
    std::vector<int> free_dofs;
    std::vector<int> fixed_dofs;
    std::vector<int> free_index;
    Vector lift_offset;
    Vector lift_rate;
    /// Component pulled on GammaD (the one with nonzero rate), -1 if none.
    int pulled_component = -1;
    std::vector<int> pulled_dofs;

    Vector lift(double t) const { return lift_offset + t * lift_rate; }
    Index free_count() const { return static_cast<Index>(free_dofs.size()); }
};

inline DofConstraints build_constraints(const Mesh& mesh, const DirichletProfile& profile)
{
    DofConstraints dc;
    dc.total = 2 * mesh.node_count();
    dc.lift_offset = Vector::Zero(dc.total);
    dc.lift_rate = Vector::Zero(dc.total);
    std::vector<char> fixed(static_cast<std::size_t>(dc.total), 0);
    for (const auto& cond : profile) {
        if (cond.component < 0 || cond.component > 1) throw InputError("Dirichlet component must be 0 or 1");
        if (!mesh.has_tag(cond.tag)) {
            throw InputError("Dirichlet condition on tag " + std::string(tag_name(cond.tag))
                             + " which the mesh does not carry");
        }
        for (int node : mesh.tagged_nodes(cond.tag)) {
            const int dof = 2 * node + cond.component;
            fixed[static_cast<std::size_t>(dof)] = 1;
            dc.lift_offset[dof] = cond.offset;
            dc.lift_rate[dof] = cond.rate;
        }
        if (cond.tag == BoundaryTag::GammaD && cond.rate != 0.0) {
            dc.pulled_component = cond.component;
        }
    }
    dc.free_index.assign(static_cast<std::size_t>(dc.total), -1);
    for (int dof = 0; dof < dc.total; ++dof) {
        if (fixed[static_cast<std::size_t>(dof)]) {
            dc.fixed_dofs.push_back(dof);
        } else {
            dc.free_index[static_cast<std::size_t>(dof)] = static_cast<int>(dc.free_dofs.size());
            dc.free_dofs.push_back(dof);
        }
    }
    if (dc.pulled_component >= 0) {
        for (int node : mesh.tagged_nodes(BoundaryTag::GammaD)) {
            dc.pulled_dofs.push_back(2 * node + dc.pulled_component);
        }
    }
    return dc;
}

/// Free-DOF block K_FF and right-hand side -K_FC u_D(t).
struct ReducedSystem {
    SparseMatrix matrix;
    Vector rhs;
    Vector lift;
};

inline ReducedSystem apply_dirichlet(const SparseMatrix& k, const DofConstraints& dc, double t)
{
    require_same_size(k.rows(), dc.total, "apply_dirichlet");
    ReducedSystem sys;
    sys.lift = dc.lift(t);
    const Vector coupling = k * sys.lift;
    std::vector<Triplet> trips;
    sys.rhs.resize(dc.free_count());
    for (Index col = 0; col < k.outerSize(); ++col) {
        const int jc = dc.free_index[static_cast<std::size_t>(col)];
        if (jc < 0) continue;
        for (SparseMatrix::InnerIterator it(k, col); it; ++it) {
            const int ir = dc.free_index[static_cast<std::size_t>(it.row())];
            if (ir >= 0) trips.emplace_back(ir, jc, it.value());
        }
    }
    for (Index i = 0; i < dc.free_count(); ++i) {
        sys.rhs[i] = -coupling[dc.free_dofs[static_cast<std::size_t>(i)]];
    }
    sys.matrix.resize(dc.free_count(), dc.free_count());
    sys.matrix.setFromTriplets(trips.begin(), trips.end());
    return sys;
}

/// Scatters free-DOF values into a full vector with zeros on fixed DOFs.
inline Vector expand_free(const Vector& free_values, const DofConstraints& dc)
{
    Vector full = Vector::Zero(dc.total);
    for (Index i = 0; i < free_values.size(); ++i) {
        full[dc.free_dofs[static_cast<std::size_t>(i)]] = free_values[i];
    }
    return full;
}

/// Consistent nodal reaction on GammaD in the pulled component:
/// the sum of (K w) over the pulled GammaD DOFs, with w = u + u_D.
inline double reaction_force_residual(const SparseMatrix& k, const Vector& total_displacement,
                                      const DofConstraints& dc)
{
    if (dc.pulled_dofs.empty()) throw InputError("reaction_force: no loaded GammaD DOFs");
    const Vector r = k * total_displacement;
    double f = 0.0;
    for (int dof : dc.pulled_dofs) f += r[dof];
    return f;
}

/// Integral of the traction component along GammaD using element-constant stresses.
inline double reaction_force_flux(const Mesh& mesh, const Vector& total_displacement, const Vector& z,
                                  const Softening& g, const ElasticLaw& law, int component)
{
    const Eigen::Matrix3d c = law.voigt();
    std::map<std::pair<int, int>, int> owner;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
        for (int k = 0; k < 3; ++k) {
            const int a = tri[static_cast<std::size_t>(k)], b = tri[static_cast<std::size_t>((k + 1) % 3)];
            owner[{std::min(a, b), std::max(a, b)}] = t;
        }
    }
    double f = 0.0;
    bool any = false;
    for (const auto& e : mesh.boundary) {
        if (e.tag != BoundaryTag::GammaD) continue;
        any = true;
        const int a = e.nodes[0], b = e.nodes[1];
        const int t = owner.at({std::min(a, b), std::max(a, b)});
        const auto geo = triangle_geometry(mesh, t);
        const auto dofs = element_dofs(mesh, t);
        ElementVector w;
        for (int k = 0; k < 6; ++k) w[k] = total_displacement[dofs[static_cast<std::size_t>(k)]];
        const Eigen::Vector3d sigma = g.value(centroid_value(mesh, t, z)) * c * (strain_matrix(geo) * w);
        const Point& pa = mesh.nodes[static_cast<std::size_t>(a)];
        const Point& pb = mesh.nodes[static_cast<std::size_t>(b)];
        const double len = std::hypot(pb.x - pa.x, pb.y - pa.y);
        double nx = (pb.y - pa.y) / len, ny = -(pb.x - pa.x) / len;
        const Point ct = mesh.centroid(t);
        if (nx * (ct.x - pa.x) + ny * (ct.y - pa.y) > 0.0) {
            nx = -nx;
            ny = -ny;
        }
        const double tx = sigma[0] * nx + sigma[2] * ny;
        const double ty = sigma[2] * nx + sigma[1] * ny;
        f += (component == 0 ? tx : ty) * len;
    }
    if (!any) throw InputError("reaction_force: mesh has no GammaD edges");
    return f;
}

}  // namespace liss
