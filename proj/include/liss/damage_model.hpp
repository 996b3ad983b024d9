#pragma once

#include "liss/fem.hpp"
#include "liss/ris_core.hpp"

#include <memory>

namespace liss {

struct DamageParameters {
    ElasticLaw law;
    double reg_alpha = 1.0;
    double kappa = 0.1;
    double softening_eps = 0.01;
    double end_time = 16.0;
};

/// Reduced partial-damage energy
///   I(t, z) = alpha/2 z^T A z + 1/2 sum_T g(z(x_T)) area_T C eps(w):eps(w),
/// w = S(z) + u_D(t), with the displacement S(z) eliminated by a sparse
/// Cholesky solve on the free DOFs. Volume and surface loads are zero.
class DamageProblem final : public RisProblem {
public:
    DamageProblem(Mesh mesh, const DirichletProfile& profile, DamageParameters params)
        : DamageProblem(std::move(mesh), profile, params, Softening::exponential(params.softening_eps))
    {
    }

    DamageProblem(Mesh mesh, const DirichletProfile& profile, DamageParameters params, Softening g)
        : mesh_(std::move(mesh)), params_(params), g_(std::move(g))
    {
        params_.law.validate();
        if (!(params_.reg_alpha > 0.0)) throw InputError("DamageProblem: reg_alpha must be positive");
        if (!(params_.kappa > 0.0)) throw InputError("DamageProblem: kappa must be positive");
        constraints_ = build_constraints(mesh_, profile);
        mass_ = assemble_mass(mesh_);
        laplace_ = assemble_laplace(mesh_);
        z_norm_ = laplace_ + mass_;
        const double area = mesh_.total_area();
        vnorm_ = VNormSpec(1.0 / area, mass_);
        dissipation_ = DissipationSpec(params_.kappa, vnorm_.lumped, Cone::one_sided);
        const Eigen::Matrix3d c = params_.law.voigt();
        elements_.reserve(static_cast<std::size_t>(mesh_.triangle_count()));
        for (int t = 0; t < mesh_.triangle_count(); ++t) {
            Element el;
            el.geometry = triangle_geometry(mesh_, t);
            el.strain = strain_matrix(el.geometry);
            el.stiffness = element_stiffness(el.geometry, c);
            el.dofs = element_dofs(mesh_, t);
            elements_.push_back(el);
        }
        voigt_ = c;
    }

    Index size() const override { return mesh_.node_count(); }
    const DissipationSpec& dissipation() const override { return dissipation_; }
    const VNormSpec& v_norm_spec() const override { return vnorm_; }
    const SparseMatrix& z_norm_matrix() const override { return z_norm_; }

    const Mesh& mesh() const { return mesh_; }
    const DamageParameters& parameters() const { return params_; }
    const DofConstraints& constraints() const { return constraints_; }
    const Softening& softening() const { return g_; }
    const SparseMatrix& laplace() const { return laplace_; }
    const SparseMatrix& mass() const { return mass_; }

    /// Displacement on all DOFs (zero on fixed DOFs), i.e. S(z) without the lift.
    Vector solve_elasticity(double t, const Vector& z) const
    {
        require_same_size(z.size(), size(), "solve_elasticity");
        const Vector lift = constraints_.lift(t);
        const auto sys = reduced_system(z, lift);
        return expand_free(solve_reduced(sys.first, sys.second), constraints_);
    }

    /// The displacement lift u_D(t).
    Vector lift(double t) const { return constraints_.lift(t); }

    /// Consistent nodal reaction on GammaD for the state (t, z).
    double reaction_force(double t, const Vector& z) const
    {
        const Vector w = solve_elasticity(t, z) + lift(t);
        return reaction_force_residual(assemble_elasticity(mesh_, z, g_, params_.law), w, constraints_);
    }

    double reaction_force_from_flux(double t, const Vector& z) const
    {
        const Vector w = solve_elasticity(t, z) + lift(t);
        return reaction_force_flux(mesh_, w, z, g_, params_.law, constraints_.pulled_component);
    }

    Evaluation evaluate(double t, const Vector& z, bool with_hessian) const override
    {
        require_same_size(z.size(), size(), "DamageProblem::evaluate");
        const Vector lift_t = constraints_.lift(t);
        const auto [kff, rhs] = reduced_system(z, lift_t);
        const Vector u_free = solve_reduced(kff, rhs);
        const Vector w = expand_free(u_free, constraints_) + lift_t;
        const Vector& rate = constraints_.lift_rate;

        Evaluation ev;
        ev.inner = u_free;
        const Vector az = laplace_ * z;
        ev.energy = 0.5 * params_.reg_alpha * z.dot(az);
        ev.gradient = params_.reg_alpha * az;
        ev.partial_t = 0.0;

        std::vector<Triplet> zz_trips, zu_trips;
        for (int t_idx = 0; t_idx < mesh_.triangle_count(); ++t_idx) {
            const Element& el = elements_[static_cast<std::size_t>(t_idx)];
            const auto& tri = mesh_.triangles[static_cast<std::size_t>(t_idx)];
            const double zc = centroid_value(mesh_, t_idx, z);
            const double gv = g_.value(zc), g1 = g_.first(zc);
            ElementVector wl, rl;
            for (int k = 0; k < 6; ++k) {
                wl[k] = w[el.dofs[static_cast<std::size_t>(k)]];
                rl[k] = rate[el.dofs[static_cast<std::size_t>(k)]];
            }
            const Eigen::Vector3d eps = el.strain * wl;
            const double density = el.geometry.area * eps.dot(voigt_ * eps);
            const ElementVector kw = el.stiffness * wl;
            ev.energy += 0.5 * gv * density;
            ev.partial_t += gv * kw.dot(rl);
            for (int v : tri) ev.gradient[v] += g1 * density / 6.0;
            if (with_hessian) {
                const double g2 = g_.second(zc);
                for (int a : tri) {
                    for (int b : tri) zz_trips.emplace_back(a, b, g2 * density / 18.0);
                    for (int k = 0; k < 6; ++k) {
                        const int fi = constraints_.free_index[static_cast<std::size_t>(el.dofs[static_cast<std::size_t>(k)])];
                        if (fi >= 0) zu_trips.emplace_back(a, fi, g1 * kw[k] / 3.0);
                    }
                }
            }
        }
        if (with_hessian) {
            HessianBlocks h;
            SparseMatrix elastic_zz(size(), size());
            elastic_zz.setFromTriplets(zz_trips.begin(), zz_trips.end());
            h.zz = params_.reg_alpha * laplace_ + elastic_zz;
            h.zu.resize(size(), constraints_.free_count());
            h.zu.setFromTriplets(zu_trips.begin(), zu_trips.end());
            h.uu = kff;
            ev.hessian = std::move(h);
        }
        return ev;
    }

private:
    struct Element {
        TriangleGeometry geometry;
        StrainMatrix strain;
        ElementMatrix stiffness;
        std::array<int, 6> dofs{};
    };

    std::pair<SparseMatrix, Vector> reduced_system(const Vector& z, const Vector& lift_t) const
    {
        const Index nf = constraints_.free_count();
        std::vector<Triplet> trips;
        trips.reserve(elements_.size() * 36);
        Vector rhs = Vector::Zero(nf);
        for (int t_idx = 0; t_idx < mesh_.triangle_count(); ++t_idx) {
            const Element& el = elements_[static_cast<std::size_t>(t_idx)];
            const double gv = g_.value(centroid_value(mesh_, t_idx, z));
            for (int a = 0; a < 6; ++a) {
                const int fa = constraints_.free_index[static_cast<std::size_t>(el.dofs[static_cast<std::size_t>(a)])];
                if (fa < 0) continue;
                for (int b = 0; b < 6; ++b) {
                    const int db = el.dofs[static_cast<std::size_t>(b)];
                    const int fb = constraints_.free_index[static_cast<std::size_t>(db)];
                    const double kab = gv * el.stiffness(a, b);
                    if (fb >= 0) {
                        trips.emplace_back(fa, fb, kab);
                    } else {
                        rhs[fa] -= kab * lift_t[db];
                    }
                }
            }
        }
        SparseMatrix kff(nf, nf);
        kff.setFromTriplets(trips.begin(), trips.end());
        return {std::move(kff), std::move(rhs)};
    }

    static Vector solve_reduced(const SparseMatrix& kff, const Vector& rhs)
    {
        Eigen::SimplicialLDLT<SparseMatrix> solver(kff);
        if (solver.info() != Eigen::Success) {
            throw std::runtime_error("elasticity: reduced stiffness is singular");
        }
        Vector u = solver.solve(rhs);
        if (solver.info() != Eigen::Success) {
            throw std::runtime_error("elasticity: solve failed");
        }
        return u;
    }

    Mesh mesh_;
    DamageParameters params_;
    Softening g_;
    DofConstraints constraints_;
    SparseMatrix mass_, laplace_, z_norm_;
    VNormSpec vnorm_;
    DissipationSpec dissipation_;
    std::vector<Element> elements_;
    Eigen::Matrix3d voigt_;
};

}  // namespace liss
