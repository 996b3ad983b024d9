#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace liss {

using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Index = Eigen::Index;

/// Raised for malformed inputs (dimension mismatch, invalid parameters).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require_same_size(Index a, Index b, const char* what)
{
    if (a != b) {
        throw InputError(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs "
                         + std::to_string(b) + ")");
    }
}

/// Scaled L2-type norm ||v||_V^2 = rho * v^T M v.
struct VNormSpec {
    double rho = 1.0;
    SparseMatrix mass;
    Vector lumped;

    VNormSpec() = default;

    VNormSpec(double scaling, SparseMatrix mass_matrix) : rho(scaling), mass(std::move(mass_matrix))
    {
        if (!(rho > 0.0)) {
            throw InputError("VNormSpec: scaling must be positive");
        }
        if (mass.rows() != mass.cols()) {
            throw InputError("VNormSpec: mass matrix must be square");
        }
        lumped = mass * Vector::Ones(mass.cols());
        for (Index i = 0; i < lumped.size(); ++i) {
            if (!(lumped[i] > 0.0)) {
                throw InputError("VNormSpec: lumped mass " + std::to_string(i) + " is not positive");
            }
        }
    }

    static VNormSpec identity(Index n, double scaling = 1.0)
    {
        SparseMatrix m(n, n);
        m.setIdentity();
        return VNormSpec(scaling, std::move(m));
    }

    Index size() const { return mass.rows(); }
};

/// Either the unidirectional cone (v >= 0) or no cone with |v| weighting.
enum class Cone { one_sided, two_sided };

/// Discrete dissipation R_h(v) = kappa * m^T v on the cone, +inf outside.
/// The two-sided form R_h(v) = kappa * m^T |v| is used by the scalar benchmarks.
struct DissipationSpec {
    double kappa = 0.0;
    Vector masses;
    Cone cone = Cone::one_sided;

    DissipationSpec() = default;

    DissipationSpec(double toughness, Vector weights, Cone c = Cone::one_sided)
        : kappa(toughness), masses(std::move(weights)), cone(c)
    {
        if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
            throw InputError("DissipationSpec: kappa must be finite and nonnegative");
        }
        for (Index i = 0; i < masses.size(); ++i) {
            if (!(masses[i] > 0.0)) {
                throw InputError("DissipationSpec: masses must be positive");
            }
        }
    }

    Index size() const { return masses.size(); }

    /// Threshold vector kappa * m: the upper bound of the subdifferential at zero.
    Vector threshold() const { return kappa * masses; }
};

inline constexpr double infinite_dissipation = std::numeric_limits<double>::infinity();

inline double v_norm_squared(const Vector& v, const VNormSpec& spec)
{
    require_same_size(v.size(), spec.size(), "v_norm");
    return spec.rho * v.dot(spec.mass * v);
}

inline double v_norm(const Vector& v, const VNormSpec& spec)
{
    return std::sqrt(std::max(0.0, v_norm_squared(v, spec)));
}

/// V* norm of a dual vector, ||xi||_{V*}^2 = (1/rho) xi^T M^{-1} xi, using a
/// caller-provided factorization of M.
template <typename Solver>
double dual_v_norm(const Vector& xi, const VNormSpec& spec, const Solver& mass_solver)
{
    require_same_size(xi.size(), spec.size(), "dual_v_norm");
    const Vector y = mass_solver.solve(xi);
    return std::sqrt(std::max(0.0, xi.dot(y) / spec.rho));
}

/// kappa m^T dz on the admissible cone; +inf if some component leaves it by
/// more than cone_tol.
inline double dissipation_value(const Vector& dz, const DissipationSpec& spec, double cone_tol = 0.0)
{
    require_same_size(dz.size(), spec.size(), "dissipation_value");
    if (spec.cone == Cone::two_sided) {
        return spec.kappa * spec.masses.dot(dz.cwiseAbs());
    }
    for (Index i = 0; i < dz.size(); ++i) {
        if (dz[i] < -cone_tol) {
            return infinite_dissipation;
        }
    }
    return spec.kappa * spec.masses.dot(dz);
}

/// Componentwise excess of eta over the stable set dR(0) = {xi : xi_i <= kappa m_i}
/// (two-sided: |xi_i| <= kappa m_i).
inline Vector stability_excess(const Vector& eta, const DissipationSpec& spec)
{
    require_same_size(eta.size(), spec.size(), "stability_excess");
    Vector excess(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
        const double bound = spec.kappa * spec.masses[i];
        const double value = spec.cone == Cone::two_sided ? std::abs(eta[i]) : eta[i];
        excess[i] = std::max(value - bound, 0.0);
    }
    return excess;
}

struct LumpedDistance {};

/// Distance evaluated at a converged stationary point through the ball multiplier.
struct MultiplierDistance {
    double lambda = 0.0;
    Vector dz;
};

/// V*-distance of eta to dR(0) in the lumped-mass dual norm.
inline double dist_to_stable(const Vector& eta, const DissipationSpec& spec, const VNormSpec& vn, LumpedDistance = {})
{
    require_same_size(vn.size(), spec.size(), "dist_to_stable");
    const Vector excess = stability_excess(eta, spec);
    double acc = 0.0;
    for (Index i = 0; i < excess.size(); ++i) {
        acc += excess[i] * excess[i] / vn.lumped[i];
    }
    return std::sqrt(acc / vn.rho);
}

/// lambda * ||dz||_V, the exact V*-norm of zeta = lambda rho M dz.
inline double dist_to_stable(const Vector& /*eta*/, const DissipationSpec& /*spec*/, const VNormSpec& vn,
                             const MultiplierDistance& m)
{
    if (m.lambda < 0.0) {
        throw InputError("dist_to_stable: negative ball multiplier");
    }
    if (m.lambda == 0.0) {
        return 0.0;
    }
    return m.lambda * v_norm(m.dz, vn);
}

/// Consistent-mass V*-distance, computed as the constrained QP
///   min_{xi in dR(0)} (1/rho) (eta - xi)^T M^{-1} (eta - xi).
/// Substituting y = M^{-1}(eta - xi) yields the LCP
///   nu >= 0, M nu >= eta - kappa m, nu^T (M nu - eta + kappa m) = 0,
/// solved by projected Gauss-Seidel; the distance is sqrt(nu^T M nu / rho).
/// Only the one-sided cone is supported.
inline double dist_to_stable_exact(const Vector& eta, const DissipationSpec& spec, const VNormSpec& vn,
                                   double tol = 1e-14, int max_sweeps = 100000)
{
    require_same_size(eta.size(), spec.size(), "dist_to_stable_exact");
    if (spec.cone != Cone::one_sided) {
        throw InputError("dist_to_stable_exact: only the one-sided cone is supported");
    }
    const Vector c = eta - spec.threshold();
    if ((c.array() <= 0.0).all()) {
        return 0.0;
    }
    const SparseMatrix& m = vn.mass;
    const Index n = c.size();
    Vector diag(n);
    for (Index i = 0; i < n; ++i) {
        diag[i] = m.coeff(i, i);
    }
    Vector nu = Vector::Zero(n);
    Vector mnu = Vector::Zero(n);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double change = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double off = mnu[i] - diag[i] * nu[i];
            const double updated = std::max(0.0, (c[i] - off) / diag[i]);
            const double delta = updated - nu[i];
            if (delta != 0.0) {
                for (SparseMatrix::InnerIterator it(m, i); it; ++it) {
                    mnu[it.row()] += it.value() * delta;
                }
                nu[i] = updated;
                change = std::max(change, std::abs(delta));
            }
        }
        if (change <= tol * std::max(1.0, nu.cwiseAbs().maxCoeff())) {
            break;
        }
    }
    return std::sqrt(std::max(0.0, nu.dot(mnu) / vn.rho));
}

/// Local stability -grad in dR(0), boundary inclusive up to tol.
inline bool check_local_stability(const Vector& grad, const DissipationSpec& spec, double tol = 0.0)
{
    require_same_size(grad.size(), spec.size(), "check_local_stability");
    for (Index i = 0; i < grad.size(); ++i) {
        const double bound = spec.kappa * spec.masses[i] + tol;
        const double force = spec.cone == Cone::two_sided ? std::abs(grad[i]) : -grad[i];
        if (force > bound) {
            return false;
        }
    }
    return true;
}

struct MultiplierFit {
    bool ok = false;
    double lambda = 0.0;
    double fit_residual = 0.0;
    double complementarity = 0.0;
};

/// Checks zeta in dI_tau(dz): zeta = lambda rho M dz with lambda >= 0 and
/// lambda (||dz||_V - tau) = 0, lambda fitted by least squares.
inline MultiplierFit fit_itau_multiplier(const Vector& dz, const Vector& zeta, double tau, const VNormSpec& vn,
                                         double tol)
{
    require_same_size(dz.size(), zeta.size(), "itau_multiplier_check");
    MultiplierFit fit;
    const Vector direction = vn.rho * (vn.mass * dz);
    const double dd = direction.squaredNorm();
    const double zeta_norm = zeta.norm();
    if (dd == 0.0) {
        fit.lambda = 0.0;
        fit.fit_residual = zeta_norm;
        fit.ok = zeta_norm <= tol;
        return fit;
    }
    fit.lambda = zeta.dot(direction) / dd;
    const double scale = std::max(zeta_norm, std::abs(fit.lambda) * std::sqrt(dd));
    fit.fit_residual = scale > 0.0 ? (zeta - fit.lambda * direction).norm() / scale : 0.0;
    const double length = v_norm(dz, vn);
    fit.complementarity = fit.lambda * (length - tau);
    fit.ok = fit.lambda >= -tol && fit.fit_residual <= tol && std::abs(fit.complementarity) <= tol
             && length <= tau + tol;
    return fit;
}

inline bool itau_multiplier_check(const Vector& dz, const Vector& zeta, double tau, const VNormSpec& vn, double tol)
{
    return fit_itau_multiplier(dz, zeta, tau, vn, tol).ok;
}

/// Second-order data at a state: the reduced Hessian is zz - zu * uu^{-1} * zu^T.
/// Problems without an inner state leave zu and uu empty.
struct HessianBlocks {
    SparseMatrix zz;
    SparseMatrix zu;
    SparseMatrix uu;

    Index inner_size() const { return uu.rows(); }
};

/// Everything a problem reports about one state (t, z).
struct Evaluation {
    double energy = 0.0;
    Vector gradient;
    double partial_t = 0.0;
    std::optional<HessianBlocks> hessian;
    /// Inner state (the displacement for the damage model), empty otherwise.
    Vector inner;
};

/// An energetic rate-independent system (I, R, ||.||_V, ||.||_Z).
class RisProblem {
public:
    virtual ~RisProblem() = default;

    virtual Index size() const = 0;
    virtual Evaluation evaluate(double t, const Vector& z, bool with_hessian) const = 0;
    virtual const DissipationSpec& dissipation() const = 0;
    virtual const VNormSpec& v_norm_spec() const = 0;
    virtual const SparseMatrix& z_norm_matrix() const = 0;

    double energy(double t, const Vector& z) const { return evaluate(t, z, false).energy; }
    Vector grad_z(double t, const Vector& z) const { return evaluate(t, z, false).gradient; }
    double partial_t(double t, const Vector& z) const { return evaluate(t, z, false).partial_t; }
    HessianBlocks hessian_blocks(double t, const Vector& z) const { return *evaluate(t, z, true).hessian; }

    double z_norm(const Vector& z) const
    {
        return std::sqrt(std::max(0.0, z.dot(z_norm_matrix() * z)));
    }
};

/// Action of the reduced Hessian zz - zu uu^{-1} zu^T on v.
inline Vector reduced_hessian_action(const HessianBlocks& h, const Vector& v)
{
    Vector out = h.zz * v;
    if (h.inner_size() == 0) return out;
    Eigen::SimplicialLDLT<SparseMatrix> uu(h.uu);
    if (uu.info() != Eigen::Success) throw std::runtime_error("reduced_hessian_action: inner block is singular");
    out -= h.zu * uu.solve(Vector(h.zu.transpose() * v));
    return out;
}

struct DerivativeCheck {
    /// max_i |central difference of I in e_i - gradient_i| / max|gradient|.
    double gradient_error = 0.0;
    /// |(grad(z + e v) - grad(z - e v)) / 2e - H v| / |H v| in the max-norm.
    double hessian_error = 0.0;
};

/// Finite-difference check of the reduced gradient (componentwise central
/// differences of the energy) and of the Hessian action along v.
inline DerivativeCheck check_derivatives(const RisProblem& problem, double t, const Vector& z, const Vector& v,
                                         double step = 1e-6)
{
    require_same_size(z.size(), problem.size(), "check_derivatives");
    require_same_size(v.size(), problem.size(), "check_derivatives");
    const Evaluation ev = problem.evaluate(t, z, true);
    const double scale = std::max(1.0, z.cwiseAbs().maxCoeff());
    const double e = step * scale;
    double worst = 0.0;
    for (Index i = 0; i < z.size(); ++i) {
        Vector zp = z, zm = z;
        zp[i] += e;
        zm[i] -= e;
        const double fd = (problem.energy(t, zp) - problem.energy(t, zm)) / (2.0 * e);
        worst = std::max(worst, std::abs(fd - ev.gradient[i]));
    }
    DerivativeCheck out;
    const double gmax = ev.gradient.cwiseAbs().maxCoeff();
    out.gradient_error = gmax > 0.0 ? worst / gmax : worst;
    const double ev_step = 10.0 * e / std::max(1.0, v.cwiseAbs().maxCoeff());
    const Vector hv = reduced_hessian_action(*ev.hessian, v);
    const Vector fd = (problem.grad_z(t, z + ev_step * v) - problem.grad_z(t, z - ev_step * v)) / (2.0 * ev_step);
    const double hmax = hv.cwiseAbs().maxCoeff();
    const double diff = (fd - hv).cwiseAbs().maxCoeff();
    out.hessian_error = hmax > 0.0 ? diff / hmax : diff;
    return out;
}

}  // namespace liss
