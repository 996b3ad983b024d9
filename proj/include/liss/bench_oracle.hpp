#pragma once

#include "liss/liss_driver.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace liss {

/// l(t) = offset + rate t.
struct AffineLoad {
    double offset = 0.0;
    double rate = 1.0;
    double operator()(double t) const { return offset + rate * t; }
};

/// One-dimensional rate-independent system on Z = V = R with unit norms:
///   I(t, z) = Phi(z) - l(t) z,   R(v) = kappa |v| (two-sided) or kappa v, v >= 0.
/// Phi is either a/2 z^2 or the double well z^4/4 - z^3 + z^2, whose derivative
/// z (z - 1) (z - 2) has a spinodal region and produces a jump.
class ScalarRis final : public RisProblem {
public:
    enum class Potential { quadratic, double_well };

    using Load = AffineLoad;

    static ScalarRis convex(double a, double kappa, Load load = {}, Cone cone = Cone::one_sided)
    {
        if (!(a > 0.0)) throw InputError("ScalarRis: stiffness must be positive");
        return ScalarRis(Potential::quadratic, a, kappa, load, cone);
    }

    static ScalarRis double_well(double kappa, Load load = {}, Cone cone = Cone::two_sided)
    {
        return ScalarRis(Potential::double_well, 1.0, kappa, load, cone);
    }

    Potential potential() const { return potential_; }
    double stiffness() const { return a_; }
    double kappa() const { return dissipation_.kappa; }
    const Load& load() const { return load_; }
    bool is_convex() const { return potential_ == Potential::quadratic; }

    double phi(double z) const
    {
        if (is_convex()) return 0.5 * a_ * z * z;
        return 0.25 * z * z * z * z - z * z * z + z * z;
    }
    double phi_prime(double z) const { return is_convex() ? a_ * z : z * (z - 1.0) * (z - 2.0); }
    double phi_second(double z) const { return is_convex() ? a_ : 3.0 * z * z - 6.0 * z + 2.0; }

    Index size() const override { return 1; }
    const DissipationSpec& dissipation() const override { return dissipation_; }
    const VNormSpec& v_norm_spec() const override { return vnorm_; }
    const SparseMatrix& z_norm_matrix() const override { return vnorm_.mass; }

    Evaluation evaluate(double t, const Vector& z, bool with_hessian) const override
    {
        require_same_size(z.size(), 1, "ScalarRis::evaluate");
        const double x = z[0];
        Evaluation ev;
        ev.energy = phi(x) - load_(t) * x;
        ev.gradient = Vector::Constant(1, phi_prime(x) - load_(t));
        ev.partial_t = -load_.rate * x;
        if (with_hessian) {
            HessianBlocks h;
            h.zz.resize(1, 1);
            h.zz.insert(0, 0) = phi_second(x);
            h.zu.resize(1, 0);
            h.uu.resize(0, 0);
            ev.hessian = std::move(h);
        }
        return ev;
    }

private:
    ScalarRis(Potential p, double a, double kappa, Load load, Cone cone)
        : potential_(p),
          a_(a),
          load_(load),
          vnorm_(VNormSpec::identity(1)),
          dissipation_(kappa, Vector::Ones(1), cone)
    {
    }

    Potential potential_;
    double a_;
    Load load_;
    VNormSpec vnorm_;
    DissipationSpec dissipation_;
};

/// Closed-form play operator for the convex oracle with nondecreasing load and
/// the one-sided cone: z(t) = max(z0, (l(t) - kappa) / a).
inline double play_exact(const ScalarRis& oracle, double z0, double t)
{
    if (!oracle.is_convex()) throw InputError("play_exact: no closed form for a nonconvex potential");
    if (oracle.load().rate < 0.0) throw InputError("play_exact: load must be nondecreasing");
    const double moving = (oracle.load()(t) - oracle.kappa()) / oracle.stiffness();
    // With a rising load the lower threshold of the two-sided cone never binds.
    return std::max(z0, moving);
}

/// Physical time of the exact parametrized solution at artificial time s,
/// with s(t) = t + |z(t) - z0| (unit V-norm), inverted by bisection.
inline double play_exact_time(const ScalarRis& oracle, double z0, double s)
{
    auto arc = [&](double t) { return t + std::abs(play_exact(oracle, z0, t) - z0); };
    double lo = 0.0, hi = std::max(s, 1.0);
    while (arc(hi) < s) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++i) {
        const double mid = 0.5 * (lo + hi);
        (arc(mid) < s ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline Trajectory scalar_run(const ScalarRis& oracle, double z0, double tau, double end_time,
                             ConstraintVariant variant = ConstraintVariant::ball)
{
    LissOptions opts;
    opts.ssn.variant = variant;
    return run(oracle, Vector::Constant(1, z0), tau, end_time, opts);
}

/// Fine-tau LISS run used as the limit surrogate when no closed form exists.
inline Trajectory reference_run(const ScalarRis& oracle, double z0, double tau_ref, double end_time,
                                ConstraintVariant variant = ConstraintVariant::box)
{
    if (tau_ref > 1e-4 * end_time * (1.0 + 1e-12)) {
        throw InputError("reference_run: tau_ref must not exceed 1e-4 T");
    }
    return scalar_run(oracle, z0, tau_ref, end_time, variant);
}

/// Maximal run of consecutive cells with t_hat' = 0 (pure state motion).
struct Plateau {
    int first_cell = 0;
    int cells = 0;
    double s_begin = 0.0;
    double s_end = 0.0;
    double extent() const { return s_end - s_begin; }
};

inline std::vector<Plateau> plateaus(const Trajectory& traj, double tol = 1e-12)
{
    std::vector<Plateau> out;
    std::optional<Plateau> open;
    for (std::size_t k = 1; k < traj.steps.size(); ++k) {
        const double rate = (traj.steps[k].t - traj.steps[k - 1].t) / traj.tau;
        if (std::abs(rate) <= tol) {
            if (!open) {
                open = Plateau{static_cast<int>(k), 0, traj.steps[k - 1].s, traj.steps[k - 1].s};
            }
            open->cells += 1;
            open->s_end = traj.steps[k].s;
        } else if (open) {
            out.push_back(*open);
            open.reset();
        }
    }
    if (open) out.push_back(*open);
    return out;
}

/// The longest plateau, or nothing if the trajectory never jumps.
inline std::optional<Plateau> longest_plateau(const Trajectory& traj, double tol = 1e-12)
{
    const auto all = plateaus(traj, tol);
    if (all.empty()) return std::nullopt;
    return *std::max_element(all.begin(), all.end(),
                             [](const Plateau& a, const Plateau& b) { return a.cells < b.cells; });
}

/// sup over the artificial time of |z_hat(s) - z_exact(t_hat(s))|, sampled at
/// the knots and interior points of every cell.
inline double play_error(const Trajectory& traj, const ScalarRis& oracle, int samples_per_cell = 8)
{
    const Interpolants ip(traj);
    const double z0 = traj.steps.front().z[0];
    double err = 0.0;
    for (std::size_t k = 1; k < traj.steps.size(); ++k) {
        const double s0 = traj.steps[k - 1].s;
        for (int j = 0; j <= samples_per_cell; ++j) {
            const double s = s0 + traj.tau * j / samples_per_cell;
            err = std::max(err, std::abs(ip.z_hat(s)[0] - play_exact(oracle, z0, ip.t_hat(s))));
        }
    }
    return err;
}

/// sup over s of the distance between two trajectories' interpolants on the
/// common domain [0, min(s_N, s_N')].
inline std::pair<double, double> trajectory_distance(const Trajectory& a, const Trajectory& b, int samples = 4000)
{
    const Interpolants ia(a), ib(b);
    const double end = std::min(a.steps.back().s, b.steps.back().s);
    double et = 0.0, ez = 0.0;
    for (int j = 0; j <= samples; ++j) {
        const double s = end * j / samples;
        et = std::max(et, std::abs(ia.t_hat(s) - ib.t_hat(s)));
        ez = std::max(ez, (ia.z_hat(s) - ib.z_hat(s)).cwiseAbs().maxCoeff());
    }
    return {et, ez};
}

struct StudyRow {
    double tau = 0.0;
    int steps = 0;
    double error_t = 0.0;
    double error_z = 0.0;
    /// Convex oracle only: sup_s |z_hat - z_exact(t_hat)|.
    double play_error = 0.0;
    double rate = std::numeric_limits<double>::quiet_NaN();
    double final_z = 0.0;
    std::optional<Plateau> plateau;
};

struct StudyTable {
    std::vector<StudyRow> rows;
    bool monotone = true;
    double min_rate = std::numeric_limits<double>::quiet_NaN();
};

/// Refinement study over a list of step sizes. Errors are measured against
/// the exact parametrized solution (convex oracle) or against `reference`.
inline StudyTable convergence_study(const ScalarRis& oracle, double z0, double end_time,
                                    const std::vector<double>& taus, const Trajectory* reference = nullptr,
                                    ConstraintVariant variant = ConstraintVariant::ball)
{
    if (!oracle.is_convex() && reference == nullptr) {
        throw InputError("convergence_study: a nonconvex oracle needs a reference trajectory");
    }
    StudyTable table;
    for (double tau : taus) {
        const Trajectory traj = scalar_run(oracle, z0, tau, end_time, variant);
        StudyRow row;
        row.tau = tau;
        row.steps = traj.last_index();
        row.final_z = traj.final_step().z[0];
        row.plateau = longest_plateau(traj);
        if (reference != nullptr) {
            std::tie(row.error_t, row.error_z) = trajectory_distance(traj, *reference);
        } else {
            const Interpolants ip(traj);
            for (std::size_t k = 1; k < traj.steps.size(); ++k) {
                for (int j = 0; j <= 8; ++j) {
                    const double s = traj.steps[k - 1].s + tau * j / 8.0;
                    const double te = play_exact_time(oracle, z0, s);
                    row.error_t = std::max(row.error_t, std::abs(ip.t_hat(s) - te));
                    row.error_z = std::max(row.error_z, std::abs(ip.z_hat(s)[0] - play_exact(oracle, z0, te)));
                }
            }
            row.play_error = play_error(traj, oracle);
        }
        table.rows.push_back(row);
    }
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
        auto& prev = table.rows[i - 1];
        auto& cur = table.rows[i];
        const double e0 = oracle.is_convex() && reference == nullptr ? prev.play_error : prev.error_z;
        const double e1 = oracle.is_convex() && reference == nullptr ? cur.play_error : cur.error_z;
        if (e1 > e0) table.monotone = false;
        if (e0 > 0.0 && e1 > 0.0 && prev.tau != cur.tau) {
            cur.rate = std::log(e0 / e1) / std::log(prev.tau / cur.tau);
            table.min_rate = std::isnan(table.min_rate) ? cur.rate : std::min(table.min_rate, cur.rate);
        }
    }
    return table;
}

}  // namespace liss
