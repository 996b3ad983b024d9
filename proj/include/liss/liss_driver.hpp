#pragma once

#include "liss/ris_core.hpp"
#include "liss/ssn_solver.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace liss {

/// Step length in the norm of the constraint geometry: ||.||_V for the ball,
/// the max-norm for the box.
inline double step_norm(const Vector& dz, const VNormSpec& vn, ConstraintVariant variant)
{
    return variant == ConstraintVariant::ball ? v_norm(dz, vn) : max_norm(dz);
}

/// One accepted LISS step (k >= 1) or the initial record (k = 0).
struct LissStep {
    int k = 0;
    double t = 0.0;
    double s = 0.0;
    Vector z;
    double dz_norm = 0.0;
    double lambda = 0.0;
    /// Dual norm of the constraint multiplier: lambda ||dz||_V (ball) or ||upper||_1 (box).
    double dist = 0.0;
    /// Lumped-mass distance of -D_z I(t_{k-1}, z_k) to dR(0), as a cross-check.
    double dist_lumped = 0.0;
    double diss = 0.0;
    /// I(t_k, z_k).
    double energy = 0.0;
    /// D_z I(t_{k-1}, z_k).
    Vector grad_prev_time;
    Vector q;
    Vector upper;
    /// Inner state at (t_k, z_k); the displacement for the damage model.
    Vector inner;
    int newton_iters = 0;
    int polish_steps = 0;
    int attempts = 0;
    int total_iters = 0;
    StartKind start = StartKind::previous_state;
    bool active_sets_settled = true;
    bool descent_flagged = false;
};

struct Trajectory {
    double tau = 0.0;
    double end_time = 0.0;
    ConstraintVariant variant = ConstraintVariant::ball;
    std::vector<LissStep> steps;
    /// Artificial end time: t_hat(S) = T on (s_{N-1}, s_N].
    double artificial_end = 0.0;

    int last_index() const { return static_cast<int>(steps.size()) - 1; }
    const LissStep& final_step() const { return steps.back(); }
    int descent_flagged_count() const
    {
        int c = 0;
        for (const auto& s : steps) c += s.descent_flagged ? 1 : 0;
        return c;
    }
};

struct LissOptions {
    SsnOptions ssn;
    /// Step cap; 0 means ceil(10 T / tau).
    int max_steps = 0;
    double stability_tol = 1e-10;
    /// Start Newton from z_{k-1} + (z_{k-1} - z_{k-2}) before trying z_{k-1}.
    bool use_predictor = true;
    std::function<void(const LissStep&)> on_step;
};

class LissError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Runs the local incremental stationarity scheme until t_N >= T.
inline Trajectory run(const RisProblem& problem, const Vector& z0, double tau, double end_time,
                      const LissOptions& opts = {})
{
    require_same_size(z0.size(), problem.size(), "run");
    if (!(tau > 0.0) || !(end_time > 0.0) || tau > end_time) {
        throw InputError("run: need 0 < tau <= T");
    }
    const Evaluation initial = problem.evaluate(0.0, z0, false);
    if (!check_local_stability(initial.gradient, problem.dissipation(), opts.stability_tol)) {
        throw LissError("run: initial state is not locally stable");
    }
    const VNormSpec& vn = problem.v_norm_spec();
    const DissipationSpec& diss = problem.dissipation();
    const SsnSolver solver(problem, opts.ssn);
    const ConstraintVariant variant = opts.ssn.variant;

    Trajectory traj;
    traj.tau = tau;
    traj.end_time = end_time;
    traj.variant = variant;
    LissStep first;
    first.z = z0;
    first.energy = initial.energy;
    first.inner = initial.inner;
    first.grad_prev_time = initial.gradient;
    traj.steps.push_back(first);
    if (opts.on_step) opts.on_step(traj.steps.back());

    const int cap = opts.max_steps > 0 ? opts.max_steps : static_cast<int>(std::ceil(10.0 * end_time / tau));
    while (traj.steps.back().t < end_time) {
        const LissStep& prev = traj.steps.back();
        if (prev.k >= cap) {
            throw LissError("run: step cap " + std::to_string(cap) + " exceeded at t = " + std::to_string(prev.t));
        }
        const Vector predictor = prev.k > 0 && opts.use_predictor
                                     ? Vector(prev.z - traj.steps[traj.steps.size() - 2].z)
                                     : Vector();
        StationaryPoint sp = solver.solve(prev.t, prev.z, tau, predictor);
        LissStep step;
        step.k = prev.k + 1;
        step.s = step.k * tau;
        const Vector dz = sp.state.z - prev.z;
        step.dz_norm = step_norm(dz, vn, variant);
        step.t = prev.t + tau - step.dz_norm;
        step.z = std::move(sp.state.z);
        step.lambda = sp.state.lambda;
        step.q = std::move(sp.state.q);
        step.upper = std::move(sp.state.upper);
        step.dist = variant == ConstraintVariant::ball ? (step.lambda > 0.0 ? step.lambda * v_norm(dz, vn) : 0.0)
                                                       : step.upper.cwiseAbs().sum();
        step.grad_prev_time = std::move(sp.at_step.gradient);
        step.dist_lumped = dist_to_stable(-step.grad_prev_time, diss, vn, LumpedDistance{});
        step.diss = dissipation_value(dz, diss, opts.ssn.abs_tol);
        const Evaluation now = problem.evaluate(step.t, step.z, false);
        step.energy = now.energy;
        step.inner = now.inner;
        step.newton_iters = sp.stats.iterations;
        step.polish_steps = sp.stats.polish_steps;
        step.attempts = sp.stats.attempts;
        step.total_iters = sp.stats.total_iterations;
        step.start = sp.stats.start;
        step.active_sets_settled = sp.stats.active_sets_settled;
        step.descent_flagged = sp.stats.descent_flagged;
        traj.steps.push_back(std::move(step));
        if (opts.on_step) opts.on_step(traj.steps.back());
    }
    const LissStep& last = traj.steps.back();
    const LissStep& before = traj.steps[traj.steps.size() - 2];
    const double dt = last.t - before.t;
    traj.artificial_end = dt > 0.0 ? before.s + tau * (end_time - before.t) / dt : last.s;
    return traj;
}

/// Piecewise affine and piecewise constant interpolants of a trajectory.
/// Cells are (s_{k-1}, s_k]; s = 0 belongs to the first cell. Beyond s_N the
/// interpolants are extended by the final state.
class Interpolants {
public:
    explicit Interpolants(const Trajectory& traj, double extended_end = -1.0) : traj_(traj)
    {
        if (traj.steps.empty()) throw InputError("interpolants: empty trajectory");
        domain_end_ = std::max(extended_end, traj.steps.back().s);
    }

    double domain_end() const { return domain_end_; }

    /// Index k of the cell containing s (0 if the trajectory has a single record).
    int cell(double s) const
    {
        check(s);
        const int n = traj_.last_index();
        if (n == 0) return 0;
        if (s >= traj_.steps.back().s) return n;
        const int k = static_cast<int>(std::ceil(s / traj_.tau - 1e-12));
        return std::clamp(k, 1, n);
    }

    double t_hat(double s) const
    {
        const int k = cell(s);
        if (k == 0 || s >= traj_.steps.back().s) return traj_.steps[static_cast<std::size_t>(k)].t;
        const auto& a = traj_.steps[static_cast<std::size_t>(k - 1)];
        const auto& b = traj_.steps[static_cast<std::size_t>(k)];
        return a.t + (s - a.s) / traj_.tau * (b.t - a.t);
    }

    Vector z_hat(double s) const
    {
        const int k = cell(s);
        if (k == 0 || s >= traj_.steps.back().s) return traj_.steps[static_cast<std::size_t>(k)].z;
        const auto& a = traj_.steps[static_cast<std::size_t>(k - 1)];
        const auto& b = traj_.steps[static_cast<std::size_t>(k)];
        return a.z + (s - a.s) / traj_.tau * (b.z - a.z);
    }

    double t_upper(double s) const { return traj_.steps[static_cast<std::size_t>(cell(s))].t; }
    double t_lower(double s) const { return traj_.steps[static_cast<std::size_t>(std::max(0, lower_index(s)))].t; }
    const Vector& z_upper(double s) const { return traj_.steps[static_cast<std::size_t>(cell(s))].z; }
    const Vector& z_lower(double s) const { return traj_.steps[static_cast<std::size_t>(std::max(0, lower_index(s)))].z; }

    /// Derivatives on cell k: (t_hat', ||z_hat'||).
    std::pair<double, double> cell_rates(int k) const
    {
        const auto& a = traj_.steps[static_cast<std::size_t>(k - 1)];
        const auto& b = traj_.steps[static_cast<std::size_t>(k)];
        return {(b.t - a.t) / traj_.tau, b.dz_norm / traj_.tau};
    }

private:
    int lower_index(double s) const
    {
        const int k = cell(s);
        return s >= traj_.steps.back().s ? k : k - 1;
    }

    void check(double s) const
    {
        if (!(s >= 0.0) || s > domain_end_ * (1.0 + 1e-14) + 1e-14) {
            throw InputError("interpolants: s outside [0, " + std::to_string(domain_end_) + "]");
        }
    }

    const Trajectory& traj_;
    double domain_end_ = 0.0;
};

struct ComplementarityRow {
    double time_rate = 0.0;
    double state_rate = 0.0;
    double product = 0.0;
};

struct ComplementarityReport {
    std::vector<ComplementarityRow> rows;
    double min_time_rate = 0.0;
    double max_sum_defect = 0.0;
    /// max over steps of product / max(1, dist).
    double max_scaled_product = 0.0;
    bool ok = true;
};

inline ComplementarityReport complementarity_report(const Trajectory& traj, double rate_tol = 1e-12,
                                                    double product_tol = 1e-8)
{
    ComplementarityReport rep;
    rep.min_time_rate = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < traj.steps.size(); ++k) {
        const auto& a = traj.steps[k - 1];
        const auto& b = traj.steps[k];
        ComplementarityRow row;
        row.time_rate = (b.t - a.t) / traj.tau;
        row.state_rate = b.dz_norm / traj.tau;
        row.product = row.time_rate * b.dist;
        rep.min_time_rate = std::min(rep.min_time_rate, row.time_rate);
        rep.max_sum_defect = std::max(rep.max_sum_defect, std::abs(row.time_rate + row.state_rate - 1.0));
        rep.max_scaled_product = std::max(rep.max_scaled_product, std::abs(row.product) / std::max(1.0, b.dist));
        rep.rows.push_back(row);
    }
    rep.ok = rep.min_time_rate >= -rate_tol && rep.max_sum_defect <= rate_tol && rep.max_scaled_product <= product_tol;
    return rep;
}

struct EnergyIdentityReport {
    /// Per-cell residuals R_k (index k-1 for cell k).
    std::vector<double> cell_residual;
    /// Cumulative R(s_k).
    std::vector<double> cumulative;
    /// Same with ||z_hat'|| dist in place of dist (continuous form).
    std::vector<double> cumulative_continuous_form;
    double final_residual = 0.0;
    double max_abs_cumulative = 0.0;
};

/// Residual of the discrete energy balance on each cell,
///   R_k = I(t_k, z_k) - I(t_{k-1}, z_{k-1}) + R(dz_k) + tau dist_k
///         - int_{cell} dI/dt(t_hat, z_hat) t_hat' ds,
/// with 3-point Gauss quadrature on the cell.
inline EnergyIdentityReport energy_identity_report(const Trajectory& traj, const RisProblem& problem)
{
    EnergyIdentityReport rep;
    const double tau = traj.tau;
    const std::array<double, 3> nodes{0.5 - 0.5 * std::sqrt(0.6), 0.5, 0.5 + 0.5 * std::sqrt(0.6)};
    const std::array<double, 3> weights{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    double cum = 0.0, cum_cont = 0.0;
    for (std::size_t k = 1; k < traj.steps.size(); ++k) {
        const auto& a = traj.steps[k - 1];
        const auto& b = traj.steps[k];
        const double rate = (b.t - a.t) / tau;
        double work = 0.0;
        if (rate != 0.0) {
            for (std::size_t j = 0; j < 3; ++j) {
                const double theta = nodes[j];
                const double t = a.t + theta * (b.t - a.t);
                const Vector z = a.z + theta * (b.z - a.z);
                work += weights[j] * problem.partial_t(t, z);
            }
            work *= tau * rate;
        }
        const double balance = b.energy - a.energy + b.diss - work;
        const double r = balance + tau * b.dist;
        const double r_cont = balance + b.dz_norm * b.dist;
        cum += r;
        cum_cont += r_cont;
        rep.cell_residual.push_back(r);
        rep.cumulative.push_back(cum);
        rep.cumulative_continuous_form.push_back(cum_cont);
        rep.max_abs_cumulative = std::max(rep.max_abs_cumulative, std::abs(cum));
    }
    rep.final_residual = cum;
    return rep;
}

struct AprioriReport {
    double total_dissipation = 0.0;
    double total_variation = 0.0;
    double sum_dz_z_squared = 0.0;
    double sum_dz_z_squared_over_tau = 0.0;
    double max_dist = 0.0;
    double max_z_norm = 0.0;
};

inline AprioriReport apriori_report(const Trajectory& traj, const RisProblem& problem)
{
    AprioriReport rep;
    const SparseMatrix& zn = problem.z_norm_matrix();
    for (std::size_t k = 0; k < traj.steps.size(); ++k) {
        const auto& b = traj.steps[k];
        rep.max_z_norm = std::max(rep.max_z_norm, problem.z_norm(b.z));
        if (k == 0) continue;
        const Vector dz = b.z - traj.steps[k - 1].z;
        rep.total_dissipation += b.diss;
        rep.total_variation += b.dz_norm;
        rep.sum_dz_z_squared += dz.dot(zn * dz);
        rep.max_dist = std::max(rep.max_dist, b.dist);
    }
    rep.sum_dz_z_squared_over_tau = rep.sum_dz_z_squared / traj.tau;
    return rep;
}

/// Flags a refinement family (ordered from coarse to fine tau) whose a priori
/// quantities grow by more than `factor` over the coarsest member.
inline bool apriori_family_bounded(const std::vector<AprioriReport>& family, double factor = 3.0)
{
    if (family.empty()) return true;
    const auto& base = family.front();
    auto within = [factor](double v, double ref) {
        if (ref == 0.0) return v == 0.0;
        return v <= factor * ref && v >= ref / factor;
    };
    for (const auto& r : family) {
        if (!within(r.total_dissipation, base.total_dissipation)) return false;
        if (!within(r.total_variation, base.total_variation)) return false;
        if (!within(r.sum_dz_z_squared_over_tau, base.sum_dz_z_squared_over_tau)) return false;
    }
    return true;
}

struct StepOptimality {
    int k = 0;
    double prop01 = 0.0;
    double prop02 = 0.0;
    double prop03 = 0.0;
    /// Most negative scaled value of R(v) + <zeta + D_z I, v> over the samples.
    double prop04 = 0.0;
};

struct OptimalityReport {
    std::vector<StepOptimality> steps;
    double max_violation = 0.0;
    bool ok = true;
};

/// The four discrete optimality relations at every step, with the constraint
/// multiplier zeta = lambda rho M dz (ball) or the box multiplier. Violations
/// are scaled by max(1, magnitude of the terms involved).
inline OptimalityReport optimality_report(const Trajectory& traj, const RisProblem& problem, double tol = 1e-8,
                                          int random_directions = 100, unsigned seed = 7)
{
    OptimalityReport rep;
    const VNormSpec& vn = problem.v_norm_spec();
    const DissipationSpec& diss = problem.dissipation();
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t k = 1; k < traj.steps.size(); ++k) {
        const auto& a = traj.steps[k - 1];
        const auto& b = traj.steps[k];
        const Vector dz = b.z - a.z;
        const Vector zeta = traj.variant == ConstraintVariant::ball ? Vector(b.lambda * vn.rho * (vn.mass * dz))
                                                                   : b.upper;
        const double zeta_norm = b.dist;
        StepOptimality so;
        so.k = b.k;
        const double gap = b.dz_norm - traj.tau;
        so.prop01 = std::abs(zeta_norm * gap) / std::max(1.0, zeta_norm * traj.tau);
        const double pairing = zeta.dot(dz);
        so.prop02 = std::abs(traj.tau * b.dist - pairing) / std::max({1.0, std::abs(traj.tau * b.dist), std::abs(pairing)});
        const double work = -b.grad_prev_time.dot(dz);
        const double lhs = b.diss + traj.tau * b.dist;
        so.prop03 = std::abs(lhs - work) / std::max({1.0, std::abs(lhs), std::abs(work)});
        double worst = 0.0;
        const Vector force = zeta + b.grad_prev_time;
        for (int j = 0; j < random_directions; ++j) {
            Vector v(dz.size());
            for (Index i = 0; i < v.size(); ++i) v[i] = unit(rng);
            const double rv = dissipation_value(v, diss);
            const double value = rv + force.dot(v);
            const double scale = std::max({1.0, rv, std::abs(force.dot(v))});
            worst = std::min(worst, value / scale);
        }
        so.prop04 = -worst;
        rep.max_violation = std::max({rep.max_violation, so.prop01, so.prop02, so.prop03, so.prop04});
        rep.steps.push_back(so);
    }
    rep.ok = rep.max_violation <= tol;
    return rep;
}

}  // namespace liss
