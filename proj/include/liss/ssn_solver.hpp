#pragma once

#include "liss/ris_core.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace liss {

enum class ConstraintVariant { ball, box };

struct SsnOptions {
    double abs_tol = 1e-10;
    int max_iters = 30;
    /// Iteration cap for the cheap starts (predictor, previous state) before
    /// the safeguarded starts take over.
    int quick_iters = 8;
    ConstraintVariant variant = ConstraintVariant::ball;
    /// alg2 slack relative to max(1, |I(t_prev, z_prev)|).
    double descent_tol = 1e-12;
    /// Restart distances (in units of tau) along the V-projected driving force.
    std::vector<double> retry_fractions{1.0, 0.5, 0.25};
    /// Proximal-gradient iteration budgets for the last-resort starts.
    std::vector<int> descent_budgets{10, 40, 160};
    /// Extra Newton steps after reaching abs_tol, kept only while the residual
    /// keeps falling. Pushes the ball constraint to round-off so that the time
    /// update is exact.
    int polish_steps = 2;

    void validate() const
    {
        if (!(abs_tol > 0.0)) throw InputError("SsnOptions: abs_tol must be positive");
        if (max_iters <= 0) throw InputError("SsnOptions: max_iters must be positive");
        if (!(descent_tol >= 0.0)) throw InputError("SsnOptions: descent_tol must be nonnegative");
    }
};

/// Current iterate of the semismooth Newton method.
/// q is the cone multiplier (<= 0 at a solution for the one-sided cone),
/// lambda the ball multiplier, upper the box multiplier (box variant only).
struct NewtonState {
    Vector z;
    Vector u;
    Vector q;
    double lambda = 0.0;
    Vector upper;
};

/// Newton-derivative selectors. alpha_i = -1 marks the cone as active, chi = 1
/// the ball; cone_clamped marks the lower clamp of the two-sided cone and
/// upper_active the box bound.
struct ActiveSets {
    std::vector<int> alpha;
    std::vector<char> cone_clamped;
    std::vector<char> upper_active;
    int chi = 0;

    bool operator==(const ActiveSets&) const = default;
};

/// Where the accepted Newton run started.
enum class StartKind { predictor, previous_state, boundary, descent };

inline const char* start_name(StartKind k)
{
    switch (k) {
    case StartKind::predictor: return "predictor";
    case StartKind::previous_state: return "previous";
    case StartKind::boundary: return "boundary";
    case StartKind::descent: return "descent";
    }
    return "?";
}

struct SsnStats {
    StartKind start = StartKind::previous_state;
    int iterations = 0;
    int polish_steps = 0;
    int attempts = 0;
    /// Newton iterations over all attempts of the step, including polish.
    int total_iterations = 0;
    std::vector<double> residual_history;
    bool active_sets_settled = false;
    bool descent_flagged = false;
    double descent_gap = 0.0;
};

struct StationaryPoint {
    NewtonState state;
    /// Problem data at (t_prev, z_k).
    Evaluation at_step;
    SsnStats stats;
};

class SsnError : public std::runtime_error {
public:
    SsnError(const std::string& what, std::vector<double> history, ActiveSets snapshot)
        : std::runtime_error(what), history_(std::move(history)), snapshot_(std::move(snapshot))
    {
    }

    const std::vector<double>& history() const { return history_; }
    const ActiveSets& active_sets() const { return snapshot_; }

private:
    std::vector<double> history_;
    ActiveSets snapshot_;
};

/// Stacked nonlinear residual F = (F1, F2, F3, F4) of the local stationarity
/// system at t_prev around z_prev with step bound tau.
class StationarySystem {
public:
    StationarySystem(const RisProblem& problem, double t_prev, Vector z_prev, double tau, ConstraintVariant variant)
        : problem_(problem),
          t_prev_(t_prev),
          z_prev_(std::move(z_prev)),
          tau_(tau),
          variant_(variant),
          threshold_(problem.dissipation().threshold()),
          two_sided_(problem.dissipation().cone == Cone::two_sided)
    {
        require_same_size(z_prev_.size(), problem.size(), "StationarySystem");
        if (!(tau_ > 0.0)) throw InputError("StationarySystem: tau must be positive");
    }

    Index n() const { return z_prev_.size(); }
    const Vector& z_prev() const { return z_prev_; }
    double tau() const { return tau_; }
    ConstraintVariant variant() const { return variant_; }

    /// G(z) = 1/2 (rho dz^T M dz - tau^2).
    double ball_constraint(const Vector& z) const
    {
        const Vector dz = z - z_prev_;
        return 0.5 * (v_norm_squared(dz, problem_.v_norm_spec()) - tau_ * tau_);
    }

    /// Residual given the problem evaluation at (t_prev, state.z). The
    /// displacement row is identically zero because u is re-solved exactly.
    Vector residual(const NewtonState& s, const Evaluation& ev, Index inner_size) const
    {
        const Index nz = n();
        const Vector dz = s.z - z_prev_;
        const VNormSpec& vn = problem_.v_norm_spec();
        const Index tail = variant_ == ConstraintVariant::ball ? 1 : nz;
        Vector f = Vector::Zero(2 * nz + inner_size + tail);
        Vector f1 = ev.gradient + threshold_ + s.q;
        if (variant_ == ConstraintVariant::ball) {
            f1 += s.lambda * vn.rho * (vn.mass * dz);
        } else {
            f1 += s.upper;
        }
        f.head(nz) = f1;
        for (Index i = 0; i < nz; ++i) {
            const double branch = std::max(s.q[i], -dz[i]);
            f[nz + inner_size + i] = two_sided_ ? std::min(s.q[i] + 2.0 * threshold_[i], branch) : branch;
        }
        if (variant_ == ConstraintVariant::ball) {
            f[2 * nz + inner_size] = std::max(-s.lambda, ball_constraint(s.z));
        } else {
            for (Index i = 0; i < nz; ++i) {
                const double branch = std::max(-s.upper[i], dz[i] - tau_);
                f[2 * nz + inner_size + i] = two_sided_ ? std::min(dz[i] + tau_, branch) : branch;
            }
        }
        return f;
    }

    /// Active-set selectors; ties go to the multiplier branch.
    ActiveSets active_sets(const NewtonState& s) const
    {
        const Index nz = n();
        ActiveSets a;
        a.alpha.assign(static_cast<std::size_t>(nz), 0);
        a.cone_clamped.assign(static_cast<std::size_t>(nz), 0);
        const Vector dz = s.z - z_prev_;
        for (Index i = 0; i < nz; ++i) {
            const auto k = static_cast<std::size_t>(i);
            a.alpha[k] = (-s.q[i] - dz[i] > 0.0) ? -1 : 0;
            if (two_sided_ && s.q[i] + 2.0 * threshold_[i] < std::max(s.q[i], -dz[i])) {
                a.cone_clamped[k] = 1;
            }
        }
        if (variant_ == ConstraintVariant::ball) {
            a.chi = ball_constraint(s.z) > -s.lambda ? 1 : 0;
        } else {
            a.upper_active.assign(static_cast<std::size_t>(nz), 0);
            for (Index i = 0; i < nz; ++i) {
                const auto k = static_cast<std::size_t>(i);
                if (two_sided_ && dz[i] + tau_ < std::max(-s.upper[i], dz[i] - tau_)) {
                    a.upper_active[k] = 2;  // lower box bound
                } else if (dz[i] - tau_ > -s.upper[i]) {
                    a.upper_active[k] = 1;
                }
            }
        }
        return a;
    }

    /// Blown-up Newton matrix over (dz, eta, dq, dlambda | dupper).
    SparseMatrix newton_matrix(const NewtonState& s, const HessianBlocks& h, const ActiveSets& a) const
    {
        const Index nz = n();
        const Index nu = h.inner_size();
        const Index tail = variant_ == ConstraintVariant::ball ? 1 : nz;
        const Index dim = 2 * nz + nu + tail;
        const Index q0 = nz + nu;
        const Index t0 = 2 * nz + nu;
        const VNormSpec& vn = problem_.v_norm_spec();
        std::vector<Triplet> trips;
        trips.reserve(static_cast<std::size_t>(h.zz.nonZeros() + 2 * h.zu.nonZeros() + h.uu.nonZeros()
                                               + vn.mass.nonZeros() + 6 * nz));
        auto add_block = [&trips](const SparseMatrix& m, Index r0, Index c0, double scale, bool transpose) {
            for (Index k = 0; k < m.outerSize(); ++k) {
                for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
                    const Index r = transpose ? it.col() : it.row();
                    const Index c = transpose ? it.row() : it.col();
                    trips.emplace_back(r0 + r, c0 + c, scale * it.value());
                }
            }
        };
        add_block(h.zz, 0, 0, 1.0, false);
        if (nu > 0) {
            add_block(h.zu, 0, nz, 1.0, false);
            add_block(h.zu, nz, 0, 1.0, true);
            add_block(h.uu, nz, nz, 1.0, false);
        }
        for (Index i = 0; i < nz; ++i) trips.emplace_back(i, q0 + i, 1.0);
        for (Index i = 0; i < nz; ++i) {
            const auto k = static_cast<std::size_t>(i);
            if (a.cone_clamped[k]) {
                trips.emplace_back(q0 + i, q0 + i, 1.0);
            } else {
                if (a.alpha[k] != 0) trips.emplace_back(q0 + i, i, static_cast<double>(a.alpha[k]));
                if (1 + a.alpha[k] != 0) trips.emplace_back(q0 + i, q0 + i, static_cast<double>(1 + a.alpha[k]));
            }
        }
        if (variant_ == ConstraintVariant::ball) {
            const Vector mdz = vn.rho * (vn.mass * (s.z - z_prev_));
            if (s.lambda != 0.0) add_block(vn.mass, 0, 0, s.lambda * vn.rho, false);
            for (Index i = 0; i < nz; ++i) {
                if (mdz[i] != 0.0) {
                    trips.emplace_back(i, t0, mdz[i]);
                    if (a.chi) trips.emplace_back(t0, i, mdz[i]);
                }
            }
            trips.emplace_back(t0, t0, -1.0 + a.chi);
        } else {
            for (Index i = 0; i < nz; ++i) {
                trips.emplace_back(i, t0 + i, 1.0);
                if (a.upper_active[static_cast<std::size_t>(i)] != 0) {
                    trips.emplace_back(t0 + i, i, 1.0);
                } else {
                    trips.emplace_back(t0 + i, t0 + i, -1.0);
                }
            }
        }
        SparseMatrix m(dim, dim);
        m.setFromTriplets(trips.begin(), trips.end());
        m.makeCompressed();
        return m;
    }

    /// Multipliers consistent with a given z: q from the driving force, lambda
    /// by a least-squares fit along dz.
    NewtonState initial_state(const Vector& z, const Evaluation& ev) const
    {
        const Index nz = n();
        NewtonState s;
        s.z = z;
        s.u = ev.inner;
        s.q.resize(nz);
        const Vector dz = z - z_prev_;
        for (Index i = 0; i < nz; ++i) {
            const double force = -ev.gradient[i];
            if (two_sided_) {
                s.q[i] = std::clamp(force, -threshold_[i], threshold_[i]) - threshold_[i];
            } else {
                s.q[i] = std::min(0.0, force - threshold_[i]);
            }
            if (dz[i] > 0.0) s.q[i] = 0.0;
            if (two_sided_ && dz[i] < 0.0) s.q[i] = -2.0 * threshold_[i];
        }
        const Vector unbalanced = ev.gradient + threshold_ + s.q;
        if (variant_ == ConstraintVariant::ball) {
            const VNormSpec& vn = problem_.v_norm_spec();
            const double dd = v_norm_squared(dz, vn);
            s.lambda = dd > 0.0 ? std::max(0.0, -unbalanced.dot(dz) / dd) : 0.0;
        } else {
            s.upper = Vector::Zero(nz);
            for (Index i = 0; i < nz; ++i) {
                if (std::abs(dz[i]) >= tau_ * (1.0 - 1e-12)) s.upper[i] = -unbalanced[i];
            }
        }
        return s;
    }

    const RisProblem& problem() const { return problem_; }

private:
    const RisProblem& problem_;
    double t_prev_;
    Vector z_prev_;
    double tau_;
    ConstraintVariant variant_;
    Vector threshold_;
    bool two_sided_;

    friend class SsnSolver;
};

inline double max_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

/// Semismooth Newton driver for one LISS step.
class SsnSolver {
public:
    SsnSolver(const RisProblem& problem, SsnOptions options) : problem_(problem), options_(std::move(options))
    {
        options_.validate();
    }

    /// Runs Newton from the given state without retries.
    StationaryPoint newton(const StationarySystem& sys, NewtonState s, int max_iters = 0) const
    {
        if (max_iters <= 0) max_iters = options_.max_iters;
        StationaryPoint out;
        Evaluation ev = problem_.evaluate(sys.t_prev_, s.z, true);
        s.u = ev.inner;
        const Index nu = ev.hessian->inner_size();
        ActiveSets previous;
        int settled_count = 0;
        for (int iter = 0;; ++iter) {
            const Vector f = sys.residual(s, ev, nu);
            const double fnorm = max_norm(f);
            out.stats.residual_history.push_back(fnorm);
            if (!std::isfinite(fnorm)) {
                throw SsnError("semismooth Newton: non-finite residual", out.stats.residual_history, previous);
            }
            if (fnorm <= options_.abs_tol) {
                out.stats.iterations = iter;
                out.stats.active_sets_settled = iter < 2 || settled_count >= 2;
                polish(sys, s, ev, fnorm, out.stats);
                break;
            }
            if (iter >= max_iters) {
                throw SsnError("semismooth Newton: no convergence within " + std::to_string(max_iters)
                                   + " iterations (residual " + std::to_string(fnorm) + ")",
                               out.stats.residual_history, previous);
            }
            const ActiveSets active = sys.active_sets(s);
            settled_count = (iter > 0 && active == previous) ? settled_count + 1 : 0;
            previous = active;
            try {
                apply_step(sys, s, solve_newton_system(sys, s, ev, f), nu);
            } catch (const std::runtime_error& e) {
                throw SsnError(e.what(), out.stats.residual_history, active);
            }
            try {
                ev = problem_.evaluate(sys.t_prev_, s.z, true);
            } catch (const std::runtime_error& e) {
                throw SsnError(std::string("semismooth Newton: model evaluation failed: ") + e.what(),
                               out.stats.residual_history, active);
            }
            s.u = ev.inner;
        }
        out.state = std::move(s);
        out.at_step = std::move(ev);
        return out;
    }

    /// Newton steps past the tolerance; each is kept only if it lowers ||F||.
    void polish(const StationarySystem& sys, NewtonState& s, Evaluation& ev, double fnorm, SsnStats& stats) const
    {
        const Index nu = ev.hessian->inner_size();
        for (int j = 0; j < options_.polish_steps && fnorm > 0.0; ++j) {
            NewtonState trial = s;
            try {
                const Vector f = sys.residual(s, ev, nu);
                apply_step(sys, trial, solve_newton_system(sys, s, ev, f), nu);
                Evaluation trial_ev = problem_.evaluate(sys.t_prev_, trial.z, true);
                const double trial_norm = max_norm(sys.residual(trial, trial_ev, nu));
                if (!(trial_norm < fnorm)) break;
                trial.u = trial_ev.inner;
                s = std::move(trial);
                ev = std::move(trial_ev);
                fnorm = trial_norm;
                stats.residual_history.push_back(fnorm);
                ++stats.polish_steps;
            } catch (const std::exception&) {
                break;
            }
        }
    }

    /// Stationary point of I(t_prev, .) + R(. - z_prev) on the tau-ball (or box)
    /// around z_prev, satisfying the alg2 descent inequality.
    /// A nonempty `predictor` (typically the previous increment) is tried first,
    /// retracted into the feasible set.
    StationaryPoint solve(double t_prev, const Vector& z_prev, double tau, const Vector& predictor = Vector()) const
    {
        const StationarySystem sys(problem_, t_prev, z_prev, tau, options_.variant);
        const Evaluation start = problem_.evaluate(t_prev, z_prev, false);
        const double reference = start.energy;
        const double slack = options_.descent_tol * std::max(1.0, std::abs(reference));
        const DissipationSpec& diss = problem_.dissipation();

        auto descent_gap = [&](const StationaryPoint& p) {
            const double r = dissipation_value(p.state.z - z_prev, diss, options_.abs_tol);
            return p.at_step.energy + r - reference;
        };

        std::vector<StationaryPoint> converged;
        std::string last_error;
        std::vector<double> last_history;
        ActiveSets last_snapshot;
        int attempts = 0;

        int spent_iterations = 0;
        auto attempt = [&](const Vector& z0, StartKind kind, int cap = 0) -> bool {
            ++attempts;
            try {
                const Evaluation ev0 = problem_.evaluate(t_prev, z0, false);
                StationaryPoint p = newton(sys, sys.initial_state(z0, ev0), cap);
                spent_iterations += p.stats.iterations + p.stats.polish_steps;
                finalize(sys, p);
                p.stats.start = kind;
                p.stats.descent_gap = descent_gap(p);
                const bool ok = p.stats.descent_gap <= slack;
                converged.push_back(std::move(p));
                return ok;
            } catch (const SsnError& e) {
                spent_iterations += static_cast<int>(e.history().size()) - 1;
                last_error = e.what();
                last_history = e.history();
                last_snapshot = e.active_sets();
                return false;
            }
        };

        auto finish = [&](StationaryPoint p, bool flagged) {
            p.stats.attempts = attempts;
            p.stats.total_iterations = spent_iterations;
            p.stats.descent_flagged = flagged;
            return p;
        };

        if (predictor.size() == z_prev.size() && predictor.cwiseAbs().maxCoeff() > 0.0) {
            if (attempt(z_prev + retract(sys, predictor), StartKind::predictor, options_.quick_iters)) {
                return finish(std::move(converged.back()), false);
            }
        }
        if (attempt(z_prev, StartKind::previous_state, options_.quick_iters)) return finish(std::move(converged.back()), false);

        const Vector direction = retry_direction(sys, start);
        if (direction.size() > 0) {
            // Strongly nonconvex steps: approach a local minimizer of
            // I(t_prev, .) + R(. - z_prev) on the feasible set first.
            DescentState ds{z_prev, start.energy, 0.0};
            ds.alpha = initial_descent_step(start);
            int spent = 0;
            for (int budget : options_.descent_budgets) {
                spent += descend(sys, ds, budget - spent);
                if (attempt(ds.z, StartKind::descent)) return finish(std::move(converged.back()), false);
            }
            for (double fraction : options_.retry_fractions) {
                if (attempt(z_prev + fraction * tau * direction, StartKind::boundary)) {
                    return finish(std::move(converged.back()), false);
                }
            }
        }
        if (converged.empty()) {
            throw SsnError("semismooth Newton failed after " + std::to_string(attempts) + " attempts: " + last_error,
                           last_history, last_snapshot);
        }
        auto best = std::min_element(converged.begin(), converged.end(), [](const auto& a, const auto& b) {
            return a.stats.descent_gap < b.stats.descent_gap;
        });
        return finish(std::move(*best), true);
    }

    const SsnOptions& options() const { return options_; }

private:
    Vector solve_newton_system(const StationarySystem& sys, const NewtonState& s, const Evaluation& ev,
                               const Vector& f) const
    {
        const SparseMatrix h = sys.newton_matrix(s, *ev.hessian, sys.active_sets(s));
        Eigen::SparseLU<SparseMatrix> lu;
        lu.analyzePattern(h);
        lu.factorize(h);
        if (lu.info() != Eigen::Success) throw std::runtime_error("semismooth Newton: singular Newton matrix");
        Vector step = lu.solve(-f);
        if (lu.info() != Eigen::Success || !step.allFinite()) {
            throw std::runtime_error("semismooth Newton: linear solve failed");
        }
        return step;
    }

    static void apply_step(const StationarySystem& sys, NewtonState& s, const Vector& step, Index nu)
    {
        const Index nz = sys.n();
        s.z += step.head(nz);
        s.q += step.segment(nz + nu, nz);
        if (sys.variant() == ConstraintVariant::ball) {
            s.lambda = std::max(0.0, s.lambda + step[2 * nz + nu]);
        } else {
            s.upper += step.tail(nz);
        }
    }

    /// Maps an increment into the cone and then into the ball (radially) or box.
    Vector retract(const StationarySystem& sys, Vector v) const
    {
        const bool two_sided = problem_.dissipation().cone == Cone::two_sided;
        const double tau = sys.tau();
        if (!two_sided) v = v.cwiseMax(0.0);
        if (sys.variant() == ConstraintVariant::ball) {
            const double len = v_norm(v, problem_.v_norm_spec());
            if (len > tau) v *= tau / len;
        } else {
            v = v.cwiseMin(tau).cwiseMax(two_sided ? -tau : 0.0);
        }
        return v;
    }

    struct DescentState {
        Vector z;
        double value = 0.0;
        double alpha = 0.0;
    };

    double initial_descent_step(const Evaluation& start) const
    {
        const VNormSpec& vn = problem_.v_norm_spec();
        const double g = max_norm((start.gradient + problem_.dissipation().threshold()).cwiseQuotient(vn.lumped));
        return g > 0.0 ? 1e-2 / (vn.rho * g) : 1.0;
    }

    /// Proximal-gradient iterations in the lumped V-metric with Barzilai-Borwein
    /// steps and Armijo backtracking; the step is retracted onto the ball (or
    /// clipped to the box). Returns the number of iterations spent.
    int descend(const StationarySystem& sys, DescentState& ds, int budget) const
    {
        const DissipationSpec& diss = problem_.dissipation();
        const VNormSpec& vn = problem_.v_norm_spec();
        const Vector metric = vn.rho * vn.lumped;
        const Vector threshold = diss.threshold();
        const bool two_sided = diss.cone == Cone::two_sided;
        const Vector& z_prev = sys.z_prev();

        auto feasible = [&](Vector v) { return retract(sys, std::move(v)); };
        // prox of alpha * R in the metric, applied to a gradient step on I
        auto prox_step = [&](const Vector& v, const Vector& grad, double alpha) {
            Vector w = v - alpha * grad.cwiseQuotient(metric);
            for (Index i = 0; i < w.size(); ++i) {
                const double shrink = alpha * threshold[i] / metric[i];
                if (two_sided) {
                    w[i] = std::copysign(std::max(0.0, std::abs(w[i]) - shrink), w[i]);
                } else {
                    w[i] = std::max(0.0, w[i] - shrink);
                }
            }
            return feasible(w);
        };
        auto objective = [&](const Vector& v, Vector& grad) {
            const Evaluation ev = problem_.evaluate(sys.t_prev_, z_prev + v, false);
            grad = ev.gradient;
            return ev.energy + dissipation_value(v, diss);
        };

        Vector v = ds.z - z_prev;
        Vector grad;
        double value = objective(v, grad);
        int it = 0;
        for (; it < budget; ++it) {
            double alpha = ds.alpha;
            Vector trial, trial_grad;
            double trial_value = value;
            bool accepted = false;
            for (int bt = 0; bt < 30; ++bt, alpha *= 0.5) {
                trial = prox_step(v, grad, alpha);
                trial_value = objective(trial, trial_grad);
                const Vector d = trial - v;
                if (trial_value <= value - 1e-4 / alpha * d.cwiseProduct(metric).dot(d)) {
                    accepted = true;
                    break;
                }
            }
            if (!accepted) break;
            const Vector sv = trial - v;
            const Vector yv = trial_grad - grad;
            const double sy = sv.dot(yv);
            const double decrease = value - trial_value;
            v = std::move(trial);
            grad = std::move(trial_grad);
            value = trial_value;
            ds.alpha = sy > 0.0 ? sv.cwiseProduct(metric).dot(sv) / sy : 2.0 * alpha;
            if (decrease <= 1e-15 * std::max(1.0, std::abs(value))) break;
        }
        ds.z = z_prev + v;
        ds.value = value;
        return it;
    }

    /// Lumped Riesz representative of the driving-force excess, scaled to unit
    /// step length in the variant's norm. Empty if z_prev is stable.
    Vector retry_direction(const StationarySystem& sys, const Evaluation& start) const
    {
        const DissipationSpec& diss = problem_.dissipation();
        const VNormSpec& vn = problem_.v_norm_spec();
        const Vector force = -start.gradient;
        const Vector excess = stability_excess(force, diss);
        if (excess.maxCoeff() <= 0.0) return {};
        Vector d(excess.size());
        for (Index i = 0; i < d.size(); ++i) {
            const double sign = (diss.cone == Cone::two_sided && force[i] < 0.0) ? -1.0 : 1.0;
            d[i] = sign * excess[i] / (vn.rho * vn.lumped[i]);
        }
        const double length = sys.variant() == ConstraintVariant::ball ? v_norm(d, vn) : max_norm(d);
        return d / length;
    }

    /// Removes round-off below the one-sided cone and re-evaluates at the final z.
    void finalize(const StationarySystem& sys, StationaryPoint& p) const
    {
        if (problem_.dissipation().cone != Cone::one_sided) return;
        const Vector clamped = p.state.z.cwiseMax(sys.z_prev());
        if (clamped != p.state.z) {
            p.state.z = clamped;
            p.at_step = problem_.evaluate(sys.t_prev_, p.state.z, false);
            p.state.u = p.at_step.inner;
        }
    }

    const RisProblem& problem_;
    SsnOptions options_;
};

/// Convenience wrappers matching the two constraint geometries.
inline StationaryPoint solve_stationary(const RisProblem& problem, double t_prev, const Vector& z_prev, double tau,
                                        SsnOptions opts = {})
{
    opts.variant = ConstraintVariant::ball;
    return SsnSolver(problem, opts).solve(t_prev, z_prev, tau);
}

inline StationaryPoint solve_stationary_box(const RisProblem& problem, double t_prev, const Vector& z_prev,
                                            double tau, SsnOptions opts = {})
{
    opts.variant = ConstraintVariant::box;
    return SsnSolver(problem, opts).solve(t_prev, z_prev, tau);
}

}  // namespace liss
