// Copyright (C) 2026 The qlm authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <qlm/denselin.hpp>
#include <qlm/qcalc.hpp>
#include <qlm/types.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace qlm {

/// Damping schedule state: the current lambda, the multiplication factor
/// applied on rejection (mf > 1), the division factor applied on acceptance
/// (0 < df < 1), and the overflow cap.
template <typename Scalar>
struct DampingState {
    Scalar lambda = Scalar(1e-3);
    Scalar mf = Scalar(10);
    Scalar df = Scalar(0.1);
    Scalar lambda_max = Scalar(1e12);

    void validate() const {
        if (!(lambda > Scalar(0))) throw std::invalid_argument("lambda must satisfy lambda > 0");
        if (!(mf > Scalar(1))) throw std::invalid_argument("mf must satisfy mf > 1");
        if (!(df > Scalar(0) && df < Scalar(1))) throw std::invalid_argument("df must satisfy 0 < df < 1");
        if (!(lambda <= lambda_max)) throw std::invalid_argument("lambda must not exceed lambda_max");
    }
};

/// Deterministic rule for the per-coordinate q vector: either fixed at q0,
/// or a geometric approach to one, q_k = 1 - (1 - q0) gamma^k, advanced on
/// accepted steps only.
template <typename Scalar>
struct QStrategy {
    enum class Kind { fixed, geometric_to_one };

    Kind kind = Kind::fixed;
    Vector<Scalar> q0;
    Scalar gamma = Scalar(0.5);  // geometric kind only

    static QStrategy fixed_q(Index n, Scalar q) {
        return QStrategy{Kind::fixed, Vector<Scalar>::Constant(n, q), Scalar(0.5)};
    }
    static QStrategy geometric(Index n, Scalar q, Scalar gamma) {
        return QStrategy{Kind::geometric_to_one, Vector<Scalar>::Constant(n, q), gamma};
    }

    void validate() const {
        if (q0.size() == 0) throw std::invalid_argument("q0 is empty");
        if ((q0.array() <= Scalar(0)).any() || (q0.array() >= Scalar(1)).any())
            throw std::invalid_argument("q0 components must satisfy 0 < q0 < 1");
        if (kind == Kind::geometric_to_one && !(gamma > Scalar(0) && gamma < Scalar(1)))
            throw std::invalid_argument("gamma must satisfy 0 < gamma < 1");
    }
};

/// Stopping rules and loop caps shared by every solver variant.
template <typename Scalar>
struct SolverConfig {
    Scalar stop_iter = Scalar(1e-12);  // SSE threshold
    long max_no_iter = 1000;           // loop-turn cap
    Scalar gtol = Scalar(1e-10);       // stationarity threshold on ||J_q^T f||_inf
    Scalar xtol = Scalar(1e-12);       // relative step-norm threshold
    bool strict_paper = false;         // re-evaluate J_q even while x and q are unchanged

    void validate() const {
        if (max_no_iter < 1) throw std::invalid_argument("max_no_iter must satisfy max_no_iter >= 1");
        if (!(stop_iter >= Scalar(0))) throw std::invalid_argument("stop_iter must satisfy stop_iter >= 0");
        if (!(gtol >= Scalar(0))) throw std::invalid_argument("gtol must satisfy gtol >= 0");
        if (!(xtol >= Scalar(0))) throw std::invalid_argument("xtol must satisfy xtol >= 0");
    }
};

enum class Termination {
    sse_below_threshold,
    max_iterations,
    stationary_gradient,
    small_step,
    lambda_overflow,
    no_progress,  // Gauss-Newton rejection, or steepest-descent line-search exhaustion
};

inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::sse_below_threshold: return "sse_below_threshold";
        case Termination::max_iterations: return "max_iterations";
        case Termination::stationary_gradient: return "stationary_gradient";
        case Termination::small_step: return "small_step";
        case Termination::lambda_overflow: return "lambda_overflow";
        case Termination::no_progress: return "no_progress";
    }
    return "unknown";
}

/// One loop turn: the candidate that was tried and whether it was accepted.
template <typename Scalar>
struct IterationRecord {
    long k = 0;
    Vector<Scalar> x;      // candidate iterate tried this turn
    Scalar sse = 0;        // ||F(candidate)||^2; NaN if the evaluation diverged
    Scalar lambda = 0;     // damping used this turn (step length for q-SD)
    Vector<Scalar> q;
    bool accepted = false;
    Scalar grad_norm = 0;  // ||J_q^T f||_inf at the turn's base point
    Scalar step_norm = 0;
};

template <typename Scalar>
struct SolveResult {
    Vector<Scalar> x_final;
    Scalar sse_final = 0;
    Termination termination = Termination::max_iterations;
    long iterations = 0;
    std::vector<IterationRecord<Scalar>> trace;
};

/// Produces the q vector for accepted-step counter k. The geometric kind is
/// clamped just below one, where the q-difference guard hands over to the
/// central-difference fallback.
template <typename Scalar>
Vector<Scalar> advance_q(const QStrategy<Scalar>& qs, long k) {
    if (k < 0) throw std::invalid_argument("advance_q requires k >= 0");
    qs.validate();
    if (qs.kind == QStrategy<Scalar>::Kind::fixed) return qs.q0;
    const Scalar cap = Scalar(1) - Scalar(1e-12);
    const Scalar shrink = std::pow(qs.gamma, static_cast<Scalar>(k));
    return (Scalar(1) - (Scalar(1) - qs.q0.array()) * shrink).min(cap).matrix();
}

template <typename Scalar>
struct AcceptDecision {
    bool accepted = false;
    DampingState<Scalar> state;
    bool lambda_clamped = false;
};

/// Strict-descent acceptance: the candidate is accepted only when its SSE is
/// strictly below the current one; ties and non-finite SSE reject. Acceptance
/// scales lambda by df, rejection by mf; the result is clamped to lambda_max
/// (reported via lambda_clamped) and kept positive.
template <typename Scalar>
AcceptDecision<Scalar> accept_or_reject(Scalar sse_candidate, Scalar sse_current, DampingState<Scalar> state) {
    state.validate();
    if (!std::isfinite(static_cast<double>(sse_current)) || !(sse_current >= Scalar(0)))
        throw std::invalid_argument("current SSE must be finite and nonnegative");
    AcceptDecision<Scalar> out;
    out.accepted = std::isfinite(static_cast<double>(sse_candidate)) && sse_candidate < sse_current;
    Scalar next = out.accepted ? state.df * state.lambda : state.mf * state.lambda;
    if (next > state.lambda_max) {
        next = state.lambda_max;
        out.lambda_clamped = true;
    }
    if (next < std::numeric_limits<Scalar>::min()) next = std::numeric_limits<Scalar>::min();
    state.lambda = next;
    out.state = state;
    return out;
}

/// First matching stop rule, in priority order. lambda_overflow fires when a
/// rejection would push lambda past lambda_max.
template <typename Scalar>
std::optional<Termination> check_termination(const IterationRecord<Scalar>& record,
                                             const SolverConfig<Scalar>& config,
                                             const DampingState<Scalar>& damping) {
    if (record.sse <= config.stop_iter) return Termination::sse_below_threshold;
    if (record.grad_norm <= config.gtol) return Termination::stationary_gradient;
    if (record.accepted && record.step_norm <= config.xtol * (Scalar(1) + record.x.norm()))
        return Termination::small_step;
    if (!record.accepted && record.lambda * damping.mf > damping.lambda_max)
        return Termination::lambda_overflow;
    if (record.k >= config.max_no_iter) return Termination::max_iterations;
    return std::nullopt;
}

template <typename Scalar>
struct StepResult {
    Vector<Scalar> candidate;
    Vector<Scalar> grad;  // J_q^T f at the base point, for termination checks
    Scalar step_norm = 0;
};

namespace detail {

template <typename Scalar>
StepResult<Scalar> damped_step(const Vector<Scalar>& x, const Matrix<Scalar>& J, const Vector<Scalar>& fx,
                               Scalar lambda) {
    DampedSystem<Scalar> sys = gramian_and_rhs(J, fx);
    sys.lambda = lambda;
    StepResult<Scalar> out;
    out.grad = sys.rhs;
    const Vector<Scalar> d = solve_damped(sys);
    out.step_norm = d.norm();
    out.candidate = x - d;
    return out;
}

// Evaluates the residuals at a trial point. Non-finite values are reported
// as NaN SSE so the acceptance rule treats the candidate as a rejection.
template <typename Scalar>
Scalar trial_sse(const ResidualMap<Scalar>& F, const Vector<Scalar>& x, Vector<Scalar>& f_out) {
    f_out = F.eval(x);
    if (f_out.size() != F.m) throw std::invalid_argument("residual map returned a vector of wrong length");
    if (!f_out.allFinite()) return std::numeric_limits<Scalar>::quiet_NaN();
    return f_out.squaredNorm();
}

// Shared damped-descent loop behind the q-LM, q-GN and classical LM fronts.
// jac(x, q) supplies the Jacobian and q_at(k) the q vector for accepted-step
// counter k. With adaptive = false lambda stays pinned and any rejection
// terminates with no_progress (the Gauss-Newton mode).
template <typename Scalar, typename JacFn, typename QProvider>
SolveResult<Scalar> damped_descent(const ResidualMap<Scalar>& F, const Vector<Scalar>& x0, JacFn&& jac,
                                   QProvider&& q_at, DampingState<Scalar> damping, bool adaptive,
                                   const SolverConfig<Scalar>& config) {
    F.validate();
    config.validate();
    damping.validate();
    if (x0.size() != F.n) throw std::invalid_argument("x0 size does not match residual map");

    SolveResult<Scalar> result;
    Vector<Scalar> x = x0;
    Vector<Scalar> fx = checked_residuals(F, x, -1);  // failure at x0 is an immediate error
    Scalar sse = fx.squaredNorm();
    long accepted_steps = 0;
    Vector<Scalar> q = q_at(accepted_steps);

    if (sse <= config.stop_iter) {
        result.x_final = x;
        result.sse_final = sse;
        result.termination = Termination::sse_below_threshold;
        return result;
    }

    Matrix<Scalar> J;
    bool jacobian_valid = false;
    std::optional<Termination> reason;

    for (long k = 1; k <= config.max_no_iter; ++k) {
        // q advances only on accepted steps, so a cached Jacobian stays
        // exact across rejections; strict_paper forces the re-evaluation.
        if (!jacobian_valid || config.strict_paper) {
            J = jac(x, q);
            jacobian_valid = true;
        }
        const Scalar lambda_used = damping.lambda;
        StepResult<Scalar> step = damped_step(x, J, fx, lambda_used);

        IterationRecord<Scalar> record;
        record.k = k;
        record.x = std::move(step.candidate);
        record.lambda = lambda_used;
        record.q = q;
        record.grad_norm = step.grad.template lpNorm<Eigen::Infinity>();
        record.step_norm = step.step_norm;

        Vector<Scalar> f_candidate;
        record.sse = trial_sse(F, record.x, f_candidate);

        const AcceptDecision<Scalar> decision = accept_or_reject(record.sse, sse, damping);
        record.accepted = decision.accepted;
        if (adaptive) damping = decision.state;

        if (decision.accepted) {
            x = record.x;
            fx = std::move(f_candidate);
            sse = record.sse;
            ++accepted_steps;
            q = q_at(accepted_steps);
            jacobian_valid = false;
        }
        result.trace.push_back(std::move(record));

        reason = check_termination(result.trace.back(), config, damping);
        if (!reason && !adaptive && !decision.accepted) reason = Termination::no_progress;
        if (reason) break;
    }

    result.x_final = x;
    result.sse_final = sse;
    result.termination = reason.value_or(Termination::max_iterations);
    result.iterations = static_cast<long>(result.trace.size());
    return result;
}

}  // namespace detail

/// One damped trial step from x: d solves (J_q^T J_q + lambda I) d = J_q^T f
/// and the candidate is x - d. Also returns J_q^T f for termination checks.
template <typename Scalar, typename Derived>
StepResult<Scalar> qlm_step(const ResidualMap<Scalar>& F, const Eigen::MatrixBase<Derived>& x_expr,
                            const QVector<Scalar>& q, Scalar lambda) {
    const Vector<Scalar> x = x_expr;
    if (!(lambda > Scalar(0))) throw std::invalid_argument("lambda must satisfy lambda > 0");
    const Vector<Scalar> fx = detail::checked_residuals(F, x, -1);
    const Matrix<Scalar> J = q_jacobian(F, x, q);
    return detail::damped_step(x, J, fx, lambda);
}

/// The damped q-difference least-squares loop: evaluate f and J_q at the
/// current accepted iterate, take the damped normal-equations step, accept
/// on strict SSE descent (shrinking lambda) or reject (growing lambda), and
/// advance the q schedule on accepted steps. Interpolates between the
/// Gauss-Newton behavior (lambda -> 0) and a scaled steepest-descent step
/// (lambda -> infinity).
template <typename Scalar, typename Derived>
SolveResult<Scalar> qlm_solve(const ResidualMap<Scalar>& F, const Eigen::MatrixBase<Derived>& x0,
                              const QStrategy<Scalar>& qs, const DampingState<Scalar>& damping0,
                              const SolverConfig<Scalar>& config = {},
                              Scalar epsilon_q = default_epsilon_q<Scalar>) {
    qs.validate();
    if (qs.q0.size() != F.n) throw std::invalid_argument("q0 size does not match residual map");
    auto jac = [&F, epsilon_q](const Vector<Scalar>& x, const Vector<Scalar>& q) {
        return q_jacobian(F, x, QVector<Scalar>{q, epsilon_q});
    };
    auto q_at = [&qs](long k) { return advance_q(qs, k); };
    return detail::damped_descent(F, Vector<Scalar>(x0), jac, q_at, damping0, /*adaptive=*/true, config);
}

/// Gauss-Newton mode: the same loop with lambda pinned at a tiny floor and no
/// damping updates. A rejected step terminates with no_progress instead of
/// retrying, and a singular system surfaces as SingularSystemError.
template <typename Scalar, typename Derived>
SolveResult<Scalar> qgn_solve(const ResidualMap<Scalar>& F, const Eigen::MatrixBase<Derived>& x0,
                              const QStrategy<Scalar>& qs, const SolverConfig<Scalar>& config = {},
                              Scalar lambda_gn = Scalar(1e-12), Scalar epsilon_q = default_epsilon_q<Scalar>) {
    qs.validate();
    if (qs.q0.size() != F.n) throw std::invalid_argument("q0 size does not match residual map");
    if (!(lambda_gn > Scalar(0))) throw std::invalid_argument("lambda_gn must satisfy lambda_gn > 0");
    DampingState<Scalar> damping;
    damping.lambda = lambda_gn;
    auto jac = [&F, epsilon_q](const Vector<Scalar>& x, const Vector<Scalar>& q) {
        return q_jacobian(F, x, QVector<Scalar>{q, epsilon_q});
    };
    auto q_at = [&qs](long k) { return advance_q(qs, k); };
    return detail::damped_descent(F, Vector<Scalar>(x0), jac, q_at, damping, /*adaptive=*/false, config);
}

/// Classical reference: the identical loop with a central finite-difference
/// Jacobian, used as the q -> 1 baseline in equivalence checks. Trace rows
/// report q = 1.
template <typename Scalar>
SolveResult<Scalar> lm_classic_solve(const ResidualMap<Scalar>& F, const Vector<Scalar>& x0,
                                     const DampingState<Scalar>& damping0, const SolverConfig<Scalar>& config = {}) {
    auto jac = [&F](const Vector<Scalar>& x, const Vector<Scalar>&) { return fd_jacobian(F, x); };
    auto q_at = [&F](long) { return Vector<Scalar>::Ones(F.n).eval(); };
    return detail::damped_descent(F, x0, jac, q_at, damping0, /*adaptive=*/true, config);
}

/// q-steepest descent on the objective (1/2)||F(x)||^2, whose q-gradient is
/// taken as J_q^T f. The step length starts at step0 and is halved until the
/// SSE strictly decreases (at most 30 halvings, else no_progress). Trace rows
/// report the tried step length in the lambda field.
template <typename Scalar>
SolveResult<Scalar> qsd_solve(const ResidualMap<Scalar>& F, const Vector<Scalar>& x0, const QStrategy<Scalar>& qs,
                              Scalar step0, const SolverConfig<Scalar>& config = {},
                              Scalar epsilon_q = default_epsilon_q<Scalar>) {
    F.validate();
    config.validate();
    qs.validate();
    if (qs.q0.size() != F.n) throw std::invalid_argument("q0 size does not match residual map");
    if (!(step0 > Scalar(0))) throw std::invalid_argument("step0 must satisfy step0 > 0");

    SolveResult<Scalar> result;
    Vector<Scalar> x = x0;
    Vector<Scalar> fx = detail::checked_residuals(F, x, -1);
    Scalar sse = fx.squaredNorm();
    long accepted_steps = 0;
    Vector<Scalar> q = advance_q(qs, accepted_steps);

    if (sse <= config.stop_iter) {
        result.x_final = x;
        result.sse_final = sse;
        result.termination = Termination::sse_below_threshold;
        return result;
    }

    const DampingState<Scalar> damping{};  // only mf/lambda_max feed check_termination
    constexpr int max_halvings = 30;
    std::optional<Termination> reason;

    for (long k = 1; k <= config.max_no_iter; ++k) {
        const Matrix<Scalar> J = q_jacobian(F, x, QVector<Scalar>{q, epsilon_q});
        const Vector<Scalar> g = J.transpose() * fx;
        const Scalar grad_norm = g.template lpNorm<Eigen::Infinity>();
        const Scalar direction_norm = g.norm();

        Scalar alpha = step0;
        bool accepted = false;
        Vector<Scalar> candidate;
        Vector<Scalar> f_candidate;
        Scalar sse_candidate = std::numeric_limits<Scalar>::quiet_NaN();
        for (int t = 0; t <= max_halvings; ++t) {
            candidate = x - alpha * g;
            sse_candidate = detail::trial_sse(F, candidate, f_candidate);
            if (std::isfinite(static_cast<double>(sse_candidate)) && sse_candidate < sse) {
                accepted = true;
                break;
            }
            if (t < max_halvings) alpha /= Scalar(2);
        }

        IterationRecord<Scalar> record;
        record.k = k;
        record.x = candidate;
        record.sse = sse_candidate;
        record.lambda = alpha;
        record.q = q;
        record.accepted = accepted;
        record.grad_norm = grad_norm;
        record.step_norm = alpha * direction_norm;

        if (accepted) {
            x = candidate;
            fx = std::move(f_candidate);
            sse = sse_candidate;
            ++accepted_steps;
            q = advance_q(qs, accepted_steps);
        }
        result.trace.push_back(std::move(record));

        reason = check_termination(result.trace.back(), config, damping);
        if (!reason && !accepted) reason = Termination::no_progress;
        if (reason) break;
    }

    result.x_final = x;
    result.sse_final = sse;
    result.termination = reason.value_or(Termination::max_iterations);
    result.iterations = static_cast<long>(result.trace.size());
    return result;
}

}  // namespace qlm
