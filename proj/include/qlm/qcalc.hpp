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

#include <qlm/types.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace qlm {

namespace detail {

template <typename Scalar>
void require_valid_q(Scalar q) {
    if (!(q > Scalar(0) && q < Scalar(1))) throw std::invalid_argument("q must satisfy 0 < q < 1");
}

template <typename Scalar>
void require_valid_fallback(const std::optional<Scalar>& step) {
    if (step && !(*step > Scalar(0))) throw std::invalid_argument("fallback_step must be positive");
}

template <typename Scalar, typename F>
Scalar checked_call(F&& f, Scalar x) {
    const Scalar v = f(x);
    if (!std::isfinite(static_cast<double>(v)))
        throw EvaluationError("function value is not finite", {static_cast<double>(x)});
    return v;
}

template <typename Scalar>
Scalar checked_field(const ScalarField<Scalar>& f, const Vector<Scalar>& x) {
    const Scalar v = f.eval(x);
    if (!std::isfinite(static_cast<double>(v)))
        throw EvaluationError("field value is not finite", to_point(x));
    return v;
}

// Evaluates a residual map and verifies length and finiteness. `column` is
// the perturbed coordinate (-1 for the base point), used only for messages.
template <typename Scalar>
Vector<Scalar> checked_residuals(const ResidualMap<Scalar>& F, const Vector<Scalar>& x, Index column) {
    Vector<Scalar> r = F.eval(x);
    if (r.size() != F.m) throw std::invalid_argument("residual map returned a vector of wrong length");
    for (Index i = 0; i < r.size(); ++i) {
        if (!std::isfinite(static_cast<double>(r(i)))) {
            std::string where = column < 0 ? std::string("base point") : "column " + std::to_string(column);
            throw EvaluationError("residual value is not finite (row " + std::to_string(i) + ", " + where + ")",
                                  to_point(x));
        }
    }
    return r;
}

}  // namespace detail

/// Jackson q-difference derivative of a one-variable function:
/// (f(x) - f(qx)) / (x - qx). When the abscissa gap |x - qx| falls at or
/// below epsilon_q (x near zero, or q near one) the central difference
/// (f(x+h) - f(x-h)) / 2h is used instead, with h = fallback_step or the
/// default max(1e-8, 1e-8 |x|). The limit q -> 1 recovers the classical
/// derivative.
template <typename Scalar, typename F>
Scalar q_derivative(F&& f, Scalar x, Scalar q, std::optional<Scalar> fallback_step = std::nullopt,
                    Scalar epsilon_q = default_epsilon_q<Scalar>) {
    detail::require_valid_q(q);
    detail::require_valid_fallback(fallback_step);
    const Scalar xs = q * x;
    const Scalar gap = x - xs;  // (1-q) x, formed from the actual abscissae
    if (std::abs(gap) > epsilon_q) {
        const Scalar fx = detail::checked_call<Scalar>(f, x);
        const Scalar fs = detail::checked_call<Scalar>(f, xs);
        return (fx - fs) / gap;
    }
    const Scalar h = fallback_step ? *fallback_step : fd_step(x);
    const Scalar fp = detail::checked_call<Scalar>(f, x + h);
    const Scalar fm = detail::checked_call<Scalar>(f, x - h);
    return (fp - fm) / (Scalar(2) * h);
}

/// q-partial derivative of a scalar field in coordinate i (0-based), with the
/// same degenerate-denominator fallback as q_derivative.
template <typename Scalar, typename Derived>
Scalar q_partial(const ScalarField<Scalar>& f, const Eigen::MatrixBase<Derived>& x_expr, Index i, Scalar q_i,
                 std::optional<Scalar> fallback_step = std::nullopt,
                 Scalar epsilon_q = default_epsilon_q<Scalar>) {
    const Vector<Scalar> x = x_expr;
    if (!f.eval) throw std::invalid_argument("scalar field has no eval callback");
    if (x.size() != f.arity) throw std::invalid_argument("x size does not match field arity");
    if (i < 0 || i >= x.size()) throw std::invalid_argument("coordinate index out of range");
    detail::require_valid_q(q_i);
    detail::require_valid_fallback(fallback_step);

    Vector<Scalar> probe = x;
    probe(i) = q_i * x(i);
    const Scalar gap = x(i) - probe(i);
    if (std::abs(gap) > epsilon_q) {
        const Scalar fx = detail::checked_field(f, x);
        const Scalar fs = detail::checked_field(f, probe);
        return (fx - fs) / gap;
    }
    const Scalar h = fallback_step ? *fallback_step : fd_step(x(i));
    probe(i) = x(i) + h;
    const Scalar fp = detail::checked_field(f, probe);
    probe(i) = x(i) - h;
    const Scalar fm = detail::checked_field(f, probe);
    return (fp - fm) / (Scalar(2) * h);
}

/// q-gradient: component i is the q-partial in coordinate i with parameter
/// q.q(i). Tends to the classical gradient as every q_i -> 1.
template <typename Scalar, typename Derived>
Vector<Scalar> q_gradient(const ScalarField<Scalar>& f, const Eigen::MatrixBase<Derived>& x_expr,
                          const QVector<Scalar>& q, std::optional<Scalar> fallback_step = std::nullopt) {
    const Vector<Scalar> x = x_expr;
    q.validate();
    if (q.q.size() != f.arity) throw std::invalid_argument("q size does not match field arity");
    Vector<Scalar> g(x.size());
    for (Index i = 0; i < x.size(); ++i) {
        try {
            g(i) = q_partial(f, x, i, q.q(i), fallback_step, q.epsilon_q);
        } catch (const EvaluationError& e) {
            throw EvaluationError("coordinate " + std::to_string(i) + ": " + e.what(), e.point());
        }
    }
    return g;
}

/// q-difference Jacobian of a residual map; rows index residuals, columns
/// index parameters. Implemented as one base evaluation plus one scaled
/// evaluation per column, n+1 full evaluations of F in total when no column
/// needs the central-difference fallback (a degenerate column costs two).
template <typename Scalar, typename Derived>
Matrix<Scalar> q_jacobian(const ResidualMap<Scalar>& F, const Eigen::MatrixBase<Derived>& x_expr,
                          const QVector<Scalar>& q, std::optional<Scalar> fallback_step = std::nullopt) {
    const Vector<Scalar> x = x_expr;
    F.validate();
    q.validate();
    if (x.size() != F.n) throw std::invalid_argument("x size does not match residual map");
    if (q.q.size() != F.n) throw std::invalid_argument("q size does not match residual map");
    detail::require_valid_fallback(fallback_step);

    const Vector<Scalar> base = detail::checked_residuals(F, x, -1);
    Matrix<Scalar> J(F.m, F.n);
    Vector<Scalar> probe = x;
    for (Index j = 0; j < F.n; ++j) {
        const Scalar xj = x(j);
        const Scalar xs = q.q(j) * xj;
        const Scalar gap = xj - xs;
        if (std::abs(gap) > q.epsilon_q) {
            probe(j) = xs;
            J.col(j) = (base - detail::checked_residuals(F, probe, j)) / gap;
        } else {
            const Scalar h = fallback_step ? *fallback_step : fd_step(xj);
            probe(j) = xj + h;
            const Vector<Scalar> fp = detail::checked_residuals(F, probe, j);
            probe(j) = xj - h;
            const Vector<Scalar> fm = detail::checked_residuals(F, probe, j);
            J.col(j) = (fp - fm) / (Scalar(2) * h);
        }
        probe(j) = xj;
    }
    return J;
}

/// Central finite-difference Jacobian with per-column step
/// max(1e-8, 1e-8 |x_j|): the classical q -> 1 reference.
template <typename Scalar, typename Derived>
Matrix<Scalar> fd_jacobian(const ResidualMap<Scalar>& F, const Eigen::MatrixBase<Derived>& x_expr,
                           std::optional<Scalar> step = std::nullopt) {
    const Vector<Scalar> x = x_expr;
    F.validate();
    if (x.size() != F.n) throw std::invalid_argument("x size does not match residual map");
    detail::require_valid_fallback(step);
    Matrix<Scalar> J(F.m, F.n);
    Vector<Scalar> probe = x;
    for (Index j = 0; j < F.n; ++j) {
        const Scalar h = step ? *step : fd_step(x(j));
        probe(j) = x(j) + h;
        const Vector<Scalar> fp = detail::checked_residuals(F, probe, j);
        probe(j) = x(j) - h;
        const Vector<Scalar> fm = detail::checked_residuals(F, probe, j);
        J.col(j) = (fp - fm) / (Scalar(2) * h);
        probe(j) = x(j);
    }
    return J;
}

/// q-integer [n]_q = 1 + q + ... + q^{n-1}; [0]_q = 0.
template <typename Scalar>
Scalar q_bracket(int n, Scalar q) {
    if (n < 0) throw std::invalid_argument("q_bracket requires n >= 0");
    Scalar sum = 0;
    Scalar power = 1;
    for (int s = 0; s < n; ++s) {
        sum += power;
        power *= q;
    }
    return sum;
}

/// q-factorial [n]_q! = [1]_q [2]_q ... [n]_q; [0]_q! = 1.
template <typename Scalar>
Scalar q_factorial(int n, Scalar q) {
    if (n < 0) throw std::invalid_argument("q_factorial requires n >= 0");
    Scalar product = 1;
    for (int s = 1; s <= n; ++s) product *= q_bracket(s, q);
    return product;
}

/// Evaluates a polynomial with ascending coefficients by Horner's scheme.
template <typename Scalar>
Scalar poly_eval(const std::vector<Scalar>& coeffs, Scalar x) {
    if (coeffs.empty()) throw std::invalid_argument("polynomial has no coefficients");
    Scalar v = 0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) v = v * x + *it;
    return v;
}

/// Coefficient list of the q-derivative of a polynomial, via
/// D_q x^k = [k]_q x^{k-1}. The derivative of a constant is the zero
/// polynomial, returned as the single coefficient 0.
template <typename Scalar>
std::vector<Scalar> poly_q_derivative(const std::vector<Scalar>& coeffs, Scalar q) {
    if (coeffs.empty()) throw std::invalid_argument("polynomial has no coefficients");
    if (coeffs.size() == 1) return {Scalar(0)};
    std::vector<Scalar> out(coeffs.size() - 1);
    for (std::size_t k = 1; k < coeffs.size(); ++k)
        out[k - 1] = q_bracket(static_cast<int>(k), q) * coeffs[k];
    return out;
}

/// q-shifted power (x - c)_q^j = prod_{s=0}^{j-1} (x - q^s c); empty product
/// for j = 0.
template <typename Scalar>
Scalar q_shifted_power(Scalar x, Scalar c, int j, Scalar q) {
    if (j < 0) throw std::invalid_argument("q_shifted_power requires j >= 0");
    Scalar product = 1;
    Scalar qc = c;
    for (int s = 0; s < j; ++s) {
        product *= (x - qc);
        qc *= q;
    }
    return product;
}

/// Truncated q-Taylor expansion of a polynomial about c, evaluated at x:
///
///   sum_{j=0}^{deg} (D_q^j f)(c) (x - c)_q^j / [j]_q!
///
/// with symbolic q-derivatives of the coefficient list, q-shifted powers, and
/// the q-factorial. The sum reproduces the direct evaluation of the
/// polynomial exactly, which makes this a convention cross-check for the
/// whole q-differentiation kernel.
template <typename Scalar>
Scalar q_taylor_eval(const std::vector<Scalar>& coeffs, Scalar c, Scalar x, Scalar q) {
    if (coeffs.empty()) throw std::invalid_argument("q_taylor_eval requires a nonempty coefficient list");
    detail::require_valid_q(q);
    const int degree = static_cast<int>(coeffs.size()) - 1;
    std::vector<Scalar> deriv = coeffs;  // j-th order q-derivative coefficients
    Scalar shifted = 1;                  // (x - c)_q^j
    Scalar factorial = 1;                // [j]_q!
    Scalar qc = c;                       // q^j c
    Scalar sum = 0;
    for (int j = 0;; ++j) {
        sum += poly_eval(deriv, c) * shifted / factorial;
        if (j == degree) break;
        shifted *= (x - qc);
        qc *= q;
        factorial *= q_bracket(j + 1, q);
        deriv = poly_q_derivative(deriv, q);
    }
    return sum;
}

}  // namespace qlm
