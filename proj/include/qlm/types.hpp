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

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qlm {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Thrown when a user-supplied callback produces a non-finite value.
/// Carries the offending evaluation point.
class EvaluationError : public std::runtime_error {
public:
    EvaluationError(const std::string& what, std::vector<double> point)
        : std::runtime_error(what), point_(std::move(point)) {}

    const std::vector<double>& point() const noexcept { return point_; }

private:
    std::vector<double> point_;
};

/// Thrown when the factorization of J^T J + lambda I fails. Reachable only
/// with lambda = 0 on a singular or numerically indefinite system; the caller
/// should increase lambda and retry.
class SingularSystemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

template <typename Derived>
std::vector<double> to_point(const Eigen::MatrixBase<Derived>& x) {
    std::vector<double> p(static_cast<std::size_t>(x.size()));
    for (Index i = 0; i < x.size(); ++i) p[static_cast<std::size_t>(i)] = static_cast<double>(x(i));
    return p;
}

}  // namespace detail

/// Guard below which the q-difference denominator (1-q)x is treated as
/// degenerate and the central-difference fallback takes over.
template <typename Scalar>
inline constexpr Scalar default_epsilon_q = Scalar(1e-10);

/// Central-difference step used by the fallback branch: max(1e-8, 1e-8 |x|).
template <typename Scalar>
Scalar fd_step(Scalar x) {
    return std::max(Scalar(1e-8), Scalar(1e-8) * std::abs(x));
}

/// Per-coordinate q parameters, each strictly inside (0, 1), together with
/// the denominator guard threshold.
template <typename Scalar>
struct QVector {
    Vector<Scalar> q;
    Scalar epsilon_q = default_epsilon_q<Scalar>;

    static QVector constant(Index n, Scalar q0) { return QVector{Vector<Scalar>::Constant(n, q0)}; }

    void validate() const {
        if (q.size() == 0) throw std::invalid_argument("q vector is empty");
        if ((q.array() <= Scalar(0)).any() || (q.array() >= Scalar(1)).any())
            throw std::invalid_argument("q components must satisfy 0 < q < 1");
        if (!(epsilon_q > Scalar(0))) throw std::invalid_argument("epsilon_q must be positive");
    }
};

/// A deterministic map from an n-vector to one real.
template <typename Scalar>
struct ScalarField {
    Index arity = 0;
    std::function<Scalar(const Vector<Scalar>&)> eval;
};

/// A map from n parameters to m >= n residuals. The optional analytic
/// Jacobian is for cross-checks only; the solvers never call it.
template <typename Scalar>
struct ResidualMap {
    Index n = 0;
    Index m = 0;
    std::function<Vector<Scalar>(const Vector<Scalar>&)> eval;
    std::function<Matrix<Scalar>(const Vector<Scalar>&)> analytic_jacobian;

    void validate() const {
        if (n < 1 || m < n) throw std::invalid_argument("residual map requires m >= n >= 1");
        if (!eval) throw std::invalid_argument("residual map has no eval callback");
    }
};

}  // namespace qlm
