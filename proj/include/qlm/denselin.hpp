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

#include <Eigen/Cholesky>

#include <optional>

namespace qlm {

/// The assembled damped normal-equations system: the Gramian J^T J, the
/// right-hand side J^T r, and the damping parameter (set by the caller
/// before solving).
template <typename Scalar>
struct DampedSystem {
    Matrix<Scalar> gramian;
    Vector<Scalar> rhs;
    std::optional<Scalar> lambda;
};

/// Assembles J^T J and J^T r in one pass. The Gramian is exactly symmetric:
/// the lower triangle is accumulated and mirrored.
template <typename DerivedJ, typename DerivedR>
DampedSystem<typename DerivedJ::Scalar> gramian_and_rhs(const Eigen::MatrixBase<DerivedJ>& J_expr,
                                                        const Eigen::MatrixBase<DerivedR>& r_expr) {
    using Scalar = typename DerivedJ::Scalar;
    const Matrix<Scalar> J = J_expr;
    const Vector<Scalar> r = r_expr;
    if (J.rows() != r.size()) throw std::invalid_argument("Jacobian rows and residual length differ");
    DampedSystem<Scalar> sys;
    Matrix<Scalar> lower = Matrix<Scalar>::Zero(J.cols(), J.cols());
    lower.template selfadjointView<Eigen::Lower>().rankUpdate(J.transpose());
    sys.gramian = lower.template selfadjointView<Eigen::Lower>();
    sys.rhs = J.transpose() * r;
    return sys;
}

/// Solves (gramian + lambda I) d = rhs by Cholesky factorization. With
/// lambda > 0 the matrix is positive definite and the solve always succeeds;
/// a factorization failure (lambda = 0 on a singular or indefinite system)
/// raises SingularSystemError so the caller can increase lambda and retry.
template <typename Scalar>
Vector<Scalar> solve_damped(const DampedSystem<Scalar>& sys) {
    if (!sys.lambda) throw std::invalid_argument("damped system has no lambda set");
    const Scalar lambda = *sys.lambda;
    if (!(lambda >= Scalar(0))) throw std::invalid_argument("lambda must be nonnegative");
    const Index n = sys.gramian.rows();
    if (sys.gramian.cols() != n || sys.rhs.size() != n)
        throw std::invalid_argument("damped system dimensions disagree");
    const Scalar scale = sys.gramian.cwiseAbs().maxCoeff();
    const Scalar asym = (sys.gramian - sys.gramian.transpose()).cwiseAbs().maxCoeff();
    if (asym > Scalar(1e-12) * (Scalar(1) + scale))
        throw std::invalid_argument("gramian is not symmetric");

    Matrix<Scalar> damped = sys.gramian;
    damped.diagonal().array() += lambda;
    Eigen::LLT<Matrix<Scalar>> llt(damped);
    if (llt.info() != Eigen::Success)
        throw SingularSystemError("Cholesky factorization of J^T J + lambda I failed; increase lambda and retry");
    Vector<Scalar> d = llt.solve(sys.rhs);
    if (!d.allFinite())
        throw SingularSystemError("damped normal-equations solve produced non-finite values; increase lambda and retry");
    return d;
}

/// One-call damped normal-equations step: returns d with
/// (J^T J + lambda I) d = J^T r. The caller applies the update x' = x - d.
/// No inverse is ever formed.
template <typename DerivedJ, typename DerivedR>
Vector<typename DerivedJ::Scalar> damped_normal_solve(const Eigen::MatrixBase<DerivedJ>& J_expr,
                                                      const Eigen::MatrixBase<DerivedR>& r_expr,
                                                      typename DerivedJ::Scalar lambda) {
    using Scalar = typename DerivedJ::Scalar;
    const Matrix<Scalar> J = J_expr;
    const Vector<Scalar> r = r_expr;
    if (J.rows() < J.cols()) throw std::invalid_argument("damped_normal_solve requires m >= n");
    if (!J.allFinite() || !r.allFinite())
        throw std::invalid_argument("damped_normal_solve requires finite inputs");
    DampedSystem<Scalar> sys = gramian_and_rhs(J, r);
    sys.lambda = lambda;
    return solve_damped(sys);
}

}  // namespace qlm
