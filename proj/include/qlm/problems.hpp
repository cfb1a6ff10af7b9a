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
#include <qlm/types.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace qlm {

/// A named least-squares test problem: residual map with analytic Jacobian,
/// the conventional starting point, and the known minimizer when one exists
/// in closed form.
template <typename Scalar>
struct Problem {
    std::string name;
    ResidualMap<Scalar> residuals;
    Vector<Scalar> x0_default;
    std::optional<Vector<Scalar>> x_star;
    std::optional<Scalar> sse_star;
};

using ProblemParams = std::map<std::string, std::string>;

/// Problem names with their default dimensions, sorted by name.
inline std::vector<std::string> catalog() {
    return {
        "exponential_fit (n=2, m=4)",
        "linear_ls (n=2, m=2)",
        "powell_singular (n=4, m=4)",
        "rosenbrock (n=2, m=2)",
    };
}

namespace detail {

inline std::string catalog_names() {
    std::string out;
    for (const auto& entry : catalog()) {
        if (!out.empty()) out += ", ";
        out += entry.substr(0, entry.find(' '));
    }
    return out;
}

template <typename Scalar>
Scalar parse_scalar(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(key);
        return static_cast<Scalar>(v);
    } catch (const std::exception&) {
        throw std::invalid_argument("parameter '" + key + "' is not a number: '" + text + "'");
    }
}

template <typename Scalar>
Vector<Scalar> parse_vector(const std::string& key, const std::string& text) {
    std::vector<Scalar> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) values.push_back(parse_scalar<Scalar>(key, item));
    if (values.empty()) throw std::invalid_argument("parameter '" + key + "' is empty");
    Vector<Scalar> v(static_cast<Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Index>(i)) = values[i];
    return v;
}

// Rows separated by ';', entries by ','.
template <typename Scalar>
Matrix<Scalar> parse_matrix(const std::string& key, const std::string& text) {
    std::vector<Vector<Scalar>> rows;
    std::stringstream ss(text);
    std::string row;
    while (std::getline(ss, row, ';')) rows.push_back(parse_vector<Scalar>(key, row));
    if (rows.empty()) throw std::invalid_argument("parameter '" + key + "' is empty");
    Matrix<Scalar> A(static_cast<Index>(rows.size()), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != A.cols())
            throw std::invalid_argument("parameter '" + key + "' has ragged rows");
        A.row(static_cast<Index>(i)) = rows[i].transpose();
    }
    return A;
}

inline void require_known_keys(const std::string& problem, const ProblemParams& params,
                               const std::set<std::string>& allowed) {
    for (const auto& [key, value] : params) {
        (void)value;
        if (!allowed.count(key))
            throw std::invalid_argument("unknown parameter '" + key + "' for problem '" + problem + "'");
    }
}

// Random rectangular matrix with a boosted diagonal so the Gramian stays
// well-conditioned for any seed.
template <typename Scalar>
Matrix<Scalar> random_well_conditioned(Index m, Index n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Matrix<Scalar> A(m, n);
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) A(i, j) = static_cast<Scalar>(unit(rng));
    for (Index j = 0; j < n; ++j) A(j, j) += Scalar(2);
    return A;
}

template <typename Scalar>
Problem<Scalar> make_linear_ls(const ProblemParams& params) {
    require_known_keys("linear_ls", params, {"A", "b", "m", "n", "seed"});
    Matrix<Scalar> A;
    Vector<Scalar> b;
    if (params.count("A") || params.count("b")) {
        if (!params.count("A") || !params.count("b"))
            throw std::invalid_argument("linear_ls requires both 'A' and 'b' when either is given");
        A = parse_matrix<Scalar>("A", params.at("A"));
        b = parse_vector<Scalar>("b", params.at("b"));
    } else if (params.count("seed") || params.count("m") || params.count("n")) {
        const Index m = params.count("m") ? static_cast<Index>(parse_scalar<Scalar>("m", params.at("m"))) : 4;
        const Index n = params.count("n") ? static_cast<Index>(parse_scalar<Scalar>("n", params.at("n"))) : 3;
        const unsigned seed =
            params.count("seed") ? static_cast<unsigned>(parse_scalar<Scalar>("seed", params.at("seed"))) : 0;
        if (m < n || n < 1) throw std::invalid_argument("linear_ls requires m >= n >= 1");
        A = random_well_conditioned<Scalar>(m, n, seed);
        std::mt19937 rng(seed + 1u);
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        b.resize(m);
        for (Index i = 0; i < m; ++i) b(i) = static_cast<Scalar>(unit(rng));
    } else {
        A = Matrix<Scalar>(2, 2);
        A << Scalar(1), Scalar(0), Scalar(0), Scalar(2);
        b = Vector<Scalar>(2);
        b << Scalar(2), Scalar(2);
    }
    if (A.rows() < A.cols()) throw std::invalid_argument("linear_ls requires m >= n");
    if (b.size() != A.rows()) throw std::invalid_argument("linear_ls requires b of length m");

    Problem<Scalar> p;
    p.name = "linear_ls";
    p.residuals.n = A.cols();
    p.residuals.m = A.rows();
    p.residuals.eval = [A, b](const Vector<Scalar>& x) { return Vector<Scalar>(A * x - b); };
    p.residuals.analytic_jacobian = [A](const Vector<Scalar>&) { return A; };
    p.x0_default = Vector<Scalar>::Zero(A.cols());
    p.x_star = damped_normal_solve(A, b, Scalar(0));
    p.sse_star = (A * (*p.x_star) - b).squaredNorm();
    return p;
}

template <typename Scalar>
Problem<Scalar> make_rosenbrock(const ProblemParams& params) {
    require_known_keys("rosenbrock", params, {});
    Problem<Scalar> p;
    p.name = "rosenbrock";
    p.residuals.n = 2;
    p.residuals.m = 2;
    p.residuals.eval = [](const Vector<Scalar>& x) {
        Vector<Scalar> r(2);
        r << Scalar(10) * (x(1) - x(0) * x(0)), Scalar(1) - x(0);
        return r;
    };
    p.residuals.analytic_jacobian = [](const Vector<Scalar>& x) {
        Matrix<Scalar> J(2, 2);
        J << Scalar(-20) * x(0), Scalar(10), Scalar(-1), Scalar(0);
        return J;
    };
    p.x0_default = Vector<Scalar>(2);
    p.x0_default << Scalar(-1.2), Scalar(1);
    p.x_star = Vector<Scalar>(2);
    *p.x_star << Scalar(1), Scalar(1);
    p.sse_star = Scalar(0);
    return p;
}

template <typename Scalar>
Problem<Scalar> make_exponential_fit(const ProblemParams& params) {
    require_known_keys("exponential_fit", params, {"a", "b", "t", "y"});
    Vector<Scalar> t = params.count("t") ? parse_vector<Scalar>("t", params.at("t"))
                                         : parse_vector<Scalar>("t", "0,1,2,3");
    Vector<Scalar> y;
    std::optional<Vector<Scalar>> x_star;
    std::optional<Scalar> sse_star;
    if (params.count("y")) {
        if (params.count("a") || params.count("b"))
            throw std::invalid_argument("exponential_fit takes either explicit 'y' or generator 'a'/'b', not both");
        y = parse_vector<Scalar>("y", params.at("y"));
        if (y.size() != t.size()) throw std::invalid_argument("exponential_fit requires t and y of equal length");
    } else {
        const Scalar a = params.count("a") ? parse_scalar<Scalar>("a", params.at("a")) : Scalar(2);
        const Scalar b = params.count("b") ? parse_scalar<Scalar>("b", params.at("b")) : Scalar(-0.5);
        y = (a * (b * t.array()).exp()).matrix();
        x_star = Vector<Scalar>(2);
        *x_star << a, b;
        sse_star = Scalar(0);
    }
    if (t.size() < 2) throw std::invalid_argument("exponential_fit requires at least two data points");

    Problem<Scalar> p;
    p.name = "exponential_fit";
    p.residuals.n = 2;
    p.residuals.m = t.size();
    p.residuals.eval = [t, y](const Vector<Scalar>& x) {
        return Vector<Scalar>((x(0) * (x(1) * t.array()).exp() - y.array()).matrix());
    };
    p.residuals.analytic_jacobian = [t](const Vector<Scalar>& x) {
        Matrix<Scalar> J(t.size(), 2);
        for (Index i = 0; i < t.size(); ++i) {
            const Scalar e = std::exp(x(1) * t(i));
            J(i, 0) = e;
            J(i, 1) = x(0) * t(i) * e;
        }
        return J;
    };
    p.x0_default = Vector<Scalar>(2);
    p.x0_default << Scalar(1), Scalar(0);
    p.x_star = x_star;
    p.sse_star = sse_star;
    return p;
}

template <typename Scalar>
Problem<Scalar> make_powell_singular(const ProblemParams& params) {
    require_known_keys("powell_singular", params, {});
    const Scalar s5 = std::sqrt(Scalar(5));
    const Scalar s10 = std::sqrt(Scalar(10));
    Problem<Scalar> p;
    p.name = "powell_singular";
    p.residuals.n = 4;
    p.residuals.m = 4;
    p.residuals.eval = [s5, s10](const Vector<Scalar>& x) {
        Vector<Scalar> r(4);
        r(0) = x(0) + Scalar(10) * x(1);
        r(1) = s5 * (x(2) - x(3));
        r(2) = (x(1) - Scalar(2) * x(2)) * (x(1) - Scalar(2) * x(2));
        r(3) = s10 * (x(0) - x(3)) * (x(0) - x(3));
        return r;
    };
    p.residuals.analytic_jacobian = [s5, s10](const Vector<Scalar>& x) {
        Matrix<Scalar> J = Matrix<Scalar>::Zero(4, 4);
        J(0, 0) = Scalar(1);
        J(0, 1) = Scalar(10);
        J(1, 2) = s5;
        J(1, 3) = -s5;
        J(2, 1) = Scalar(2) * (x(1) - Scalar(2) * x(2));
        J(2, 2) = Scalar(-4) * (x(1) - Scalar(2) * x(2));
        J(3, 0) = Scalar(2) * s10 * (x(0) - x(3));
        J(3, 3) = Scalar(-2) * s10 * (x(0) - x(3));
        return J;
    };
    p.x0_default = Vector<Scalar>(4);
    p.x0_default << Scalar(3), Scalar(-1), Scalar(0), Scalar(1);
    p.x_star = Vector<Scalar>::Zero(4);
    p.sse_star = Scalar(0);
    return p;
}

}  // namespace detail

/// Builds a problem from the catalog. Unknown names and malformed parameters
/// raise std::invalid_argument.
template <typename Scalar>
Problem<Scalar> make_problem(const std::string& name, const ProblemParams& params = {}) {
    if (name == "linear_ls") return detail::make_linear_ls<Scalar>(params);
    if (name == "rosenbrock") return detail::make_rosenbrock<Scalar>(params);
    if (name == "exponential_fit") return detail::make_exponential_fit<Scalar>(params);
    if (name == "powell_singular") return detail::make_powell_singular<Scalar>(params);
    throw std::invalid_argument("unknown problem '" + name + "'; catalog: " + detail::catalog_names());
}

}  // namespace qlm
