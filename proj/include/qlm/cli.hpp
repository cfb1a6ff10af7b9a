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

#include <qlm/problems.hpp>
#include <qlm/solver.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace qlm {

enum class SolverKind { qlm, qgn, qsd, lm_classic };
enum class ScheduleKind { fixed, geometric };

inline const char* to_string(SolverKind s) {
    switch (s) {
        case SolverKind::qlm: return "qlm";
        case SolverKind::qgn: return "qgn";
        case SolverKind::qsd: return "qsd";
        case SolverKind::lm_classic: return "lm_classic";
    }
    return "unknown";
}

/// Fully parsed and validated description of one benchmark run.
struct RunSpec {
    std::string problem = "rosenbrock";
    ProblemParams problem_params;
    SolverKind solver = SolverKind::qlm;
    std::vector<double> q0 = {0.9};  // one value (applied to every coordinate) or one per coordinate
    ScheduleKind q_schedule = ScheduleKind::fixed;
    double gamma = 0.5;
    double lambda0 = 1e-3;
    double mf = 10.0;
    double df = 0.1;
    double lambda_max = 1e12;
    double stop_iter = 1e-12;
    double gtol = 1e-10;
    double xtol = 1e-12;
    long max_iter = 1000;
    std::optional<std::vector<double>> x0;
    bool strict_paper = false;
    std::optional<std::string> trace_path;
};

/// Raised when --help is requested; carries the help text.
struct HelpRequested {
    std::string text;
};

namespace detail {

inline std::vector<double> parse_real_list(const std::string& flag, const std::string& text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw std::invalid_argument(flag + " expects comma-separated reals, got '" + text + "'");
        }
    }
    if (values.empty()) throw std::invalid_argument(flag + " expects at least one value");
    return values;
}

inline std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Scientific notation with 17 significant digits; round-trip exact.
inline std::string format_sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.16e", v);
    return buf;
}

}  // namespace detail

/// Maps flag strings onto a RunSpec, applying defaults and validating every
/// constraint before any computation. Violations raise std::invalid_argument
/// naming the offending flag; --help raises HelpRequested.
inline RunSpec parse_run_spec(const std::vector<std::string>& args) {
    RunSpec spec;
    std::string solver_name = "qlm";
    std::string schedule_name = "fixed";
    std::string q0_text;
    std::string x0_text;
    std::string trace_text;
    std::vector<std::string> param_entries;

    CLI::App app{"q-calculus Levenberg-Marquardt benchmark runner"};
    app.add_option("--problem", spec.problem, "problem name (see catalog)");
    app.add_option("--problem-param", param_entries, "problem parameter key=value (repeatable)");
    app.add_option("--solver", solver_name, "qlm | qgn | qsd | lm_classic");
    app.add_option("--q0", q0_text, "initial q, one real or comma-separated per coordinate");
    app.add_option("--q-schedule", schedule_name, "fixed | geometric");
    app.add_option("--gamma", spec.gamma, "geometric schedule rate");
    app.add_option("--lambda0", spec.lambda0, "initial damping");
    app.add_option("--mf", spec.mf, "damping multiplication factor on rejection");
    app.add_option("--df", spec.df, "damping division factor on acceptance");
    app.add_option("--lambda-max", spec.lambda_max, "damping overflow cap");
    app.add_option("--stop-iter", spec.stop_iter, "SSE stopping threshold");
    app.add_option("--gtol", spec.gtol, "stationarity threshold on ||J_q^T f||_inf");
    app.add_option("--xtol", spec.xtol, "relative step-norm threshold");
    app.add_option("--max-iter", spec.max_iter, "maximum loop turns");
    app.add_option("--x0", x0_text, "starting point override, comma-separated");
    app.add_flag("--strict-paper", spec.strict_paper, "re-evaluate the Jacobian after rejected steps too");
    app.add_option("--trace-out", trace_text, "write the per-iteration CSV trace to PATH");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        throw HelpRequested{app.help()};
    } catch (const CLI::ParseError& e) {
        throw std::invalid_argument(e.what());
    }

    if (solver_name == "qlm")
        spec.solver = SolverKind::qlm;
    else if (solver_name == "qgn")
        spec.solver = SolverKind::qgn;
    else if (solver_name == "qsd")
        spec.solver = SolverKind::qsd;
    else if (solver_name == "lm_classic")
        spec.solver = SolverKind::lm_classic;
    else
        throw std::invalid_argument("unknown solver '" + solver_name + "' (expected qlm, qgn, qsd or lm_classic)");

    if (schedule_name == "fixed")
        spec.q_schedule = ScheduleKind::fixed;
    else if (schedule_name == "geometric")
        spec.q_schedule = ScheduleKind::geometric;
    else
        throw std::invalid_argument("unknown q-schedule '" + schedule_name + "' (expected fixed or geometric)");

    const auto names = catalog();
    const bool known = std::any_of(names.begin(), names.end(), [&](const std::string& entry) {
        return entry.substr(0, entry.find(' ')) == spec.problem;
    });
    if (!known)
        throw std::invalid_argument("unknown problem '" + spec.problem + "'; catalog: " + detail::catalog_names());

    for (const auto& entry : param_entries) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::invalid_argument("--problem-param expects key=value, got '" + entry + "'");
        spec.problem_params[entry.substr(0, eq)] = entry.substr(eq + 1);
    }

    if (!q0_text.empty()) spec.q0 = detail::parse_real_list("--q0", q0_text);
    if (!x0_text.empty()) spec.x0 = detail::parse_real_list("--x0", x0_text);
    if (!trace_text.empty()) spec.trace_path = trace_text;

    for (double q : spec.q0)
        if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("q0 must satisfy 0 < q0 < 1");
    if (!(spec.gamma > 0.0 && spec.gamma < 1.0)) throw std::invalid_argument("gamma must satisfy 0 < gamma < 1");
    if (!(spec.lambda0 > 0.0)) throw std::invalid_argument("lambda0 must satisfy lambda0 > 0");
    if (!(spec.mf > 1.0)) throw std::invalid_argument("mf must satisfy mf > 1");
    if (!(spec.df > 0.0 && spec.df < 1.0)) throw std::invalid_argument("df must satisfy 0 < df < 1");
    if (!(spec.lambda_max >= spec.lambda0))
        throw std::invalid_argument("lambda-max must satisfy lambda-max >= lambda0");
    if (!(spec.stop_iter >= 0.0)) throw std::invalid_argument("stop-iter must satisfy stop-iter >= 0");
    if (!(spec.gtol >= 0.0)) throw std::invalid_argument("gtol must satisfy gtol >= 0");
    if (!(spec.xtol >= 0.0)) throw std::invalid_argument("xtol must satisfy xtol >= 0");
    if (spec.max_iter < 1) throw std::invalid_argument("max-iter must satisfy max-iter >= 1");
    return spec;
}

/// Writes the per-iteration trace with the fixed schema
///   iter,accepted,lambda,q_min,q_max,sse,grad_norm,step_norm,x_0,...,x_{n-1}
/// Reals use scientific notation with 17 significant digits.
inline void write_trace_csv(std::ostream& os, const std::vector<IterationRecord<double>>& trace, Index n) {
    os << "iter,accepted,lambda,q_min,q_max,sse,grad_norm,step_norm";
    for (Index j = 0; j < n; ++j) os << ",x_" << j;
    os << "\n";
    for (const auto& rec : trace) {
        os << rec.k << ',' << (rec.accepted ? 1 : 0) << ',' << detail::format_sci(rec.lambda) << ','
           << detail::format_sci(rec.q.minCoeff()) << ',' << detail::format_sci(rec.q.maxCoeff()) << ','
           << detail::format_sci(rec.sse) << ',' << detail::format_sci(rec.grad_norm) << ','
           << detail::format_sci(rec.step_norm);
        for (Index j = 0; j < n; ++j) os << ',' << detail::format_sci(rec.x(j));
        os << "\n";
    }
}

inline void write_trace_csv(const std::string& path, const std::vector<IterationRecord<double>>& trace, Index n) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open trace file for writing: " + path);
    write_trace_csv(file, trace, n);
    file.flush();
    if (!file) throw std::runtime_error("failed while writing trace file: " + path);
}

/// Exit status contract: 0 for converged terminations, 2 when the budget ran
/// out or progress stalled, 1 (elsewhere) for errors.
inline int exit_status(Termination t) {
    switch (t) {
        case Termination::sse_below_threshold:
        case Termination::stationary_gradient:
        case Termination::small_step:
            return 0;
        case Termination::max_iterations:
        case Termination::lambda_overflow:
        case Termination::no_progress:
            return 2;
    }
    return 2;
}

/// Runs the selected solver on the selected problem, writes the CSV trace if
/// requested, and prints the one-line key=value summary. Returns the exit
/// status; failures are reported by throwing.
inline int execute(const RunSpec& spec, std::ostream& out = std::cout) {
    Problem<double> problem = make_problem<double>(spec.problem, spec.problem_params);
    const Index n = problem.residuals.n;

    Vector<double> x0 = problem.x0_default;
    if (spec.x0) {
        if (static_cast<Index>(spec.x0->size()) != n)
            throw std::invalid_argument("x0 must have " + std::to_string(n) + " components for problem '" +
                                        spec.problem + "'");
        x0 = Eigen::Map<const Vector<double>>(spec.x0->data(), n);
    }

    Vector<double> q0(n);
    if (spec.q0.size() == 1)
        q0.setConstant(spec.q0.front());
    else if (static_cast<Index>(spec.q0.size()) == n)
        q0 = Eigen::Map<const Vector<double>>(spec.q0.data(), n);
    else
        throw std::invalid_argument("q0 must be one real or " + std::to_string(n) + " components for problem '" +
                                    spec.problem + "'");

    QStrategy<double> qs;
    qs.kind = spec.q_schedule == ScheduleKind::fixed ? QStrategy<double>::Kind::fixed
                                                     : QStrategy<double>::Kind::geometric_to_one;
    qs.q0 = q0;
    qs.gamma = spec.gamma;

    DampingState<double> damping;
    damping.lambda = spec.lambda0;
    damping.mf = spec.mf;
    damping.df = spec.df;
    damping.lambda_max = spec.lambda_max;

    SolverConfig<double> config;
    config.stop_iter = spec.stop_iter;
    config.max_no_iter = spec.max_iter;
    config.gtol = spec.gtol;
    config.xtol = spec.xtol;
    config.strict_paper = spec.strict_paper;

    const auto t0 = std::chrono::steady_clock::now();
    SolveResult<double> result;
    switch (spec.solver) {
        case SolverKind::qlm: result = qlm_solve(problem.residuals, x0, qs, damping, config); break;
        case SolverKind::qgn: result = qgn_solve(problem.residuals, x0, qs, config); break;
        case SolverKind::qsd: result = qsd_solve(problem.residuals, x0, qs, 1.0, config); break;
        case SolverKind::lm_classic: result = lm_classic_solve(problem.residuals, x0, damping, config); break;
    }
    const auto t1 = std::chrono::steady_clock::now();
    const double wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

    if (spec.trace_path) write_trace_csv(*spec.trace_path, result.trace, n);

    std::string x_text;
    for (Index j = 0; j < n; ++j) {
        if (j > 0) x_text += ',';
        x_text += detail::format_real(result.x_final(j));
    }
    char wall_text[64];
    std::snprintf(wall_text, sizeof wall_text, "%.3f", wall_ms);
    out << "problem=" << spec.problem << " solver=" << to_string(spec.solver)
        << " termination=" << to_string(result.termination) << " iterations=" << result.iterations
        << " sse_final=" << detail::format_real(result.sse_final) << " x_final=" << x_text
        << " wall_time_ms=" << wall_text << "\n";
    return exit_status(result.termination);
}

/// Complete command-line entry point: parse, execute, and map every failure
/// onto exit status 1 with a message on the error stream.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    try {
        const RunSpec spec = parse_run_spec(args);
        return execute(spec, out);
    } catch (const HelpRequested& help) {
        out << help.text;
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace qlm
