#pragma once

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <spdlog/spdlog.h>

#include "json.hpp"

#include "depthreg/depth_map.hpp"
#include "depthreg/error.hpp"
#include "depthreg/problem.hpp"

namespace depthreg {

enum class LinearSolverKind { SparseDirect, ConjugateGradient };

struct SolverConfig {
  int max_iterations = 50;
  double step_tolerance = 1e-6;           // infinity norm over the mixed-unit step
  double cost_relative_tolerance = 1e-8;  // on accepted steps

  // Levenberg damping (A + lambda I). Disabled means plain Gauss-Newton: every
  // step is taken.
  bool damping = true;
  double lambda_initial = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.5;
  double lambda_max = 1e12;

  LinearSolverKind linear_solver = LinearSolverKind::SparseDirect;
  int cg_max_iterations = 2000;
  double cg_tolerance = 1e-12;

  // Rebuild the map by averaging from the current poses before each iteration.
  bool reinitialize_map = false;
  bool record_timing = true;

  void validate() const {
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
    if (!(step_tolerance > 0.0) || !(cost_relative_tolerance > 0.0)) {
      throw InvalidArgument("tolerances must be positive");
    }
    if (damping && !(lambda_initial > 0.0 && lambda_up > 1.0 && lambda_down > 0.0 && lambda_down < 1.0)) {
      throw InvalidArgument("invalid damping schedule");
    }
    if (cg_max_iterations < 1 || !(cg_tolerance > 0.0)) throw InvalidArgument("invalid CG settings");
  }
};

enum class Termination { ConvergedStep, ConvergedCost, MaxIterations, LinearSolverFailure };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::ConvergedStep: return "converged_step";
    case Termination::ConvergedCost: return "converged_cost";
    case Termination::MaxIterations: return "max_iter";
    case Termination::LinearSolverFailure: return "linear_solver_failure";
  }
  return "unknown";
}

struct IterationRecord {
  int iter = 0;
  double cost = 0.0;       // cost of the state after this iteration
  double step_norm = 0.0;  // infinity norm of the proposed step
  int skipped = 0;         // depth residuals dropped (point outside the map)
  double ms = 0.0;
  double lambda = 0.0;
  bool accepted = true;
};

struct SolveReport {
  // Entry 0 is the initial state; later entries are trial steps, and rejected
  // ones leave the state (and the cost of the following entries) unchanged.
  std::vector<IterationRecord> iterations;
  Termination termination = Termination::MaxIterations;
  std::string message;

  int iteration_count() const { return iterations.empty() ? 0 : iterations.back().iter; }
  double initial_cost() const { return iterations.empty() ? 0.0 : iterations.front().cost; }
  double final_cost() const {
    for (auto it = iterations.rbegin(); it != iterations.rend(); ++it) {
      if (it->accepted) return it->cost;
    }
    return 0.0;
  }
  std::vector<double> accepted_costs() const {
    std::vector<double> out;
    for (const auto& r : iterations) {
      if (r.accepted) out.push_back(r.cost);
    }
    return out;
  }
  bool converged() const {
    return termination == Termination::ConvergedStep || termination == Termination::ConvergedCost;
  }
};

inline nlohmann::json to_json(const SolveReport& report) {
  nlohmann::json iters = nlohmann::json::array();
  for (const auto& r : report.iterations) {
    iters.push_back({{"iter", r.iter},
                     {"cost", r.cost},
                     {"step_norm", r.step_norm},
                     {"skipped", r.skipped},
                     {"ms", r.ms},
                     {"lambda", r.lambda},
                     {"accepted", r.accepted}});
  }
  return {{"iterations", iters}, {"termination", to_string(report.termination)}, {"message", report.message}};
}

inline std::string to_text(const SolveReport& report) {
  std::ostringstream out;
  out << std::setprecision(10);
  for (const auto& r : report.iterations) {
    out << "iter " << r.iter << " cost " << r.cost << " step " << r.step_norm << " skipped " << r.skipped
        << " lambda " << r.lambda << " ms " << r.ms << (r.accepted ? " accepted" : " rejected") << "\n";
  }
  out << "termination " << to_string(report.termination);
  if (!report.message.empty()) out << " (" << report.message << ")";
  out << "\n";
  return out.str();
}

struct LinearSolveResult {
  Eigen::VectorXd step;
  bool ok = false;
  int iterations = 0;
  std::string message;
};

/// Solves (A + lambda I) x = rhs for symmetric positive (semi)definite A.
inline LinearSolveResult solve_linear(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& rhs,
                                      double lambda, const SolverConfig& config) {
  if (a.rows() != a.cols() || a.rows() != rhs.size()) throw InvalidArgument("solve_linear: dimension mismatch");
  Eigen::SparseMatrix<double> damped = a;
  if (lambda > 0.0) {
    Eigen::SparseMatrix<double> eye(a.rows(), a.cols());
    eye.setIdentity();
    damped += lambda * eye;
  }
  damped.makeCompressed();

  LinearSolveResult out;
  if (config.linear_solver == LinearSolverKind::SparseDirect) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(damped);
    if (ldlt.info() != Eigen::Success) {
      out.message = "sparse LDLT factorisation failed (singular normal matrix); enable damping";
      return out;
    }
    const Eigen::VectorXd d = ldlt.vectorD();
    const double scale = d.cwiseAbs().maxCoeff();
    if (!(d.minCoeff() > 1e-14 * scale)) {
      out.message = "normal matrix is singular or indefinite (min pivot " + std::to_string(d.minCoeff()) +
                    "); enable damping";
      return out;
    }
    out.step = ldlt.solve(rhs);
    out.iterations = 1;
  } else {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg;
    cg.setMaxIterations(config.cg_max_iterations);
    cg.setTolerance(config.cg_tolerance);
    cg.compute(damped);
    out.step = cg.solve(rhs);
    out.iterations = static_cast<int>(cg.iterations());
    if (cg.info() != Eigen::Success) {
      out.message = "conjugate gradient did not converge after " + std::to_string(cg.iterations()) +
                    " iterations (error " + std::to_string(cg.error()) + ")";
      return out;
    }
  }
  if (!out.step.allFinite()) {
    out.message = "linear solve produced non-finite values";
    return out;
  }
  out.ok = true;
  return out;
}

/// Normal equations J^T W J and gradient J^T W F of an assembled problem.
inline std::pair<Eigen::SparseMatrix<double>, Eigen::VectorXd> normal_equations(const Assembly& a) {
  const Eigen::SparseMatrix<double> jtw = Eigen::SparseMatrix<double>(a.jacobian.transpose()) * a.weights.asDiagonal();
  Eigen::SparseMatrix<double> h = jtw * a.jacobian;
  Eigen::VectorXd g = jtw * a.residuals;
  return {std::move(h), std::move(g)};
}

struct SolveResult {
  ProblemState state;
  SolveReport report;
};

namespace detail {

inline void warn_gimbal(const ProblemState& state, std::vector<bool>& warned) {
  for (std::size_t i = 0; i < state.poses.size(); ++i) {
    if (!warned[i] && state.poses[i].near_gimbal_lock()) {
      spdlog::warn("pose {} pitch {:.4f} rad is near gimbal lock; roll and yaw become coupled", i,
                   state.poses[i].theta.y());
      warned[i] = true;
    }
  }
}

}  // namespace detail

/// Damped Gauss-Newton over poses and map.
///
/// With damping, a step is kept only if it does not raise the cost; a rejected
/// step multiplies lambda by lambda_up and leaves the state untouched.
inline SolveResult solve(ProblemState state, std::span<const PointCloud> clouds, const ProblemOptions& options,
                         const SolverConfig& config) {
  config.validate();
  using Clock = std::chrono::steady_clock;
  const Problem problem(clouds, options);
  SolveReport report;
  std::vector<bool> warned(state.poses.size(), false);
  detail::warn_gimbal(state, warned);

  if (config.reinitialize_map) state.map = initialize(clouds, state.poses, state.map.geometry());
  Assembly current = problem.assemble(state, true);
  report.iterations.push_back({0, current.cost, 0.0, current.skipped, 0.0, 0.0, true});
  double lambda = config.damping ? config.lambda_initial : 0.0;

  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    const auto start = Clock::now();
    const auto [h, g] = normal_equations(current);
    const LinearSolveResult lin = solve_linear(h, -g, lambda, config);
    IterationRecord rec;
    rec.iter = iter;
    rec.lambda = lambda;
    if (!lin.ok) {
      rec.cost = current.cost;
      rec.skipped = current.skipped;
      rec.accepted = false;
      report.iterations.push_back(rec);
      report.termination = Termination::LinearSolverFailure;
      report.message = lin.message;
      return {std::move(state), std::move(report)};
    }
    rec.step_norm = lin.step.lpNorm<Eigen::Infinity>();

    ProblemState trial = state;
    trial.apply_step(lin.step);
    if (config.reinitialize_map) trial.map = initialize(clouds, trial.poses, trial.map.geometry());
    const Assembly trial_eval = problem.assemble(trial, false);

    const bool accept = !config.damping || trial_eval.cost <= current.cost;
    const double previous_cost = current.cost;
    if (accept) {
      state = std::move(trial);
      current = problem.assemble(state, true);
      if (config.damping) lambda *= config.lambda_down;
      detail::warn_gimbal(state, warned);
    } else {
      lambda *= config.lambda_up;
    }
    rec.accepted = accept;
    rec.cost = current.cost;
    rec.skipped = current.skipped;
    if (config.record_timing) {
      rec.ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    }
    report.iterations.push_back(rec);
    spdlog::debug("iter {} cost {:.9g} step {:.3g} lambda {:.3g} {}", iter, rec.cost, rec.step_norm, rec.lambda,
                 accept ? "accepted" : "rejected");

    if (rec.step_norm < config.step_tolerance) {
      report.termination = Termination::ConvergedStep;
      return {std::move(state), std::move(report)};
    }
    if (accept && previous_cost > 0.0 &&
        (previous_cost - current.cost) / previous_cost < config.cost_relative_tolerance) {
      report.termination = Termination::ConvergedCost;
      return {std::move(state), std::move(report)};
    }
    if (accept && previous_cost == 0.0) {
      report.termination = Termination::ConvergedCost;
      return {std::move(state), std::move(report)};
    }
    if (config.damping && lambda > config.lambda_max) {
      report.termination = Termination::ConvergedCost;
      report.message = "damping saturated without further cost decrease";
      return {std::move(state), std::move(report)};
    }
  }
  report.termination = Termination::MaxIterations;
  return {std::move(state), std::move(report)};
}

}  // namespace depthreg
