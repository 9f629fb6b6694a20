#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) for small dense least squares.
// Residual functions return std::nullopt for infeasible parameters; such
// trial steps are rejected like any step that increases the cost.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "omtin/core.hpp"

namespace omtin {

using ResidualFn = std::function<std::optional<Eigen::VectorXd>(const Eigen::VectorXd&)>;

struct LmOptions {
  int max_iterations = 500;
  double step_tolerance = 1e-10;      // relative parameter step
  double gradient_tolerance = 1e-12;  // scaled gradient, relative to the cost
  double initial_damping = 1e-3;
};

struct LmResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;  // scaled by the residual variance
  double residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Parameter estimates with 1-sigma uncertainties.
struct FitResult {
  std::vector<std::string> names;
  std::vector<double> params;
  std::vector<double> sigmas;
  double residual_norm = 0.0;
  bool converged = false;
  int n_iter = 0;

  void add(std::string name, double value, double sigma) {
    names.push_back(std::move(name));
    params.push_back(value);
    sigmas.push_back(sigma);
  }
  std::size_t index(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw invalid_input("fit result has no parameter '" + name + "'");
  }
  double value(const std::string& name) const { return params[index(name)]; }
  double sigma(const std::string& name) const { return sigmas[index(name)]; }
};

namespace detail {

inline std::optional<Eigen::MatrixXd> jacobian(const ResidualFn& f, const Eigen::VectorXd& x,
                                               const Eigen::VectorXd& r0, const Eigen::VectorXd& scale) {
  Eigen::MatrixXd j(r0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = 1e-6 * std::max(std::abs(x[k]), scale[k]);
    Eigen::VectorXd xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    auto rp = f(xp);
    auto rm = f(xm);
    if (rp && rm) {
      j.col(k) = (*rp - *rm) / (2.0 * h);
    } else if (rp) {
      j.col(k) = (*rp - r0) / h;
    } else if (rm) {
      j.col(k) = (r0 - *rm) / h;
    } else {
      return std::nullopt;
    }
  }
  return j;
}

}  // namespace detail

/// `scale` gives the typical magnitude of each parameter; it sets the
/// finite-difference step floor and the units of the step test.
inline LmResult levenberg_marquardt(const ResidualFn& f, Eigen::VectorXd x, const Eigen::VectorXd& scale,
                                    const LmOptions& opt = {}) {
  auto r = f(x);
  if (!r) throw invalid_input("least squares: infeasible starting point");
  if (!r->allFinite()) throw numeric_failure("least squares: non-finite residuals at start");
  double cost = r->squaredNorm();
  double lambda = opt.initial_damping;
  LmResult result;
  const Eigen::Index n = x.size();
  Eigen::MatrixXd jac;

  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    auto j = detail::jacobian(f, x, *r, scale);
    if (!j) break;
    jac = *j;
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * *r;
    const double gscaled = (g.cwiseProduct(scale)).cwiseAbs().maxCoeff();
    if (cost == 0.0 || gscaled <= opt.gradient_tolerance * std::max(cost, 1e-300)) {
      result.converged = true;
      break;
    }

    bool accepted = false;
    bool small_step = false;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index k = 0; k < n; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-300);
      const Eigen::VectorXd step = a.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd trial = x + step;
      const double rel = (step.cwiseQuotient(x.cwiseAbs().cwiseMax(scale))).cwiseAbs().maxCoeff();
      auto rt = f(trial);
      if (rt && rt->allFinite() && rt->squaredNorm() <= cost) {
        x = trial;
        r = std::move(rt);
        cost = r->squaredNorm();
        lambda = std::max(lambda / 3.0, 1e-15);
        accepted = true;
        small_step = rel < opt.step_tolerance;
        break;
      }
      if (rel < opt.step_tolerance * 1e-3) {
        small_step = true;
        break;
      }
      lambda *= 4.0;
    }
    if (small_step) {
      result.converged = true;
      ++it;
      break;
    }
    if (!accepted) break;
  }

  result.params = x;
  result.iterations = it;
  result.residual_norm = std::sqrt(cost);
  if (auto j = detail::jacobian(f, x, *r, scale)) jac = *j;
  const Eigen::Index m = r->size();
  const double dof = m > n ? static_cast<double>(m - n) : 1.0;
  // Pseudo-inverse in scaled coordinates so that parameters of very
  // different magnitude are not truncated as rank deficiency.
  const Eigen::VectorXd s = scale.cwiseAbs().cwiseMax(x.cwiseAbs()).unaryExpr([](double v) {
    return v > 0.0 ? v : 1.0;
  });
  const Eigen::MatrixXd js = jac * s.asDiagonal();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(js.transpose() * js);
  result.covariance = s.asDiagonal() * cod.pseudoInverse() * s.asDiagonal() * (cost / dof);
  return result;
}

inline std::vector<double> sigmas_from(const LmResult& r) {
  std::vector<double> s(static_cast<std::size_t>(r.params.size()));
  for (Eigen::Index k = 0; k < r.params.size(); ++k)
    s[static_cast<std::size_t>(k)] = std::sqrt(std::max(0.0, r.covariance(k, k)));
  return s;
}

}  // namespace omtin
