#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) for small dense least-squares
// problems, with central-difference Jacobians and box bounds. Parameters are
// rescaled internally so that rates in rad/s and amplitudes of order one
// share the same step logic.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "transim/error.hpp"

namespace transim {

struct LmOptions {
  int max_iter = 200;
  double grad_tol = 1e-10;   // on the cosine between residual and each Jacobian column
  double stall_grad_tol = 1e-6;  // accepted when steps stop making progress
  double rel_step = 1e-6;
  double x_tol = 1e-13;
  double f_tol = 1e-15;
  std::optional<Eigen::VectorXd> lower;
  std::optional<Eigen::VectorXd> upper;
  std::optional<Eigen::VectorXd> scale;
};

struct LmResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residual;
  Eigen::MatrixXd covariance;  // (J^T J)^-1 in parameter units, not yet scaled by chi^2
  double initial_norm = 0.0;
  double norm = 0.0;
  double gradient = 0.0;  // max cosine between residual and Jacobian columns
  int iterations = 0;
  bool converged = false;
  std::string reason;
};

namespace detail {

inline Eigen::MatrixXd pseudo_inverse_spd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const auto& ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    inv(i) = ev(i) > top * 1e-14 ? 1.0 / ev(i) : std::numeric_limits<double>::infinity();
  // Directions with no curvature carry infinite variance.
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const Eigen::VectorXd v = es.eigenvectors().col(i);
    if (std::isinf(inv(i))) {
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        if (std::abs(v(r)) > 1e-8) out(r, r) = std::numeric_limits<double>::infinity();
    } else {
      out += inv(i) * v * v.transpose();
    }
  }
  return out;
}

}  // namespace detail

/// Minimizes ||f(x)||^2. f returns the (already sigma-weighted) residual vector.
template <class ResidualFn>
LmResult levenberg_marquardt(ResidualFn&& f, const Eigen::VectorXd& x0, const LmOptions& opt = {}) {
  const Eigen::Index p = x0.size();
  Eigen::VectorXd s(p);
  for (Eigen::Index i = 0; i < p; ++i) s(i) = opt.scale ? (*opt.scale)(i) : (std::abs(x0(i)) > 0.0 ? std::abs(x0(i)) : 1.0);
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(p, -std::numeric_limits<double>::infinity());
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::infinity());
  if (opt.lower) lo = opt.lower->cwiseQuotient(s);
  if (opt.upper) hi = opt.upper->cwiseQuotient(s);

  auto eval = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd { return f(Eigen::VectorXd(u.cwiseProduct(s))); };
  auto clamp = [&](Eigen::VectorXd u) {
    for (Eigen::Index i = 0; i < p; ++i) u(i) = std::clamp(u(i), lo(i), hi(i));
    return u;
  };
  auto jacobian = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& r) {
    Eigen::MatrixXd J(r.size(), p);
    for (Eigen::Index i = 0; i < p; ++i) {
      const double h = opt.rel_step * std::max(std::abs(u(i)), 1.0);
      Eigen::VectorXd up = u, um = u;
      up(i) = std::min(u(i) + h, hi(i));
      um(i) = std::max(u(i) - h, lo(i));
      const double span = up(i) - um(i);
      if (span <= 0.0) {
        J.col(i).setZero();
        continue;
      }
      const Eigen::VectorXd rp = up(i) == u(i) ? r : eval(up);
      const Eigen::VectorXd rm = um(i) == u(i) ? r : eval(um);
      J.col(i) = (rp - rm) / span;
    }
    return J;
  };
  auto cosine = [](const Eigen::MatrixXd& J, const Eigen::VectorXd& r) {
    const double rn = r.norm();
    if (rn == 0.0) return 0.0;
    double c = 0.0;
    for (Eigen::Index i = 0; i < J.cols(); ++i) {
      const double jn = J.col(i).norm();
      if (jn > 0.0) c = std::max(c, std::abs(J.col(i).dot(r)) / (jn * rn));
    }
    return c;
  };

  LmResult out;
  Eigen::VectorXd u = clamp(x0.cwiseQuotient(s));
  Eigen::VectorXd r = eval(u);
  if (!r.allFinite()) throw FitError("residuals are not finite at the initial guess");
  out.initial_norm = r.norm();
  double cost = r.squaredNorm();
  Eigen::MatrixXd J = jacobian(u, r);
  double mu = -1.0, nu = 2.0;

  int it = 0;
  for (; it < opt.max_iter; ++it) {
    const Eigen::VectorXd g = J.transpose() * r;
    const double cg = cosine(J, r);
    if (cg <= opt.grad_tol) {
      out.converged = true;
      out.reason = "gradient";
      break;
    }
    if (std::sqrt(cost) <= 1e-13 * out.initial_norm) {
      out.converged = true;
      out.reason = "zero residual";
      break;
    }
    const Eigen::MatrixXd A = J.transpose() * J;
    Eigen::VectorXd d = A.diagonal().cwiseMax(1e-300);
    if (mu < 0.0) mu = 1e-3;
    bool accepted = false, stalled = false;
    while (!accepted) {
      Eigen::MatrixXd M = A;
      M.diagonal() += mu * d;
      const Eigen::VectorXd step = M.ldlt().solve(-g);
      const Eigen::VectorXd u_new = clamp(u + step);
      const Eigen::VectorXd delta = u_new - u;
      if (delta.norm() <= opt.x_tol * (u.norm() + opt.x_tol)) {
        stalled = true;
        break;
      }
      const Eigen::VectorXd r_new = eval(u_new);
      const double cost_new = r_new.allFinite() ? r_new.squaredNorm() : std::numeric_limits<double>::infinity();
      const double predicted = -(delta.dot(g)) - 0.5 * delta.dot(A * delta);
      const double rho = predicted > 0.0 ? (cost - cost_new) / (2.0 * predicted) : -1.0;
      if (cost_new < cost && rho > 0.0) {
        const double rel = (cost - cost_new) / cost;
        u = u_new;
        r = r_new;
        cost = cost_new;
        J = jacobian(u, r);
        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        accepted = true;
        if (rel <= opt.f_tol) stalled = true;
      } else {
        mu *= nu;
        nu *= 2.0;
        if (mu > 1e30) {
          stalled = true;
          break;
        }
      }
    }
    if (stalled) {
      const double cg_now = cosine(J, r);
      out.converged = cg_now <= opt.stall_grad_tol || std::sqrt(cost) <= 1e-8 * out.initial_norm;
      out.reason = out.converged ? "no further progress" : "stalled with non-zero gradient";
      ++it;
      break;
    }
  }
  if (it >= opt.max_iter && out.reason.empty()) out.reason = "maximum iterations reached";

  out.x = u.cwiseProduct(s);
  out.residual = r;
  out.norm = r.norm();
  out.gradient = cosine(J, r);
  out.iterations = it;
  const Eigen::MatrixXd cov_u = detail::pseudo_inverse_spd(J.transpose() * J);
  out.covariance = s.asDiagonal() * cov_u * s.asDiagonal();
  for (Eigen::Index i = 0; i < p; ++i)
    if (std::isinf(cov_u(i, i))) out.covariance(i, i) = std::numeric_limits<double>::infinity();
  return out;
}

// ---------------------------------------------------------------------------

/// Named fit output. Sigmas come from the Gauss-Newton curvature scaled by
/// the reduced chi-square of the weighted residuals.
struct FitResult {
  std::vector<std::string> names;
  std::vector<double> params;
  std::vector<double> sigmas;
  Eigen::MatrixXd covariance;
  double residual_norm = 0.0;
  double initial_residual_norm = 0.0;
  double chi2_reduced = 0.0;
  std::size_t n_data = 0;
  bool converged = false;
  int n_iter = 0;
  std::string status;
  std::map<std::string, double> derived;
  std::map<std::string, double> derived_sigma;
  std::vector<std::string> flags;

  std::size_t index(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw FitError("fit result has no parameter '" + name + "'");
  }
  double param(const std::string& name) const { return params[index(name)]; }
  double sigma(const std::string& name) const { return sigmas[index(name)]; }
  bool has_flag(const std::string& f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }
};

inline FitResult make_fit_result(std::vector<std::string> names, const LmResult& lm, std::size_t n_data) {
  FitResult fr;
  fr.names = std::move(names);
  fr.n_data = n_data;
  const auto p = static_cast<std::size_t>(lm.x.size());
  const double dof = n_data > p ? static_cast<double>(n_data - p) : 1.0;
  fr.chi2_reduced = lm.norm * lm.norm / dof;
  fr.covariance = lm.covariance * fr.chi2_reduced;
  for (std::size_t i = 0; i < p; ++i) {
    fr.params.push_back(lm.x(static_cast<Eigen::Index>(i)));
    const double v = lm.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    fr.sigmas.push_back(std::isinf(v) ? std::numeric_limits<double>::infinity() : std::sqrt(std::max(0.0, v * fr.chi2_reduced)));
  }
  fr.residual_norm = lm.norm;
  fr.initial_residual_norm = lm.initial_norm;
  fr.converged = lm.converged;
  fr.n_iter = lm.iterations;
  fr.status = lm.reason;
  return fr;
}

inline nlohmann::json to_json(const FitResult& fr) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["params"] = nlohmann::json::object();
  j["sigmas"] = nlohmann::json::object();
  for (std::size_t i = 0; i < fr.names.size(); ++i) {
    j["params"][fr.names[i]] = num(fr.params[i]);
    j["sigmas"][fr.names[i]] = num(fr.sigmas[i]);
  }
  j["residual_norm"] = num(fr.residual_norm);
  j["converged"] = fr.converged;
  j["n_iter"] = fr.n_iter;
  j["n_data"] = fr.n_data;
  j["chi2_reduced"] = num(fr.chi2_reduced);
  j["status"] = fr.status;
  j["derived"] = nlohmann::json::object();
  for (const auto& [k, v] : fr.derived) j["derived"][k] = num(v);
  j["derived_sigmas"] = nlohmann::json::object();
  for (const auto& [k, v] : fr.derived_sigma) j["derived_sigmas"][k] = num(v);
  j["flags"] = fr.flags;
  return j;
}

/// Raised when the solver stops without converging; carries the best point found.
class FitNotConverged : public FitError {
 public:
  FitNotConverged(const std::string& what, FitResult best) : FitError(what), best_(std::move(best)) {}
  const FitResult& best() const { return best_; }

 private:
  FitResult best_;
};

}  // namespace transim
