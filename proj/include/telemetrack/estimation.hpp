#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "telemetrack/filter.hpp"

namespace telemetrack {

/// One observation's contribution to the log-normal likelihood.
struct LikelihoodTerm {
  double mu = 0.0;        // log-power mean
  double sigma2 = 0.0;    // log-power variance (after flooring)
  double log_y = 0.0;     // log of the observed power (after flooring)
  double residual = 0.0;  // log_y - mu
};

/// Moment-matched log-normal parameters: the log-normal with these (mu,
/// sigma^2) has mean Ybar and variance F.
inline std::pair<double, double> lognormal_moments(double y_mean, double y_var) {
  if (!(y_mean > 0.0)) throw std::invalid_argument("lognormal_moments: mean power must be > 0");
  if (!(y_var >= 0.0)) throw std::invalid_argument("lognormal_moments: power variance must be >= 0");
  const double t = 1.0 + y_var / (y_mean * y_mean);
  return {std::log(y_mean / std::sqrt(t)), std::log(t)};
}

/// Everything a likelihood evaluation needs besides the parameter vector.
/// Evaluations are pure: the same fixed initial belief is used every time.
struct LikelihoodProblem {
  std::vector<Detection> detections;
  FilterBelief init;
  std::vector<AntennaConfig> towers;
  Calibration cal;
  double sigma_x = 1.0;  // diffusion strengths, configuration inputs
  double sigma_y = 1.0;
  double sigma_z = 0.1;
  FilterKind kind = FilterKind::ukf;
  FilterOptions filter_opts;
  double sigma2_floor = 1e-12;   // keeps Z = 0 / F = 0 records finite
  double y_floor_factor = 1e-3;  // power floor = factor * P0, applied before logs

  MovementParams params_for(const Eigen::Vector3d& phi) const {
    return MovementParams{std::exp(phi(0)), std::exp(phi(1)), std::exp(phi(2)),
                          sigma_x, sigma_y, sigma_z};
  }
};

/// Per-step likelihood terms for beta = exp(phi), via a full filter pass.
inline std::vector<LikelihoodTerm> likelihood_terms(const Eigen::Vector3d& phi,
                                                    const LikelihoodProblem& prob) {
  if (!phi.allFinite()) throw std::invalid_argument("likelihood: phi must be finite");
  if (!prob.detections.empty()) {
    bool all_saturated = true;
    for (const Detection& d : prob.detections)
      if (d.z < prob.cal.ZM) { all_saturated = false; break; }
    if (all_saturated)
      throw std::runtime_error("likelihood: every observation is saturated; nothing to fit");
  }

  auto [track, diags] = run_filter(prob.detections, prob.init, prob.params_for(phi), prob.towers,
                                   prob.cal, prob.kind, prob.filter_opts);
  const double y_floor = prob.y_floor_factor * prob.cal.P0;

  std::vector<LikelihoodTerm> terms;
  terms.reserve(diags.size());
  for (size_t k = 0; k < diags.size(); ++k) {
    if (diags[k].saturated && prob.filter_opts.skip_saturated) continue;  // no update applied
    const double y_obs = std::max(display_to_power(prob.detections[k].z, prob.cal), y_floor);
    const double y_bar = std::max(diags[k].y_pred_mean, y_floor);
    auto [mu, sigma2] = lognormal_moments(y_bar, diags[k].y_pred_var);
    sigma2 = std::max(sigma2, prob.sigma2_floor);
    LikelihoodTerm term;
    term.mu = mu;
    term.sigma2 = sigma2;
    term.log_y = std::log(y_obs);
    term.residual = term.log_y - mu;
    terms.push_back(term);
  }
  return terms;
}

/// Full negative log likelihood, constant (n/2) ln(2 pi) included.
inline double negative_log_likelihood(const Eigen::Vector3d& phi, const LikelihoodProblem& prob) {
  double nll = 0.0;
  for (const LikelihoodTerm& term : likelihood_terms(phi, prob)) {
    nll += 0.5 * std::log(2.0 * std::numbers::pi) + 0.5 * std::log(term.sigma2) +
           0.5 * term.residual * term.residual / term.sigma2;
  }
  return nll;
}

struct TracePoint {
  int iteration = 0;
  double best_nll = 0.0;
  Eigen::Vector3d phi = Eigen::Vector3d::Zero();
};
using OptimizationTrace = std::vector<TracePoint>;

using Objective = std::function<double(const Eigen::Vector3d&)>;

struct NewtonConfig {
  int max_iters = 100;
  double tol = 1e-6;           // gradient infinity-norm stopping threshold
  double fd_rel_step = 1e-5;   // relative finite-difference step on phi
  Eigen::Vector3d init_phi = Eigen::Vector3d(std::log(3e-3), std::log(5.1e-4), std::log(5e-5));
};

struct PsoConfig {
  int swarm_size = 30;
  int max_iters = 2000;
  double inertia = 0.72;
  double cognitive = 1.49;
  double social = 1.49;
  Eigen::Vector3d box_lo = Eigen::Vector3d::Constant(std::log(1e-8));
  Eigen::Vector3d box_hi = Eigen::Vector3d::Constant(std::log(1e-1));
  std::uint64_t seed = 0;
};

namespace detail {

// Optimizers treat anything thrown by the objective as a non-finite value;
// such points are rejected, never returned.
inline double safe_eval(const Objective& f, const Eigen::Vector3d& x) {
  try {
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const std::exception&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

/// Damped Newton iteration with central-finite-difference gradient and
/// Hessian, Armijo backtracking, and positive-definite regularization of the
/// Hessian.  Returns the best point seen and the per-iteration trace.
inline std::pair<Eigen::Vector3d, OptimizationTrace> newton_optimize(
    const Objective& f, const Eigen::Vector3d& phi0, const NewtonConfig& cfg = {}) {
  using Vec3 = Eigen::Vector3d;
  using Mat3 = Eigen::Matrix3d;
  const double inf = std::numeric_limits<double>::infinity();

  double f_cur = detail::safe_eval(f, phi0);
  if (!std::isfinite(f_cur))
    throw std::invalid_argument("newton_optimize: objective not finite at the starting point");

  Vec3 phi = phi0;
  Vec3 best_phi = phi;
  double best_f = f_cur;
  OptimizationTrace trace{{0, best_f, best_phi}};

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    Vec3 step_sizes;
    for (int i = 0; i < 3; ++i) step_sizes(i) = cfg.fd_rel_step * std::max(std::abs(phi(i)), 1.0);

    // One-sided points are shared between the gradient and the Hessian diagonal.
    Vec3 f_hi, f_lo, grad;
    Mat3 hess;
    for (int i = 0; i < 3; ++i) {
      Vec3 hi = phi, lo = phi;
      hi(i) += step_sizes(i);
      lo(i) -= step_sizes(i);
      f_hi(i) = detail::safe_eval(f, hi);
      f_lo(i) = detail::safe_eval(f, lo);
      grad(i) = (f_hi(i) - f_lo(i)) / (2.0 * step_sizes(i));
      hess(i, i) = (f_hi(i) - 2.0 * f_cur + f_lo(i)) / (step_sizes(i) * step_sizes(i));
    }
    for (int i = 0; i < 3; ++i) {
      for (int j = i + 1; j < 3; ++j) {
        Vec3 pp = phi, pm = phi, mp = phi, mm = phi;
        pp(i) += step_sizes(i); pp(j) += step_sizes(j);
        pm(i) += step_sizes(i); pm(j) -= step_sizes(j);
        mp(i) -= step_sizes(i); mp(j) += step_sizes(j);
        mm(i) -= step_sizes(i); mm(j) -= step_sizes(j);
        hess(i, j) = hess(j, i) = (detail::safe_eval(f, pp) - detail::safe_eval(f, pm) -
                                   detail::safe_eval(f, mp) + detail::safe_eval(f, mm)) /
                                  (4.0 * step_sizes(i) * step_sizes(j));
      }
    }
    if (!grad.allFinite() || !hess.allFinite()) break;
    if (grad.lpNorm<Eigen::Infinity>() < cfg.tol) break;

    // Regularize until positive definite, then solve for the Newton step.
    Mat3 reg = hess;
    double lambda = 0.0;
    Eigen::LLT<Mat3> llt(reg);
    while (llt.info() != Eigen::Success) {
      lambda = lambda == 0.0 ? std::max(1e-8, 1e-6 * hess.cwiseAbs().maxCoeff()) : 10.0 * lambda;
      if (!std::isfinite(lambda)) break;
      reg = hess + lambda * Mat3::Identity();
      llt.compute(reg);
    }
    Vec3 dir = llt.info() == Eigen::Success ? Vec3(-llt.solve(grad)) : Vec3(-grad);
    if (dir.dot(grad) >= 0.0) dir = -grad;  // not a descent direction

    // Armijo backtracking; non-finite trial values just shrink the step.
    double t = 1.0;
    double f_new = inf;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      f_new = detail::safe_eval(f, phi + t * dir);
      if (std::isfinite(f_new) && f_new <= f_cur + 1e-4 * t * grad.dot(dir)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      trace.push_back({iter, best_f, best_phi});
      break;  // stalled; best-seen point is the answer
    }
    phi += t * dir;
    f_cur = f_new;
    if (f_cur < best_f) {
      best_f = f_cur;
      best_phi = phi;
    }
    trace.push_back({iter, best_f, best_phi});
  }
  return {best_phi, trace};
}

/// Particle swarm with the standard inertia/cognitive/social velocity update,
/// velocities clamped to half the initialization box width per dimension.
/// Deterministic for a fixed seed.  Degenerate configurations (single
/// particle, zero weights) are accepted as-is.
inline std::pair<Eigen::Vector3d, OptimizationTrace> pso_optimize(const Objective& f,
                                                                  const PsoConfig& cfg = {}) {
  using Vec3 = Eigen::Vector3d;
  if (cfg.swarm_size < 1) throw std::invalid_argument("pso_optimize: swarm_size must be >= 1");
  if (cfg.inertia < 0.0 || cfg.cognitive < 0.0 || cfg.social < 0.0)
    throw std::invalid_argument("pso_optimize: weights must be >= 0");
  for (int d = 0; d < 3; ++d)
    if (!(cfg.box_lo(d) < cfg.box_hi(d)))
      throw std::invalid_argument("pso_optimize: initialization box must have positive width");

  const double inf = std::numeric_limits<double>::infinity();
  const Vec3 v_max = 0.5 * (cfg.box_hi - cfg.box_lo);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int m = cfg.swarm_size;
  std::vector<Vec3> pos(m), vel(m, Vec3::Zero()), pbest(m);
  std::vector<double> pbest_cost(m, inf);
  Vec3 gbest = Vec3::Zero();
  double gbest_cost = inf;

  for (int i = 0; i < m; ++i) {
    for (int d = 0; d < 3; ++d)
      pos[i](d) = cfg.box_lo(d) + unit(rng) * (cfg.box_hi(d) - cfg.box_lo(d));
    const double c = detail::safe_eval(f, pos[i]);
    pbest[i] = pos[i];
    pbest_cost[i] = c;
    if (c < gbest_cost) {
      gbest_cost = c;
      gbest = pos[i];
    }
  }
  if (!std::isfinite(gbest_cost))
    throw std::runtime_error("pso_optimize: objective non-finite for every initial particle");

  OptimizationTrace trace{{0, gbest_cost, gbest}};
  for (int k = 1; k <= cfg.max_iters; ++k) {
    for (int i = 0; i < m; ++i) {
      for (int d = 0; d < 3; ++d) {
        const double r1 = unit(rng), r2 = unit(rng);
        double v = cfg.inertia * vel[i](d) + cfg.cognitive * r1 * (pbest[i](d) - pos[i](d)) +
                   cfg.social * r2 * (gbest(d) - pos[i](d));
        vel[i](d) = std::clamp(v, -v_max(d), v_max(d));
        pos[i](d) += vel[i](d);
      }
      const double c = detail::safe_eval(f, pos[i]);
      if (c < pbest_cost[i]) {
        pbest_cost[i] = c;
        pbest[i] = pos[i];
      }
      if (c < gbest_cost) {
        gbest_cost = c;
        gbest = pos[i];
      }
    }
    trace.push_back({k, gbest_cost, gbest});
  }
  return {gbest, trace};
}

enum class OptimMethod { newton, pso };

struct EstimateResult {
  MovementParams params;
  Eigen::Vector3d phi = Eigen::Vector3d::Zero();
  double nll = 0.0;
  OptimizationTrace trace;
};

/// Maximum-likelihood estimate of the mean-reversion rates under
/// phi = ln(beta).  Diffusion strengths come from the problem configuration.
inline EstimateResult estimate_parameters(const LikelihoodProblem& prob, OptimMethod method,
                                          const NewtonConfig& newton_cfg = {},
                                          const PsoConfig& pso_cfg = {}) {
  const Objective nll = [&prob](const Eigen::Vector3d& phi) {
    return negative_log_likelihood(phi, prob);
  };
  auto [phi, trace] = method == OptimMethod::newton ? newton_optimize(nll, newton_cfg.init_phi, newton_cfg)
                                                    : pso_optimize(nll, pso_cfg);
  EstimateResult result;
  result.params = prob.params_for(phi);
  result.phi = phi;
  result.trace = std::move(trace);
  result.nll = result.trace.empty() ? negative_log_likelihood(phi, prob) : result.trace.back().best_nll;
  return result;
}

}  // namespace telemetrack
