#pragma once

#include <cmath>
#include <random>
#include <stdexcept>

#include "telemetrack/linalg.hpp"

namespace telemetrack {

/// Target state, layout [px, vx, py, vy, pz].
/// Positions in meters (planar map frame), velocities in m/s,
/// pz is height above ground.
struct StateVector {
  double px = 0.0;
  double vx = 0.0;
  double py = 0.0;
  double vy = 0.0;
  double pz = 0.0;

  Vec5 to_vector() const {
    Vec5 v;
    v << px, vx, py, vy, pz;
    return v;
  }
  static StateVector from_vector(const Vec5& v) {
    return StateVector{v(0), v(1), v(2), v(3), v(4)};
  }
  bool is_finite() const {
    return std::isfinite(px) && std::isfinite(vx) && std::isfinite(py) &&
           std::isfinite(vy) && std::isfinite(pz);
  }
};

/// Per-axis mean-reversion rates (1/s) and diffusion strengths.
/// The rates are the estimation target; the diffusion strengths are
/// configuration inputs and are not estimated.
struct MovementParams {
  double beta_x = 1e-3;
  double beta_y = 1e-3;
  double beta_z = 1e-3;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double sigma_z = 0.1;

  void validate() const {
    const double v[6] = {beta_x, beta_y, beta_z, sigma_x, sigma_y, sigma_z};
    for (double x : v) {
      if (!(x > 0.0) || !std::isfinite(x))
        throw std::invalid_argument("MovementParams: all rates and diffusion strengths must be finite and > 0");
    }
  }
};

/// Discrete transition for a fixed time step: x(t+dt) = H x(t) + w, w ~ N(0, Qbar).
struct TransitionModel {
  Mat5 H = Mat5::Identity();
  Mat5 Qbar = Mat5::Zero();
  double dt = 0.0;
};

namespace detail {

// Scalar building blocks of the discrete transition, written so they stay
// accurate down to beta*dt ~ 0.  expm1 removes the 1 - e^{-u} cancellation;
// the position-block integrals cancel to O(u^3) and O(u^2) respectively, so
// below u = 1e-2 they switch to series whose truncation error is < 1e-14
// relative at the switch point.

inline double ou_h12(double beta, double dt) {
  return -std::expm1(-beta * dt) / beta;  // (1 - e^{-b dt}) / b
}

// integral_0^dt e^{-2 b tau} s^2 dtau
inline double ou_q22(double beta, double sigma, double dt) {
  return -sigma * sigma * std::expm1(-2.0 * beta * dt) / (2.0 * beta);
}

// integral_0^dt (1 - e^{-b tau}) e^{-b tau} / b * s^2 dtau
inline double ou_q12(double beta, double sigma, double dt) {
  const double u = beta * dt;
  const double s2 = sigma * sigma;
  if (u < 1e-2) {
    const double poly = 1.0 / 2.0 +
                        u * (-1.0 / 2.0 +
                             u * (7.0 / 24.0 +
                                  u * (-1.0 / 8.0 +
                                       u * (31.0 / 720.0 +
                                            u * (-1.0 / 80.0 + u * (127.0 / 40320.0))))));
    return s2 * dt * dt * poly;
  }
  const double e1 = -std::expm1(-u);        // 1 - e^{-u}
  const double e2 = -std::expm1(-2.0 * u);  // 1 - e^{-2u}
  return s2 / (beta * beta) * (e1 - 0.5 * e2);
}

// integral_0^dt (1 - e^{-b tau})^2 / b^2 * s^2 dtau
inline double ou_q11(double beta, double sigma, double dt) {
  const double u = beta * dt;
  const double s2 = sigma * sigma;
  if (u < 1e-2) {
    const double poly = 1.0 / 3.0 +
                        u * (-1.0 / 4.0 +
                             u * (7.0 / 60.0 +
                                  u * (-1.0 / 24.0 +
                                       u * (31.0 / 2520.0 +
                                            u * (-1.0 / 320.0 + u * (127.0 / 181440.0))))));
    return s2 * dt * dt * dt * poly;
  }
  const double e1 = -std::expm1(-u);
  const double e2 = -std::expm1(-2.0 * u);
  return s2 / (beta * beta * beta) * (u - 2.0 * e1 + 0.5 * e2);
}

inline void check_step(const MovementParams& params, double dt) {
  params.validate();
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw std::invalid_argument("movement: time step must be finite and > 0");
}

}  // namespace detail

/// Block-diagonal system matrix H = diag(H_x, H_y, H_z) for one step of dt seconds.
inline Mat5 transition_matrix(const MovementParams& params, double dt) {
  detail::check_step(params, dt);
  Mat5 h = Mat5::Identity();
  h(0, 1) = detail::ou_h12(params.beta_x, dt);
  h(1, 1) = std::exp(-params.beta_x * dt);
  h(2, 3) = detail::ou_h12(params.beta_y, dt);
  h(3, 3) = std::exp(-params.beta_y * dt);
  h(4, 4) = std::exp(-params.beta_z * dt);
  return h;
}

/// Process-noise covariance Qbar = diag(Q_x, Q_y, Q_z) for one step of dt seconds.
inline Mat5 process_noise_cov(const MovementParams& params, double dt) {
  detail::check_step(params, dt);
  Mat5 q = Mat5::Zero();
  q(0, 0) = detail::ou_q11(params.beta_x, params.sigma_x, dt);
  q(0, 1) = q(1, 0) = detail::ou_q12(params.beta_x, params.sigma_x, dt);
  q(1, 1) = detail::ou_q22(params.beta_x, params.sigma_x, dt);
  q(2, 2) = detail::ou_q11(params.beta_y, params.sigma_y, dt);
  q(2, 3) = q(3, 2) = detail::ou_q12(params.beta_y, params.sigma_y, dt);
  q(3, 3) = detail::ou_q22(params.beta_y, params.sigma_y, dt);
  q(4, 4) = detail::ou_q22(params.beta_z, params.sigma_z, dt);
  return q;
}

inline TransitionModel make_transition_model(const MovementParams& params, double dt) {
  return TransitionModel{transition_matrix(params, dt), process_noise_cov(params, dt), dt};
}

/// Deterministic mean propagation H * state.
inline StateVector propagate(const StateVector& state, const TransitionModel& model) {
  return StateVector::from_vector(model.H * state.to_vector());
}

/// One random transition H * state + w, w ~ N(0, Qbar).
template <class URBG>
StateVector sample_transition(const StateVector& state, const TransitionModel& model, URBG& rng) {
  const Mat5 chol = cholesky_with_jitter<5>(model.Qbar);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec5 z;
  for (int i = 0; i < 5; ++i) z(i) = gauss(rng);
  return StateVector::from_vector(model.H * state.to_vector() + chol * z);
}

template <class URBG>
StateVector sample_transition(const StateVector& state, const MovementParams& params, double dt,
                              URBG& rng) {
  return sample_transition(state, make_transition_model(params, dt), rng);
}

}  // namespace telemetrack
