#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "telemetrack/measurement.hpp"
#include "telemetrack/movement.hpp"

namespace telemetrack {

enum class FilterKind { ekf, ukf };

/// Gaussian belief over the target state at a point in time.
struct FilterBelief {
  StateVector mean;
  Mat5 cov = Mat5::Zero();
  double t = 0.0;
};

/// Per-step innovation record, one per processed detection.
struct StepDiagnostics {
  double t = 0.0;
  double y_pred_mean = 0.0;  // predicted power mean, watts
  double y_pred_var = 0.0;   // predicted power variance (after flooring), watts^2
  double innovation = 0.0;   // observed minus predicted power, watts
  double gain_norm = 0.0;    // |M v|, magnitude of the applied mean update
  bool saturated = false;
  bool cov_repaired = false;
};

/// State extended with the unit-variance measurement-noise variable gamma,
/// so the unscented transform sees the noise nonlinearity.
struct AugmentedBelief {
  Vec6 mean = Vec6::Zero();   // [state; gamma = 0]
  Mat6 cov = Mat6::Zero();    // blockdiag(P, 1)
};

/// First and second measurement moments plus state/measurement cross-covariance.
struct MeasurementMoments {
  double mean = 0.0;
  double var = 0.0;
  Vec6 cross = Vec6::Zero();
};

struct FilterOptions {
  /// Floor applied to the predicted measurement variance before the gain is
  /// formed; defaults to 1e-4 * P0^2 when derived from a Calibration.
  std::optional<double> innovation_var_floor;
  /// When set, saturated records get a prediction-only step (no update).
  bool skip_saturated = false;
};

inline double default_innovation_var_floor(const Calibration& cal) {
  return 1e-4 * cal.P0 * cal.P0;
}

inline AugmentedBelief augment(const Vec5& mean, const Mat5& cov) {
  AugmentedBelief out;
  out.mean.head<5>() = mean;
  out.mean(5) = 0.0;
  out.cov.topLeftCorner<5, 5>() = cov;
  out.cov(5, 5) = 1.0;
  return out;
}

/// The 2n = 12 symmetric sigma points  x0 +- column_i of chol(n * P).
/// Their sample mean is x0 exactly and their sample covariance (with uniform
/// 1/(2n) weights) is P.
inline std::array<Vec6, 12> sigma_points(const AugmentedBelief& belief) {
  const Mat6 root = cholesky_with_jitter<6>((6.0 * belief.cov).eval());
  std::array<Vec6, 12> pts;
  for (int i = 0; i < 6; ++i) {
    pts[i] = belief.mean + root.col(i);
    pts[i + 6] = belief.mean - root.col(i);
  }
  return pts;
}

/// Sample moments of h over a sigma-point set: mean, variance, and the
/// cross-covariance of point deviations with measurement deviations, all with
/// uniform 1/(2n) weights.
template <class H>
MeasurementMoments ut_moments(std::span<const Vec6> points, H&& h) {
  if (points.empty()) throw std::invalid_argument("ut_moments: empty sigma-point set");
  const double w = 1.0 / static_cast<double>(points.size());

  Vec6 center = Vec6::Zero();
  for (const Vec6& p : points) center += p;
  center *= w;

  std::vector<double> values(points.size());
  MeasurementMoments m;
  for (size_t i = 0; i < points.size(); ++i) {
    values[i] = h(points[i]);
    if (!std::isfinite(values[i]))
      throw std::runtime_error("ut_moments: non-finite measurement value at sigma point " +
                               std::to_string(i));
    m.mean += w * values[i];
  }
  for (size_t i = 0; i < points.size(); ++i) {
    const double dy = values[i] - m.mean;
    m.var += w * dy * dy;
    m.cross += w * dy * (points[i] - center);
  }
  return m;
}

template <class H>
MeasurementMoments unscented_measurement(const AugmentedBelief& belief, H&& h) {
  const auto pts = sigma_points(belief);
  return ut_moments(std::span<const Vec6>(pts), std::forward<H>(h));
}

/// First-order moments: mean = h at the nominal point, variance and cross
/// terms from a central-finite-difference Jacobian.
template <class H>
MeasurementMoments linearized_measurement(const AugmentedBelief& belief, H&& h) {
  MeasurementMoments m;
  m.mean = h(belief.mean);
  if (!std::isfinite(m.mean))
    throw std::runtime_error("linearized_measurement: non-finite value at the nominal point");
  Vec6 jac;
  for (int i = 0; i < 6; ++i) {
    const double step = 1e-6 * std::max(std::abs(belief.mean(i)), 1.0);
    Vec6 hi = belief.mean, lo = belief.mean;
    hi(i) += step;
    lo(i) -= step;
    jac(i) = (h(hi) - h(lo)) / (2.0 * step);
  }
  m.cross = belief.cov * jac;
  m.var = jac.dot(m.cross);
  return m;
}

/// Mean/covariance propagation through the transition model (no measurement).
inline FilterBelief predict(const FilterBelief& belief, const TransitionModel& tm) {
  FilterBelief out;
  out.mean = propagate(belief.mean, tm);
  Mat5 cov = tm.H * belief.cov * tm.H.transpose() + tm.Qbar;
  symmetrize<5>(cov);
  out.cov = cov;
  out.t = belief.t + tm.dt;
  return out;
}

namespace detail {

// Gain, mean and covariance update from precomputed measurement moments.
// Only the first five rows of the gain act: the sixth augmented variable is
// the noise draw, which is never updated.
inline std::pair<FilterBelief, StepDiagnostics> apply_measurement(
    const FilterBelief& predicted, const MeasurementMoments& m, double t_obs, double y_obs,
    double var_floor, bool saturated, bool apply_update) {
  StepDiagnostics diag;
  diag.t = t_obs;
  diag.y_pred_mean = m.mean;
  diag.y_pred_var = std::max(m.var, var_floor);
  diag.innovation = y_obs - m.mean;
  diag.saturated = saturated;

  FilterBelief post = predicted;
  post.t = t_obs;
  if (!apply_update) return {post, diag};

  const Vec5 gain = m.cross.head<5>() / diag.y_pred_var;
  post.mean = StateVector::from_vector(predicted.mean.to_vector() + gain * diag.innovation);
  Mat5 cov = predicted.cov - gain * diag.y_pred_var * gain.transpose();
  symmetrize<5>(cov);
  if (Eigen::LLT<Mat5>(cov).info() != Eigen::Success)
    diag.cov_repaired = floor_eigenvalues<5>(cov, 0.0);
  post.cov = cov;
  diag.gain_norm = (gain * diag.innovation).norm();
  return {post, diag};
}

}  // namespace detail

/// One predict + update cycle against an arbitrary scalar measurement
/// function of the augmented state.  Exposed for testing with stub
/// measurement functions; production callers use ukf_step / ekf_step.
template <class H>
std::pair<FilterBelief, StepDiagnostics> step_with_measurement(
    const FilterBelief& belief, double t_obs, double y_obs, const TransitionModel& tm, H&& h,
    FilterKind kind, double var_floor, bool saturated = false, bool apply_update = true) {
  if (!(t_obs > belief.t))
    throw std::invalid_argument("filter step: observation time must be after the belief time");
  const FilterBelief predicted = predict(belief, tm);
  const AugmentedBelief aug = augment(predicted.mean.to_vector(), predicted.cov);
  const MeasurementMoments m = kind == FilterKind::ukf
                                   ? unscented_measurement(aug, std::forward<H>(h))
                                   : linearized_measurement(aug, std::forward<H>(h));
  return detail::apply_measurement(predicted, m, t_obs, y_obs, var_floor, saturated, apply_update);
}

inline double augmented_received_power(const Vec6& xhat, const AntennaConfig& antenna,
                                       const Calibration& cal) {
  return received_power(StateVector::from_vector(xhat.head<5>()), xhat(5), antenna, cal);
}

inline std::pair<FilterBelief, StepDiagnostics> ukf_step(const FilterBelief& belief,
                                                         const PowerObservation& obs,
                                                         const TransitionModel& tm,
                                                         const AntennaConfig& antenna,
                                                         const Calibration& cal,
                                                         const FilterOptions& opts = {}) {
  const double floor = opts.innovation_var_floor.value_or(default_innovation_var_floor(cal));
  const bool apply = !(obs.saturated && opts.skip_saturated);
  return step_with_measurement(
      belief, obs.t, obs.power, tm,
      [&](const Vec6& x) { return augmented_received_power(x, antenna, cal); }, FilterKind::ukf,
      floor, obs.saturated, apply);
}

inline std::pair<FilterBelief, StepDiagnostics> ekf_step(const FilterBelief& belief,
                                                         const PowerObservation& obs,
                                                         const TransitionModel& tm,
                                                         const AntennaConfig& antenna,
                                                         const Calibration& cal,
                                                         const FilterOptions& opts = {}) {
  const double floor = opts.innovation_var_floor.value_or(default_innovation_var_floor(cal));
  const bool apply = !(obs.saturated && opts.skip_saturated);
  return step_with_measurement(
      belief, obs.t, obs.power, tm,
      [&](const Vec6& x) { return augmented_received_power(x, antenna, cal); }, FilterKind::ekf,
      floor, obs.saturated, apply);
}

inline const AntennaConfig& find_antenna(const std::vector<AntennaConfig>& towers, int id,
                                         size_t record_index) {
  for (const AntennaConfig& a : towers)
    if (a.id == id) return a;
  throw std::runtime_error("detections[" + std::to_string(record_index) +
                           "]: unknown antenna id " + std::to_string(id));
}

inline const AntennaConfig& find_antenna(const std::vector<AntennaConfig>& towers, int id) {
  return find_antenna(towers, id, 0);
}

/// Filters a detection sequence, producing one posterior belief and one
/// diagnostics record per detection.  Deterministic given inputs.
inline std::pair<std::vector<FilterBelief>, std::vector<StepDiagnostics>> run_filter(
    const std::vector<Detection>& detections, const FilterBelief& init,
    const MovementParams& params, const std::vector<AntennaConfig>& towers,
    const Calibration& cal, FilterKind kind, const FilterOptions& opts = {}) {
  std::vector<FilterBelief> track;
  std::vector<StepDiagnostics> diags;
  track.reserve(detections.size());
  diags.reserve(detections.size());

  FilterBelief belief = init;
  for (size_t k = 0; k < detections.size(); ++k) {
    const Detection& det = detections[k];
    if (!(det.t > belief.t))
      throw std::runtime_error("detections[" + std::to_string(k) +
                               "]: timestamps must be strictly increasing");
    const AntennaConfig& antenna = find_antenna(towers, det.antenna_id, k);
    const TransitionModel tm = make_transition_model(params, det.t - belief.t);
    const PowerObservation obs = to_power_observation(det, cal);
    auto [post, diag] = kind == FilterKind::ukf ? ukf_step(belief, obs, tm, antenna, cal, opts)
                                                : ekf_step(belief, obs, tm, antenna, cal, opts);
    belief = post;
    track.push_back(post);
    diags.push_back(diag);
  }
  return {std::move(track), std::move(diags)};
}

/// Default initialization rule: start 100 m along the boresight of the tower
/// that made the first detection, 30 m up, at rest, with wide position and
/// moderate velocity uncertainty.
inline FilterBelief default_initial_belief(const Detection& first,
                                           const std::vector<AntennaConfig>& towers, double t0) {
  const AntennaConfig& antenna = find_antenna(towers, first.antenna_id, 0);
  FilterBelief belief;
  belief.mean.px = antenna.position.x() + 100.0 * std::cos(antenna.boresight_azimuth);
  belief.mean.py = antenna.position.y() + 100.0 * std::sin(antenna.boresight_azimuth);
  belief.mean.pz = 30.0;
  belief.cov = Vec5(1e6, 25.0, 1e6, 25.0, 25.0).asDiagonal();
  belief.t = t0;
  return belief;
}

}  // namespace telemetrack
