#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "telemetrack/filter.hpp"
#include "telemetrack/measurement.hpp"
#include "telemetrack/movement.hpp"

namespace telemetrack {

/// Inputs for one synthetic ground-truth run.
struct SimScenario {
  MovementParams params;
  StateVector init_state;
  std::vector<double> detection_times;  // strictly increasing, seconds
  std::vector<AntennaConfig> towers;
  Calibration cal;
  std::uint64_t seed = 0;
  bool include_measurement_noise = true;   // false forces gamma = 0
  std::optional<int> forced_antenna;       // unset = nearest tower per record

  void validate() const {
    params.validate();
    cal.validate();
    if (detection_times.empty()) throw std::invalid_argument("scenario: no detection times");
    for (size_t k = 0; k < detection_times.size(); ++k) {
      if (!std::isfinite(detection_times[k]))
        throw std::invalid_argument("scenario: detection times must be finite");
      if (k > 0 && !(detection_times[k] > detection_times[k - 1]))
        throw std::invalid_argument("scenario: detection times must be strictly increasing");
    }
    if (towers.empty()) throw std::invalid_argument("scenario: at least one tower required");
    for (const AntennaConfig& tower : towers) tower.pattern.validate();
  }
};

/// Simulated truth: one state and one detection per requested timestamp.
struct GroundTruth {
  std::vector<StateVector> states;
  std::vector<Detection> detections;
};

/// Index of the tower closest to the target position; ties go to the
/// lexicographically smallest id so the choice is reproducible.
inline size_t nearest_tower(const StateVector& state, const std::vector<AntennaConfig>& towers) {
  if (towers.empty()) throw std::invalid_argument("nearest_tower: empty tower list");
  const Eigen::Vector3d target(state.px, state.py, state.pz);
  size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < towers.size(); ++i) {
    const double dist = (target - towers[i].position).norm();
    if (dist < best_dist || (dist == best_dist && towers[i].id < towers[best].id)) {
      best = i;
      best_dist = dist;
    }
  }
  return best;
}

/// Evenly spaced timestamps, the default detection cadence.
inline std::vector<double> make_uniform_times(double t0, double dt, size_t count) {
  if (!(dt > 0.0)) throw std::invalid_argument("make_uniform_times: dt must be > 0");
  if (count == 0) throw std::invalid_argument("make_uniform_times: count must be >= 1");
  std::vector<double> times(count);
  for (size_t k = 0; k < count; ++k) times[k] = t0 + static_cast<double>(k) * dt;
  return times;
}

/// Uniform grid with per-point jitter drawn from U(-jitter/2, jitter/2);
/// jitter < dt keeps the grid strictly increasing.
inline std::vector<double> make_jittered_times(double t0, double dt, size_t count, double jitter,
                                               std::uint64_t seed) {
  if (!(jitter >= 0.0) || jitter >= dt)
    throw std::invalid_argument("make_jittered_times: need 0 <= jitter < dt");
  std::vector<double> times = make_uniform_times(t0, dt, count);
  if (jitter == 0.0) return times;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> offset(-0.5 * jitter, 0.5 * jitter);
  for (double& t : times) t += offset(rng);
  return times;
}

/// Samples a trajectory from the movement model and pushes each state through
/// the measurement chain: nearest (or forced) tower, amplitude, received power
/// with gamma ~ N(0,1), display conversion, rounding, clamping to [Zm, ZM].
inline GroundTruth simulate(const SimScenario& scenario) {
  scenario.validate();

  size_t forced_index = 0;
  if (scenario.forced_antenna) {
    bool found = false;
    for (size_t i = 0; i < scenario.towers.size(); ++i) {
      if (scenario.towers[i].id == *scenario.forced_antenna) {
        forced_index = i;
        found = true;
        break;
      }
    }
    if (!found)
      throw std::invalid_argument("scenario: forced antenna " +
                                  std::to_string(*scenario.forced_antenna) + " not in tower list");
  }

  std::mt19937_64 rng(scenario.seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  const double sqrt_p0 = std::sqrt(scenario.cal.P0);

  GroundTruth truth;
  const size_t n = scenario.detection_times.size();
  truth.states.reserve(n);
  truth.detections.reserve(n);

  StateVector state = scenario.init_state;
  for (size_t k = 0; k < n; ++k) {
    if (k > 0) {
      const double dt = scenario.detection_times[k] - scenario.detection_times[k - 1];
      state = sample_transition(state, scenario.params, dt, rng);
    }
    truth.states.push_back(state);

    const size_t tower_index =
        scenario.forced_antenna ? forced_index : nearest_tower(state, scenario.towers);
    const AntennaConfig& tower = scenario.towers[tower_index];
    const double xi = field_amplitude(state, tower);
    const double gamma = scenario.include_measurement_noise ? std_normal(rng) : 0.0;
    const double amp = xi + sqrt_p0 * gamma;
    const double power = amp * amp;

    double z = std::round(power_to_display(power, scenario.cal));
    z = std::clamp(z, scenario.cal.Zm, scenario.cal.ZM);
    truth.detections.push_back(Detection{scenario.detection_times[k], tower.id, z});
  }
  return truth;
}

/// Share of records whose display value sits at the top of the scale.
inline double saturated_fraction(const GroundTruth& truth, const Calibration& cal) {
  if (truth.detections.empty()) return 0.0;
  size_t count = 0;
  for (const Detection& d : truth.detections)
    if (d.z >= cal.ZM) ++count;
  return static_cast<double>(count) / static_cast<double>(truth.detections.size());
}

struct PowerMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Brute-force mean and variance of the received power under state
/// uncertainty N(state_mean, state_cov) and, optionally, the gamma noise.
/// This is the sampling oracle the unscented estimates are judged against.
inline PowerMoments monte_carlo_power_moments(const StateVector& state_mean, const Mat5& state_cov,
                                              const AntennaConfig& antenna, const Calibration& cal,
                                              size_t samples, std::uint64_t seed,
                                              bool include_gamma = true) {
  if (samples < 1000)
    throw std::invalid_argument("monte_carlo_power_moments: need at least 1000 samples");
  const Mat5 chol = cholesky_with_jitter<5>(state_cov);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  const Vec5 mean = state_mean.to_vector();
  const double sqrt_p0 = std::sqrt(cal.P0);

  // Welford running moments; numerically safe for tiny power values.
  double running_mean = 0.0;
  double running_m2 = 0.0;
  for (size_t i = 0; i < samples; ++i) {
    Vec5 draw;
    for (int j = 0; j < 5; ++j) draw(j) = std_normal(rng);
    const StateVector state = StateVector::from_vector(mean + chol * draw);
    const double gamma = include_gamma ? std_normal(rng) : 0.0;
    const double amp = field_amplitude(state, antenna) + sqrt_p0 * gamma;
    const double power = amp * amp;

    const double delta = power - running_mean;
    running_mean += delta / static_cast<double>(i + 1);
    running_m2 += delta * (power - running_mean);
  }
  return PowerMoments{running_mean, running_m2 / static_cast<double>(samples - 1)};
}

/// Sum of squared horizontal position errors; altitude is excluded.
inline double evaluate_track(const GroundTruth& truth, const std::vector<FilterBelief>& track) {
  if (truth.states.size() != track.size())
    throw std::invalid_argument("evaluate_track: truth and track lengths differ");
  double epsilon = 0.0;
  for (size_t k = 0; k < track.size(); ++k) {
    const double dx = truth.states[k].px - track[k].mean.px;
    const double dy = truth.states[k].py - track[k].mean.py;
    epsilon += dx * dx + dy * dy;
  }
  return epsilon;
}

}  // namespace telemetrack
