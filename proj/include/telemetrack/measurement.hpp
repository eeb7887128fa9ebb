#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "telemetrack/movement.hpp"

namespace telemetrack {

/// Display-number <-> power link constants.  Defaults are the values fitted
/// to the reference kite dataset; they are treated as given here.
struct Calibration {
  double b = 0.3012;        // dimensionless link slope
  double P0 = 4.3458e-11;   // noise-floor power, watts
  double Zm = 0.0;          // lower display bound
  double ZM = 255.0;        // upper display bound

  void validate() const {
    if (!(b > 0.0) || !(P0 > 0.0) || !(Zm < ZM))
      throw std::invalid_argument("Calibration: requires b > 0, P0 > 0, Zm < ZM");
  }
};

/// Default propagation model parameters: received amplitude falls off as 1/r
/// with a cosine-power gain lobe around the boresight azimuth.
struct AntennaPattern {
  double A = 1e-4;  // power factor; xi^2 = A on boresight at 1 m
  double p = 2.0;   // gain exponent

  void validate() const {
    if (!(A > 0.0) || !(p > 0.0))
      throw std::invalid_argument("AntennaPattern: A and p must be > 0");
  }
};

/// One receiving tower.  The boresight azimuth is measured in radians from
/// the +x axis, counterclockwise, in the same planar frame as StateVector.
struct AntennaConfig {
  int id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double boresight_azimuth = 0.0;
  AntennaPattern pattern;
};

/// One raw observation as recorded: detection time, detecting antenna,
/// display integer.
struct Detection {
  double t = 0.0;
  int antenna_id = 0;
  double z = 0.0;
};

/// A detection with its display number converted to received power.
struct PowerObservation {
  double t = 0.0;
  int antenna_id = 0;
  double z = 0.0;      // as recorded, before any clamping
  double power = 0.0;  // watts
  bool saturated = false;
};

namespace detail {
// Z at the upper bound maps to atanh(1) = inf; saturated readings are
// converted as if they read ZM - 0.5 and flagged.
inline constexpr double kSaturationMargin = 0.5;
}  // namespace detail

/// Inverts the display link: power Y such that the noiseless display of Y is z.
inline double display_to_power(double z, const Calibration& cal) {
  cal.validate();
  if (!(z >= cal.Zm && z <= cal.ZM))
    throw std::invalid_argument("display_to_power: Z = " + std::to_string(z) + " outside [" +
                                std::to_string(cal.Zm) + ", " + std::to_string(cal.ZM) + "]");
  const double z_eff = std::min(z, cal.ZM - detail::kSaturationMargin);
  const double frac = (z_eff - cal.Zm) / (cal.ZM - cal.Zm);
  return cal.P0 * std::expm1(std::atanh(frac) / cal.b);
}

/// Real-valued display number for a received power; monotone, in [Zm, ZM).
inline double power_to_display(double y, const Calibration& cal) {
  cal.validate();
  if (!(y >= 0.0))
    throw std::invalid_argument("power_to_display: power must be >= 0");
  return cal.Zm + (cal.ZM - cal.Zm) * std::tanh(cal.b * std::log1p(y / cal.P0));
}

inline PowerObservation to_power_observation(const Detection& det, const Calibration& cal) {
  const bool saturated = det.z >= cal.ZM;
  return PowerObservation{det.t, det.antenna_id, det.z, display_to_power(det.z, cal), saturated};
}

/// Noiseless field amplitude xi at the target state for one antenna:
/// xi = sqrt(A * g(theta)) / r with g(theta) = max(cos theta, 0.05)^p,
/// theta the azimuthal offset from boresight and r the 3-D range.
inline double field_amplitude(const StateVector& state, const AntennaConfig& antenna) {
  antenna.pattern.validate();
  const Eigen::Vector3d d(state.px - antenna.position.x(), state.py - antenna.position.y(),
                          state.pz - antenna.position.z());
  const double r = d.norm();
  if (!(r > 0.0))
    throw std::domain_error("field_amplitude: target coincides with antenna " +
                            std::to_string(antenna.id));
  const double theta = std::atan2(d.y(), d.x()) - antenna.boresight_azimuth;
  const double gain = std::pow(std::max(std::cos(theta), 0.05), antenna.pattern.p);
  return std::sqrt(antenna.pattern.A * gain) / r;
}

/// Received power h = (xi + sqrt(P0) * gamma)^2 for a unit-normal noise draw gamma.
inline double received_power(const StateVector& state, double gamma, const AntennaConfig& antenna,
                             const Calibration& cal) {
  const double a = field_amplitude(state, antenna) + std::sqrt(cal.P0) * gamma;
  return a * a;
}

}  // namespace telemetrack
