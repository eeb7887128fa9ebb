#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "telemetrack/measurement.hpp"

using namespace telemetrack;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("display link matches the frozen mid-scale value") {
  const Calibration cal;
  CHECK_THAT(display_to_power(128.0, cal), WithinRel(2.2810978904879538e-10, 1e-12));
}

TEST_CASE("display link round-trips in both directions") {
  const Calibration cal;
  for (double z : {1.0, 13.0, 50.0, 128.0, 200.0, 254.0, 254.5}) {
    CAPTURE(z);
    CHECK_THAT(power_to_display(display_to_power(z, cal), cal), WithinRel(z, 1e-9));
  }
  for (double y : {1e-13, 4.3458e-11, 1e-10, 1e-8, 1e-6}) {
    CAPTURE(y);
    CHECK_THAT(display_to_power(power_to_display(y, cal), cal), WithinRel(y, 1e-9));
  }
}

TEST_CASE("display scale endpoints behave") {
  const Calibration cal;
  CHECK(display_to_power(cal.Zm, cal) == 0.0);
  CHECK(power_to_display(0.0, cal) == cal.Zm);
  // A saturated reading converts as if it sat half a count below the top.
  CHECK(display_to_power(cal.ZM, cal) == display_to_power(cal.ZM - 0.5, cal));
  CHECK(std::isfinite(display_to_power(cal.ZM, cal)));
}

TEST_CASE("display link is strictly monotone") {
  const Calibration cal;
  double prev = display_to_power(0.0, cal);
  for (double z = 5.0; z <= 254.5; z += 5.0) {
    const double cur = display_to_power(std::min(z, 254.5), cal);
    CHECK(cur > prev);
    prev = cur;
  }
  double prev_z = power_to_display(0.0, cal);
  for (double y = 1e-13; y < 1e-5; y *= 10.0) {
    const double cur_z = power_to_display(y, cal);
    CHECK(cur_z > prev_z);
    CHECK(cur_z < cal.ZM);
    prev_z = cur_z;
  }
}

TEST_CASE("out-of-range display and power inputs are rejected") {
  const Calibration cal;
  CHECK_THROWS_AS(display_to_power(-1.0, cal), std::invalid_argument);
  CHECK_THROWS_AS(display_to_power(256.0, cal), std::invalid_argument);
  CHECK_THROWS_AS(power_to_display(-1e-12, cal), std::invalid_argument);
  Calibration bad;
  bad.b = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = Calibration{};
  bad.Zm = 255.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("saturation is flagged only at the top of the scale") {
  const Calibration cal;
  const PowerObservation sat = to_power_observation(Detection{10.0, 3, 255.0}, cal);
  CHECK(sat.saturated);
  CHECK(sat.t == 10.0);
  CHECK(sat.antenna_id == 3);
  CHECK(sat.z == 255.0);
  CHECK(sat.power == display_to_power(254.5, cal));
  CHECK_FALSE(to_power_observation(Detection{10.0, 3, 254.0}, cal).saturated);
  CHECK_FALSE(to_power_observation(Detection{10.0, 3, 0.0}, cal).saturated);
}

TEST_CASE("field amplitude follows range and bearing") {
  AntennaConfig antenna;  // at the origin, boresight along +x, defaults A = 1e-4, p = 2
  const StateVector on_axis{1000.0, 0.0, 0.0, 0.0, 0.0};
  CHECK_THAT(field_amplitude(on_axis, antenna), WithinRel(1e-5, 1e-12));

  // Amplitude falls off as 1/r.
  const StateVector twice{2000.0, 0.0, 0.0, 0.0, 0.0};
  CHECK_THAT(field_amplitude(twice, antenna), WithinRel(0.5e-5, 1e-12));

  // Off the back the gain floor keeps the amplitude positive.
  const StateVector behind{-1000.0, 0.0, 0.0, 0.0, 0.0};
  CHECK_THAT(field_amplitude(behind, antenna), WithinRel(std::sqrt(1e-4 * 0.05 * 0.05) / 1000.0, 1e-12));
  const StateVector beside{0.0, 0.0, 1000.0, 0.0, 0.0};
  CHECK(field_amplitude(beside, antenna) == field_amplitude(behind, antenna));

  // On-boresight is the maximum over a bearing sweep at fixed range.
  const double peak = field_amplitude(on_axis, antenna);
  for (double az = 0.1; az < 3.2; az += 0.3) {
    const StateVector s{1000.0 * std::cos(az), 0.0, 1000.0 * std::sin(az), 0.0, 0.0};
    CHECK(field_amplitude(s, antenna) <= peak);
  }
}

TEST_CASE("field amplitude is invariant under frame rotation") {
  AntennaConfig a;
  a.position = Eigen::Vector3d(500.0, -200.0, 10.0);
  a.boresight_azimuth = 0.7;
  const StateVector target{900.0, 0.0, 100.0, 0.0, 60.0};
  const double xi = field_amplitude(target, a);

  // Rotate both the relative position and the boresight by the same angle.
  const double rot = 1.23;
  const double dx = target.px - a.position.x(), dy = target.py - a.position.y();
  StateVector rotated = target;
  rotated.px = a.position.x() + dx * std::cos(rot) - dy * std::sin(rot);
  rotated.py = a.position.y() + dx * std::sin(rot) + dy * std::cos(rot);
  AntennaConfig turned = a;
  turned.boresight_azimuth += rot;
  CHECK_THAT(field_amplitude(rotated, turned), WithinRel(xi, 1e-12));
}

TEST_CASE("coincident target and antenna is a domain error") {
  AntennaConfig a;
  a.position = Eigen::Vector3d(1.0, 2.0, 3.0);
  CHECK_THROWS_AS(field_amplitude(StateVector{1.0, 0.0, 2.0, 0.0, 3.0}, a), std::domain_error);
}

TEST_CASE("received power averages to amplitude power plus noise floor") {
  const Calibration cal;
  AntennaConfig antenna;
  const StateVector state{800.0, 0.0, 300.0, 0.0, 50.0};
  const double xi = field_amplitude(state, antenna);

  CHECK_THAT(received_power(state, 0.0, antenna, cal), WithinRel(xi * xi, 1e-12));

  // E[(xi + sqrt(P0) g)^2] = xi^2 + P0; Var = 2 P0^2 + 4 P0 xi^2.
  const int n = 200000;
  std::mt19937_64 rng(777);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += received_power(state, gauss(rng), antenna, cal);
  const double mean = sum / n;
  const double expected = xi * xi + cal.P0;
  const double se = std::sqrt((2.0 * cal.P0 * cal.P0 + 4.0 * cal.P0 * xi * xi) / n);
  CHECK_THAT(mean, WithinAbs(expected, 4.0 * se));
  CHECK_THAT(mean, WithinRel(expected, 0.01));
}
