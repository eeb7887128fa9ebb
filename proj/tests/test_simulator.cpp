#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "telemetrack/simulator.hpp"

using namespace telemetrack;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

AntennaConfig make_tower(int id, double x, double y, double az_rad, double gain = 2e-3) {
  AntennaConfig t;
  t.id = id;
  t.position = Eigen::Vector3d(x, y, 5.0);
  t.boresight_azimuth = az_rad;
  t.pattern.A = gain;
  return t;
}

SimScenario base_scenario() {
  SimScenario sc;
  sc.params.beta_x = 0.08;
  sc.params.beta_y = 0.05;
  sc.params.beta_z = 0.2;
  sc.init_state = StateVector{300.0, 0.5, 50.0, -0.2, 30.0};
  sc.detection_times = make_uniform_times(0.0, 2.0, 40);
  sc.towers = {make_tower(1, 0.0, 0.0, 0.0)};
  sc.seed = 99;
  return sc;
}

}  // namespace

TEST_CASE("simulation is a pure function of the scenario") {
  const SimScenario sc = base_scenario();
  const GroundTruth a = simulate(sc);
  const GroundTruth b = simulate(sc);
  REQUIRE(a.states.size() == sc.detection_times.size());
  REQUIRE(a.detections.size() == sc.detection_times.size());
  for (size_t k = 0; k < a.states.size(); ++k) {
    CHECK(a.states[k].to_vector() == b.states[k].to_vector());
    CHECK(a.detections[k].z == b.detections[k].z);
    CHECK(a.detections[k].t == sc.detection_times[k]);
  }

  SimScenario other = sc;
  other.seed = 100;
  const GroundTruth c = simulate(other);
  bool differs = false;
  for (size_t k = 0; k < a.states.size() && !differs; ++k)
    differs = a.states[k].to_vector() != c.states[k].to_vector();
  CHECK(differs);
}

TEST_CASE("first state is the initial condition, untouched") {
  const SimScenario sc = base_scenario();
  const GroundTruth truth = simulate(sc);
  CHECK(truth.states[0].to_vector() == sc.init_state.to_vector());
}

TEST_CASE("noise-free displays follow the deterministic measurement chain") {
  SimScenario sc = base_scenario();
  sc.include_measurement_noise = false;
  const GroundTruth truth = simulate(sc);
  for (size_t k = 0; k < truth.states.size(); ++k) {
    CAPTURE(k);
    const double xi = field_amplitude(truth.states[k], sc.towers[0]);
    double expected = std::round(power_to_display(xi * xi, sc.cal));
    expected = std::clamp(expected, sc.cal.Zm, sc.cal.ZM);
    CHECK(truth.detections[k].z == expected);
  }
}

TEST_CASE("records tag the nearest tower, ties to the lowest id") {
  const std::vector<AntennaConfig> towers = {
      make_tower(7, -100.0, 0.0, 0.0),
      make_tower(3, 100.0, 0.0, std::numbers::pi),
  };
  StateVector state{-50.0, 0.0, 20.0, 0.0, 30.0};
  CHECK(nearest_tower(state, towers) == 0);
  state.px = 50.0;
  CHECK(nearest_tower(state, towers) == 1);
  state.px = 0.0;  // exactly equidistant
  CHECK(nearest_tower(state, towers) == 1);
  CHECK(towers[nearest_tower(state, towers)].id == 3);
  CHECK_THROWS_AS(nearest_tower(state, {}), std::invalid_argument);
}

TEST_CASE("forcing an antenna overrides proximity") {
  SimScenario sc = base_scenario();
  sc.towers = {make_tower(1, 0.0, 0.0, 0.0), make_tower(2, 5000.0, 5000.0, 0.0)};
  sc.forced_antenna = 2;
  const GroundTruth truth = simulate(sc);
  for (const Detection& d : truth.detections) CHECK(d.antenna_id == 2);

  sc.forced_antenna = 42;
  CHECK_THROWS_WITH(simulate(sc), Catch::Matchers::ContainsSubstring("forced antenna 42"));
}

TEST_CASE("long runs settle at the stationary spread of the mean-reverting blocks") {
  SimScenario sc = base_scenario();
  sc.params.beta_x = 0.25;
  sc.params.beta_z = 0.5;
  sc.params.sigma_z = 0.4;
  sc.init_state = StateVector{0.0, 0.0, 0.0, 0.0, 0.0};  // start at the attractor
  sc.detection_times = make_uniform_times(0.0, 2.0, 3000);
  sc.seed = 4242;
  const GroundTruth truth = simulate(sc);

  double sum_vx = 0.0, sum_vx2 = 0.0, sum_pz = 0.0, sum_pz2 = 0.0;
  const size_t burn = 200;
  const double n = static_cast<double>(truth.states.size() - burn);
  for (size_t k = burn; k < truth.states.size(); ++k) {
    sum_vx += truth.states[k].vx;
    sum_vx2 += truth.states[k].vx * truth.states[k].vx;
    sum_pz += truth.states[k].pz;
    sum_pz2 += truth.states[k].pz * truth.states[k].pz;
  }
  const double var_vx = sum_vx2 / n - std::pow(sum_vx / n, 2);
  const double var_pz = sum_pz2 / n - std::pow(sum_pz / n, 2);

  // Stationary variances are sigma^2 / (2 beta); samples are autocorrelated,
  // so the tolerance is loose.
  CHECK_THAT(var_vx, WithinRel(1.0 / (2.0 * 0.25), 0.15));
  CHECK_THAT(var_pz, WithinRel(0.16 / (2.0 * 0.5), 0.15));
  CHECK_THAT(sum_pz / n, WithinAbs(0.0, 0.06));
}

TEST_CASE("scenario validation catches structural mistakes") {
  SimScenario sc = base_scenario();
  sc.detection_times.clear();
  CHECK_THROWS_AS(simulate(sc), std::invalid_argument);

  sc = base_scenario();
  sc.detection_times[5] = sc.detection_times[4];
  CHECK_THROWS_AS(simulate(sc), std::invalid_argument);

  sc = base_scenario();
  sc.towers.clear();
  CHECK_THROWS_AS(simulate(sc), std::invalid_argument);

  sc = base_scenario();
  sc.params.beta_x = -1.0;
  CHECK_THROWS_AS(simulate(sc), std::invalid_argument);
}

TEST_CASE("saturated fraction counts full-scale records") {
  GroundTruth truth;
  Calibration cal;
  for (double z : {10.0, 255.0, 254.0, 255.0, 120.0})
    truth.detections.push_back(Detection{0.0, 1, z});
  CHECK_THAT(saturated_fraction(truth, cal), WithinRel(0.4, 1e-12));
  CHECK(saturated_fraction(GroundTruth{}, cal) == 0.0);
}

TEST_CASE("jittered grids stay ordered and near the uniform grid") {
  const double dt = 2.0;
  const double jitter = 0.8;
  const auto times = make_jittered_times(10.0, dt, 200, jitter, 5);
  const auto again = make_jittered_times(10.0, dt, 200, jitter, 5);
  CHECK(times == again);
  for (size_t k = 0; k < times.size(); ++k) {
    const double uniform = 10.0 + static_cast<double>(k) * dt;
    CHECK(std::abs(times[k] - uniform) <= 0.5 * jitter);
    if (k > 0) CHECK(times[k] > times[k - 1]);
  }
  CHECK(make_jittered_times(0.0, dt, 5, 0.0, 1) == make_uniform_times(0.0, dt, 5));
  CHECK_THROWS_AS(make_jittered_times(0.0, dt, 5, dt, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_jittered_times(0.0, dt, 5, -0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_uniform_times(0.0, 0.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(make_uniform_times(0.0, dt, 0), std::invalid_argument);
}

TEST_CASE("monte carlo power collapses to the point value without spread") {
  const AntennaConfig tower = make_tower(1, 0.0, 0.0, 0.0);
  const StateVector state{400.0, 0.0, 100.0, 0.0, 30.0};
  Calibration cal;
  const double xi = field_amplitude(state, tower);

  const PowerMoments pm =
      monte_carlo_power_moments(state, Mat5::Zero(), tower, cal, 2000, 1, /*include_gamma=*/false);
  CHECK_THAT(pm.mean, WithinRel(xi * xi, 1e-14));
  CHECK(pm.variance == 0.0);

  CHECK_THROWS_AS(monte_carlo_power_moments(state, Mat5::Zero(), tower, cal, 999, 1),
                  std::invalid_argument);
}

TEST_CASE("monte carlo matches the closed-form gamma-only moments") {
  const AntennaConfig tower = make_tower(1, 0.0, 0.0, 0.0);
  const StateVector state{400.0, 0.0, 100.0, 0.0, 30.0};
  Calibration cal;
  const double xi = field_amplitude(state, tower);
  const double mean_true = xi * xi + cal.P0;
  const double var_true = 4.0 * xi * xi * cal.P0 + 2.0 * cal.P0 * cal.P0;

  const size_t n = 200000;
  const PowerMoments pm = monte_carlo_power_moments(state, Mat5::Zero(), tower, cal, n, 321);
  CHECK_THAT(pm.mean, WithinAbs(mean_true, 4.0 * std::sqrt(var_true / static_cast<double>(n))));
  CHECK_THAT(pm.variance, WithinRel(var_true, 0.1));
}

TEST_CASE("independent monte carlo runs agree within sampling error") {
  const AntennaConfig tower = make_tower(1, 0.0, 0.0, 0.0);
  const StateVector state{500.0, 0.0, -200.0, 0.0, 40.0};
  Calibration cal;
  const Mat5 cov = Vec5(2000.0, 1.0, 5000.0, 1.0, 1.0).asDiagonal();

  const PowerMoments a = monte_carlo_power_moments(state, cov, tower, cal, 50000, 11);
  const PowerMoments b = monte_carlo_power_moments(state, cov, tower, cal, 100000, 22);
  const double se =
      std::sqrt(a.variance / 50000.0 + b.variance / 100000.0);
  CHECK(std::abs(a.mean - b.mean) < 4.0 * se);
}

TEST_CASE("track error sums squared horizontal misses only") {
  GroundTruth truth;
  std::vector<FilterBelief> track;
  for (int k = 0; k < 50; ++k) {
    StateVector s{10.0 * k, 1.0, -5.0 * k, 0.5, 25.0};
    truth.states.push_back(s);
    FilterBelief belief;
    belief.mean = s;
    belief.cov = Mat5::Identity();
    belief.t = k;
    track.push_back(belief);
  }
  CHECK(evaluate_track(truth, track) == 0.0);

  for (FilterBelief& belief : track) {
    belief.mean.px += 10.0;  // pure x offset
    belief.mean.pz += 100.0;  // altitude misses must not count
  }
  CHECK_THAT(evaluate_track(truth, track), WithinRel(50.0 * 100.0, 1e-12));

  track.pop_back();
  CHECK_THROWS_AS(evaluate_track(truth, track), std::invalid_argument);
}
