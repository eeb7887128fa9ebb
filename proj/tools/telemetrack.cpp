// Command-line front end: simulate synthetic flights, track detections with
// the EKF/UKF, estimate movement parameters by maximum likelihood, and score
// tracks against ground truth.  Every subcommand is a pure function of its
// input files, flags, and seed.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "telemetrack/estimation.hpp"
#include "telemetrack/filter.hpp"
#include "telemetrack/io.hpp"
#include "telemetrack/movement.hpp"
#include "telemetrack/simulator.hpp"

namespace fs = std::filesystem;
using telemetrack::json;

namespace {

std::string single_line(std::string text) {
  for (char& c : text)
    if (c == '\n' || c == '\r') c = ' ';
  return text;
}

telemetrack::FilterKind parse_kind(const std::string& kind) {
  if (kind == "ekf") return telemetrack::FilterKind::ekf;
  if (kind == "ukf") return telemetrack::FilterKind::ukf;
  throw std::runtime_error("unknown filter kind '" + kind + "' (expected ekf or ukf)");
}

// Initial belief: explicit "init" object if the config has one, otherwise the
// library default anchored before the first detection.  With a single
// detection the backdated start time falls back to one second earlier.
telemetrack::FilterBelief resolve_initial_belief(const json& config,
                                                 const std::vector<telemetrack::Detection>& dets,
                                                 const std::vector<telemetrack::AntennaConfig>& towers,
                                                 const std::string& where) {
  if (dets.empty()) throw std::runtime_error("no detections to process");
  if (config.contains("init")) {
    const json& init = config["init"];
    const std::string ctx = where + ": init";
    telemetrack::FilterBelief belief;
    belief.mean = telemetrack::parse_state(init, ctx);
    belief.t = telemetrack::detail::require_number(init, "t", ctx);
    telemetrack::Vec5 diag(1e6, 25.0, 1e6, 25.0, 25.0);
    if (init.contains("cov_diag")) {
      if (!init["cov_diag"].is_array() || init["cov_diag"].size() != 5)
        throw std::runtime_error(ctx + ": 'cov_diag' must be an array of 5 numbers");
      for (int i = 0; i < 5; ++i) diag(i) = init["cov_diag"][i].get<double>();
    }
    belief.cov = diag.asDiagonal();
    return belief;
  }
  const double t1 = dets[0].t;
  const double t0 = dets.size() >= 2 ? t1 - (dets[1].t - t1) : t1 - 1.0;
  return telemetrack::default_initial_belief(dets[0], towers, t0);
}

json belief_to_json(const telemetrack::FilterBelief& belief) {
  json init = telemetrack::state_to_json(belief.mean);
  init["t"] = belief.t;
  json diag = json::array();
  for (int i = 0; i < 5; ++i) diag.push_back(belief.cov(i, i));
  init["cov_diag"] = diag;
  return init;
}

struct CommonIo {
  std::string detections_path;
  std::string towers_path;
  std::string cal_path;
  std::string out_dir;
};

void prepare_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw std::runtime_error("--out-dir is required");
  fs::create_directories(out_dir);
}

telemetrack::Calibration load_cal(const std::string& path) {
  if (path.empty()) return telemetrack::Calibration{};
  return telemetrack::parse_calibration(telemetrack::read_json_file(path), path);
}

int cmd_simulate(const std::string& scenario_path, const CommonIo& io,
                 std::optional<std::uint64_t> seed) {
  json scenario_json = telemetrack::read_json_file(scenario_path);
  telemetrack::ScenarioFile file = telemetrack::parse_scenario(scenario_json, scenario_path);
  telemetrack::SimScenario& sc = file.scenario;

  if (!io.towers_path.empty())
    sc.towers = telemetrack::parse_towers(telemetrack::read_json_file(io.towers_path), io.towers_path);
  else if (!file.has_towers)
    throw std::runtime_error("no towers: give --towers or a 'towers' array in the scenario");
  if (!io.cal_path.empty()) sc.cal = load_cal(io.cal_path);
  if (seed) sc.seed = *seed;

  prepare_out_dir(io.out_dir);
  const telemetrack::GroundTruth truth = telemetrack::simulate(sc);
  const std::string truth_path = (fs::path(io.out_dir) / "truth.csv").string();
  const std::string det_path = (fs::path(io.out_dir) / "detections.csv").string();
  telemetrack::write_truth_csv(truth_path, truth);
  telemetrack::write_detections_csv(det_path, truth.detections);

  json scenario_echo = {{"params", telemetrack::params_to_json(sc.params)},
                        {"init_state", telemetrack::state_to_json(sc.init_state)},
                        {"detection_times", sc.detection_times},
                        {"towers", telemetrack::towers_to_json(sc.towers)},
                        {"cal", telemetrack::calibration_to_json(sc.cal)},
                        {"seed", sc.seed},
                        {"include_measurement_noise", sc.include_measurement_noise}};
  if (sc.forced_antenna) scenario_echo["forced_antenna"] = *sc.forced_antenna;
  const json report = {
      {"command", "simulate"},
      {"scenario", scenario_echo},
      {"outputs", {{"truth", truth_path}, {"detections", det_path}}},
      {"saturated_fraction", telemetrack::saturated_fraction(truth, sc.cal)}};
  telemetrack::write_json_file((fs::path(io.out_dir) / "report.json").string(), report);
  std::cout << "wrote " << truth_path << " and " << det_path << "\n";
  return 0;
}

int cmd_track(const std::string& config_path, const CommonIo& io, const std::string& kind_name,
              const std::string& truth_path) {
  const json config = telemetrack::read_json_file(config_path);
  const telemetrack::MovementParams params = telemetrack::parse_params(
      config.contains("params") ? config["params"] : config, config_path);
  const auto towers =
      telemetrack::parse_towers(telemetrack::read_json_file(io.towers_path), io.towers_path);
  const telemetrack::Calibration cal = load_cal(io.cal_path);
  const auto detections = telemetrack::read_detections_csv(io.detections_path);
  const telemetrack::FilterKind kind = parse_kind(kind_name);

  telemetrack::FilterOptions opts;
  if (config.contains("skip_saturated")) opts.skip_saturated = config["skip_saturated"].get<bool>();
  const telemetrack::FilterBelief init =
      resolve_initial_belief(config, detections, towers, config_path);

  auto [track, diags] = telemetrack::run_filter(detections, init, params, towers, cal, kind, opts);

  prepare_out_dir(io.out_dir);
  const std::string track_path = (fs::path(io.out_dir) / "track.csv").string();
  const std::string diag_path = (fs::path(io.out_dir) / "diag.csv").string();
  telemetrack::write_track_csv(track_path, track);
  telemetrack::write_diag_csv(diag_path, diags);

  json report = {{"command", "track"},
                 {"kind", kind_name},
                 {"inputs",
                  {{"detections", io.detections_path},
                   {"towers", io.towers_path},
                   {"config", config_path}}},
                 {"params", telemetrack::params_to_json(params)},
                 {"init", belief_to_json(init)},
                 {"skip_saturated", opts.skip_saturated},
                 {"cal", telemetrack::calibration_to_json(cal)},
                 {"outputs", {{"track", track_path}, {"diag", diag_path}}}};
  if (!truth_path.empty()) {
    const telemetrack::TruthFile truth_file = telemetrack::read_truth_csv(truth_path);
    telemetrack::GroundTruth truth;
    truth.states = truth_file.states;
    const double epsilon = telemetrack::evaluate_track(truth, track);
    report["epsilon"] = epsilon;
    std::cout << "epsilon = " << telemetrack::format_double(epsilon) << "\n";
  }
  telemetrack::write_json_file((fs::path(io.out_dir) / "report.json").string(), report);
  std::cout << "wrote " << track_path << " and " << diag_path << "\n";
  return 0;
}

int cmd_estimate(const std::string& config_path, const CommonIo& io, const std::string& kind_name,
                 const std::string& method_flag, std::optional<std::uint64_t> seed) {
  json config = json::object();
  if (!config_path.empty()) config = telemetrack::read_json_file(config_path);
  const std::string where = config_path.empty() ? std::string("config") : config_path;

  telemetrack::OptimizerSettings settings = telemetrack::parse_optimizer_settings(config, where);
  if (!method_flag.empty()) {
    if (method_flag == "newton") settings.method = telemetrack::OptimMethod::newton;
    else if (method_flag == "pso") settings.method = telemetrack::OptimMethod::pso;
    else throw std::runtime_error("unknown method '" + method_flag + "' (expected newton or pso)");
  }
  if (seed) settings.pso.seed = *seed;

  telemetrack::LikelihoodProblem prob;
  prob.detections = telemetrack::read_detections_csv(io.detections_path);
  prob.towers =
      telemetrack::parse_towers(telemetrack::read_json_file(io.towers_path), io.towers_path);
  prob.cal = load_cal(io.cal_path);
  prob.kind = parse_kind(kind_name);
  prob.sigma_x = telemetrack::detail::number_or(config, "sigma_x", prob.sigma_x, where);
  prob.sigma_y = telemetrack::detail::number_or(config, "sigma_y", prob.sigma_y, where);
  prob.sigma_z = telemetrack::detail::number_or(config, "sigma_z", prob.sigma_z, where);
  if (config.contains("skip_saturated"))
    prob.filter_opts.skip_saturated = config["skip_saturated"].get<bool>();
  prob.init = resolve_initial_belief(config, prob.detections, prob.towers, where);

  const telemetrack::EstimateResult result =
      telemetrack::estimate_parameters(prob, settings.method, settings.newton, settings.pso);

  prepare_out_dir(io.out_dir);
  const std::string trace_path = (fs::path(io.out_dir) / "trace.csv").string();
  const std::string params_path = (fs::path(io.out_dir) / "params.json").string();
  telemetrack::write_trace_csv(trace_path, result.trace);
  telemetrack::write_json_file(params_path, telemetrack::params_to_json(result.params));

  const bool newton = settings.method == telemetrack::OptimMethod::newton;
  json optimizer = {{"method", newton ? "newton" : "pso"}};
  if (newton) {
    optimizer["max_iters"] = settings.newton.max_iters;
    optimizer["tol"] = settings.newton.tol;
    optimizer["init_phi"] = {settings.newton.init_phi(0), settings.newton.init_phi(1),
                             settings.newton.init_phi(2)};
  } else {
    optimizer["max_iters"] = settings.pso.max_iters;
    optimizer["swarm_size"] = settings.pso.swarm_size;
    optimizer["inertia"] = settings.pso.inertia;
    optimizer["cognitive"] = settings.pso.cognitive;
    optimizer["social"] = settings.pso.social;
    optimizer["seed"] = settings.pso.seed;
  }
  const json report = {
      {"command", "estimate"},
      {"kind", kind_name},
      {"optimizer", optimizer},
      {"sigmas", {{"sigma_x", prob.sigma_x}, {"sigma_y", prob.sigma_y}, {"sigma_z", prob.sigma_z}}},
      {"skip_saturated", prob.filter_opts.skip_saturated},
      {"init", belief_to_json(prob.init)},
      {"inputs", {{"detections", io.detections_path}, {"towers", io.towers_path}}},
      {"outputs", {{"trace", trace_path}, {"params", params_path}}},
      {"estimate",
       {{"params", telemetrack::params_to_json(result.params)},
        {"phi", {result.phi(0), result.phi(1), result.phi(2)}},
        {"nll", result.nll}}}};
  telemetrack::write_json_file((fs::path(io.out_dir) / "report.json").string(), report);
  std::cout << "beta = [" << telemetrack::format_double(result.params.beta_x) << ", "
            << telemetrack::format_double(result.params.beta_y) << ", "
            << telemetrack::format_double(result.params.beta_z)
            << "], nll = " << telemetrack::format_double(result.nll) << "\n";
  std::cout << "wrote " << trace_path << " and " << params_path << "\n";
  return 0;
}

int cmd_evaluate(const std::string& truth_path, const std::string& track_path,
                 const std::string& out_dir) {
  const telemetrack::TruthFile truth_file = telemetrack::read_truth_csv(truth_path);
  const std::vector<telemetrack::FilterBelief> track = telemetrack::read_track_csv(track_path);
  telemetrack::GroundTruth truth;
  truth.states = truth_file.states;
  const double epsilon = telemetrack::evaluate_track(truth, track);
  std::cout << "epsilon = " << telemetrack::format_double(epsilon) << "\n";
  if (!out_dir.empty()) {
    prepare_out_dir(out_dir);
    const json report = {{"command", "evaluate"},
                         {"inputs", {{"truth", truth_path}, {"track", track_path}}},
                         {"epsilon", epsilon}};
    telemetrack::write_json_file((fs::path(out_dir) / "report.json").string(), report);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radio-telemetry target tracking: simulate, track, estimate, evaluate"};
  app.require_subcommand(1);

  CommonIo io;
  std::string scenario_path, config_path, kind_name = "ukf", method_flag, truth_path, track_path;
  std::optional<std::uint64_t> seed;

  CLI::App* sim = app.add_subcommand("simulate", "Generate a synthetic trajectory and detections");
  sim->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  sim->add_option("--towers", io.towers_path, "Tower configuration JSON");
  sim->add_option("--cal", io.cal_path, "Calibration JSON (defaults built in)");
  sim->add_option("--seed", seed, "Override the scenario seed");
  sim->add_option("--out-dir", io.out_dir, "Output directory")->required();

  CLI::App* trk = app.add_subcommand("track", "Filter a detection file into a trajectory");
  trk->add_option("--detections", io.detections_path, "Detections CSV")->required();
  trk->add_option("--towers", io.towers_path, "Tower configuration JSON")->required();
  trk->add_option("--cal", io.cal_path, "Calibration JSON (defaults built in)");
  trk->add_option("--config", config_path, "Movement-parameter JSON")->required();
  trk->add_option("--kind", kind_name, "Filter kind: ekf or ukf")->capture_default_str();
  trk->add_option("--truth", truth_path, "Optional truth CSV; adds epsilon to the report");
  trk->add_option("--out-dir", io.out_dir, "Output directory")->required();

  CLI::App* est = app.add_subcommand("estimate", "Maximum-likelihood movement parameters");
  est->add_option("--detections", io.detections_path, "Detections CSV")->required();
  est->add_option("--towers", io.towers_path, "Tower configuration JSON")->required();
  est->add_option("--cal", io.cal_path, "Calibration JSON (defaults built in)");
  est->add_option("--config", config_path, "Optimizer configuration JSON");
  est->add_option("--kind", kind_name, "Filter kind: ekf or ukf")->capture_default_str();
  est->add_option("--method", method_flag, "Optimizer: newton or pso (overrides config)");
  est->add_option("--seed", seed, "Override the optimizer seed");
  est->add_option("--out-dir", io.out_dir, "Output directory")->required();

  CLI::App* eval = app.add_subcommand("evaluate", "Score a track against ground truth");
  eval->add_option("--truth", truth_path, "Truth CSV")->required();
  eval->add_option("--track", track_path, "Track CSV")->required();
  eval->add_option("--out-dir", io.out_dir, "Optional output directory for report.json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(scenario_path, io, seed);
    if (trk->parsed()) return cmd_track(config_path, io, kind_name, truth_path);
    if (est->parsed()) return cmd_estimate(config_path, io, kind_name, method_flag, seed);
    return cmd_evaluate(truth_path, track_path, io.out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << single_line(e.what()) << "\n";
    return 1;
  }
}
