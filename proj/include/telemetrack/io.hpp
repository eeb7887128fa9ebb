#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "telemetrack/estimation.hpp"
#include "telemetrack/filter.hpp"
#include "telemetrack/measurement.hpp"
#include "telemetrack/movement.hpp"
#include "telemetrack/simulator.hpp"

namespace telemetrack {

using nlohmann::json;

/// Locale-independent number formatting, 17 significant digits: enough to
/// round-trip any double exactly, so re-ingesting our own output is lossless.
inline std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() &&
         (text.back() == ' ' || text.back() == '\t' || text.back() == '\r' || text.back() == '\n'))
    text.remove_suffix(1);
  return text;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

inline double parse_double(std::string_view field, const std::string& path, size_t line_no,
                           const char* column) {
  double value = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
    throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": cannot parse " +
                             column + " from '" + std::string(field) + "'");
  if (!std::isfinite(value))
    throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + column +
                             " must be finite");
  return value;
}

inline int parse_int(std::string_view field, const std::string& path, size_t line_no,
                     const char* column) {
  int value = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
    throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": cannot parse " +
                             column + " from '" + std::string(field) + "'");
  return value;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

// Reads non-empty lines, checks the header, and hands each data row, already
// split into the expected number of fields, to the row callback.
template <typename RowFn>
void read_csv(const std::string& path, const std::string& header, size_t columns, RowFn&& row_fn) {
  std::ifstream in = open_input(path);
  std::string line;
  size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = trim(line);
    if (text.empty()) continue;
    if (!saw_header) {
      if (text != header)
        throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                 ": expected header '" + header + "', got '" + std::string(text) +
                                 "'");
      saw_header = true;
      continue;
    }
    const std::vector<std::string_view> fields = split_fields(text);
    if (fields.size() != columns)
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": expected " +
                               std::to_string(columns) + " fields, got " +
                               std::to_string(fields.size()));
    row_fn(fields, line_no);
  }
  if (!saw_header) throw std::runtime_error(path + ": missing header '" + header + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// detections.csv: t,antenna_id,Z

inline std::vector<Detection> read_detections_csv(const std::string& path) {
  std::vector<Detection> records;
  detail::read_csv(path, "t,antenna_id,Z", 3, [&](const auto& fields, size_t line_no) {
    Detection d;
    d.t = detail::parse_double(fields[0], path, line_no, "t");
    d.antenna_id = detail::parse_int(fields[1], path, line_no, "antenna_id");
    d.z = detail::parse_double(fields[2], path, line_no, "Z");
    if (d.z != std::floor(d.z) || d.z < 0.0 || d.z > 255.0)
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": Z must be an integer in [0, 255], got " + std::string(fields[2]));
    records.push_back(d);
  });
  std::stable_sort(records.begin(), records.end(),
                   [](const Detection& a, const Detection& b) { return a.t < b.t; });
  for (size_t k = 1; k < records.size(); ++k)
    if (records[k].t == records[k - 1].t)
      throw std::runtime_error(path + ": duplicate timestamp " + format_double(records[k].t));
  return records;
}

inline void write_detections_csv(const std::string& path, const std::vector<Detection>& records) {
  std::ofstream out = detail::open_output(path);
  out << "t,antenna_id,Z\n";
  for (const Detection& d : records)
    out << format_double(d.t) << ',' << d.antenna_id << ',' << format_double(d.z) << '\n';
}

// ---------------------------------------------------------------------------
// truth.csv: t,px,vx,py,vy,pz

struct TruthFile {
  std::vector<double> times;
  std::vector<StateVector> states;
};

inline TruthFile read_truth_csv(const std::string& path) {
  TruthFile truth;
  detail::read_csv(path, "t,px,vx,py,vy,pz", 6, [&](const auto& fields, size_t line_no) {
    truth.times.push_back(detail::parse_double(fields[0], path, line_no, "t"));
    StateVector s;
    s.px = detail::parse_double(fields[1], path, line_no, "px");
    s.vx = detail::parse_double(fields[2], path, line_no, "vx");
    s.py = detail::parse_double(fields[3], path, line_no, "py");
    s.vy = detail::parse_double(fields[4], path, line_no, "vy");
    s.pz = detail::parse_double(fields[5], path, line_no, "pz");
    truth.states.push_back(s);
  });
  return truth;
}

inline void write_truth_csv(const std::string& path, const GroundTruth& truth) {
  std::ofstream out = detail::open_output(path);
  out << "t,px,vx,py,vy,pz\n";
  for (size_t k = 0; k < truth.states.size(); ++k) {
    const StateVector& s = truth.states[k];
    out << format_double(truth.detections[k].t) << ',' << format_double(s.px) << ','
        << format_double(s.vx) << ',' << format_double(s.py) << ',' << format_double(s.vy) << ','
        << format_double(s.pz) << '\n';
  }
}

// ---------------------------------------------------------------------------
// track.csv: t,px,vx,py,vy,pz,var_px,var_py,var_pz

inline void write_track_csv(const std::string& path, const std::vector<FilterBelief>& track) {
  std::ofstream out = detail::open_output(path);
  out << "t,px,vx,py,vy,pz,var_px,var_py,var_pz\n";
  for (const FilterBelief& b : track) {
    out << format_double(b.t) << ',' << format_double(b.mean.px) << ',' << format_double(b.mean.vx)
        << ',' << format_double(b.mean.py) << ',' << format_double(b.mean.vy) << ','
        << format_double(b.mean.pz) << ',' << format_double(b.cov(0, 0)) << ','
        << format_double(b.cov(2, 2)) << ',' << format_double(b.cov(4, 4)) << '\n';
  }
}

/// Reads a track back for evaluation.  Only the position variances are stored
/// in the file, so the returned covariances are diagonal reconstructions.
inline std::vector<FilterBelief> read_track_csv(const std::string& path) {
  std::vector<FilterBelief> track;
  detail::read_csv(path, "t,px,vx,py,vy,pz,var_px,var_py,var_pz", 9,
                   [&](const auto& fields, size_t line_no) {
                     FilterBelief b;
                     b.t = detail::parse_double(fields[0], path, line_no, "t");
                     b.mean.px = detail::parse_double(fields[1], path, line_no, "px");
                     b.mean.vx = detail::parse_double(fields[2], path, line_no, "vx");
                     b.mean.py = detail::parse_double(fields[3], path, line_no, "py");
                     b.mean.vy = detail::parse_double(fields[4], path, line_no, "vy");
                     b.mean.pz = detail::parse_double(fields[5], path, line_no, "pz");
                     b.cov = Mat5::Zero();
                     b.cov(0, 0) = detail::parse_double(fields[6], path, line_no, "var_px");
                     b.cov(2, 2) = detail::parse_double(fields[7], path, line_no, "var_py");
                     b.cov(4, 4) = detail::parse_double(fields[8], path, line_no, "var_pz");
                     track.push_back(b);
                   });
  return track;
}

// ---------------------------------------------------------------------------
// diag.csv: t,Ybar,F,v,gain_norm,saturated

inline void write_diag_csv(const std::string& path, const std::vector<StepDiagnostics>& diags) {
  std::ofstream out = detail::open_output(path);
  out << "t,Ybar,F,v,gain_norm,saturated\n";
  for (const StepDiagnostics& d : diags) {
    out << format_double(d.t) << ',' << format_double(d.y_pred_mean) << ','
        << format_double(d.y_pred_var) << ',' << format_double(d.innovation) << ','
        << format_double(d.gain_norm) << ',' << (d.saturated ? '1' : '0') << '\n';
  }
}

// ---------------------------------------------------------------------------
// trace.csv: iter,best_nll,phi_x,phi_y,phi_z

inline void write_trace_csv(const std::string& path, const OptimizationTrace& trace) {
  std::ofstream out = detail::open_output(path);
  out << "iter,best_nll,phi_x,phi_y,phi_z\n";
  for (const TracePoint& p : trace) {
    out << p.iteration << ',' << format_double(p.best_nll) << ',' << format_double(p.phi(0)) << ','
        << format_double(p.phi(1)) << ',' << format_double(p.phi(2)) << '\n';
  }
}

// ---------------------------------------------------------------------------
// JSON configuration files

inline json read_json_file(const std::string& path) {
  std::ifstream in = detail::open_input(path);
  json parsed;
  try {
    parsed = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return parsed;
}

inline void write_json_file(const std::string& path, const json& value) {
  std::ofstream out = detail::open_output(path);
  out << value.dump(2) << '\n';
}

namespace detail {

inline double require_number(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw std::runtime_error(where + ": missing key '" + key + "'");
  if (!obj[key].is_number()) throw std::runtime_error(where + ": key '" + key + "' must be a number");
  return obj[key].get<double>();
}

inline double number_or(const json& obj, const char* key, double fallback,
                        const std::string& where) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) throw std::runtime_error(where + ": key '" + key + "' must be a number");
  return obj[key].get<double>();
}

inline Eigen::Vector3d require_vec3(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_array() || obj[key].size() != 3)
    throw std::runtime_error(where + ": key '" + key + "' must be an array of 3 numbers");
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) {
    if (!obj[key][i].is_number())
      throw std::runtime_error(where + ": key '" + key + "' must be an array of 3 numbers");
    v(i) = obj[key][i].get<double>();
  }
  return v;
}

}  // namespace detail

inline std::vector<AntennaConfig> parse_towers(const json& parsed, const std::string& where) {
  if (!parsed.is_array()) throw std::runtime_error(where + ": tower file must be a JSON array");
  std::vector<AntennaConfig> towers;
  for (size_t i = 0; i < parsed.size(); ++i) {
    const json& t = parsed[i];
    const std::string ctx = where + ": tower " + std::to_string(i);
    if (!t.is_object()) throw std::runtime_error(ctx + ": must be an object");
    AntennaConfig antenna;
    if (!t.contains("id") || !t["id"].is_number_integer())
      throw std::runtime_error(ctx + ": missing integer key 'id'");
    antenna.id = t["id"].get<int>();
    antenna.position = Eigen::Vector3d(detail::require_number(t, "x", ctx),
                                       detail::require_number(t, "y", ctx),
                                       detail::require_number(t, "z", ctx));
    antenna.boresight_azimuth =
        detail::require_number(t, "boresight_azimuth_deg", ctx) * std::numbers::pi / 180.0;
    if (t.contains("pattern")) {
      const json& p = t["pattern"];
      antenna.pattern.A = detail::number_or(p, "A", antenna.pattern.A, ctx + ": pattern");
      antenna.pattern.p = detail::number_or(p, "p", antenna.pattern.p, ctx + ": pattern");
    }
    antenna.pattern.validate();
    towers.push_back(antenna);
  }
  if (towers.empty()) throw std::runtime_error(where + ": tower list is empty");
  for (size_t i = 0; i < towers.size(); ++i)
    for (size_t j = i + 1; j < towers.size(); ++j)
      if (towers[i].id == towers[j].id)
        throw std::runtime_error(where + ": duplicate tower id " + std::to_string(towers[i].id));
  return towers;
}

inline json towers_to_json(const std::vector<AntennaConfig>& towers) {
  json out = json::array();
  for (const AntennaConfig& t : towers) {
    out.push_back({{"id", t.id},
                   {"x", t.position(0)},
                   {"y", t.position(1)},
                   {"z", t.position(2)},
                   {"boresight_azimuth_deg", t.boresight_azimuth * 180.0 / std::numbers::pi},
                   {"pattern", {{"A", t.pattern.A}, {"p", t.pattern.p}}}});
  }
  return out;
}

/// Missing keys fall back to the built-in calibration defaults.
inline Calibration parse_calibration(const json& parsed, const std::string& where) {
  if (!parsed.is_object()) throw std::runtime_error(where + ": calibration must be a JSON object");
  Calibration cal;
  cal.b = detail::number_or(parsed, "b", cal.b, where);
  cal.P0 = detail::number_or(parsed, "P0", cal.P0, where);
  cal.Zm = detail::number_or(parsed, "Zm", cal.Zm, where);
  cal.ZM = detail::number_or(parsed, "ZM", cal.ZM, where);
  cal.validate();
  return cal;
}

inline json calibration_to_json(const Calibration& cal) {
  return {{"b", cal.b}, {"P0", cal.P0}, {"Zm", cal.Zm}, {"ZM", cal.ZM}};
}

inline json params_to_json(const MovementParams& p) {
  return {{"beta_x", p.beta_x},   {"beta_y", p.beta_y},   {"beta_z", p.beta_z},
          {"sigma_x", p.sigma_x}, {"sigma_y", p.sigma_y}, {"sigma_z", p.sigma_z}};
}

inline MovementParams parse_params(const json& obj, const std::string& where) {
  MovementParams p;
  p.beta_x = detail::require_number(obj, "beta_x", where);
  p.beta_y = detail::require_number(obj, "beta_y", where);
  p.beta_z = detail::require_number(obj, "beta_z", where);
  p.sigma_x = detail::number_or(obj, "sigma_x", p.sigma_x, where);
  p.sigma_y = detail::number_or(obj, "sigma_y", p.sigma_y, where);
  p.sigma_z = detail::number_or(obj, "sigma_z", p.sigma_z, where);
  p.validate();
  return p;
}

inline json state_to_json(const StateVector& s) {
  return {{"px", s.px}, {"vx", s.vx}, {"py", s.py}, {"vy", s.vy}, {"pz", s.pz}};
}

inline StateVector parse_state(const json& obj, const std::string& where) {
  StateVector s;
  s.px = detail::require_number(obj, "px", where);
  s.vx = detail::number_or(obj, "vx", 0.0, where);
  s.py = detail::require_number(obj, "py", where);
  s.vy = detail::number_or(obj, "vy", 0.0, where);
  s.pz = detail::require_number(obj, "pz", where);
  return s;
}

/// Scenario JSON.  Detection times come either from an explicit
/// "detection_times" array or from a "time_grid" {t0, dt, count, jitter}
/// object.  Towers and calibration may be embedded or supplied separately.
struct ScenarioFile {
  SimScenario scenario;
  bool has_towers = false;
  bool has_cal = false;
};

inline ScenarioFile parse_scenario(const json& parsed, const std::string& where) {
  if (!parsed.is_object()) throw std::runtime_error(where + ": scenario must be a JSON object");
  ScenarioFile file;
  SimScenario& sc = file.scenario;

  if (!parsed.contains("params")) throw std::runtime_error(where + ": missing key 'params'");
  sc.params = parse_params(parsed["params"], where + ": params");
  if (!parsed.contains("init_state"))
    throw std::runtime_error(where + ": missing key 'init_state'");
  sc.init_state = parse_state(parsed["init_state"], where + ": init_state");

  const bool has_times = parsed.contains("detection_times");
  const bool has_grid = parsed.contains("time_grid");
  if (has_times == has_grid)
    throw std::runtime_error(where + ": need exactly one of 'detection_times' or 'time_grid'");
  sc.seed = static_cast<std::uint64_t>(detail::number_or(parsed, "seed", 0.0, where));
  if (has_times) {
    if (!parsed["detection_times"].is_array())
      throw std::runtime_error(where + ": 'detection_times' must be an array");
    for (const json& t : parsed["detection_times"]) {
      if (!t.is_number()) throw std::runtime_error(where + ": detection times must be numbers");
      sc.detection_times.push_back(t.get<double>());
    }
  } else {
    const json& grid = parsed["time_grid"];
    const std::string ctx = where + ": time_grid";
    const double t0 = detail::number_or(grid, "t0", 0.0, ctx);
    const double dt = detail::require_number(grid, "dt", ctx);
    const double count = detail::require_number(grid, "count", ctx);
    const double jitter = detail::number_or(grid, "jitter", 0.0, ctx);
    if (count < 1.0 || count != std::floor(count))
      throw std::runtime_error(ctx + ": count must be a positive integer");
    sc.detection_times = jitter > 0.0
                             ? make_jittered_times(t0, dt, static_cast<size_t>(count), jitter, sc.seed)
                             : make_uniform_times(t0, dt, static_cast<size_t>(count));
  }

  if (parsed.contains("include_measurement_noise")) {
    if (!parsed["include_measurement_noise"].is_boolean())
      throw std::runtime_error(where + ": 'include_measurement_noise' must be a boolean");
    sc.include_measurement_noise = parsed["include_measurement_noise"].get<bool>();
  }
  if (parsed.contains("forced_antenna")) {
    if (!parsed["forced_antenna"].is_number_integer())
      throw std::runtime_error(where + ": 'forced_antenna' must be an integer antenna id");
    sc.forced_antenna = parsed["forced_antenna"].get<int>();
  }
  if (parsed.contains("towers")) {
    sc.towers = parse_towers(parsed["towers"], where);
    file.has_towers = true;
  }
  if (parsed.contains("cal")) {
    sc.cal = parse_calibration(parsed["cal"], where + ": cal");
    file.has_cal = true;
  }
  return file;
}

/// Optimizer configuration: {method, swarm_size, max_iters, inertia,
/// cognitive, social, seed, tol, init_phi or init_beta}; every key optional.
struct OptimizerSettings {
  OptimMethod method = OptimMethod::newton;
  NewtonConfig newton;
  PsoConfig pso;
};

inline OptimizerSettings parse_optimizer_settings(const json& parsed, const std::string& where) {
  if (!parsed.is_object()) throw std::runtime_error(where + ": config must be a JSON object");
  OptimizerSettings s;
  if (parsed.contains("method")) {
    if (!parsed["method"].is_string())
      throw std::runtime_error(where + ": 'method' must be a string");
    const std::string method = parsed["method"].get<std::string>();
    if (method == "newton") s.method = OptimMethod::newton;
    else if (method == "pso") s.method = OptimMethod::pso;
    else throw std::runtime_error(where + ": unknown method '" + method + "'");
  }
  s.pso.swarm_size =
      static_cast<int>(detail::number_or(parsed, "swarm_size", s.pso.swarm_size, where));
  const double max_iters = detail::number_or(parsed, "max_iters", -1.0, where);
  if (max_iters >= 0.0) {
    s.newton.max_iters = static_cast<int>(max_iters);
    s.pso.max_iters = static_cast<int>(max_iters);
  }
  s.pso.inertia = detail::number_or(parsed, "inertia", s.pso.inertia, where);
  s.pso.cognitive = detail::number_or(parsed, "cognitive", s.pso.cognitive, where);
  s.pso.social = detail::number_or(parsed, "social", s.pso.social, where);
  s.pso.seed = static_cast<std::uint64_t>(detail::number_or(parsed, "seed", 0.0, where));
  s.newton.tol = detail::number_or(parsed, "tol", s.newton.tol, where);
  if (parsed.contains("init_phi") && parsed.contains("init_beta"))
    throw std::runtime_error(where + ": give 'init_phi' or 'init_beta', not both");
  if (parsed.contains("init_phi")) {
    s.newton.init_phi = detail::require_vec3(parsed, "init_phi", where);
  } else if (parsed.contains("init_beta")) {
    const Eigen::Vector3d beta = detail::require_vec3(parsed, "init_beta", where);
    for (int i = 0; i < 3; ++i) {
      if (!(beta(i) > 0.0)) throw std::runtime_error(where + ": init_beta entries must be > 0");
      s.newton.init_phi(i) = std::log(beta(i));
    }
  }
  return s;
}

}  // namespace telemetrack
