#pragma once

#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "deqmcl/filters/model.hpp"
#include "deqmcl/metrics.hpp"
#include "deqmcl/worldsim.hpp"

namespace deqmcl {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class Method { deq_mcl, mcl_smoother, mcl_map_motion, mcl };

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> m{Method::deq_mcl, Method::mcl_smoother, Method::mcl_map_motion,
                                     Method::mcl};
  return m;
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::deq_mcl: return "deq-mcl";
    case Method::mcl_smoother: return "mcl-smoother";
    case Method::mcl_map_motion: return "mcl-map-motion";
    case Method::mcl: return "mcl";
  }
  return "?";
}

inline Method parse_method(const std::string& name) {
  for (auto m : all_methods())
    if (method_name(m) == name) return m;
  throw ConfigError("unknown method '" + name + "' (expected deq-mcl, mcl-smoother, "
                    "mcl-map-motion or mcl)");
}

/// Which belief is scored for each time index: the current estimate when it
/// is first formed, or the final estimate the filter holds for that time
/// (offset -L of a full queue, or the tail of the queue at the end of the run).
enum class Evaluation { current, lagged };

struct InitialBelief {
  enum class Kind { gaussian, uniform } kind = Kind::gaussian;
  double sigma_xy = 10.0;
  double sigma_theta = 0.2;
};

struct MetricsConfig {
  double entropy_cell = 5.0;
  int heading_bins = 36;
  Evaluation evaluation = Evaluation::lagged;
  ErrorAggregation aggregation = ErrorAggregation::mean_error;
};

struct OracleConfig {
  double cell = 1.0;
  int heading_bins = 4;
  std::size_t seeds = 20;
  double tv_threshold = 0.05;
  double init_sigma_xy = 1.0;
};

struct ExperimentConfig {
  std::filesystem::path config_dir;
  std::filesystem::path map_path;
  Pose start;
  std::vector<Point2> waypoints;
  std::vector<Action> explicit_actions;
  double v_step = 5.0;
  double omega_step = std::numbers::pi / 8.0;
  std::size_t n_trials = 10;
  std::uint64_t master_seed = 1;
  std::vector<Method> methods = all_methods();
  FilterConfig filter;
  std::map<Method, FilterConfig> per_method;
  NoiseParams noise{0.5, 0.05, 2.0};
  BeamConfig beams = BeamConfig::default_fan();
  InitialBelief init;
  MetricsConfig metrics;
  OracleConfig oracle;
  std::size_t cloud_every = 10;
  std::filesystem::path outputs = "out";

  const FilterConfig& filter_for(Method m) const {
    auto it = per_method.find(m);
    return it == per_method.end() ? filter : it->second;
  }

  void validate() const {
    if (n_trials < 1) throw ConfigError("n_trials must be >= 1");
    if (!std::filesystem::exists(map_path))
      throw ConfigError("map file does not exist: " + map_path.string());
    if (methods.empty()) throw ConfigError("no methods selected");
    if (beams.headings.empty()) throw ConfigError("sensor needs at least one beam");
    if (!(beams.max_range > 0.0) || !(beams.raycast_step > 0.0))
      throw ConfigError("sensor max_range and raycast_step must be positive");
    if (noise.sigma_v < 0.0 || noise.sigma_omega < 0.0 || noise.sigma_range < 0.0)
      throw ConfigError("noise parameters must be >= 0");
    try {
      filter.validate();
      for (const auto& [m, f] : per_method) f.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("filter config: ") + e.what());
    }
  }
};

namespace detail {

inline std::vector<double> parse_number_list(const std::string& text, char sep) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    const std::string tok = item.substr(b, e - b + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw ConfigError("not a number: '" + tok + "'");
    }
    if (used != tok.size()) throw ConfigError("not a number: '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

/// "x,y; x,y; ..." pairs.
inline std::vector<std::pair<double, double>> parse_pairs(const std::string& text) {
  std::vector<std::pair<double, double>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    const auto xy = parse_number_list(item, ',');
    if (xy.size() != 2) throw ConfigError("expected a pair, got '" + item + "'");
    out.emplace_back(xy[0], xy[1]);
  }
  return out;
}

inline const boost::property_tree::ptree* section(const boost::property_tree::ptree& root,
                                                  const std::string& name) {
  auto it = root.find(name);
  return it == root.not_found() ? nullptr : &it->second;
}

template <class T>
void read(const boost::property_tree::ptree* sec, const char* key, T& out) {
  if (sec == nullptr) return;
  auto v = sec->get_optional<std::string>(key);
  if (!v) return;
  try {
    out = boost::lexical_cast<T>(*v);
  } catch (const boost::bad_lexical_cast&) {
    throw ConfigError(std::string("bad value for '") + key + "': '" + *v + "'");
  }
}

inline void read_bool(const boost::property_tree::ptree* sec, const char* key, bool& out) {
  if (sec == nullptr) return;
  auto v = sec->get_optional<std::string>(key);
  if (!v) return;
  if (*v == "true" || *v == "1" || *v == "yes")
    out = true;
  else if (*v == "false" || *v == "0" || *v == "no")
    out = false;
  else
    throw ConfigError(std::string("bad boolean for '") + key + "': '" + *v + "'");
}

inline void read_filter(const boost::property_tree::ptree* sec, FilterConfig& f) {
  read(sec, "particles", f.n_particles);
  read(sec, "lag", f.lag);
  read(sec, "beta", f.beta);
  read(sec, "sigma_v", f.motion_noise.sigma_v);
  read(sec, "sigma_omega", f.motion_noise.sigma_omega);
  read(sec, "sensor_sigma", f.sensor_sigma);
  read(sec, "resample_threshold", f.resample_threshold);
  read(sec, "collision_step", f.collision_step);
  read_bool(sec, "replan_on_divergence", f.replan_on_divergence);
}

}  // namespace detail

/// Parses the INI-style experiment config. Relative paths resolve against
/// the config file's directory. Sections: [experiment] [start] [plan]
/// [noise] [sensor] [init] [metrics] [filter] [filter:<method>] [oracle].
inline ExperimentConfig parse_config(const std::string& text,
                                     const std::filesystem::path& base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree root;
  {
    std::istringstream in(text);
    try {
      pt::read_ini(in, root);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError(std::string("config syntax: ") + e.what());
    }
  }
  using detail::section;
  ExperimentConfig cfg;
  cfg.config_dir = base_dir;

  const auto* exp = section(root, "experiment");
  if (exp == nullptr) throw ConfigError("missing [experiment] section");
  std::string map_rel;
  detail::read(exp, "map", map_rel);
  if (map_rel.empty()) throw ConfigError("[experiment] map is required");
  cfg.map_path = base_dir / map_rel;
  detail::read(exp, "trials", cfg.n_trials);
  detail::read(exp, "seed", cfg.master_seed);
  detail::read(exp, "cloud_every", cfg.cloud_every);
  std::string out_rel;
  detail::read(exp, "outputs", out_rel);
  if (!out_rel.empty()) cfg.outputs = out_rel;
  std::string methods;
  detail::read(exp, "methods", methods);
  if (!methods.empty()) {
    cfg.methods.clear();
    std::stringstream ss(methods);
    std::string m;
    while (std::getline(ss, m, ',')) {
      const auto b = m.find_first_not_of(' ');
      const auto e = m.find_last_not_of(' ');
      if (b != std::string::npos) cfg.methods.push_back(parse_method(m.substr(b, e - b + 1)));
    }
  }

  const auto* start = section(root, "start");
  double sx = 0, sy = 0, sdeg = 0;
  detail::read(start, "x", sx);
  detail::read(start, "y", sy);
  detail::read(start, "theta_deg", sdeg);
  cfg.start = Pose(sx, sy, sdeg * std::numbers::pi / 180.0);

  const auto* plan = section(root, "plan");
  std::string wps, acts;
  detail::read(plan, "waypoints", wps);
  detail::read(plan, "actions", acts);
  for (auto [x, y] : detail::parse_pairs(wps)) cfg.waypoints.push_back({x, y});
  // Explicit actions are "v,omega_deg" pairs.
  for (auto [v, w] : detail::parse_pairs(acts))
    cfg.explicit_actions.push_back({v, w * std::numbers::pi / 180.0});
  detail::read(plan, "v_step", cfg.v_step);
  double omega_deg = cfg.omega_step * 180.0 / std::numbers::pi;
  detail::read(plan, "omega_step_deg", omega_deg);
  cfg.omega_step = omega_deg * std::numbers::pi / 180.0;

  const auto* noise = section(root, "noise");
  detail::read(noise, "sigma_v", cfg.noise.sigma_v);
  detail::read(noise, "sigma_omega", cfg.noise.sigma_omega);
  detail::read(noise, "sigma_range", cfg.noise.sigma_range);

  const auto* sensor = section(root, "sensor");
  std::string beams;
  detail::read(sensor, "beams_deg", beams);
  if (!beams.empty()) {
    cfg.beams.headings.clear();
    for (double d : detail::parse_number_list(beams, ','))
      cfg.beams.headings.push_back(d * std::numbers::pi / 180.0);
  }
  detail::read(sensor, "max_range", cfg.beams.max_range);
  detail::read(sensor, "raycast_step", cfg.beams.raycast_step);

  const auto* init = section(root, "init");
  std::string kind;
  detail::read(init, "kind", kind);
  if (kind == "uniform")
    cfg.init.kind = InitialBelief::Kind::uniform;
  else if (!kind.empty() && kind != "gaussian")
    throw ConfigError("init kind must be gaussian or uniform");
  detail::read(init, "sigma_xy", cfg.init.sigma_xy);
  detail::read(init, "sigma_theta", cfg.init.sigma_theta);

  const auto* metrics = section(root, "metrics");
  detail::read(metrics, "entropy_cell", cfg.metrics.entropy_cell);
  detail::read(metrics, "heading_bins", cfg.metrics.heading_bins);
  std::string eval, agg;
  detail::read(metrics, "evaluation", eval);
  if (eval == "current")
    cfg.metrics.evaluation = Evaluation::current;
  else if (!eval.empty() && eval != "lagged")
    throw ConfigError("metrics evaluation must be current or lagged");
  detail::read(metrics, "aggregation", agg);
  if (agg == "rms")
    cfg.metrics.aggregation = ErrorAggregation::root_mean_square;
  else if (!agg.empty() && agg != "mean")
    throw ConfigError("metrics aggregation must be mean or rms");

  detail::read_filter(section(root, "filter"), cfg.filter);
  for (auto m : all_methods()) {
    if (const auto* s = section(root, "filter:" + method_name(m))) {
      FilterConfig f = cfg.filter;
      detail::read_filter(s, f);
      cfg.per_method[m] = f;
    }
  }

  const auto* oracle = section(root, "oracle");
  detail::read(oracle, "cell", cfg.oracle.cell);
  detail::read(oracle, "heading_bins", cfg.oracle.heading_bins);
  detail::read(oracle, "seeds", cfg.oracle.seeds);
  detail::read(oracle, "tv_threshold", cfg.oracle.tv_threshold);
  detail::read(oracle, "init_sigma_xy", cfg.oracle.init_sigma_xy);

  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

}  // namespace deqmcl
