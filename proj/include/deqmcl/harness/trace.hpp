#pragma once

#include <json.hpp>

#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "deqmcl/metrics.hpp"
#include "deqmcl/worldsim.hpp"

namespace deqmcl {

struct CloudPoint {
  Pose pose;
  double weight = 0.0;
};

struct OffsetCloud {
  int offset = 0;
  std::vector<CloudPoint> points;
};

/// Per filter step. Clouds are only stored every few steps.
struct StepRecord {
  std::string method;
  std::size_t trial = 0;
  std::size_t t = 0;
  Pose truth;
  PoseMean current_mean;
  double e_t = 0.0;
  double ess = 0.0;
  std::vector<OffsetCloud> clouds;
};

/// The scored estimate for one time index.
struct EstimateRecord {
  std::string method;
  std::size_t trial = 0;
  std::size_t t = 0;  // time index of the estimated state
  int offset = 0;     // offset it was read at
  Pose truth;
  PoseMean mean;
  double e = 0.0;
  double entropy = 0.0;
  PoseVariance variance;
};

inline nlohmann::json pose_json(const Pose& p) { return nlohmann::json::array({p.x, p.y, p.theta}); }
inline nlohmann::json mean_json(const PoseMean& m) {
  return nlohmann::json::array({m.x, m.y, m.c, m.s});
}

inline Pose pose_from(const nlohmann::json& j) {
  Pose p;
  p.x = j.at(0).get<double>();
  p.y = j.at(1).get<double>();
  p.theta = j.at(2).get<double>();
  return p;
}

inline PoseMean mean_from(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
          j.at(3).get<double>()};
}

inline nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json j;
  j["kind"] = "step";
  j["method"] = r.method;
  j["trial"] = r.trial;
  j["t"] = r.t;
  j["truth"] = pose_json(r.truth);
  j["current_mean"] = mean_json(r.current_mean);
  j["e_t"] = r.e_t;
  j["ess"] = r.ess;
  if (!r.clouds.empty()) {
    nlohmann::json clouds = nlohmann::json::array();
    for (const auto& c : r.clouds) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& p : c.points) pts.push_back({p.pose.x, p.pose.y, p.pose.theta, p.weight});
      clouds.push_back({{"offset", c.offset}, {"points", std::move(pts)}});
    }
    j["clouds"] = std::move(clouds);
  }
  return j;
}

inline nlohmann::json to_json(const EstimateRecord& r) {
  nlohmann::json j;
  j["kind"] = "estimate";
  j["method"] = r.method;
  j["trial"] = r.trial;
  j["t"] = r.t;
  j["offset"] = r.offset;
  j["truth"] = pose_json(r.truth);
  j["mean"] = mean_json(r.mean);
  j["e"] = r.e;
  j["entropy"] = r.entropy;
  j["variance"] = nlohmann::json::array({r.variance.x, r.variance.y, r.variance.c, r.variance.s});
  return j;
}

inline StepRecord step_record_from(const nlohmann::json& j) {
  StepRecord r;
  r.method = j.at("method").get<std::string>();
  r.trial = j.at("trial").get<std::size_t>();
  r.t = j.at("t").get<std::size_t>();
  r.truth = pose_from(j.at("truth"));
  r.current_mean = mean_from(j.at("current_mean"));
  r.e_t = j.at("e_t").get<double>();
  r.ess = j.at("ess").get<double>();
  if (j.contains("clouds")) {
    for (const auto& c : j.at("clouds")) {
      OffsetCloud oc;
      oc.offset = c.at("offset").get<int>();
      for (const auto& p : c.at("points")) {
        Pose pose;
        pose.x = p.at(0).get<double>();
        pose.y = p.at(1).get<double>();
        pose.theta = p.at(2).get<double>();
        oc.points.push_back({pose, p.at(3).get<double>()});
      }
      r.clouds.push_back(std::move(oc));
    }
  }
  return r;
}

/// Newline-delimited JSON, one record per line.
class TraceWriter {
public:
  explicit TraceWriter(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write trace " + path);
  }

  void write(const nlohmann::json& record) {
    out_ << record.dump() << '\n';
  }

  void flush() { out_.flush(); }

private:
  std::ofstream out_;
};

/// Reads every record of an NDJSON trace.
inline std::vector<nlohmann::json> read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace " + path);
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

}  // namespace deqmcl
