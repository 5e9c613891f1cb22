#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "deqmcl/harness/config.hpp"
#include "deqmcl/harness/render.hpp"
#include "deqmcl/harness/runner.hpp"
#include "deqmcl/harness/trace.hpp"

using namespace deqmcl;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("deqmcl_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

private:
  fs::path path_;
};

// Rectangular ring corridor 80 x 50 around a 40 x 20 block.
std::string ring_map() {
  OccupancyGrid g(80, 50, 1.0);
  g.fill_cells(0, 0, 80, 1);
  g.fill_cells(0, 49, 80, 50);
  g.fill_cells(0, 0, 1, 50);
  g.fill_cells(79, 0, 80, 50);
  g.fill_cells(20, 15, 60, 35);
  return to_map_text(g);
}

const char* kConfig = R"(# small ring
[experiment]
map = ring.txt
trials = 2
seed = 5
methods = deq-mcl, mcl-smoother, mcl-map-motion, mcl
cloud_every = 4

[start]
x = 40
y = 7.5
theta_deg = 0

[plan]
waypoints = 70,7.5; 70,42; 10,42; 10,7.5; 40,7.5
v_step = 4
omega_step_deg = 30

[noise]
sigma_v = 0.1
sigma_omega = 0.005
sigma_range = 1.0

[sensor]
beams_deg = -45, 0, 45
max_range = 30
raycast_step = 0.5

[init]
sigma_xy = 2
sigma_theta = 0.1

[filter]
particles = 100
lag = 3
beta = 10
sigma_v = 0.4
sigma_omega = 0.05
sensor_sigma = 2

[filter:mcl-smoother]
lag = 4
)";

ExperimentConfig write_setup(const fs::path& dir, const std::string& cfg_text = kConfig) {
  std::ofstream(dir / "ring.txt") << ring_map();
  std::ofstream(dir / "ring.cfg") << cfg_text;
  return load_config(dir / "ring.cfg");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, ParsesSectionsAndOverrides) {
  TempDir tmp;
  const auto cfg = write_setup(tmp.path());
  EXPECT_EQ(cfg.n_trials, 2u);
  EXPECT_EQ(cfg.master_seed, 5u);
  EXPECT_EQ(cfg.methods.size(), 4u);
  EXPECT_EQ(cfg.waypoints.size(), 5u);
  EXPECT_EQ(cfg.beams.headings.size(), 3u);
  EXPECT_EQ(cfg.filter.lag, 3u);
  EXPECT_EQ(cfg.filter_for(Method::mcl_smoother).lag, 4u);
  EXPECT_EQ(cfg.filter_for(Method::mcl_smoother).n_particles, 100u);
  EXPECT_EQ(cfg.filter_for(Method::deq_mcl).lag, 3u);
  EXPECT_EQ(cfg.map_path, tmp.path() / "ring.txt");
}

TEST(Config, Errors) {
  TempDir tmp;
  std::ofstream(tmp.path() / "ring.txt") << ring_map();
  auto bad = [&](const std::string& text) {
    EXPECT_THROW(parse_config(text, tmp.path()), ConfigError) << text;
  };
  bad("[start]\nx = 1\n");
  bad("[experiment]\nmap = missing.txt\n");
  bad("[experiment]\nmap = ring.txt\nmethods = mcl, kalman\n");
  bad("[experiment]\nmap = ring.txt\ntrials = 0\n");
  bad("[experiment]\nmap = ring.txt\n[filter]\nbeta = -1\n");
  bad("[experiment]\nmap = ring.txt\n[filter]\nparticles = many\n");
  bad("[experiment]\nmap = ring.txt\n[metrics]\nevaluation = sometimes\n");
}

TEST(Harness, TrialIsDeterministic) {
  TempDir tmp;
  const auto cfg = write_setup(tmp.path());
  const World world = build_world(cfg);
  for (auto m : all_methods()) {
    std::vector<std::string> a, b;
    const auto r1 = run_trial(cfg, world, m, 1, [&](const nlohmann::json& j) { a.push_back(j.dump()); });
    const auto r2 = run_trial(cfg, world, m, 1, [&](const nlohmann::json& j) { b.push_back(j.dump()); });
    EXPECT_EQ(a, b);
    EXPECT_EQ(r1.metrics.rmse, r2.metrics.rmse);
    EXPECT_FALSE(r1.failed) << r1.failure;
  }
}

TEST(Harness, MethodsShareTruth) {
  TempDir tmp;
  const auto cfg = write_setup(tmp.path());
  const World world = build_world(cfg);
  std::map<Method, std::vector<std::string>> truths;
  for (auto m : all_methods())
    run_trial(cfg, world, m, 0, [&](const nlohmann::json& j) {
      if (j["kind"] == "step") truths[m].push_back(j["truth"].dump());
    });
  for (auto m : all_methods()) {
    EXPECT_EQ(truths[m].size(), world.plan.horizon());
    EXPECT_EQ(truths[m], truths[Method::mcl]);
  }
  const auto g0 = simulate_truth(cfg, world, 0), g1 = simulate_truth(cfg, world, 1);
  EXPECT_NE(g0.poses.back(), g1.poses.back());
}

TEST(Harness, ExperimentOutputsAreConsistent) {
  TempDir tmp;
  const auto cfg = write_setup(tmp.path());
  const auto out = tmp.path() / "out";
  const auto res = run_experiment(cfg, out, 2, true);

  const std::string summary = slurp(out / "summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')),
            "method,rmse_mean,rmse_sd,entropy_mean,var_x,var_y,var_cos,var_sin");
  EXPECT_NE(slurp(out / "report.txt").find("not expected to match"), std::string::npos);

  for (const auto& tr : res.trials) {
    ASSERT_FALSE(tr.failed) << tr.failure;
    const auto records = read_trace((out / "traces" / trace_file_name(tr.method, tr.trial)).string());
    std::vector<double> errors;
    std::size_t steps = 0;
    for (const auto& j : records) {
      if (j["kind"] == "step") {
        ++steps;
        const auto rec = step_record_from(j);
        EXPECT_NEAR(pose_error(rec.current_mean, rec.truth), rec.e_t, 1e-9);
        if (rec.t % cfg.cloud_every == 0)
          EXPECT_FALSE(rec.clouds.empty());
        else
          EXPECT_TRUE(rec.clouds.empty());
      } else if (j["kind"] == "estimate") {
        errors.push_back(j["e"].get<double>());
        EXPECT_NEAR(pose_error(mean_from(j["mean"]), pose_from(j["truth"])), j["e"].get<double>(),
                    1e-9);
      }
    }
    EXPECT_EQ(steps, tr.metrics.errors.size());
    ASSERT_EQ(errors.size(), tr.metrics.errors.size());
    double mean = 0.0;
    for (double e : errors) mean += e / static_cast<double>(errors.size());
    EXPECT_NEAR(mean, tr.metrics.rmse, 1e-9);
  }

  // Summary rows are the trial aggregates.
  for (const auto& row : res.summary) {
    std::vector<double> rmse;
    double entropy = 0.0;
    for (const auto& tr : res.trials)
      if (tr.method == row.method) {
        rmse.push_back(tr.metrics.rmse);
        entropy += tr.metrics.entropy / 2.0;
      }
    EXPECT_NEAR(row.rmse_mean, mean_of(rmse), 1e-9);
    EXPECT_NEAR(row.rmse_sd, sample_sd(rmse), 1e-9);
    EXPECT_NEAR(row.entropy_mean, entropy, 1e-9);
  }
}

TEST(Harness, ParallelRunMatchesSerialRun) {
  TempDir tmp;
  const auto cfg = write_setup(tmp.path());
  run_experiment(cfg, tmp.path() / "a", 1, false);
  run_experiment(cfg, tmp.path() / "b", 3, false);
  EXPECT_EQ(slurp(tmp.path() / "a" / "summary.csv"), slurp(tmp.path() / "b" / "summary.csv"));
  EXPECT_EQ(slurp(tmp.path() / "a" / "trials.csv"), slurp(tmp.path() / "b" / "trials.csv"));
}

TEST(Harness, FiveStepSingleMethodRun) {
  TempDir tmp;
  std::string text = kConfig;
  text.replace(text.find("waypoints"), text.find("v_step") - text.find("waypoints"),
               "actions = 4,0; 4,0; 4,0; 4,0; 4,0\n");
  text.replace(text.find("trials = 2"), 10, "trials = 1");
  text.replace(text.find("methods = "), text.find("\n", text.find("methods = ")) - text.find("methods = "),
               "methods = mcl");
  const auto cfg = write_setup(tmp.path(), text);
  const auto res = run_experiment(cfg, tmp.path() / "out", 1, true);
  const std::string summary = slurp(tmp.path() / "out" / "summary.csv");
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 2);
  const auto records = read_trace((tmp.path() / "out" / "traces" / "mcl_trial0.ndjson").string());
  EXPECT_EQ(std::count_if(records.begin(), records.end(),
                          [](const nlohmann::json& j) { return j["kind"] == "step"; }),
            5);
}

TEST(Harness, LaggedEvaluationScoresEveryTimeOnce) {
  TempDir tmp;
  const auto cfg = write_setup(tmp.path());
  const World world = build_world(cfg);
  for (auto m : all_methods()) {
    std::vector<std::size_t> times;
    std::vector<int> offsets;
    run_trial(cfg, world, m, 0, [&](const nlohmann::json& j) {
      if (j["kind"] == "estimate") {
        times.push_back(j["t"].get<std::size_t>());
        offsets.push_back(j["offset"].get<int>());
      }
    });
    ASSERT_EQ(times.size(), world.plan.horizon());
    for (std::size_t k = 0; k < times.size(); ++k) EXPECT_EQ(times[k], k + 1);
    const int lag = static_cast<int>(cfg.filter_for(m).lag);
    if (m == Method::mcl || m == Method::mcl_map_motion)
      for (int o : offsets) EXPECT_EQ(o, 0);
    else
      EXPECT_EQ(offsets.front(), -lag);
  }
}

TEST(Harness, SignFlipPValue) {
  EXPECT_DOUBLE_EQ(paired_sign_flip_pvalue(std::vector<double>(10, 1.0)), 1.0 / 1024.0);
  EXPECT_DOUBLE_EQ(paired_sign_flip_pvalue({1.0, -1.0}), 0.75);
  EXPECT_DOUBLE_EQ(paired_sign_flip_pvalue({-1.0}), 1.0);
}

TEST(Render, ColorsPerOffsetAndErrors) {
  OccupancyGrid g(30, 20, 1.0);
  g.fill_cells(0, 0, 30, 1);
  StepRecord rec;
  rec.method = "deq-mcl";
  rec.t = 17;
  rec.truth = Pose(10, 10, 0);
  rec.clouds = {{-3, {{Pose(9, 10, 0), 0.5}}}, {0, {{Pose(10, 10, 0), 0.5}}},
                {3, {{Pose(12, 10, 0), 0.5}}}};
  const auto svg = render_snapshot(rec, g);
  EXPECT_NE(svg.find("#ff69b4"), std::string::npos);
  EXPECT_NE(svg.find("#ff8c00"), std::string::npos);
  EXPECT_NE(svg.find("#87cefa"), std::string::npos);
  EXPECT_NE(svg.find(">17</text>"), std::string::npos);
  EXPECT_NE(svg.find("fill=\"gray\""), std::string::npos);

  rec.clouds = {{0, {{Pose(10, 10, 0), 1.0}}}};
  const auto mcl_svg = render_snapshot(rec, g);
  EXPECT_EQ(mcl_svg.find("#ff69b4"), std::string::npos);
  EXPECT_EQ(mcl_svg.find("#87cefa"), std::string::npos);

  rec.clouds.clear();
  EXPECT_THROW(render_snapshot(rec, g), RenderError);
}
