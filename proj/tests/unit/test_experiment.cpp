#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include <json.hpp>

#include "floodda/csv.hpp"
#include "floodda/error.hpp"
#include "floodda/experiment.hpp"
#include "floodda/metrics.hpp"

#include "test_util.hpp"

using namespace floodda;
using namespace floodda::experiment;
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

int cli(const std::string& args) {
  const std::string cmd = std::string(FLOODDA_CLI) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// Small but complete twin: 2 cycles, 6 members, truth under truth/.
struct Workspace {
  test::TempDir dir;
  json base;

  Workspace() {
    cmd_init(dir.path);
    base = json::parse(slurp(dir.path / "config.json"));
    base["schedule"]["n_cycles"] = 2;
    base["ensemble"]["members"] = 6;
    base["output_dir"] = "truth";
  }

  fs::path config(const std::string& name, const std::function<void(json&)>& edit = {}) const {
    json j = base;
    if (edit) edit(j);
    const auto p = dir.path / name;
    dump(p, j);
    return p;
  }
};

}  // namespace

TEST(Config, ExampleParsesToDefaults) {
  const test::TempDir d;
  cmd_init(d.path);
  const auto cfg = load_config(d.path / "config.json");
  EXPECT_EQ(cfg.members, 75u);
  EXPECT_EQ(cfg.mode, cycling::Mode::IGDA);
  EXPECT_EQ(cfg.forcing_source, 'C');
  EXPECT_FALSE(cfg.strategy);
  EXPECT_EQ(cfg.leads, (std::vector<double>{0, 6 * 3600., 12 * 3600., 18 * 3600., 24 * 3600., 30 * 3600., 36 * 3600.}));
  EXPECT_EQ(cfg.dem_paths.size(), 5u);
  EXPECT_EQ(cfg.dem_paths[2], d.path / "dems/sub3.asc");
  EXPECT_DOUBLE_EQ(cfg.schedule.window_length, 18 * 3600.0);
  EXPECT_DOUBLE_EQ(cfg.schedule.spin_up, 3 * 3600.0);
  EXPECT_DOUBLE_EQ(cfg.event.peak, 5100.0);
  EXPECT_EQ(experiment_name(cfg), "IGDA^C");
}

TEST(Config, Diagnostics) {
  const test::TempDir d;
  cmd_init(d.path);
  const auto text = slurp(d.path / "config.json");
  auto j = json::parse(text);

  auto expect_error = [&](const json& doc, const std::string& needle) {
    try {
      parse_config(doc.dump(2), d.path);
      ADD_FAILURE() << "expected ConfigError containing " << needle;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };

  auto k = j;
  k["subdomains"][2]["dem"] = "dems/missing.asc";
  expect_error(k, "subdomains[2].dem");
  k = j;
  k["ensemble"]["memberz"] = 3;
  expect_error(k, "ensemble.memberz");
  k = j;
  k["schema_version"] = 2;
  expect_error(k, "schema_version");
  k = j;
  k["mode"] = "EnKF";
  expect_error(k, "EnKF");
  k = j;
  k["forcing_source"] = "C";
  k["forecast_strategy"] = "VQ";
  expect_error(k, "requires forcing source V");
  k = j;
  k["truth"]["ks"] = {1, 2};
  expect_error(k, "truth.ks");
  k = j;
  k["schedule"]["window_h"] = "long";
  expect_error(k, "schedule.window_h");

  try {
    parse_config("{\n  \"seed\": 1,\n  oops\n}", d.path, "cfg.json");
    ADD_FAILURE();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg.json:3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_config(d.path / "absent.json"), ConfigError);
}

TEST(Cli, TruthIsDeterministicAndMatchesPeak) {
  const Workspace w;
  const auto cfg = w.config("a.json");
  ASSERT_EQ(cli("truth --config " + cfg.string()), 0);
  const auto first = slurp(w.dir.path / "truth/obs/gauge_middle.csv");
  const auto controls = slurp(w.dir.path / "truth/truth_controls.json");
  ASSERT_EQ(cli("truth --config " + cfg.string()), 0);
  EXPECT_EQ(slurp(w.dir.path / "truth/obs/gauge_middle.csv"), first);
  EXPECT_EQ(slurp(w.dir.path / "truth/truth_controls.json"), controls);
  const auto rec = json::parse(controls);
  EXPECT_DOUBLE_EQ(rec["observed_peak_m3s"].get<double>(), 5100.0);
  const auto q = forcing::read_hydrograph_csv(w.dir.path / "truth/forcing/observed.csv");
  EXPECT_DOUBLE_EQ(q.peak(), 5100.0);
}

TEST(Cli, ExitCodes) {
  const Workspace w;
  EXPECT_EQ(cli("run --config " + (w.dir.path / "nope.json").string()), 2);
  const auto bad = w.config("bad.json", [](json& j) { j["subdomains"][0]["dem"] = "none.asc"; });
  EXPECT_EQ(cli("truth --config " + bad.string()), 2);
  // No truth has been generated yet.
  const auto run = w.config("run.json", [](json& j) { j["output_dir"] = "runs/x"; });
  EXPECT_EQ(cli("run --config " + run.string()), 4);
  EXPECT_EQ(cli("metrics " + w.dir.path.string()), 4);
  EXPECT_NE(cli("bogus"), 0);
}

TEST(Cli, RunsForecastsAndMetrics) {
  const Workspace w;
  ASSERT_EQ(cli("truth --config " + w.config("t.json").string()), 0);
  const auto cfg = w.config("run.json", [](json& j) {
    j["output_dir"] = "runs/a";
    j["forecast"]["issue_times_h"] = {27};
  });
  const auto runs = w.dir.path / "runs";
  ASSERT_EQ(cli("run --config " + cfg.string() + " --mode OL --out " + (runs / "ol").string()), 0);
  ASSERT_EQ(cli("run --config " + cfg.string() + " --mode IDA --out " + (runs / "ida").string()), 0);
  ASSERT_EQ(cli("run --config " + cfg.string() + " --out " + (runs / "igda").string() + " --threads 3"), 0);
  ASSERT_EQ(cli("forecast --config " + cfg.string() + " --strategy VQ --out " + (runs / "vq").string()), 0);
  ASSERT_EQ(cli("forecast --config " + cfg.string() + " --strategy VC --out " + (runs / "vc").string()), 0);
  ASSERT_EQ(cli("forecast --config " + cfg.string() + " --strategy CC --out " + (runs / "cc").string()), 0);

  // Open loop: analysis diagnostics are the prior means.
  const auto an = csv::read(runs / "ol/cycles/c0001/analysis.csv");
  const auto means = an.numbers("analysis_mean");
  const auto prior = assim::default_prior();
  for (std::size_t j = 0; j < kControlSize; ++j) EXPECT_DOUBLE_EQ(means[j], prior.elements[j].mean);

  // VQ forecast forcing is constant after the issue time.
  const auto vq = csv::read(runs / "vq/forecasts/issue_97200/forcing.csv");
  const auto t = vq.numbers("time_s");
  const auto q = vq.numbers("q_m3s");
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] >= 97200.0) EXPECT_DOUBLE_EQ(q[i], q.back());

  // CC and VC share the forecast forcing; they differ before the issue time only.
  const auto fcc = csv::read(runs / "cc/forecasts/issue_97200/forcing.csv");
  const auto fvc = csv::read(runs / "vc/forecasts/issue_97200/forcing.csv");
  EXPECT_EQ(fcc.rows, fvc.rows);
  EXPECT_NE(slurp(runs / "cc/reanalysis/wl_middle.csv"), slurp(runs / "vc/reanalysis/wl_middle.csv"));

  // Metrics over all runs: one row per experiment, gain consistent with RMSE columns.
  const auto out = w.dir.path / "scores";
  const std::string dirs = (runs / "ol").string() + " " + (runs / "ida").string() + " " +
                           (runs / "igda").string() + " " + (runs / "vq").string() + " " +
                           (runs / "vc").string() + " " + (runs / "cc").string();
  ASSERT_EQ(cli("metrics " + dirs + " --out " + out.string()), 0);
  const auto first = slurp(out / "scores.json");
  ASSERT_EQ(cli("metrics " + dirs + " --out " + out.string()), 0);
  EXPECT_EQ(slurp(out / "scores.json"), first);

  const auto table = csv::read(out / "table.csv");
  ASSERT_EQ(table.rows.size(), 6u);
  const auto names = table.strings("experiment");
  EXPECT_EQ(names, (std::vector<std::string>{"IDA^C", "IGDA^C", "IGDA^C/CC", "IGDA^V/VC", "IGDA^V/VQ", "OL^C"}));
  const auto ol_row = table.rows.back();
  for (std::size_t r = 0; r < 2; ++r) {
    std::vector<double> da, ol;
    for (std::size_t c = 1; c <= 3; ++c) {
      da.push_back(std::stod(table.rows[r][c]));
      ol.push_back(std::stod(ol_row[c]));
    }
    EXPECT_NEAR(std::stod(table.rows[r][4]), metrics::gain(da, ol), 1e-12);
  }
  const auto scores = json::parse(first);
  EXPECT_EQ(scores["schema"], "floodda.scores/1");
  const auto& vqe = scores["experiments"][4];
  EXPECT_EQ(vqe["name"], "IGDA^V/VQ");
  EXPECT_EQ(vqe["leadtime_rmse_m"]["middle"].size(), 7u);
  EXPECT_TRUE(vqe["leadtime_rmse_m"]["middle"].contains("36"));

  // Metrics read nothing outside the run directory.
  fs::rename(w.dir.path / "truth", w.dir.path / "truth_moved");
  ASSERT_EQ(cli("metrics " + dirs + " --out " + (w.dir.path / "scores2").string()), 0);
  EXPECT_EQ(slurp(w.dir.path / "scores2/scores.json"), first);

  // IDA and IGDA differ only in the WSR entries.
  const auto ida = json::parse(slurp(runs / "ida/run_info.json"));
  const auto igda = json::parse(slurp(runs / "igda/run_info.json"));
  for (std::size_t c = 0; c < 2; ++c)
    EXPECT_EQ(ida["n_obs_per_cycle"][c]["n_obs"].get<int>(),
              igda["n_obs_per_cycle"][c]["n_obs"].get<int>() - igda["n_obs_per_cycle"][c]["n_wsr"].get<int>());
}
