// Acceptance driver: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <boost/math/special_functions/beta.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "floodda/assimilation.hpp"
#include "floodda/cycling.hpp"
#include "floodda/experiment.hpp"
#include "floodda/metrics.hpp"
#include "floodda/random.hpp"

namespace fs = std::filesystem;
using namespace floodda;

namespace {

constexpr double kHour = 3600.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path cli;
  fs::path work;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

metrics::Series gauge_series(const obs::GaugeSeries& g) { return {g.times, g.wl}; }

std::vector<double> station_rmse(const std::vector<cycling::CycleResult>& cycles, const obs::Dataset& data) {
  std::vector<double> out;
  for (std::size_t s = 0; s < data.gauges.size(); ++s) {
    auto [t, v] = cycling::reanalysis_series(cycles, s);
    out.push_back(metrics::rmse({std::move(t), std::move(v)}, gauge_series(data.gauges[s])));
  }
  return out;
}

std::string join(const std::vector<double>& v, int prec = 3) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "/" : "") + fmt::format("{:.{}f}", v[i], prec);
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Twin used by the skill criteria: amplitude-only bias so that the inflow
// factor has a known target.
experiment::ExperimentConfig skill_twin() {
  experiment::ExperimentConfig cfg;
  cfg.bias.amplitude = 0.70;
  cfg.bias.shift = 0.0;
  cfg.members = 75;
  return cfg;
}

// ---- 1: gain formula ----
Outcome gain_anchor(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  struct Row {
    const char* name;
    std::vector<double> da, ol;
    double expected;
  };
  const std::vector<double> ol_v{0.106, 0.392, 0.536}, ol_c{1.209, 1.405, 1.598};
  const std::vector<Row> rows{{"IDA^V", {0.062, 0.071, 0.081}, ol_v, 69.43},
                              {"IGDA^V", {0.073, 0.074, 0.090}, ol_v, 65.15},
                              {"IDA^C", {0.160, 0.148, 0.130}, ol_c, 89.37},
                              {"IGDA^C", {0.166, 0.160, 0.141}, ol_c, 88.69}};
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    const double g = metrics::gain(r.da, r.ol);
    ok = ok && std::abs(g - r.expected) <= 0.01;
    detail += fmt::format("{}={:.4f} ", r.name, g);
  }
  const double dt = seconds_since(t0);
  ok = ok && dt < 1.0;
  return {ok, detail + fmt::format("(tol 0.01 pp, {:.4f} s < 1 s)", dt)};
}

// ---- 2: CSI ----
Outcome csi_anchor(const Context&) {
  GridHeader h;
  h.n_rows = 10;
  h.n_cols = 10;
  WetMask sim{h, std::vector<std::int8_t>(100, 0)};
  WetMask obs = sim;
  std::size_t p = 0;
  for (int i = 0; i < 23; ++i, ++p) sim.cells[p] = obs.cells[p] = 1;
  for (int i = 0; i < 5; ++i, ++p) sim.cells[p] = 1;
  for (int i = 0; i < 12; ++i, ++p) obs.cells[p] = 1;
  const auto m = metrics::contingency(sim, obs);
  const double c = metrics::csi(m).value;
  const double perfect = metrics::csi(metrics::contingency(obs, obs)).value;
  const bool counts = m.counts[metrics::TP] == 23 && m.counts[metrics::FP] == 5 &&
                      m.counts[metrics::FN] == 12 && m.counts[metrics::TN] == 60;
  return {counts && c == 57.5 && perfect == 100.0,
          fmt::format("TP/FP/FN/TN={}/{}/{}/{} CSI={} perfect={}", m.counts[metrics::TP],
                      m.counts[metrics::FP], m.counts[metrics::FN], m.counts[metrics::TN], c, perfect)};
}

// ---- 3: Kalman oracle ----
Outcome kalman_oracle(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t n = kControlSize, members = 1000, seeds = 100;

  ControlVector mean;
  mean.friction = FrictionField::uniform(40.0);
  mean.mu = 2.5;
  std::array<double, kControlSize> sd{};
  for (std::size_t j = 0; j < kFrictionCount; ++j) sd[j] = 5.0;
  sd[kFrictionCount] = 0.25;
  for (std::size_t j = kFrictionCount + 1; j < n; ++j) sd[j] = 0.3;
  const auto prior = assim::PriorSpec::around(mean, sd);

  // Linear operator on the controls; rows touch friction, inflow and stage.
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(4, n);
  H(0, 1) = 1.0;
  H(1, 2) = 0.5;
  H(1, 3) = 0.5;
  H(2, 0) = 0.2;
  H(2, 7) = 10.0;
  H(3, 8) = 1.0;
  H(3, 9) = -1.0;
  const Eigen::Vector4d sigma(3.0, 2.0, 1.0, 0.2);
  ControlVector truth = mean;
  truth.friction.ks[0] = 42.0;
  truth.friction.ks[1] = 45.0;
  truth.friction.ks[2] = 35.0;
  truth.friction.ks[3] = 38.0;
  truth.mu = 2.3;
  truth.delta_h[0] = 0.2;
  truth.delta_h[1] = -0.1;
  Eigen::VectorXd xt(n), m(n);
  for (std::size_t j = 0; j < n; ++j) {
    xt(j) = truth[j];
    m(j) = mean[j];
  }
  const Eigen::VectorXd yv = H * xt;
  obs::ObsVector y;
  for (int i = 0; i < 4; ++i) y.entries.push_back({obs::Kind::WL, i, 0.0, yv(i), sigma(i)});

  // Closed form.
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t j = 0; j < n; ++j) P(j, j) = sd[j] * sd[j];
  const Eigen::MatrixXd R = sigma.array().square().matrix().asDiagonal();
  const Eigen::MatrixXd S = H * P * H.transpose() + R;
  const Eigen::MatrixXd K = P * H.transpose() * S.inverse();
  const Eigen::VectorXd ma = m + K * (yv - H * m);
  const Eigen::MatrixXd Pa = (Eigen::MatrixXd::Identity(n, n) - K * H) * P;

  Eigen::MatrixXd means(n, seeds);
  Eigen::MatrixXd cov_sum = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto bg = assim::draw_ensemble(prior, members, 1000 + s);
    std::vector<obs::ObsVector> eq(members, y);
    for (std::size_t i = 0; i < members; ++i) {
      Eigen::VectorXd x(n);
      for (std::size_t j = 0; j < n; ++j) x(j) = bg[i][j];
      const Eigen::VectorXd hx = H * x;
      for (int k = 0; k < 4; ++k) eq[i].entries[k].value = hx(k);
    }
    const auto res = assim::analysis_update(bg, eq, y, false, 1000 + s);
    const Eigen::MatrixXd xa = assim::to_matrix(res.controls);  // n x members
    const Eigen::VectorXd mu = xa.rowwise().mean();
    means.col(static_cast<Eigen::Index>(s)) = mu;
    const Eigen::MatrixXd a = xa.colwise() - mu;
    cov_sum += a * a.transpose() / static_cast<double>(members - 1);
  }
  const Eigen::VectorXd grand = means.rowwise().mean();
  double worst = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto row = means.row(static_cast<Eigen::Index>(j)).array();
    const double var = (row - grand(j)).square().sum() / static_cast<double>(seeds - 1);
    const double se = std::sqrt(var / static_cast<double>(seeds));
    worst = std::max(worst, std::abs(grand(j) - ma(j)) / se);
  }
  const Eigen::MatrixXd Pbar = cov_sum / static_cast<double>(seeds);
  const double frob = (Pbar - Pa).norm() / Pa.norm();
  const double dt = seconds_since(t0);
  return {worst < 3.0 && frob < 0.2 && dt < 30.0,
          fmt::format("max |mean - posterior| = {:.2f} SE (< 3), cov rel. Frobenius = {:.4f} (< 0.2), "
                      "{:.1f} s (< 30 s)",
                      worst, frob, dt)};
}

// ---- 4: twin reanalysis skill ----
Outcome twin_skill(const Context&) {
  auto cfg = skill_twin();
  const auto model = experiment::build_model(cfg);
  const auto truth = experiment::make_truth(cfg, model);
  const auto& inputs = truth.inputs;

  cfg.mode = cycling::Mode::OL;
  const auto ol = experiment::run_chain(cfg, model, inputs, false);
  cfg.mode = cycling::Mode::IGDA;
  const auto t0 = std::chrono::steady_clock::now();
  const auto da = experiment::run_chain(cfg, model, inputs, false);
  const double dt = seconds_since(t0);

  const auto r_ol = station_rmse(ol.cycles, inputs.data);
  const auto r_da = station_rmse(da.cycles, inputs.data);
  bool rmse_ok = true;
  for (std::size_t s = 0; s < r_ol.size(); ++s) rmse_ok = rmse_ok && r_da[s] <= 0.4 * r_ol[s];

  // High flow: observed inflow averaged over the window at least half the peak.
  const double peak = inputs.observed.peak();
  double mu_sum = 0.0;
  std::size_t n_high = 0;
  for (const auto& cr : da.cycles) {
    const double q = inputs.observed.mean_over(cfg.schedule.window_start(cr.cycle), cr.t0);
    if (q < 0.5 * peak) continue;
    mu_sum += cr.stats[kFrictionCount].analysis_mean;
    ++n_high;
  }
  const double mu_bar = n_high ? mu_sum / static_cast<double>(n_high) : 0.0;
  const double target = 1.0 / 0.70;
  const bool mu_ok = n_high > 0 && std::abs(mu_bar - target) <= 0.15;
  const bool time_ok = dt < 300.0;
  return {rmse_ok && mu_ok && time_ok,
          fmt::format("RMSE IGDA {} vs OL {} m (<= 40%), gain {:.1f}%; mu {:.3f} over {} high-flow "
                      "cycles (target {:.3f} +- 0.15); N=75 chain {:.0f} s (< 300 s)",
                      join(r_da), join(r_ol), metrics::gain(r_da, r_ol), mu_bar, n_high, target, dt)};
}

// ---- 5: WSR benefit ----
Outcome wsr_benefit(const Context&) {
  auto cfg = skill_twin();
  const auto model = experiment::build_model(cfg);
  const auto truth = experiment::make_truth(cfg, model);
  const auto& inputs = truth.inputs;
  const std::size_t n_sub = model.n_subdomains();
  constexpr std::uint64_t kSeeds = 5;

  // err[mode][overpass][subdomain], summed over seeds.
  const auto passes = inputs.data.overpasses.times();
  std::map<cycling::Mode, std::vector<std::vector<double>>> err;
  for (auto mode : {cycling::Mode::IDA, cycling::Mode::IGDA})
    err[mode].assign(passes.size(), std::vector<double>(n_sub, 0.0));
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    for (auto mode : {cycling::Mode::IDA, cycling::Mode::IGDA}) {
      cfg.seed = seed;
      cfg.mode = mode;
      const auto chain = experiment::run_chain(cfg, model, inputs, false);
      for (std::size_t o = 0; o < passes.size(); ++o) {
        const cycling::OverpassSample* found = nullptr;
        for (const auto& cr : chain.cycles)
          for (const auto& op : cr.overpasses)
            if (!found && op.time == passes[o]) found = &op;
        if (!found) return {false, fmt::format("overpass {} h not in any reanalysis segment", passes[o] / kHour)};
        for (const auto& r : inputs.data.overpasses.records)
          if (r.time == passes[o])
            err[mode][o][static_cast<std::size_t>(r.subdomain - 1)] +=
                std::abs(found->wsr[static_cast<std::size_t>(r.subdomain - 1)] - r.wsr) / kSeeds;
      }
    }
  }
  bool ok = true;
  std::string detail;
  for (std::size_t o = 0; o < passes.size(); ++o) {
    std::size_t wins = 0;
    for (std::size_t k = 0; k < n_sub; ++k)
      wins += err[cycling::Mode::IGDA][o][k] <= err[cycling::Mode::IDA][o][k];
    ok = ok && wins >= 4;
    detail += fmt::format("{}h:{}/5 (IGDA {} IDA {}) ", passes[o] / kHour, wins,
                          join(err[cycling::Mode::IGDA][o]), join(err[cycling::Mode::IDA][o]));
  }
  return {ok, detail + "(need >= 4/5 at every overpass, 5 seeds)"};
}

// ---- 6: lead-time degradation ----
Outcome leadtime(const Context&) {
  experiment::ExperimentConfig cfg;
  cfg.forcing_source = 'V';
  const auto model = experiment::build_model(cfg);
  const auto truth = experiment::make_truth(cfg, model);
  const auto& inputs = truth.inputs;
  auto settings = cfg.settings();
  const auto& sched = settings.schedule;
  // Issues whose +36 h valid times stay before the observed peak.
  const std::vector<double> issues{21 * kHour, 27 * kHour, 33 * kHour};

  std::map<forcing::Strategy, std::vector<cycling::ForecastResult>> fc;
  auto state = cycling::cold_start(model, settings, inputs.observed);
  for (std::size_t c = 0; c < issues.size(); ++c) {
    const auto cr = cycling::run_reanalysis_cycle(c, state, model, inputs.data, inputs.observed, settings);
    for (auto s : {forcing::Strategy::VQ, forcing::Strategy::VC}) {
      const auto ff = forcing::select_forcing(s, forcing::Phase::Forecast, inputs.observed, inputs.biased,
                                              cr.t0, cr.t0 + sched.forecast_horizon);
      fc[s].push_back(cycling::run_forecast_cycle(cr, model, inputs.data, inputs.observed, ff, settings));
    }
  }
  const double last_valid = issues.back() + 36 * kHour;
  if (last_valid >= inputs.observed.peak_time())
    return {false, "valid times reach past the observed peak"};

  auto score = [&](forcing::Strategy s, double lead) {
    std::vector<double> out;
    for (std::size_t st = 0; st < inputs.data.gauges.size(); ++st) {
      const auto ls = cycling::extract_leadtime_series(fc[s], lead, st, sched.forecast_horizon);
      out.push_back(metrics::rmse({ls.valid_times, ls.values}, gauge_series(inputs.data.gauges[st])));
    }
    return out;
  };
  const auto vq6 = score(forcing::Strategy::VQ, 6 * kHour);
  const auto vq36 = score(forcing::Strategy::VQ, 36 * kHour);
  const auto vc36 = score(forcing::Strategy::VC, 36 * kHour);
  bool ok = true;
  for (std::size_t s = 0; s < vq6.size(); ++s) ok = ok && vq36[s] > vq6[s] && vc36[s] <= vq36[s];
  return {ok, fmt::format("VQ +6h {} m, VQ +36h {} m, VC +36h {} m (issues 21/27/33 h)", join(vq6),
                          join(vq36), join(vc36))};
}

// ---- 7: conservation ----
Outcome conservation(const Context&) {
  experiment::ExperimentConfig cfg;
  cfg.model.downstream = hydro::DownstreamBoundary::Closed;
  const auto closed = experiment::build_model(cfg);
  const auto friction = cfg.truth.friction;
  auto st = closed.initial_state(1500.0, friction, 0.0, 0.0);
  // Floodplain above its crest so the weirs exchange in both directions.
  for (std::size_t k = 0; k < closed.n_subdomains(); ++k)
    st.stage[k] = closed.subdomains()[k].crest + (k % 2 ? 1.0 : -0.5);
  double drift = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double v0 = closed.total_volume(st);
    st = closed.step(st, 60.0, 0.0, friction).state;
    drift = std::max(drift, std::abs(closed.total_volume(st) - v0) / v0);
  }

  experiment::ExperimentConfig ev;
  const auto model = experiment::build_model(ev);
  const auto q = experiment::observed_hydrograph(ev);
  const auto init = model.initial_state(q.at(q.start()), ev.truth.friction, q.start());
  const auto tr = model.run(init, ev.truth, q, q.start(), q.end());
  const double dv = model.total_volume(tr.final_state()) - model.total_volume(init);
  const double balance = std::abs(dv - (tr.inflow_volume - tr.outflow_volume)) / tr.inflow_volume;
  return {drift < 1e-8 && balance < 1e-6,
          fmt::format("closed-domain drift {:.2e} per step (< 1e-8), event balance {:.2e} (< 1e-6)", drift,
                      balance)};
}

// ---- 8: anamorphosis ----
Outcome anamorphosis(const Context&) {
  constexpr std::size_t n = 75;
  const random::Stream u({8, random::Purpose::Test, 8, 0});
  Eigen::MatrixXd values(1, n);
  for (std::size_t i = 0; i < n; ++i)
    values(0, static_cast<Eigen::Index>(i)) = boost::math::ibeta_inv(2.0, 5.0, u.uniform(i));
  const auto an = assim::Anamorphosis::build(values, {true});
  const auto& comp = an.component(0);
  double round_trip = 0.0;
  for (std::size_t k = 0; k < comp.knots.size(); ++k) {
    round_trip = std::max(round_trip, std::abs(an.inverse(0, an.forward(0, comp.knots[k])) - comp.knots[k]));
    round_trip = std::max(round_trip, std::abs(an.forward(0, comp.knots[k]) - comp.images[k]));
  }
  const Eigen::RowVectorXd z = an.forward(values).row(0);
  const double mean = z.mean();
  const double var = (z.array() - mean).square().sum() / static_cast<double>(n - 1);
  return {!comp.degenerate && round_trip < 1e-9 && std::abs(mean) < 0.2 && var > 0.6 && var < 1.4,
          fmt::format("Beta(2,5) N=75: round trip {:.1e} (< 1e-9), mean {:.4f} (|.| < 0.2), variance {:.4f} "
                      "(0.6..1.4)",
                      round_trip, mean, var)};
}

// ---- 9: continuity and determinism ----
int run_cli(const Context& ctx, const std::string& args) {
  const std::string cmd = fmt::format("\"{}\" {} > \"{}\" 2>&1", ctx.cli.string(), args,
                                      (ctx.work / "cli.log").string());
  return std::system(cmd.c_str());
}

Outcome continuity(const Context& ctx) {
  // In memory: every cycle starts from the exact states its predecessor handed over.
  experiment::ExperimentConfig cfg;
  cfg.members = 8;
  cfg.schedule.n_cycles = 4;
  const auto model = experiment::build_model(cfg);
  const auto truth = experiment::make_truth(cfg, model);
  const auto chain = experiment::run_chain(cfg, model, truth.inputs, false);
  bool handoff = true, gapless = true;
  for (std::size_t c = 0; c + 1 < chain.cycles.size(); ++c) {
    const auto& a = chain.cycles[c];
    const auto& b = chain.cycles[c + 1];
    handoff = handoff && a.restart == b.initial && !a.restart.empty() &&
              a.restart.front().time == cfg.schedule.restart_time(c);
    gapless = gapless && a.segment.back().time == b.segment.front().time;
  }
  const auto [times, wl] = cycling::reanalysis_series(chain.cycles, 1);
  const double step = model.params().output_interval;
  for (std::size_t i = 1; i < times.size(); ++i) gapless = gapless && times[i] - times[i - 1] == step;
  gapless = gapless && times.front() == cfg.schedule.window_start(0) &&
            times.back() == cfg.schedule.segment_end(cfg.schedule.n_cycles - 1);

  // Through the CLI: a forecast run with one and eight threads.
  const fs::path dir = ctx.work / "criterion_9";
  fs::remove_all(dir);
  fs::create_directories(dir);
  if (run_cli(ctx, "init \"" + dir.string() + "\"") != 0) return {false, "floodda init failed"};
  auto j = nlohmann::json::parse(slurp(dir / "config.json"));
  j["output_dir"] = "truth";
  j["ensemble"]["members"] = 20;
  j["forecast"]["issue_times_h"] = {69};
  std::ofstream(dir / "config.json") << j.dump(2) << "\n";
  const std::string config = "--config \"" + (dir / "config.json").string() + "\"";
  if (run_cli(ctx, "truth " + config) != 0) return {false, "floodda truth failed"};
  for (int threads : {1, 8})
    if (run_cli(ctx, fmt::format("forecast {} --strategy CC --threads {} --out \"{}\"", config, threads,
                                 (dir / fmt::format("t{}", threads)).string())) != 0)
      return {false, fmt::format("floodda forecast --threads {} failed", threads)};
  const auto s1 = slurp(dir / "t1" / "scores.json");
  const auto s8 = slurp(dir / "t8" / "scores.json");
  const bool identical = !s1.empty() && s1 == s8;
  return {handoff && gapless && identical,
          fmt::format("exact hand-off {}, gapless segments {} ({} samples), scores.json threads 1 vs 8 "
                      "byte-identical {} ({} bytes)",
                      handoff, gapless, times.size(), identical, s1.size())};
}

const std::map<int, std::pair<std::string, std::function<Outcome(const Context&)>>>& criteria() {
  static const std::map<int, std::pair<std::string, std::function<Outcome(const Context&)>>> table{
      {1, {"gain formula", gain_anchor}},
      {2, {"CSI", csi_anchor}},
      {3, {"Kalman oracle", kalman_oracle}},
      {4, {"twin reanalysis skill", twin_skill}},
      {5, {"WSR benefit", wsr_benefit}},
      {6, {"lead-time degradation", leadtime}},
      {7, {"conservation", conservation}},
      {8, {"anamorphosis", anamorphosis}},
      {9, {"continuity and determinism", continuity}},
  };
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"floodda acceptance criteria"};
  std::vector<int> selected;
  Context ctx;
  std::string cli, work = "acceptance_work";
  app.add_option("--criterion", selected, "Criterion number (repeatable; default all)")
      ->check(CLI::Range(1, 9));
  app.add_option("--cli", cli, "Path to the floodda executable");
  app.add_option("--work", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty())
    for (const auto& [k, v] : criteria()) selected.push_back(k);
  ctx.cli = cli.empty() ? fs::path("floodda") : fs::absolute(cli);
  ctx.work = fs::absolute(work);
  fs::create_directories(ctx.work);
  spdlog::set_level(spdlog::level::warn);

  int failures = 0;
  for (int k : selected) {
    const auto& [name, fn] = criteria().at(k);
    Outcome o;
    try {
      o = fn(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << fmt::format("criterion {} {} {}: {}", k, o.pass ? "PASS" : "FAIL", name, o.detail)
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
