#include <cmath>

#include <gtest/gtest.h>

#include "floodda/error.hpp"
#include "floodda/observations.hpp"
#include "floodda/scenario.hpp"

#include "test_util.hpp"

using namespace floodda;
using namespace floodda::obs;

namespace {

constexpr double kH = 3600.0;

struct Twin {
  hydro::HydroModel model = scenario::default_model();
  hydro::Trajectory truth;
  std::vector<double> passes{54 * kH, 78 * kH};

  Twin() {
    const auto q = forcing::synth_event_hydrograph({});
    ControlVector c;
    hydro::RunOptions ro;
    ro.extra_instants = passes;
    truth = model.run(model.initial_state(q.at(0), c.friction, 0.0), c, q, 0.0, 96 * kH, ro);
  }

  Dataset synth(const ObsErrorModel& e, std::uint64_t seed, double hwm_var = 0.1) const {
    SynthesisOptions so;
    so.overpass_times = passes;
    so.hwm_variance = hwm_var;
    return synthesize_truth_obs(model, truth, e, so, seed);
  }
};

const Twin& twin() {
  static const Twin t;
  return t;
}

}  // namespace

TEST(Synthesis, ZeroNoiseReproducesTruth) {
  const auto& t = twin();
  ObsErrorModel e;
  e.sigma_wl_base = 0.0;
  e.sigma_wsr_base = 0.0;
  const auto d = t.synth(e, 1, 0.0);
  ASSERT_EQ(d.gauges.size(), 3u);
  const auto& g = d.gauges[1];
  ASSERT_EQ(g.times.size(), 96u * 4u + 1u);
  for (std::size_t i = 0; i < g.times.size(); ++i)
    EXPECT_DOUBLE_EQ(g.wl[i], t.model.water_level_at(t.truth.at(g.times[i]), "middle"));
  ASSERT_EQ(d.overpasses.records.size(), 10u);
  for (const auto& r : d.overpasses.records)
    EXPECT_DOUBLE_EQ(r.wsr, t.model.wsr(t.truth.at(r.time), static_cast<std::size_t>(r.subdomain - 1)));
  const auto mx = simulated_maxima(t.model, t.truth, d.hwm);
  for (std::size_t i = 0; i < mx.size(); ++i) EXPECT_DOUBLE_EQ(d.hwm.points[i].wl_max, mx[i]);
}

TEST(Synthesis, NoiseLevelMatchesSigma) {
  const auto& t = twin();
  ObsErrorModel e;
  e.sigma_wl_base = 0.05;
  const auto d = t.synth(e, 7);
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t s = 0; s < d.gauges.size(); ++s) {
    const auto& g = d.gauges[s];
    for (std::size_t i = 0; i < g.times.size(); ++i) {
      const double r = g.wl[i] - t.model.water_level_at(t.truth.at(g.times[i]), g.station);
      ss += r * r;
      ++n;
    }
  }
  ASSERT_GE(n, 1000u);
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(n)), 0.05, 0.005);
}

TEST(Synthesis, SameSeedSameDataset) {
  const auto& t = twin();
  const ObsErrorModel e;
  const auto a = t.synth(e, 3);
  const auto b = t.synth(e, 3);
  const auto c = t.synth(e, 4);
  EXPECT_EQ(a.gauges[0].wl, b.gauges[0].wl);
  EXPECT_EQ(a.overpasses.records.size(), b.overpasses.records.size());
  for (std::size_t i = 0; i < a.overpasses.records.size(); ++i)
    EXPECT_EQ(a.overpasses.records[i].wsr, b.overpasses.records[i].wsr);
  EXPECT_NE(a.gauges[0].wl, c.gauges[0].wl);
}

TEST(Synthesis, HwmLayout) {
  const auto& t = twin();
  const auto d = t.synth(ObsErrorModel{}, 1);
  ASSERT_EQ(d.hwm.points.size(), 178u);
  EXPECT_EQ(d.hwm.points[0].kind, "station");
  EXPECT_EQ(d.hwm.points[3].kind, "subdomain");
  EXPECT_EQ(d.hwm.points[3].location, 1);
  EXPECT_EQ(d.hwm.points[8].kind, "cell");
  for (const auto& p : d.hwm.points) EXPECT_TRUE(std::isfinite(p.wl_max));
}

TEST(SigmaLaw, Endpoints) {
  EXPECT_DOUBLE_EQ(sigma_at(0.05, 100.0, 100.0, 50.0, 1.0), 0.05);
  EXPECT_DOUBLE_EQ(sigma_at(0.05, 50.0, 100.0, 50.0, 1.0), 0.10);
  EXPECT_DOUBLE_EQ(sigma_at(0.05, 60.0, 100.0, 50.0, 0.0), 0.05);
  EXPECT_ANY_THROW(sigma_at(0.05, 10.0, 100.0, 50.0, 1.0));
  EXPECT_ANY_THROW(sigma_at(0.05, 101.0, 100.0, 50.0, 1.0));
}

TEST(WindowSlice, CountsAndOrder) {
  const auto& t = twin();
  const ObsErrorModel e;
  const auto d = t.synth(e, 1);
  EXPECT_TRUE(window_slice(d, 10 * kH, 10 * kH, e, 10 * kH, true).empty());

  const double t0 = 60 * kH, ta = t0 - 18 * kH;
  const auto v = window_slice(d, ta, t0, e, t0, true);
  EXPECT_EQ(v.count(Kind::WL), 3u * 18u);
  EXPECT_EQ(v.count(Kind::WSR), 5u);  // the 54 h overpass
  EXPECT_EQ(window_slice(d, ta, t0, e, t0, false).count(Kind::WSR), 0u);
  for (std::size_t i = 1; i < v.size(); ++i) EXPECT_LE(v.entries[i - 1].time, v.entries[i].time);
  for (const auto& x : v.entries) {
    EXPECT_GT(x.time, ta);
    EXPECT_LE(x.time, t0);
    EXPECT_DOUBLE_EQ(std::fmod(x.time, kH), 0.0);
  }
  // Oldest entries carry the largest error.
  EXPECT_DOUBLE_EQ(v.entries.front().sigma, sigma_at(0.05, ta + kH, t0, 18 * kH, 1.0));
  EXPECT_NO_THROW(v.validate());
}

TEST(Files, CsvRoundTrips) {
  const auto& t = twin();
  const auto d = t.synth(ObsErrorModel{}, 2);
  const test::TempDir dir;
  write_gauge_csv(dir.path / "g.csv", d.gauges[2]);
  const auto g = read_gauge_csv(dir.path / "g.csv", "downstream");
  EXPECT_EQ(g.wl, d.gauges[2].wl);
  EXPECT_DOUBLE_EQ(g.native_interval, 900.0);

  write_overpass_csv(dir.path / "o.csv", d.overpasses);
  const auto o = read_overpass_csv(dir.path / "o.csv");
  ASSERT_EQ(o.records.size(), d.overpasses.records.size());
  EXPECT_EQ(o.records[7].wsr, d.overpasses.records[7].wsr);
  EXPECT_EQ(o.times(), t.passes);

  write_hwm_csv(dir.path / "h.csv", d.hwm);
  const auto h = read_hwm_csv(dir.path / "h.csv");
  ASSERT_EQ(h.points.size(), d.hwm.points.size());
  EXPECT_EQ(h.points[5].kind, d.hwm.points[5].kind);
  EXPECT_EQ(h.points[100].wl_max, d.hwm.points[100].wl_max);

  EXPECT_THROW(read_gauge_csv(dir.path / "missing.csv", "x"), MissingInputError);
}

TEST(ObsVector, ValidateRejectsBadEntries) {
  ObsVector v;
  v.entries.push_back({Kind::WL, 0, 0.0, 1.0, 0.0});
  EXPECT_ANY_THROW(v.validate());
  v.entries[0].sigma = 0.1;
  EXPECT_NO_THROW(v.validate());
  v.entries.push_back({Kind::WSR, 0, 0.0, 1.5, 0.1});
  EXPECT_ANY_THROW(v.validate());
}
