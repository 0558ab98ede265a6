#include "floodda/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <json.hpp>

#include "floodda/csv.hpp"
#include "floodda/error.hpp"
#include "floodda/metrics.hpp"

namespace floodda::experiment {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr double kHour = 3600.0;

// ---- JSON field access with path-qualified diagnostics ----

class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(fmt::format("field '{}': expected an object", name()));
  }

  ~Fields() = default;

  /// Rejects keys that were never looked up.
  void finish(std::initializer_list<const char*> extra = {}) const {
    for (const auto& [k, v] : j_.items()) {
      if (seen_.count(k)) continue;
      bool ok = false;
      for (const char* e : extra) ok = ok || k == e;
      if (!ok) throw ConfigError(fmt::format("field '{}': unknown key", join(k)));
    }
  }

  bool has(const std::string& key) const {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  double number(const std::string& key, double def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(fmt::format("field '{}': expected a number", join(key)));
    return v.get<double>();
  }

  std::uint64_t unsigned_int(const std::string& key, std::uint64_t def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0 && !v.is_number_unsigned()))
      throw ConfigError(fmt::format("field '{}': expected a non-negative integer", join(key)));
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(fmt::format("field '{}': expected true or false", join(key)));
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(fmt::format("field '{}': expected a string", join(key)));
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(fmt::format("field '{}': expected an array", join(key)));
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number())
        throw ConfigError(fmt::format("field '{}[{}]': expected a number", join(key), i));
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  const json& raw(const std::string& key) const {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string name() const { return path_.empty() ? "<root>" : path_; }

 private:
  const json& j_;
  std::string path_;
  mutable std::set<std::string> seen_;
};

template <std::size_t N>
std::array<double, N> fixed_array(const Fields& f, const std::string& key, const std::array<double, N>& def) {
  const auto v = f.numbers(key, std::vector<double>(def.begin(), def.end()));
  if (v.size() != N)
    throw ConfigError(fmt::format("field '{}': expected {} values, got {}", f.join(key), N, v.size()));
  std::array<double, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

std::vector<double> hours(const std::vector<double>& h) {
  std::vector<double> s;
  for (double v : h) s.push_back(v * kHour);
  return s;
}

std::vector<double> to_hours(const std::vector<double>& s) {
  std::vector<double> h;
  for (double v : s) h.push_back(v / kHour);
  return h;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string time_tag(double t) { return csv::format_double(t); }

std::string safe_name(std::string s) {
  for (char& ch : s)
    if (ch == '^' || ch == '/') ch = '_';
  return s;
}

// ---- artifacts shared by truth and run directories ----

void write_observations(const fs::path& dir, const hydro::HydroModel& model, const obs::Dataset& data,
                        const std::vector<std::pair<double, std::vector<WetMask>>>& extents) {
  for (const auto& g : data.gauges) obs::write_gauge_csv(dir / fmt::format("gauge_{}.csv", g.station), g);
  obs::write_overpass_csv(dir / "overpasses.csv", data.overpasses);
  obs::write_hwm_csv(dir / "hwm.csv", data.hwm);
  for (const auto& [t, masks] : extents)
    for (std::size_t k = 0; k < masks.size(); ++k)
      write_ascii_grid(dir / "extent" / fmt::format("t{}_sub{}.asc", time_tag(t), k + 1), masks[k]);
  (void)model;
}

void copy_tree(const fs::path& from, const fs::path& to) {
  fs::create_directories(to);
  fs::copy(from, to, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
}

json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw MissingInputError(fmt::format("{}: malformed JSON ({})", path.string(), e.what()));
  }
}

}  // namespace

// ---- configuration ----

fs::path ExperimentConfig::resolve(const fs::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

cycling::Settings ExperimentConfig::settings() const {
  cycling::Settings s;
  s.schedule = schedule;
  s.mode = mode;
  s.n_members = members;
  s.prior = prior;
  s.errors = errors;
  s.spread_floor = spread_floor;
  s.use_anamorphosis = anamorphosis;
  s.seed = seed;
  s.threads = threads;
  return s;
}

void ExperimentConfig::validate() const {
  if (forcing_source != 'V' && forcing_source != 'C')
    throw ConfigError("forcing_source must be V or C");
  if (members < 2 && mode != cycling::Mode::OL) throw ConfigError("ensemble.members must be >= 2");
  if (threads == 0) throw ConfigError("threads must be >= 1");
  if (layout.size() != kSubdomainCount)
    throw ConfigError(fmt::format("subdomains: exactly {} entries required", kSubdomainCount));
  if (!dem_paths.empty() && dem_paths.size() != layout.size())
    throw ConfigError("subdomains: every entry needs a dem path");
  if (!truth.within_bounds()) throw ConfigError("truth: controls outside the admissible box");
  for (double d : truth_delta_h)
    if (std::abs(d) > kMaxStageCorrection) throw ConfigError("truth.delta_h_m: |value| must be <= 3");
  prior.validate();
  schedule.validate();
  errors.validate();
  bias.validate();
  if (strategy) {
    const char needed = *strategy == forcing::Strategy::CC ? 'C' : 'V';
    if (needed != forcing_source)
      throw ConfigError(fmt::format("forecast strategy {} requires forcing source {}",
                                    forcing::to_string(*strategy), needed));
  }
  for (double l : leads)
    if (l < 0.0 || l > schedule.forecast_horizon)
      throw ConfigError("forecast.leads_h: leads must lie within the forecast horizon");
  if (schedule.run_start(0) < event.t_start && !observed_csv)
    throw ConfigError("schedule: the first spin-up starts before the forcing event");
}

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line number.
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError(fmt::format("{}:{}: invalid JSON ({})", source, line, e.what()));
  }
  ExperimentConfig c;
  c.base_dir = base_dir;
  const Fields root(doc, "");
  const auto version = root.unsigned_int("schema_version", 0);
  if (version != static_cast<std::uint64_t>(kConfigSchemaVersion))
    throw ConfigError(fmt::format("field 'schema_version': expected {}, got {}", kConfigSchemaVersion, version));
  c.output_dir = root.string("output_dir", c.output_dir.string());
  c.seed = root.unsigned_int("seed", c.seed);
  c.threads = root.unsigned_int("threads", c.threads);
  c.mode = cycling::parse_mode(root.string("mode", "IGDA"));
  {
    const auto src = root.string("forcing_source", "C");
    if (src != "V" && src != "C") throw ConfigError("field 'forcing_source': expected V or C");
    c.forcing_source = src[0];
  }
  {
    const auto st = root.string("forecast_strategy", "none");
    if (st != "none") c.strategy = forcing::parse_strategy(st);
  }

  if (root.has("geometry")) {
    const Fields g(root.raw("geometry"), "geometry");
    auto& p = c.geometry;
    p.n_cells = g.unsigned_int("n_cells", p.n_cells);
    p.length = g.number("length_m", p.length);
    p.upstream_bed = g.number("upstream_bed_m", p.upstream_bed);
    p.slope = g.number("slope", p.slope);
    p.width = g.number("width_m", p.width);
    p.bank_height = g.number("bank_height_m", p.bank_height);
    p.overbank_width = g.number("overbank_width_m", p.overbank_width);
    if (g.has("stations")) {
      const auto& arr = g.raw("stations");
      if (!arr.is_array()) throw ConfigError("field 'geometry.stations': expected an array");
      p.stations.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const Fields s(arr[i], fmt::format("geometry.stations[{}]", i));
        if (!s.has("name") || !s.has("cell"))
          throw ConfigError(fmt::format("field 'geometry.stations[{}]': name and cell required", i));
        p.stations.push_back({s.string("name", ""), s.unsigned_int("cell", 0)});
        s.finish();
      }
    }
    g.finish();
  }
  if (root.has("subdomains")) {
    const auto& arr = root.raw("subdomains");
    if (!arr.is_array()) throw ConfigError("field 'subdomains': expected an array");
    c.layout.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = fmt::format("subdomains[{}]", i);
      const Fields s(arr[i], path);
      if (!s.has("first_cell") || !s.has("end_cell"))
        throw ConfigError(fmt::format("field '{}': first_cell and end_cell required", path));
      c.layout.push_back({s.unsigned_int("first_cell", 0), s.unsigned_int("end_cell", 0)});
      if (!s.has("dem")) throw ConfigError(fmt::format("field '{}.dem': DEM path required", path));
      const fs::path dem = c.resolve(s.string("dem", ""));
      if (!fs::exists(dem))
        throw ConfigError(fmt::format("field '{}.dem': file not found: {}", path, dem.string()));
      c.dem_paths.push_back(dem);
      s.finish();
    }
  }
  c.weir_fraction = root.number("weir_fraction", c.weir_fraction);
  if (root.has("model")) {
    const Fields m(root.raw("model"), "model");
    auto& p = c.model;
    p.weir_coefficient = m.number("weir_coefficient", p.weir_coefficient);
    p.slope_epsilon = m.number("slope_epsilon", p.slope_epsilon);
    p.max_depth_change = m.number("max_depth_change", p.max_depth_change);
    p.depth_floor = m.number("depth_floor_m", p.depth_floor);
    p.courant = m.number("courant", p.courant);
    p.output_interval = m.number("output_interval_s", p.output_interval);
    const auto ds = m.string("downstream", "normal_depth");
    if (ds == "normal_depth") p.downstream = hydro::DownstreamBoundary::NormalDepth;
    else if (ds == "closed") p.downstream = hydro::DownstreamBoundary::Closed;
    else throw ConfigError("field 'model.downstream': expected normal_depth or closed");
    m.finish();
  }
  if (root.has("truth")) {
    const Fields t(root.raw("truth"), "truth");
    c.truth.friction.ks = fixed_array(t, "ks", c.truth.friction.ks);
    c.truth.mu = t.number("mu", c.truth.mu);
    c.truth_delta_h = fixed_array(t, "delta_h_m", c.truth_delta_h);
    c.truth_seed = t.unsigned_int("seed", c.truth_seed);
    t.finish();
  }
  if (root.has("prior")) {
    const Fields p(root.raw("prior"), "prior");
    std::array<double, kControlSize> mean{}, std{};
    for (std::size_t j = 0; j < kControlSize; ++j) {
      mean[j] = c.prior.elements[j].mean;
      std[j] = c.prior.elements[j].std;
    }
    mean = fixed_array(p, "mean", mean);
    std = fixed_array(p, "std", std);
    ControlVector m;
    for (std::size_t j = 0; j < kControlSize; ++j) m[j] = mean[j];
    c.prior = assim::PriorSpec::around(m, std);
    p.finish();
  }
  if (root.has("ensemble")) {
    const Fields e(root.raw("ensemble"), "ensemble");
    c.members = e.unsigned_int("members", c.members);
    c.spread_floor = e.number("spread_floor", c.spread_floor);
    c.anamorphosis = e.boolean("anamorphosis", c.anamorphosis);
    e.finish();
  }
  if (root.has("schedule")) {
    const Fields s(root.raw("schedule"), "schedule");
    auto& p = c.schedule;
    p.t0_first = s.number("t0_first_h", p.t0_first / kHour) * kHour;
    p.cycle_spacing = s.number("cycle_spacing_h", p.cycle_spacing / kHour) * kHour;
    p.window_length = s.number("window_h", p.window_length / kHour) * kHour;
    p.reanalysis_length = s.number("reanalysis_h", p.reanalysis_length / kHour) * kHour;
    p.spin_up = s.number("spin_up_h", p.spin_up / kHour) * kHour;
    p.forecast_horizon = s.number("forecast_horizon_h", p.forecast_horizon / kHour) * kHour;
    p.n_cycles = s.unsigned_int("n_cycles", p.n_cycles);
    s.finish();
  }
  if (root.has("observations")) {
    const Fields o(root.raw("observations"), "observations");
    c.observations_dir = o.string("dir", c.observations_dir.string());
    c.errors.sigma_wl_base = o.number("sigma_wl_m", c.errors.sigma_wl_base);
    c.errors.sigma_wsr_base = o.number("sigma_wsr", c.errors.sigma_wsr_base);
    c.errors.alpha = o.number("alpha", c.errors.alpha);
    c.overpass_times = hours(o.numbers("overpass_times_h", to_hours(c.overpass_times)));
    c.hwm_count = o.unsigned_int("hwm_count", c.hwm_count);
    c.hwm_variance = o.number("hwm_variance_m2", c.hwm_variance);
    o.finish();
  }
  if (root.has("forcing")) {
    const Fields f(root.raw("forcing"), "forcing");
    if (f.has("observed_csv")) {
      const fs::path p = c.resolve(f.string("observed_csv", ""));
      if (!fs::exists(p))
        throw ConfigError("field 'forcing.observed_csv': file not found: " + p.string());
      c.observed_csv = p;
    }
    if (f.has("event")) {
      const Fields e(f.raw("event"), "forcing.event");
      auto& s = c.event;
      s.base = e.number("base_m3s", s.base);
      s.peak = e.number("peak_m3s", s.peak);
      s.t_peak = e.number("t_peak_h", s.t_peak / kHour) * kHour;
      s.rise = e.number("rise_h", s.rise / kHour) * kHour;
      s.rise_shape = e.number("rise_shape", s.rise_shape);
      s.recession_shape = e.number("recession_shape", s.recession_shape);
      s.t_start = e.number("t_start_h", s.t_start / kHour) * kHour;
      s.t_end = e.number("t_end_h", s.t_end / kHour) * kHour;
      s.sample_interval = e.number("sample_interval_s", s.sample_interval);
      e.finish();
    }
    if (f.has("bias")) {
      const Fields b(f.raw("bias"), "forcing.bias");
      c.bias.amplitude = b.number("amplitude", c.bias.amplitude);
      c.bias.shift = b.number("shift_h", c.bias.shift / kHour) * kHour;
      c.bias.smoothing_window = b.number("smoothing_h", c.bias.smoothing_window / kHour) * kHour;
      if (b.has("schedule")) {
        const auto& arr = b.raw("schedule");
        if (!arr.is_array()) throw ConfigError("field 'forcing.bias.schedule': expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
          if (!arr[i].is_array() || arr[i].size() != 2 || !arr[i][0].is_number() || !arr[i][1].is_number())
            throw ConfigError(fmt::format("field 'forcing.bias.schedule[{}]': expected [time_h, amplitude]", i));
          c.bias.amplitude_schedule.emplace_back(arr[i][0].get<double>() * kHour, arr[i][1].get<double>());
        }
      }
      b.finish();
    }
    f.finish();
  }
  if (root.has("forecast")) {
    const Fields f(root.raw("forecast"), "forecast");
    c.issue_times = hours(f.numbers("issue_times_h", {}));
    c.leads = hours(f.numbers("leads_h", to_hours(c.leads)));
    f.finish();
  }
  if (root.has("metrics")) {
    const Fields m(root.raw("metrics"), "metrics");
    if (m.has("period_h")) {
      const auto p = m.numbers("period_h", {});
      if (p.size() != 2 || !(p[1] > p[0]))
        throw ConfigError("field 'metrics.period_h': expected [begin, end] with end > begin");
      c.score_period = std::pair(p[0] * kHour, p[1] * kHour);
    }
    m.finish();
  }
  root.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  const auto base = fs::absolute(path).parent_path();
  return parse_config(read_text(path), base, path.string());
}

std::string example_config_text() {
  const ExperimentConfig d;
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["output_dir"] = "runs/igda_c";
  j["seed"] = d.seed;
  j["threads"] = d.threads;
  j["mode"] = "IGDA";
  j["forcing_source"] = "C";
  j["forecast_strategy"] = "none";
  json g;
  g["n_cells"] = d.geometry.n_cells;
  g["length_m"] = d.geometry.length;
  g["upstream_bed_m"] = d.geometry.upstream_bed;
  g["slope"] = d.geometry.slope;
  g["width_m"] = d.geometry.width;
  g["bank_height_m"] = d.geometry.bank_height;
  g["overbank_width_m"] = d.geometry.overbank_width;
  for (const auto& s : d.geometry.stations) g["stations"].push_back({{"name", s.name}, {"cell", s.cell}});
  j["geometry"] = g;
  for (std::size_t k = 0; k < d.layout.size(); ++k)
    j["subdomains"].push_back({{"first_cell", d.layout[k].first_cell},
                               {"end_cell", d.layout[k].end_cell},
                               {"dem", fmt::format("dems/sub{}.asc", k + 1)}});
  j["weir_fraction"] = d.weir_fraction;
  j["model"] = {{"weir_coefficient", d.model.weir_coefficient},
                {"output_interval_s", d.model.output_interval},
                {"downstream", "normal_depth"}};
  j["truth"] = {{"ks", d.truth.friction.ks}, {"mu", d.truth.mu}, {"delta_h_m", d.truth_delta_h},
                {"seed", d.truth_seed}};
  std::vector<double> mean, std;
  for (const auto& e : d.prior.elements) {
    mean.push_back(e.mean);
    std.push_back(e.std);
  }
  j["prior"] = {{"mean", mean}, {"std", std}};
  j["ensemble"] = {{"members", d.members}, {"spread_floor", d.spread_floor}, {"anamorphosis", true}};
  j["schedule"] = {{"t0_first_h", d.schedule.t0_first / kHour},
                   {"cycle_spacing_h", d.schedule.cycle_spacing / kHour},
                   {"window_h", d.schedule.window_length / kHour},
                   {"reanalysis_h", d.schedule.reanalysis_length / kHour},
                   {"spin_up_h", d.schedule.spin_up / kHour},
                   {"forecast_horizon_h", d.schedule.forecast_horizon / kHour},
                   {"n_cycles", d.schedule.n_cycles}};
  j["observations"] = {{"dir", "truth"},
                       {"sigma_wl_m", d.errors.sigma_wl_base},
                       {"sigma_wsr", d.errors.sigma_wsr_base},
                       {"alpha", d.errors.alpha},
                       {"overpass_times_h", to_hours(d.overpass_times)},
                       {"hwm_count", d.hwm_count},
                       {"hwm_variance_m2", d.hwm_variance}};
  j["forcing"] = {{"event",
                   {{"base_m3s", d.event.base},
                    {"peak_m3s", d.event.peak},
                    {"t_peak_h", d.event.t_peak / kHour},
                    {"rise_h", d.event.rise / kHour},
                    {"rise_shape", d.event.rise_shape},
                    {"recession_shape", d.event.recession_shape},
                    {"t_start_h", d.event.t_start / kHour},
                    {"t_end_h", d.event.t_end / kHour},
                    {"sample_interval_s", d.event.sample_interval}}},
                  {"bias",
                   {{"amplitude", d.bias.amplitude},
                    {"shift_h", d.bias.shift / kHour},
                    {"smoothing_h", d.bias.smoothing_window / kHour}}}};
  j["forecast"] = {{"issue_times_h", {48, 54, 60, 66}}, {"leads_h", to_hours(d.leads)}};
  return j.dump(2) + "\n";
}

// ---- model and inputs ----

hydro::HydroModel build_model(const ExperimentConfig& cfg) {
  try {
    auto geometry = hydro::make_reach(cfg.geometry);
    std::vector<DemRaster> dems;
    if (cfg.dem_paths.empty()) {
      dems = scenario::default_dems(geometry, cfg.layout);
    } else {
      for (const auto& p : cfg.dem_paths) dems.push_back(read_ascii_grid(p));
    }
    auto subs = scenario::make_subdomains(geometry, cfg.layout, std::move(dems), cfg.weir_fraction);
    return hydro::HydroModel(std::move(geometry), std::move(subs), cfg.model);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model setup: ") + e.what());
  }
}

forcing::Hydrograph observed_hydrograph(const ExperimentConfig& cfg) {
  if (cfg.observed_csv) return forcing::read_hydrograph_csv(*cfg.observed_csv);
  return forcing::synth_event_hydrograph(cfg.event);
}

std::string experiment_name(const ExperimentConfig& cfg) {
  std::string n = fmt::format("{}^{}", cycling::to_string(cfg.mode), cfg.forcing_source);
  if (cfg.strategy) n += "/" + forcing::to_string(*cfg.strategy);
  return n;
}

TruthResult make_truth(const ExperimentConfig& cfg, const hydro::HydroModel& model) {
  TruthResult out;
  out.inputs.observed = observed_hydrograph(cfg);
  out.inputs.biased = forcing::apply_bias(out.inputs.observed, cfg.bias);
  const double t0 = out.inputs.observed.start();
  const double t1 = out.inputs.observed.end();
  const auto s0 = model.initial_state(cfg.truth.mu * out.inputs.observed.at(t0), cfg.truth.friction, t0);
  hydro::RunOptions ro;
  ro.extra_instants = cfg.overpass_times;
  const bool corrected = std::any_of(cfg.truth_delta_h.begin(), cfg.truth_delta_h.end(),
                                     [](double v) { return v != 0.0; });
  if (corrected)
    for (double t : cfg.overpass_times)
      ro.corrections.push_back({t, std::vector<double>(cfg.truth_delta_h.begin(), cfg.truth_delta_h.end())});
  out.trajectory = model.run(s0, cfg.truth, out.inputs.observed, t0, t1, ro);
  obs::SynthesisOptions so;
  so.overpass_times = cfg.overpass_times;
  so.hwm_count = cfg.hwm_count;
  so.hwm_variance = cfg.hwm_variance;
  out.inputs.data = obs::synthesize_truth_obs(model, out.trajectory, cfg.errors, so, cfg.truth_seed);
  return out;
}

Inputs load_inputs(const ExperimentConfig& cfg, const hydro::HydroModel& model) {
  const fs::path dir = cfg.resolve(cfg.observations_dir);
  if (!fs::exists(dir)) throw MissingInputError("observation directory not found: " + dir.string());
  Inputs in;
  for (const auto& st : model.geometry().stations)
    in.data.gauges.push_back(obs::read_gauge_csv(dir / "obs" / fmt::format("gauge_{}.csv", st.name), st.name));
  in.data.overpasses = obs::read_overpass_csv(dir / "obs" / "overpasses.csv");
  in.data.hwm = obs::read_hwm_csv(dir / "obs" / "hwm.csv");
  in.observed = forcing::read_hydrograph_csv(dir / "forcing" / "observed.csv");
  in.biased = forcing::read_hydrograph_csv(dir / "forcing" / "biased.csv");
  for (const auto& r : in.data.overpasses.records)
    if (r.subdomain < 1 || static_cast<std::size_t>(r.subdomain) > model.n_subdomains())
      throw MissingInputError(fmt::format("overpasses.csv: unknown subdomain {}", r.subdomain));
  return in;
}

namespace {

void run_chain_into(const ExperimentConfig& cfg, const hydro::HydroModel& model, const Inputs& inputs,
                    bool with_forecasts, cycling::ChainResult& chain) {
  const auto settings = cfg.settings();
  const auto& reanalysis_forcing = cfg.forcing_source == 'V' ? inputs.observed : inputs.biased;
  auto state = cycling::cold_start(model, settings, reanalysis_forcing);
  std::set<double> issues(cfg.issue_times.begin(), cfg.issue_times.end());
  std::size_t n_cycles = settings.schedule.n_cycles;
  if (with_forecasts && cfg.strategy && !issues.empty()) {
    const double last = *issues.rbegin();
    const double span = (last - settings.schedule.t0_first) / settings.schedule.cycle_spacing;
    if (span < 0.0 || std::abs(span - std::round(span)) > 1e-9)
      throw ConfigError("forecast.issue_times_h: issue times must be cycle present times");
    n_cycles = std::max(n_cycles, static_cast<std::size_t>(std::llround(span)) + 1);
  }
  for (std::size_t c = 0; c < n_cycles; ++c) {
    auto cr = cycling::run_reanalysis_cycle(c, state, model, inputs.data, reanalysis_forcing, settings);
    if (with_forecasts && cfg.strategy && issues.count(cr.t0)) {
      const auto ff = forcing::select_forcing(*cfg.strategy, forcing::Phase::Forecast, inputs.observed,
                                              inputs.biased, cr.t0,
                                              cr.t0 + settings.schedule.forecast_horizon);
      chain.forecasts.push_back(
          cycling::run_forecast_cycle(cr, model, inputs.data, reanalysis_forcing, ff, settings));
      spdlog::info("forecast issued at {} h", cr.t0 / kHour);
    }
    cr.analysis_runs.clear();
    cr.analysis_runs.shrink_to_fit();
    chain.cycles.push_back(std::move(cr));
  }
}

}  // namespace

cycling::ChainResult run_chain(const ExperimentConfig& cfg, const hydro::HydroModel& model,
                               const Inputs& inputs, bool with_forecasts) {
  cycling::ChainResult chain;
  run_chain_into(cfg, model, inputs, with_forecasts, chain);
  return chain;
}

// ---- commands ----

void cmd_truth(const ExperimentConfig& cfg) {
  const auto model = build_model(cfg);
  const auto truth = make_truth(cfg, model);
  const fs::path out = cfg.resolve(cfg.output_dir);
  fs::create_directories(out);
  forcing::write_hydrograph_csv(out / "forcing" / "observed.csv", truth.inputs.observed);
  forcing::write_hydrograph_csv(out / "forcing" / "biased.csv", truth.inputs.biased);
  hydro::write_trajectory_csv(out / "truth_trajectory.csv", model, truth.trajectory);
  std::vector<std::pair<double, std::vector<WetMask>>> extents;
  for (double t : cfg.overpass_times) {
    std::vector<WetMask> masks;
    for (std::size_t k = 0; k < model.n_subdomains(); ++k)
      masks.push_back(model.flood_extent(truth.trajectory.at(t), k));
    extents.emplace_back(t, std::move(masks));
  }
  write_observations(out / "obs", model, truth.inputs.data, extents);
  json rec;
  rec["schema"] = "floodda.truth/1";
  rec["controls"] = json::object();
  for (std::size_t j = 0; j < kControlSize; ++j) rec["controls"][ControlVector::element_name(j)] = cfg.truth[j];
  rec["delta_h_at_overpass_m"] = cfg.truth_delta_h;
  rec["overpass_times_s"] = cfg.overpass_times;
  rec["seed"] = cfg.truth_seed;
  rec["observed_peak_m3s"] = truth.inputs.observed.peak();
  rec["observed_peak_time_s"] = truth.inputs.observed.peak_time();
  write_text(out / "truth_controls.json", rec.dump(2) + "\n");
  spdlog::info("truth written to {}", out.string());
}

namespace {

void write_run_dir(const ExperimentConfig& cfg, const hydro::HydroModel& model, const Inputs& inputs,
                   const cycling::ChainResult& chain, const fs::path& out) {
  fs::create_directories(out);
  // Observations travel with the run so metrics need nothing else.
  const fs::path src = cfg.resolve(cfg.observations_dir) / "obs";
  if (fs::exists(src)) copy_tree(src, out / "obs");
  else write_observations(out / "obs", model, inputs.data, {});
  for (std::size_t k = 0; k < model.n_subdomains(); ++k)
    write_ascii_grid(out / "dems" / fmt::format("sub{}.asc", k + 1), model.subdomains()[k].dem);
  for (const auto& cr : chain.cycles) cycling::write_cycle(out, cr);
  cycling::write_reanalysis(out, model, chain.cycles);
  for (const auto& fr : chain.forecasts) cycling::write_forecast(out, model, fr);

  json info;
  info["schema"] = "floodda.run/1";
  info["experiment"] = experiment_name(cfg);
  info["mode"] = cycling::to_string(cfg.mode);
  info["forcing_source"] = std::string(1, cfg.forcing_source);
  info["strategy"] = cfg.strategy ? json(forcing::to_string(*cfg.strategy)) : json(nullptr);
  info["seed"] = cfg.seed;
  info["members"] = cfg.mode == cycling::Mode::OL ? 1 : cfg.members;
  info["n_cycles"] = chain.cycles.size();
  std::vector<std::string> stations;
  for (const auto& s : model.geometry().stations) stations.push_back(s.name);
  info["stations"] = stations;
  info["n_subdomains"] = model.n_subdomains();
  info["leads_s"] = cfg.leads;
  info["forecast_horizon_s"] = cfg.schedule.forecast_horizon;
  info["score_period_s"] = cfg.score_period ? json({cfg.score_period->first, cfg.score_period->second})
                                            : json(nullptr);
  std::vector<double> wsr_assimilated;
  for (const auto& cr : chain.cycles) wsr_assimilated.push_back(static_cast<double>(cr.n_wsr));
  info["n_obs_per_cycle"] = json::array();
  for (const auto& cr : chain.cycles)
    info["n_obs_per_cycle"].push_back({{"cycle", cr.cycle}, {"n_obs", cr.n_obs}, {"n_wsr", cr.n_wsr}});
  write_text(out / "run_info.json", info.dump(2) + "\n");
}

void run_and_write(const ExperimentConfig& cfg, const hydro::HydroModel& model, const Inputs& inputs,
                   bool with_forecasts) {
  const fs::path out = cfg.resolve(cfg.output_dir);
  cycling::ChainResult chain;
  try {
    run_chain_into(cfg, model, inputs, with_forecasts, chain);
  } catch (const Error& e) {
    // Completed cycles stay on disk; no scores for a failed chain.
    spdlog::error("cycle {} failed: {}", chain.cycles.size(), e.what());
    if (!chain.cycles.empty()) write_run_dir(cfg, model, inputs, chain, out);
    throw;
  }
  write_run_dir(cfg, model, inputs, chain, out);
  cmd_metrics({out}, out);
}

}  // namespace

void cmd_run(const ExperimentConfig& cfg) {
  const auto model = build_model(cfg);
  const auto inputs = load_inputs(cfg, model);
  run_and_write(cfg, model, inputs, false);
}

void cmd_forecast(const ExperimentConfig& cfg) {
  if (!cfg.strategy) throw ConfigError("forecast: a forecast strategy (CC, VC or VQ) is required");
  if (cfg.issue_times.empty()) throw ConfigError("forecast: forecast.issue_times_h is empty");
  const auto model = build_model(cfg);
  const auto inputs = load_inputs(cfg, model);
  for (double t : cfg.issue_times) {
    const double end = t + cfg.schedule.forecast_horizon;
    if (!inputs.observed.covers(t, end) || !inputs.biased.covers(t, end))
      throw MissingInputError(fmt::format("forecast issued at {} h runs past the forcing", t / kHour));
  }
  run_and_write(cfg, model, inputs, true);
}

// ---- metrics ----

namespace {

struct RunArtifacts {
  fs::path dir;
  json info;
  std::vector<std::string> stations;
  std::vector<metrics::Series> reanalysis;  // per station
  std::vector<metrics::Series> gauges;      // per station
};

metrics::Series read_series(const fs::path& path, const char* value_col) {
  const auto t = csv::read(path);
  return {t.numbers("time_s"), t.numbers(value_col)};
}

metrics::Series restrict(const metrics::Series& s, double a, double b) {
  metrics::Series out;
  for (std::size_t i = 0; i < s.times.size(); ++i)
    if (s.times[i] >= a && s.times[i] <= b) {
      out.times.push_back(s.times[i]);
      out.values.push_back(s.values[i]);
    }
  return out;
}

RunArtifacts load_run(const fs::path& dir) {
  RunArtifacts r;
  r.dir = dir;
  const fs::path info = dir / "run_info.json";
  if (!fs::exists(info)) throw MissingInputError("not a run directory (no run_info.json): " + dir.string());
  r.info = read_json(info);
  for (const auto& s : r.info.at("stations")) r.stations.push_back(s.get<std::string>());
  for (const auto& s : r.stations) {
    r.reanalysis.push_back(read_series(dir / "reanalysis" / fmt::format("wl_{}.csv", s), "wl_m"));
    r.gauges.push_back(read_series(dir / "obs" / fmt::format("gauge_{}.csv", s), "wl_m"));
  }
  return r;
}

std::optional<std::pair<double, double>> period_of(const RunArtifacts& r) {
  const auto& p = r.info.at("score_period_s");
  if (p.is_null()) return std::nullopt;
  return std::pair(p[0].get<double>(), p[1].get<double>());
}

std::vector<double> station_rmse(const RunArtifacts& r) {
  std::vector<double> out;
  const auto period = period_of(r);
  for (std::size_t s = 0; s < r.stations.size(); ++s) {
    const auto& sim = r.reanalysis[s];
    if (sim.times.empty()) throw MissingInputError("empty reanalysis series in " + r.dir.string());
    const double a = period ? period->first : sim.times.front();
    const double b = period ? period->second : sim.times.back();
    out.push_back(metrics::rmse(sim, restrict(r.gauges[s], a, b)));
  }
  return out;
}

std::vector<DemRaster> read_dems(const RunArtifacts& r) {
  std::vector<DemRaster> dems;
  const auto n = r.info.at("n_subdomains").get<std::size_t>();
  for (std::size_t k = 0; k < n; ++k) dems.push_back(read_ascii_grid(r.dir / "dems" / fmt::format("sub{}.asc", k + 1)));
  return dems;
}

WetMask mask_from_stage(const DemRaster& dem, double stage) {
  // Same rule as the model: wet at or below the stage once the cell holds water.
  WetMask m{dem.header(), std::vector<std::int8_t>(dem.values().size())};
  const bool holds = stage > dem.min_elevation();
  for (std::size_t p = 0; p < m.cells.size(); ++p) {
    if (dem.is_nodata(p)) m.cells[p] = WetMask::kNoData;
    else m.cells[p] = holds && stage >= dem.values()[p] ? WetMask::kWet : WetMask::kDry;
  }
  return m;
}

json csi_entry(double t, int k, const metrics::ContingencyMap& map) {
  const auto c = metrics::csi(map);
  return {{"time_s", t},
          {"subdomain", k},
          {"csi_percent", c.value},
          {"degenerate", c.degenerate},
          {"tp", map.counts[metrics::TP]},
          {"fp", map.counts[metrics::FP]},
          {"fn", map.counts[metrics::FN]},
          {"tn", map.counts[metrics::TN]}};
}

}  // namespace

void cmd_metrics(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw MissingInputError("metrics: no run directory given");
  std::vector<RunArtifacts> runs;
  for (const auto& d : run_dirs) runs.push_back(load_run(d));
  std::sort(runs.begin(), runs.end(), [](const RunArtifacts& a, const RunArtifacts& b) {
    return a.info.at("experiment").get<std::string>() < b.info.at("experiment").get<std::string>();
  });

  std::map<std::string, std::vector<double>> ol_rmse;  // by forcing source
  std::map<std::string, std::vector<double>> rmses;
  for (const auto& r : runs) {
    const auto name = r.info.at("experiment").get<std::string>();
    rmses[name] = station_rmse(r);
    if (r.info.at("mode") == "OL" && r.info.at("strategy").is_null())
      ol_rmse[r.info.at("forcing_source").get<std::string>()] = rmses[name];
  }

  json scores;
  scores["schema"] = "floodda.scores/1";
  scores["experiments"] = json::array();
  fs::create_directories(out_dir);
  csv::Writer table(out_dir / "table.csv", [&] {
    std::vector<std::string> h{"experiment"};
    for (const auto& s : runs.front().stations) h.push_back("rmse_" + s + "_m");
    h.push_back("gain_percent");
    return h;
  }());

  for (const auto& r : runs) {
    const auto name = r.info.at("experiment").get<std::string>();
    const auto& rm = rmses[name];
    json e;
    e["name"] = name;
    e["mode"] = r.info.at("mode");
    e["forcing"] = r.info.at("forcing_source");
    e["strategy"] = r.info.at("strategy");
    e["wl_rmse_m"] = json::object();
    for (std::size_t s = 0; s < r.stations.size(); ++s) e["wl_rmse_m"][r.stations[s]] = rm[s];
    const auto src = r.info.at("forcing_source").get<std::string>();
    std::optional<double> g;
    if (r.info.at("mode") != "OL" && ol_rmse.count(src)) g = metrics::gain(rm, ol_rmse[src]);
    e["gain_percent"] = g ? json(*g) : json(nullptr);
    e["gain_reference"] = g ? json("OL^" + src) : json(nullptr);

    // High water marks against the reanalysis maxima.
    const auto hwm = obs::read_hwm_csv(r.dir / "obs" / "hwm.csv");
    const auto maxima = csv::read(r.dir / "reanalysis" / "maxima.csv");
    std::map<std::pair<std::string, long>, double> mx;
    {
      const auto kinds = maxima.strings("kind");
      const auto loc = maxima.numbers("location");
      const auto val = maxima.numbers("wl_max_m");
      for (std::size_t i = 0; i < kinds.size(); ++i) mx[{kinds[i], static_cast<long>(loc[i])}] = val[i];
    }
    std::vector<double> sim_max, marks;
    for (const auto& p : hwm.points) {
      const std::string kind = p.kind == "subdomain" ? "subdomain" : "cell";
      const auto it = mx.find({kind, p.location});
      if (it == mx.end())
        throw MissingInputError(fmt::format("HWM {} ({} {}) has no simulated maximum", p.id, p.kind, p.location));
      sim_max.push_back(it->second);
      marks.push_back(p.wl_max);
    }
    e["hwm_rmse_m"] = marks.empty() ? json(nullptr) : json(metrics::hwm_rmse(sim_max, marks));

    // Flood extent at the overpasses of the reanalysis.
    const auto overpasses = obs::read_overpass_csv(r.dir / "obs" / "overpasses.csv");
    const auto sim_wsr = csv::read(r.dir / "reanalysis" / "wsr_overpass.csv");
    const auto st = sim_wsr.numbers("time_s");
    const auto sk = sim_wsr.numbers("subdomain");
    const auto sv = sim_wsr.numbers("wsr");
    e["csi"] = json::array();
    e["wsr_abs_error"] = json::array();
    const fs::path cdir = out_dir / "contingency" / safe_name(name);
    for (std::size_t i = 0; i < st.size(); ++i) {
      const int k = static_cast<int>(sk[i]);
      const auto tag = fmt::format("t{}_sub{}.asc", time_tag(st[i]), k);
      const fs::path obs_mask = r.dir / "obs" / "extent" / tag;
      if (fs::exists(obs_mask)) {
        const auto map = metrics::contingency(read_wet_mask(r.dir / "reanalysis" / "extent" / tag),
                                              read_wet_mask(obs_mask));
        write_ascii_grid(cdir / tag, map.labels);
        e["csi"].push_back(csi_entry(st[i], k, map));
      }
      for (const auto& rec : overpasses.records)
        if (rec.time == st[i] && rec.subdomain == k)
          e["wsr_abs_error"].push_back({{"time_s", st[i]},
                                        {"subdomain", k},
                                        {"sim", sv[i]},
                                        {"obs", rec.wsr},
                                        {"abs_error", std::abs(sv[i] - rec.wsr)}});
    }

    // Lead-time skill of forecast runs.
    const fs::path fdir = r.dir / "forecasts";
    if (fs::exists(fdir)) {
      std::vector<std::pair<double, fs::path>> issues;
      for (const auto& d : fs::directory_iterator(fdir)) {
        const auto n = d.path().filename().string();
        if (n.rfind("issue_", 0) == 0) issues.emplace_back(std::stod(n.substr(6)), d.path());
      }
      std::sort(issues.begin(), issues.end());
      const auto leads = r.info.at("leads_s").get<std::vector<double>>();
      e["leadtime_rmse_m"] = json::object();
      for (std::size_t s = 0; s < r.stations.size(); ++s) {
        json per = json::object();
        std::vector<metrics::Series> fc;
        for (const auto& [t, p] : issues)
          fc.push_back(read_series(p / fmt::format("mean_{}.csv", r.stations[s]), "wl_m"));
        const double tol = r.gauges[s].times.size() > 1
                               ? 0.5 * (r.gauges[s].times[1] - r.gauges[s].times[0]) : 0.0;
        for (double lead : leads) {
          metrics::Series ls;
          for (std::size_t i = 0; i < issues.size(); ++i) {
            const double vt = issues[i].first + lead;
            const auto& f = fc[i];
            const auto it = std::find(f.times.begin(), f.times.end(), vt);
            if (it == f.times.end()) continue;
            ls.times.push_back(vt);
            ls.values.push_back(f.values[static_cast<std::size_t>(it - f.times.begin())]);
          }
          // Pooled over every issue time; the reanalysis score period does not apply.
          const double inf = std::numeric_limits<double>::infinity();
          const auto key = fmt::format("{}", lead / kHour);
          try {
            per[key] = metrics::leadtime_rmse(ls, r.gauges[s], -inf, inf, tol);
          } catch (const std::invalid_argument&) {
            per[key] = nullptr;
          }
        }
        e["leadtime_rmse_m"][r.stations[s]] = per;
      }
      // Forecast flood extent at overpasses inside each horizon.
      const auto dems = read_dems(r);
      e["forecast_csi"] = json::array();
      for (const auto& [t, p] : issues) {
        const auto fw = csv::read(p / "mean_wsr.csv");
        const auto ft = fw.numbers("time_s");
        const auto fk = fw.numbers("subdomain");
        const auto fs_ = fw.numbers("stage_m");
        for (std::size_t i = 0; i < ft.size(); ++i) {
          const int k = static_cast<int>(fk[i]);
          const auto tag = fmt::format("t{}_sub{}.asc", time_tag(ft[i]), k);
          const fs::path obs_mask = r.dir / "obs" / "extent" / tag;
          if (ft[i] <= t || !fs::exists(obs_mask)) continue;
          const auto map = metrics::contingency(mask_from_stage(dems.at(static_cast<std::size_t>(k - 1)), fs_[i]),
                                                read_wet_mask(obs_mask));
          auto entry = csi_entry(ft[i], k, map);
          entry["issue_time_s"] = t;
          e["forecast_csi"].push_back(entry);
        }
      }
    }
    scores["experiments"].push_back(e);

    std::vector<std::string> row{name};
    for (double v : rm) row.push_back(csv::format_double(v));
    row.push_back(g ? csv::format_double(*g) : "");
    table.row(row);
  }
  write_text(out_dir / "scores.json", scores.dump(2) + "\n");
}

void cmd_init(const fs::path& dir) {
  fs::create_directories(dir);
  const ExperimentConfig d;
  const auto geometry = hydro::make_reach(d.geometry);
  const auto dems = scenario::default_dems(geometry, d.layout);
  for (std::size_t k = 0; k < dems.size(); ++k)
    write_ascii_grid(dir / "dems" / fmt::format("sub{}.asc", k + 1), dems[k]);
  write_text(dir / "config.json", example_config_text());
}

}  // namespace floodda::experiment
