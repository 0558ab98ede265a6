#include "floodda/hydro.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "floodda/csv.hpp"
#include "floodda/error.hpp"

namespace floodda::hydro {

namespace {

// Cube root of x > 0: exponent-halving seed refined by two Halley steps
// (relative error below 1e-14). Several times cheaper than libm cbrt, which
// dominated the sub-step cost.
inline double cube_root(double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, sizeof bits);
  bits = bits / 3 + 0x2A9F7893782DA1CEULL;
  double y;
  std::memcpy(&y, &bits, sizeof y);
  for (int k = 0; k < 2; ++k) {
    const double y3 = y * y * y;
    y *= (y3 + 2.0 * x) / (2.0 * y3 + x);
  }
  return y;
}

inline double pow53(double h) {
  if (h <= 0.0) return 0.0;
  const double c = cube_root(h);
  return h * c * c;
}

}  // namespace

// ---------------------------------------------------------------- geometry

double ReachGeometry::downstream_slope() const {
  const std::size_t n = n_cells();
  if (n < 2) return 0.0;
  return (bed[n - 2] - bed[n - 1]) / cell_length;
}

const Station& ReachGeometry::station(std::string_view name) const {
  for (const auto& s : stations)
    if (s.name == name) return s;
  throw std::invalid_argument("unknown station '" + std::string(name) + "'");
}

void ReachGeometry::validate() const {
  const std::size_t n = n_cells();
  if (n < 2) throw std::invalid_argument("reach needs at least two cells");
  if (!(cell_length > 0.0)) throw std::invalid_argument("cell_length must be > 0");
  if (width.size() != n || segment.size() != n || bank.size() != n)
    throw std::invalid_argument("per-cell geometry arrays differ in length");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(bed[i])) throw std::invalid_argument("non-finite bed elevation");
    if (i > 0 && !(bed[i] < bed[i - 1]))
      throw std::invalid_argument("bed elevation must strictly decrease downstream");
    if (!(width[i] > 0.0)) throw std::invalid_argument("channel width must be > 0");
    if (segment[i] < 1 || segment[i] > 6) throw std::invalid_argument("friction segment outside 1..6");
    if (i > 0 && segment[i] < segment[i - 1])
      throw std::invalid_argument("friction segments must form contiguous runs");
    if (!(bank[i] >= bed[i])) throw std::invalid_argument("bank below bed");
  }
  for (int s = 1; s <= 6; ++s)
    if (std::find(segment.begin(), segment.end(), s) == segment.end())
      throw std::invalid_argument(fmt::format("friction segment {} covers no cell", s));
  if (overbank_width < 0.0) throw std::invalid_argument("overbank_width must be >= 0");
  for (const auto& s : stations)
    if (s.cell >= n) throw std::invalid_argument("station '" + s.name + "' outside the reach");
}

ReachGeometry make_reach(const GeometryParams& p) {
  ReachGeometry g;
  const std::size_t n = p.n_cells;
  if (n < 6) throw std::invalid_argument("make_reach: need at least six cells");
  g.cell_length = p.length / static_cast<double>(n);
  g.overbank_width = p.overbank_width;
  g.stations = p.stations;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (static_cast<double>(i) + 0.5) * g.cell_length;
    const double z = p.upstream_bed - p.slope * x;
    g.bed.push_back(z);
    g.width.push_back(p.width);
    g.bank.push_back(z + p.bank_height);
    g.segment.push_back(1 + static_cast<int>((6 * i) / n));
  }
  g.validate();
  return g;
}

// -------------------------------------------------------------- hypsometry

Hypsometry::Hypsometry(const DemRaster& dem) : pixel_area_(dem.pixel_area()) {
  const auto& v = dem.values();
  sorted_.reserve(dem.valid_count());
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!dem.is_nodata(i)) sorted_.push_back(v[i]);
  std::sort(sorted_.begin(), sorted_.end());
  prefix_.assign(sorted_.size() + 1, 0.0);
  for (std::size_t k = 0; k < sorted_.size(); ++k) prefix_[k + 1] = prefix_[k] + sorted_[k];
}

double Hypsometry::volume(double stage) const {
  // k = number of pixels with elevation <= stage
  const auto k = static_cast<std::size_t>(std::upper_bound(sorted_.begin(), sorted_.end(), stage) -
                                          sorted_.begin());
  if (k == 0) return 0.0;
  return pixel_area_ * (static_cast<double>(k) * stage - prefix_[k]);
}

double Hypsometry::stage(double volume) const {
  if (volume <= 0.0) return sorted_.front();
  const double scaled = volume / pixel_area_;
  // Find the largest k such that V(z_k) <= volume, with V(z_k) = k*z_k - prefix_k
  // evaluated using the k lowest pixels (the k-th is exactly at the surface).
  std::size_t lo = 1, hi = sorted_.size();
  while (lo < hi) {
    const std::size_t mid = (lo + hi + 1) / 2;
    const double v_mid = static_cast<double>(mid) * sorted_[mid - 1] - prefix_[mid];
    if (v_mid <= scaled) lo = mid;
    else hi = mid - 1;
  }
  return (scaled + prefix_[lo]) / static_cast<double>(lo);
}

double Hypsometry::wet_area(double stage) const {
  const auto k = static_cast<std::size_t>(std::upper_bound(sorted_.begin(), sorted_.end(), stage) -
                                          sorted_.begin());
  return pixel_area_ * static_cast<double>(std::max<std::size_t>(k, 1));
}

// ----------------------------------------------------------------- restart

namespace {

constexpr char kMagic[8] = {'F', 'L', 'D', 'A', 'R', 'S', 'T', '1'};
constexpr std::uint8_t kRestartVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

double get_f64(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

std::vector<std::uint8_t> serialize(const HydroState& state) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kRestartVersion);
  put_u32(out, static_cast<std::uint32_t>(state.depth.size()));
  put_u32(out, static_cast<std::uint32_t>(state.stage.size()));
  put_f64(out, state.time);
  for (double d : state.depth) put_f64(out, d);
  for (double s : state.stage) put_f64(out, s);
  return out;
}

HydroState deserialize(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t header = sizeof(kMagic) + 1 + 8;
  if (bytes.size() < header || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw MissingInputError("restart: bad magic");
  if (bytes[sizeof(kMagic)] != kRestartVersion)
    throw MissingInputError(fmt::format("restart: unsupported version {}", bytes[sizeof(kMagic)]));
  const std::size_t n_cells = get_u32(bytes, sizeof(kMagic) + 1);
  const std::size_t n_sub = get_u32(bytes, sizeof(kMagic) + 5);
  if (bytes.size() != header + 8 * (1 + n_cells + n_sub))
    throw MissingInputError("restart: truncated or oversized payload");
  HydroState s;
  std::size_t at = header;
  s.time = get_f64(bytes, at);
  at += 8;
  s.depth.resize(n_cells);
  for (auto& d : s.depth) { d = get_f64(bytes, at); at += 8; }
  s.stage.resize(n_sub);
  for (auto& v : s.stage) { v = get_f64(bytes, at); at += 8; }
  return s;
}

void write_restart(const std::filesystem::path& path, const HydroState& state) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = serialize(state);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write restart " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

HydroState read_restart(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("missing restart " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

// -------------------------------------------------------------- trajectory

const HydroState& Trajectory::at(double t) const {
  auto it = std::lower_bound(states.begin(), states.end(), t,
                             [](const HydroState& s, double v) { return s.time < v; });
  if (it == states.end() || it->time != t)
    throw std::out_of_range(fmt::format("trajectory has no sample at t={}", t));
  return *it;
}

const HydroState& Trajectory::nearest(double t) const {
  auto it = std::lower_bound(states.begin(), states.end(), t,
                             [](const HydroState& s, double v) { return s.time < v; });
  if (it == states.begin()) return *it;
  if (it == states.end()) return states.back();
  const auto prev = std::prev(it);
  return (t - prev->time) <= (it->time - t) ? *prev : *it;
}

// ------------------------------------------------------------------- model

HydroModel::HydroModel(ReachGeometry geometry, std::vector<FloodplainSubdomain> subdomains,
                       ModelParams params)
    : geometry_(std::move(geometry)), subdomains_(std::move(subdomains)), params_(params) {
  geometry_.validate();
  if (!(params_.output_interval > 0.0)) throw std::invalid_argument("output_interval must be > 0");
  const std::size_t n = geometry_.n_cells();
  cell_subdomain_.assign(n, -1);
  cell_weir_length_.assign(n, 0.0);
  for (std::size_t k = 0; k < subdomains_.size(); ++k) {
    const auto& sd = subdomains_[k];
    if (sd.first_cell >= sd.end_cell || sd.end_cell > n)
      throw std::invalid_argument(fmt::format("subdomain {}: invalid attached cell range", sd.id));
    double max_bed = -std::numeric_limits<double>::infinity();
    for (std::size_t i = sd.first_cell; i < sd.end_cell; ++i) {
      if (cell_subdomain_[i] != -1)
        throw std::invalid_argument(fmt::format("subdomain {}: cell {} already attached", sd.id, i));
      cell_subdomain_[i] = static_cast<int>(k);
      cell_weir_length_[i] = sd.weir_length / static_cast<double>(sd.attached_count());
      max_bed = std::max(max_bed, geometry_.bed[i]);
    }
    if (!(sd.crest >= max_bed))
      throw std::invalid_argument(fmt::format("subdomain {}: crest below attached bed", sd.id));
    if (!(sd.weir_length > 0.0))
      throw std::invalid_argument(fmt::format("subdomain {}: weir_length must be > 0", sd.id));
    hypsometry_.emplace_back(sd.dem);
  }
}

double HydroModel::conveyance(std::size_t i, double h, const FrictionField& f) const {
  const int seg = geometry_.segment[i];
  double c = f.ks[static_cast<std::size_t>(seg)] * geometry_.width[i] * pow53(h);
  const double over = geometry_.bed[i] + h - geometry_.bank[i];
  if (over > 0.0) c += f.ks[0] * geometry_.overbank_width * pow53(over);
  return c;
}

void HydroModel::validate_state(const HydroState& s) const {
  if (s.depth.size() != geometry_.n_cells())
    throw std::invalid_argument("state: depth size does not match the reach");
  if (s.stage.size() != subdomains_.size())
    throw std::invalid_argument("state: stage size does not match the subdomains");
  for (std::size_t i = 0; i < s.depth.size(); ++i) {
    if (!std::isfinite(s.depth[i]))
      throw NonFiniteStateError(fmt::format("non-finite depth at cell {}", i), static_cast<long>(i));
    if (s.depth[i] < 0.0) throw std::invalid_argument(fmt::format("negative depth at cell {}", i));
  }
  for (std::size_t k = 0; k < s.stage.size(); ++k)
    if (!std::isfinite(s.stage[k]))
      throw NonFiniteStateError(fmt::format("non-finite stage in subdomain {}", k + 1),
                                -static_cast<long>(k + 1));
}

StepResult HydroModel::step(const HydroState& state, double dt, double inflow,
                            const FrictionField& friction) const {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be > 0");
  if (!(inflow >= 0.0) || !std::isfinite(inflow)) throw std::invalid_argument("step: inflow must be >= 0");
  validate_state(state);

  const std::size_t n = geometry_.n_cells();
  const std::size_t m = subdomains_.size();
  const double dx = geometry_.cell_length;
  const double inv_dx = 1.0 / dx;
  const double eps = params_.slope_epsilon;
  const double inv_sqrt_eps = 1.0 / std::sqrt(eps);
  const double sqrt_s0_out = std::sqrt(std::max(geometry_.downstream_slope(), eps));
  const double cw = params_.weir_coefficient;
  const double over_k = friction.ks[0] * geometry_.overbank_width;
  const bool closed = params_.downstream == DownstreamBoundary::Closed;

  StepResult result;
  result.state = state;
  auto& h = result.state.depth;
  std::vector<double> vol_fp(m), stage(state.stage);
  for (std::size_t k = 0; k < m; ++k) vol_fp[k] = hypsometry_[k].volume(state.stage[k]);

  // Per-cell constants for this friction field.
  std::vector<double> area(n), inv_area(n), ks_cell(n), ksb(n);
  for (std::size_t i = 0; i < n; ++i) {
    area[i] = geometry_.width[i] * dx;
    inv_area[i] = 1.0 / area[i];
    ks_cell[i] = friction.ks[static_cast<std::size_t>(geometry_.segment[i])];
    ksb[i] = ks_cell[i] * geometry_.width[i];
  }

  std::vector<double> eta(n), conv(n), speed(n), flux(n + 1), cond(n + 1), weir(n), weir_dc(n);
  std::vector<double> fp_net(m), fp_cond(m), fp_out(m), fp_factor(m), out_rate(n), factor(n);

  double remaining = dt;
  while (remaining > 0.0) {
    // Conveyance K*A*R^(2/3) of each cell and the matching mean velocity per
    // unit sqrt(slope) of the in-bank flow.
    for (std::size_t i = 0; i < n; ++i) {
      const double hi = h[i];
      eta[i] = geometry_.bed[i] + hi;
      if (hi > 0.0) {
        const double cb = cube_root(hi);
        const double h23 = cb * cb;
        conv[i] = ksb[i] * hi * h23;
        speed[i] = ks_cell[i] * h23;
      } else {
        conv[i] = 0.0;
        speed[i] = 0.0;
      }
      const double over = eta[i] - geometry_.bank[i];
      if (over > 0.0) conv[i] += over_k * pow53(over);
    }

    // Face fluxes (positive downstream) and their sensitivity to the
    // water-surface difference.
    flux[0] = inflow;
    cond[0] = 0.0;
    double max_speed = 0.0;  // velocity of the fastest face flow
    for (std::size_t j = 1; j < n; ++j) {
      const double slope = (eta[j - 1] - eta[j]) * inv_dx;
      const std::size_t up = slope >= 0.0 ? j - 1 : j;
      const double c = conv[up];
      const double abs_s = std::abs(slope);
      if (abs_s >= eps) {
        const double root = std::sqrt(abs_s);
        flux[j] = std::copysign(c * root, slope);
        cond[j] = 0.5 * c * inv_dx / root;
        max_speed = std::max(max_speed, speed[up] * root);
      } else {
        flux[j] = c * slope * inv_sqrt_eps;
        cond[j] = c * inv_sqrt_eps * inv_dx;
        max_speed = std::max(max_speed, speed[up] * abs_s * inv_sqrt_eps);
      }
    }
    if (!closed) {
      const std::size_t last = n - 1;
      flux[n] = conv[last] * sqrt_s0_out;
      cond[n] = h[last] > 0.0 ? (5.0 / 3.0) * flux[n] / h[last] : 0.0;
      max_speed = std::max(max_speed, speed[last] * sqrt_s0_out);
    } else {
      flux[n] = 0.0;
      cond[n] = 0.0;
    }

    // Channel <-> floodplain broad-crested weir exchange (positive into the
    // floodplain).
    std::fill(fp_cond.begin(), fp_cond.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      weir[i] = 0.0;
      weir_dc[i] = 0.0;
      const int k = cell_subdomain_[i];
      if (k < 0) continue;
      const double crest = subdomains_[static_cast<std::size_t>(k)].crest;
      const double upper = std::max(eta[i], stage[k]);
      if (upper <= crest) continue;
      const double lower = std::min(eta[i], stage[k]);
      const double head = upper - std::max(lower, crest);
      if (head <= 0.0) continue;
      const double root = std::sqrt(head);
      const double e = cw * cell_weir_length_[i] * head * root;
      const double de = 1.5 * cw * cell_weir_length_[i] * root;
      weir[i] = eta[i] >= stage[k] ? e : -e;
      // Sensitivity to each side's level; the lower side only matters once
      // it submerges the crest.
      weir_dc[i] = de;
      if (lower > crest) fp_cond[k] += de;
    }

    // Sub-step selection: cell Courant limit with celerity (5/3)V, explicit
    // diffusion limit, and the relative depth-change cap.
    double sub = remaining;
    if (max_speed > 0.0) sub = std::min(sub, params_.courant * dx / ((5.0 / 3.0) * max_speed));
    for (std::size_t i = 0; i < n; ++i) {
      const double g = cond[i] + cond[i + 1] + weir_dc[i];
      if (g * sub > params_.diffusive_safety * area[i]) sub = params_.diffusive_safety * area[i] / g;
      const double rate = std::abs(flux[i] - flux[i + 1] - weir[i]) * inv_area[i];
      const double allowed = params_.max_depth_change * std::max(h[i], params_.depth_floor);
      if (rate * sub > allowed) sub = allowed / rate;
    }
    for (std::size_t k = 0; k < m; ++k)
      if (fp_cond[k] > 0.0)
        sub = std::min(sub, params_.diffusive_safety * hypsometry_[k].wet_area(stage[k]) / fp_cond[k]);
    sub = std::max(sub, std::min(params_.min_substep, remaining));
    if (remaining - sub < 1e-9 * dt) sub = remaining;

    // Donor-based limiter: no cell or storage gives more than it holds.
    std::fill(out_rate.begin(), out_rate.end(), 0.0);
    for (std::size_t j = 1; j < n; ++j) {
      if (flux[j] > 0.0) out_rate[j - 1] += flux[j];
      else out_rate[j] -= flux[j];
    }
    out_rate[n - 1] += std::max(flux[n], 0.0);
    std::fill(fp_out.begin(), fp_out.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (weir[i] > 0.0) out_rate[i] += weir[i];
      else if (weir[i] < 0.0) fp_out[static_cast<std::size_t>(cell_subdomain_[i])] -= weir[i];
    }
    bool limited = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double avail = h[i] * area[i];
      const double want = out_rate[i] * sub;
      factor[i] = want > avail ? avail / want : 1.0;
      limited = limited || want > avail;
    }
    for (std::size_t k = 0; k < m; ++k) {
      const double want = fp_out[k] * sub;
      fp_factor[k] = want > vol_fp[k] ? vol_fp[k] / want : 1.0;
      limited = limited || want > vol_fp[k];
    }
    if (limited) {
      for (std::size_t j = 1; j < n; ++j) flux[j] *= flux[j] > 0.0 ? factor[j - 1] : factor[j];
      flux[n] *= factor[n - 1];
      for (std::size_t i = 0; i < n; ++i) {
        if (weir[i] > 0.0) weir[i] *= factor[i];
        else if (weir[i] < 0.0) weir[i] *= fp_factor[static_cast<std::size_t>(cell_subdomain_[i])];
      }
    }

    // Explicit update.
    std::fill(fp_net.begin(), fp_net.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      h[i] += sub * (flux[i] - flux[i + 1] - weir[i]) * inv_area[i];
      if (h[i] < 0.0) h[i] = 0.0;
      if (cell_subdomain_[i] >= 0) fp_net[static_cast<std::size_t>(cell_subdomain_[i])] += weir[i];
    }
    for (std::size_t k = 0; k < m; ++k) {
      if (fp_net[k] == 0.0) continue;
      vol_fp[k] = std::max(vol_fp[k] + sub * fp_net[k], 0.0);
      stage[k] = hypsometry_[k].stage(vol_fp[k]);
    }
    result.inflow_volume += sub * flux[0];
    result.outflow_volume += sub * flux[n];
    remaining -= sub;
    ++result.substeps;
  }

  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(h[i]))
      throw NonFiniteStateError(fmt::format("model diverged: non-finite depth at cell {}", i),
                                static_cast<long>(i));
  result.state.stage = stage;
  result.state.time = state.time + dt;
  return result;
}

Trajectory HydroModel::run(const HydroState& initial, const ControlVector& control,
                           const forcing::Hydrograph& forcing, double t_a, double t_b,
                           const RunOptions& options) const {
  if (!(t_b >= t_a)) throw std::invalid_argument("run: window end before start");
  if (initial.time != t_a)
    throw std::invalid_argument(fmt::format("run: initial state at t={} but window starts at {}",
                                            initial.time, t_a));
  if (!(control.mu > 0.0)) throw std::invalid_argument("run: mu must be > 0");
  validate_state(initial);
  Trajectory traj;
  traj.states.push_back(initial);
  if (t_b == t_a) return traj;
  if (forcing.empty() || !forcing.covers(t_a, t_b))
    throw MissingInputError(fmt::format("forcing undefined inside window [{}, {}]", t_a, t_b));

  // Sampling instants on the absolute output grid plus requested extras.
  std::vector<double> instants;
  const double dt_out = params_.output_interval;
  for (double k = std::floor(t_a / dt_out) + 1.0;; k += 1.0) {
    const double t = k * dt_out;
    if (t >= t_b) break;
    if (t > t_a) instants.push_back(t);
  }
  for (double t : options.extra_instants)
    if (t > t_a && t < t_b) instants.push_back(t);
  for (const auto& c : options.corrections)
    if (c.time > t_a && c.time < t_b) instants.push_back(c.time);
  instants.push_back(t_b);
  std::sort(instants.begin(), instants.end());
  instants.erase(std::unique(instants.begin(), instants.end()), instants.end());

  HydroState current = initial;
  double t = t_a;
  for (double next : instants) {
    const double q = control.mu * forcing.mean_over(t, next);
    auto res = step(current, next - t, q, control.friction);
    traj.inflow_volume += res.inflow_volume;
    traj.outflow_volume += res.outflow_volume;
    current = std::move(res.state);
    current.time = next;  // pin to the instant exactly
    for (const auto& c : options.corrections)
      if (c.time == next) current = apply_state_correction(current, c.delta_h);
    traj.states.push_back(current);
    t = next;
  }
  return traj;
}

HydroState HydroModel::apply_state_correction(const HydroState& state,
                                              std::span<const double> delta_h) const {
  if (delta_h.size() != subdomains_.size())
    throw std::invalid_argument("apply_state_correction: one value per subdomain required");
  HydroState out = state;
  for (std::size_t k = 0; k < delta_h.size(); ++k) {
    if (!(std::abs(delta_h[k]) <= kMaxStageCorrection))
      throw std::invalid_argument("apply_state_correction: |delta_h| exceeds 3 m");
    out.stage[k] = std::max(state.stage[k] + delta_h[k], hypsometry_[k].floor());
  }
  return out;
}

double HydroModel::water_level_at(const HydroState& state, std::string_view station) const {
  return water_level_at_cell(state, geometry_.station(station).cell);
}

double HydroModel::water_level_at_cell(const HydroState& state, std::size_t cell) const {
  return geometry_.bed.at(cell) + state.depth.at(cell);
}

WetMask HydroModel::flood_extent(const HydroState& state, std::size_t k) const {
  const auto& dem = subdomains_.at(k).dem;
  WetMask mask{dem.header(), std::vector<std::int8_t>(dem.values().size())};
  const double s = state.stage.at(k);
  // A storage cell sitting at its floor holds no water and shows no extent.
  const bool holds_water = s > hypsometry_.at(k).floor();
  for (std::size_t p = 0; p < mask.cells.size(); ++p) {
    if (dem.is_nodata(p)) mask.cells[p] = WetMask::kNoData;
    else mask.cells[p] = holds_water && s >= dem.values()[p] ? WetMask::kWet : WetMask::kDry;
  }
  return mask;
}

double HydroModel::wsr(const HydroState& state, std::size_t k) const {
  const auto mask = flood_extent(state, k);
  const std::size_t valid = mask.valid_count();
  if (valid == 0) throw std::invalid_argument("wsr: subdomain has no valid pixel");
  return static_cast<double>(mask.wet_count()) / static_cast<double>(valid);
}

double HydroModel::channel_volume(const HydroState& state) const {
  double v = 0.0;
  for (std::size_t i = 0; i < state.depth.size(); ++i)
    v += state.depth[i] * geometry_.width[i] * geometry_.cell_length;
  return v;
}

double HydroModel::floodplain_volume(const HydroState& state) const {
  double v = 0.0;
  for (std::size_t k = 0; k < state.stage.size(); ++k) v += hypsometry_[k].volume(state.stage[k]);
  return v;
}

double HydroModel::total_volume(const HydroState& state) const {
  return channel_volume(state) + floodplain_volume(state);
}

double HydroModel::normal_depth(std::size_t cell, double q, const FrictionField& friction) const {
  if (q <= 0.0) return 0.0;
  const double slope = cell + 1 < geometry_.n_cells()
                           ? (geometry_.bed[cell] - geometry_.bed[cell + 1]) / geometry_.cell_length
                           : geometry_.downstream_slope();
  const double root = std::sqrt(std::max(slope, params_.slope_epsilon));
  double lo = 0.0, hi = 1.0;
  while (conveyance(cell, hi, friction) * root < q) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (conveyance(cell, mid, friction) * root < q) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

HydroState HydroModel::initial_state(double inflow, const FrictionField& friction, double time,
                                     double settle) const {
  HydroState s;
  s.time = time;
  for (std::size_t i = 0; i < geometry_.n_cells(); ++i)
    s.depth.push_back(normal_depth(i, inflow, friction));
  for (const auto& h : hypsometry_) s.stage.push_back(h.floor());
  if (settle > 0.0) {
    const double interval = params_.output_interval;
    for (double elapsed = 0.0; elapsed < settle; elapsed += interval)
      s = step(s, std::min(interval, settle - elapsed), inflow, friction).state;
    s.time = time;
  }
  return s;
}

void write_trajectory_csv(const std::filesystem::path& path, const HydroModel& model,
                          const Trajectory& trajectory) {
  csv::Writer w(path, {"time_s", "station", "value_m"});
  for (const auto& s : trajectory.states)
    for (const auto& st : model.geometry().stations)
      w.row({csv::format_double(s.time), st.name,
             csv::format_double(model.water_level_at_cell(s, st.cell))});
}

}  // namespace floodda::hydro
