#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "floodda/control.hpp"
#include "floodda/forcing.hpp"
#include "floodda/raster.hpp"

namespace floodda::hydro {

struct Station {
  std::string name;
  std::size_t cell = 0;
};

/// 1-D river reach discretised into equal cells, ordered upstream to downstream.
struct ReachGeometry {
  double cell_length = 500.0;        // m
  std::vector<double> bed;           // m, strictly decreasing downstream
  std::vector<double> width;         // m
  std::vector<int> segment;          // friction segment 1..6 per cell
  std::vector<double> bank;          // m, overbank conveyance starts above this elevation
  double overbank_width = 400.0;     // m, conveyance width above the bank (floodplain friction)
  std::vector<Station> stations;     // upstream, middle, downstream

  std::size_t n_cells() const { return bed.size(); }
  double downstream_slope() const;
  const Station& station(std::string_view name) const;
  void validate() const;
};

struct GeometryParams {
  std::size_t n_cells = 100;
  double length = 50000.0;
  double upstream_bed = 30.0;
  double slope = 5e-4;
  double width = 150.0;
  double bank_height = 6.0;
  double overbank_width = 400.0;
  std::vector<Station> stations{{"upstream", 2}, {"middle", 50}, {"downstream", 97}};
};

/// Linear bed, uniform width, six contiguous friction segments of (nearly)
/// equal length.
ReachGeometry make_reach(const GeometryParams& params);

/// Stage-volume relation of a floodplain storage cell derived from its DEM:
/// V(stage) = pixel_area * sum(max(stage - z_p, 0)) over valid pixels.
class Hypsometry {
 public:
  Hypsometry() = default;
  explicit Hypsometry(const DemRaster& dem);

  double floor() const { return sorted_.front(); }
  double volume(double stage) const;
  /// Inverse of volume(); volume <= 0 maps to floor().
  double stage(double volume) const;
  /// Plan area of pixels at or below `stage`.
  double wet_area(double stage) const;

 private:
  std::vector<double> sorted_;
  std::vector<double> prefix_;  // prefix_[k] = sum of the k lowest elevations
  double pixel_area_ = 1.0;
};

struct FloodplainSubdomain {
  int id = 1;
  std::size_t first_cell = 0;  // attached channel cells [first_cell, end_cell)
  std::size_t end_cell = 0;
  double crest = 0.0;          // m
  double weir_length = 0.0;    // m
  DemRaster dem;

  std::size_t attached_count() const { return end_cell - first_cell; }
};

/// Instantaneous hydraulic state: channel depths and floodplain stages.
struct HydroState {
  double time = 0.0;                // s since run epoch
  std::vector<double> depth;        // m per channel cell
  std::vector<double> stage;        // m per floodplain subdomain

  friend bool operator==(const HydroState&, const HydroState&) = default;
};

// Restart file: 8-byte magic "FLDARST1", one version byte, two little-endian
// uint32 counts (cells, subdomains), then little-endian IEEE-754 doubles:
// time, depth[cells], stage[subdomains].
std::vector<std::uint8_t> serialize(const HydroState& state);
HydroState deserialize(std::span<const std::uint8_t> bytes);
void write_restart(const std::filesystem::path& path, const HydroState& state);
HydroState read_restart(const std::filesystem::path& path);

enum class DownstreamBoundary { NormalDepth, Closed };

struct ModelParams {
  double weir_coefficient = 1.7;
  double slope_epsilon = 1e-6;
  double max_depth_change = 0.05;     // fraction of local depth per sub-step
  double depth_floor = 1e-3;          // m
  double courant = 0.9;
  double diffusive_safety = 0.9;
  double min_substep = 1e-3;          // s
  double output_interval = 900.0;     // s
  DownstreamBoundary downstream = DownstreamBoundary::NormalDepth;
};

struct StepResult {
  HydroState state;
  double inflow_volume = 0.0;   // m^3 entering upstream
  double outflow_volume = 0.0;  // m^3 leaving downstream
  std::size_t substeps = 0;
};

/// Uniform floodplain stage correction applied at a given instant.
struct StageCorrection {
  double time = 0.0;
  std::vector<double> delta_h;  // one value per subdomain
};

struct RunOptions {
  /// Additional sampling instants (e.g. satellite overpasses).
  std::vector<double> extra_instants;
  /// Applied once the run reaches each instant; the sample recorded at that
  /// instant is the corrected state.
  std::vector<StageCorrection> corrections;
};

/// States sampled on the absolute output grid, at extra instants and at the
/// window end. The first state is the initial condition.
struct Trajectory {
  std::vector<HydroState> states;
  double inflow_volume = 0.0;
  double outflow_volume = 0.0;

  double start() const { return states.front().time; }
  double end() const { return states.back().time; }
  const HydroState& final_state() const { return states.back(); }
  /// State at exactly time t; throws if t is not a sample instant.
  const HydroState& at(double t) const;
  /// Sample closest to t (ties resolved toward the earlier sample).
  const HydroState& nearest(double t) const;
};

/// Surrogate hydrodynamic model: diffusive-wave channel with Strickler
/// friction and weir-coupled floodplain storage cells. Immutable and safe to
/// share between threads.
class HydroModel {
 public:
  HydroModel(ReachGeometry geometry, std::vector<FloodplainSubdomain> subdomains,
             ModelParams params = {});

  const ReachGeometry& geometry() const { return geometry_; }
  const std::vector<FloodplainSubdomain>& subdomains() const { return subdomains_; }
  const Hypsometry& hypsometry(std::size_t k) const { return hypsometry_.at(k); }
  const ModelParams& params() const { return params_; }
  std::size_t n_subdomains() const { return subdomains_.size(); }

  StepResult step(const HydroState& state, double dt, double inflow,
                  const FrictionField& friction) const;

  /// Integrates over [t_a, t_b] with inflow mu * forcing(t); mu and friction
  /// come from the control vector. Stage corrections are taken from `options`.
  Trajectory run(const HydroState& initial, const ControlVector& control,
                 const forcing::Hydrograph& forcing, double t_a, double t_b,
                 const RunOptions& options = {}) const;

  HydroState apply_state_correction(const HydroState& state,
                                    std::span<const double> delta_h) const;

  double water_level_at(const HydroState& state, std::string_view station) const;
  double water_level_at_cell(const HydroState& state, std::size_t cell) const;
  WetMask flood_extent(const HydroState& state, std::size_t subdomain) const;
  double wsr(const HydroState& state, std::size_t subdomain) const;

  double channel_volume(const HydroState& state) const;
  double floodplain_volume(const HydroState& state) const;
  double total_volume(const HydroState& state) const;

  /// Normal depth of a cell for discharge q (in-bank plus overbank conveyance).
  double normal_depth(std::size_t cell, double q, const FrictionField& friction) const;

  /// Cold start: normal depths for `inflow`, dry floodplain, then `settle`
  /// seconds at constant inflow.
  HydroState initial_state(double inflow, const FrictionField& friction, double time,
                           double settle = 86400.0) const;

  void validate_state(const HydroState& state) const;

 private:
  double conveyance(std::size_t cell, double depth, const FrictionField& friction) const;

  ReachGeometry geometry_;
  std::vector<FloodplainSubdomain> subdomains_;
  std::vector<Hypsometry> hypsometry_;
  ModelParams params_;
  std::vector<int> cell_subdomain_;      // -1 when not attached
  std::vector<double> cell_weir_length_;
};

/// Station series CSV: time_s,station,value_m
void write_trajectory_csv(const std::filesystem::path& path, const HydroModel& model,
                          const Trajectory& trajectory);

}  // namespace floodda::hydro
