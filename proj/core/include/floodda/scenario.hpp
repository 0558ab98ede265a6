#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "floodda/hydro.hpp"
#include "floodda/raster.hpp"

namespace floodda::scenario {

/// Tilted valley-side raster: elevation rises across the columns from
/// `base` to `base + relief` with a gentle row ripple, so flooded area grows
/// strictly with stage.
struct SyntheticDemParams {
  std::size_t n_rows = 30;
  std::size_t n_cols = 30;
  double cell_size = 20.0;
  double base = 0.0;       // lowest elevation, m
  double relief = 5.0;     // m
  double exponent = 1.3;   // curvature of the cross-valley profile
  double ripple = 0.15;    // m
  double phase = 0.0;
  bool nodata_corner = true;  // mask a small corner triangle as nodata
};

DemRaster make_synthetic_dem(const SyntheticDemParams& params);

struct SubdomainLayout {
  std::size_t first_cell;
  std::size_t end_cell;
};

/// Attached cell ranges of the five default storage cells.
std::vector<SubdomainLayout> default_layout();

/// Builds storage cells on `geometry`: crest at the highest attached bank,
/// weir length = attached reach length * weir_fraction.
std::vector<hydro::FloodplainSubdomain> make_subdomains(const hydro::ReachGeometry& geometry,
                                                        const std::vector<SubdomainLayout>& layout,
                                                        std::vector<DemRaster> dems,
                                                        double weir_fraction = 0.2);

/// Synthetic DEMs matched to the default layout: each floor sits 1 m below
/// the subdomain crest.
std::vector<DemRaster> default_dems(const hydro::ReachGeometry& geometry,
                                    const std::vector<SubdomainLayout>& layout);

/// Default reach, five storage cells and default numerics.
hydro::HydroModel default_model(const hydro::ModelParams& params = {});

}  // namespace floodda::scenario
