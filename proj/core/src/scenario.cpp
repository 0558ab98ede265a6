#include "floodda/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace floodda::scenario {

DemRaster make_synthetic_dem(const SyntheticDemParams& p) {
  if (p.n_rows < 2 || p.n_cols < 2) throw std::invalid_argument("synthetic DEM needs >= 2x2 pixels");
  GridHeader header;
  header.n_rows = p.n_rows;
  header.n_cols = p.n_cols;
  header.cell_size = p.cell_size;
  header.nodata = -9999.0;
  std::vector<double> z(p.n_rows * p.n_cols);
  const double cols = static_cast<double>(p.n_cols - 1);
  for (std::size_t r = 0; r < p.n_rows; ++r) {
    for (std::size_t c = 0; c < p.n_cols; ++c) {
      const double across = static_cast<double>(c) / cols;
      const double wave = 0.5 * (1.0 + std::sin(0.7 * static_cast<double>(r) + p.phase));
      double v = p.base + p.relief * std::pow(across, p.exponent) + p.ripple * wave * across;
      if (p.nodata_corner && r + c < std::min(p.n_rows, p.n_cols) / 5) v = header.nodata;
      z[r * p.n_cols + c] = v;
    }
  }
  return DemRaster(header, std::move(z));
}

std::vector<SubdomainLayout> default_layout() {
  return {{10, 20}, {25, 35}, {42, 52}, {60, 70}, {78, 88}};
}

std::vector<hydro::FloodplainSubdomain> make_subdomains(const hydro::ReachGeometry& geometry,
                                                        const std::vector<SubdomainLayout>& layout,
                                                        std::vector<DemRaster> dems,
                                                        double weir_fraction) {
  if (dems.size() != layout.size()) throw std::invalid_argument("one DEM per subdomain required");
  std::vector<hydro::FloodplainSubdomain> out;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    hydro::FloodplainSubdomain sd;
    sd.id = static_cast<int>(k + 1);
    sd.first_cell = layout[k].first_cell;
    sd.end_cell = layout[k].end_cell;
    double crest = geometry.bank.at(sd.first_cell);
    for (std::size_t i = sd.first_cell; i < sd.end_cell; ++i) crest = std::max(crest, geometry.bank.at(i));
    sd.crest = crest;
    sd.weir_length = static_cast<double>(sd.attached_count()) * geometry.cell_length * weir_fraction;
    sd.dem = std::move(dems[k]);
    out.push_back(std::move(sd));
  }
  return out;
}

std::vector<DemRaster> default_dems(const hydro::ReachGeometry& geometry,
                                    const std::vector<SubdomainLayout>& layout) {
  std::vector<DemRaster> dems;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    double crest = geometry.bank.at(layout[k].first_cell);
    for (std::size_t i = layout[k].first_cell; i < layout[k].end_cell; ++i)
      crest = std::max(crest, geometry.bank.at(i));
    SyntheticDemParams p;
    p.base = crest - 1.0;
    p.relief = 4.0 + 0.5 * static_cast<double>(k);
    p.exponent = 1.1 + 0.1 * static_cast<double>(k);
    p.phase = 0.9 * static_cast<double>(k);
    dems.push_back(make_synthetic_dem(p));
  }
  return dems;
}

hydro::HydroModel default_model(const hydro::ModelParams& params) {
  auto geometry = hydro::make_reach({});
  const auto layout = default_layout();
  auto subdomains = make_subdomains(geometry, layout, default_dems(geometry, layout));
  return hydro::HydroModel(std::move(geometry), std::move(subdomains), params);
}

}  // namespace floodda::scenario
