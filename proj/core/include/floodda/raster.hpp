#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace floodda {

/// Georeferencing shared by every raster in a subdomain.
struct GridHeader {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  double cell_size = 1.0;
  double x_origin = 0.0;  // lower-left corner
  double y_origin = 0.0;
  double nodata = -9999.0;

  std::size_t size() const { return n_rows * n_cols; }
  bool same_shape(const GridHeader& other) const {
    return n_rows == other.n_rows && n_cols == other.n_cols;
  }
};

/// Elevation raster, row-major with row 0 at the top (ESRI ASCII order).
class DemRaster {
 public:
  DemRaster() = default;
  DemRaster(GridHeader header, std::vector<double> elevation);

  const GridHeader& header() const { return header_; }
  std::size_t n_rows() const { return header_.n_rows; }
  std::size_t n_cols() const { return header_.n_cols; }
  double cell_size() const { return header_.cell_size; }
  double pixel_area() const { return header_.cell_size * header_.cell_size; }

  double at(std::size_t row, std::size_t col) const { return elevation_[row * header_.n_cols + col]; }
  const std::vector<double>& values() const { return elevation_; }
  bool is_nodata(std::size_t index) const { return elevation_[index] == header_.nodata; }

  std::size_t valid_count() const { return valid_count_; }
  double min_elevation() const { return min_; }
  double max_elevation() const { return max_; }

 private:
  GridHeader header_;
  std::vector<double> elevation_;
  std::size_t valid_count_ = 0;
  double min_ = 0.0;
  double max_ = 0.0;
};

/// Per-pixel wet/dry classification; nodata pixels carry kNoData.
struct WetMask {
  static constexpr std::int8_t kDry = 0;
  static constexpr std::int8_t kWet = 1;
  static constexpr std::int8_t kNoData = -1;

  GridHeader header;
  std::vector<std::int8_t> cells;

  std::size_t wet_count() const;
  std::size_t valid_count() const;
};

/// Integer raster written with the ESRI ASCII grid layout.
struct IntRaster {
  GridHeader header;
  std::vector<int> cells;
};

// ESRI ASCII grid (.asc) input/output. Both xllcorner and xllcenter headers
// are accepted on input; output always uses the corner convention.
DemRaster read_ascii_grid(const std::filesystem::path& path);
DemRaster parse_ascii_grid(const std::string& text, const std::string& source = "<memory>");
void write_ascii_grid(const std::filesystem::path& path, const DemRaster& dem);
void write_ascii_grid(const std::filesystem::path& path, const WetMask& mask);
void write_ascii_grid(const std::filesystem::path& path, const IntRaster& raster);
WetMask read_wet_mask(const std::filesystem::path& path);

}  // namespace floodda
