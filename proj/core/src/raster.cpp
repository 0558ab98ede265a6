#include "floodda/raster.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "floodda/error.hpp"

namespace floodda {

DemRaster::DemRaster(GridHeader header, std::vector<double> elevation)
    : header_(header), elevation_(std::move(elevation)) {
  if (header_.n_rows == 0 || header_.n_cols == 0)
    throw std::invalid_argument("DemRaster: empty grid");
  if (elevation_.size() != header_.size())
    throw std::invalid_argument("DemRaster: value count does not match header");
  if (!(header_.cell_size > 0.0)) throw std::invalid_argument("DemRaster: cell_size must be > 0");
  min_ = std::numeric_limits<double>::infinity();
  max_ = -std::numeric_limits<double>::infinity();
  for (double z : elevation_) {
    if (z == header_.nodata) continue;
    if (!std::isfinite(z)) throw std::invalid_argument("DemRaster: non-finite elevation");
    ++valid_count_;
    min_ = std::min(min_, z);
    max_ = std::max(max_, z);
  }
  if (valid_count_ == 0) throw std::invalid_argument("DemRaster: no valid pixel");
}

std::size_t WetMask::wet_count() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), kWet));
}

std::size_t WetMask::valid_count() const {
  return cells.size() - static_cast<std::size_t>(std::count(cells.begin(), cells.end(), kNoData));
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

struct ParsedGrid {
  GridHeader header;
  std::vector<double> values;
};

ParsedGrid parse(std::istream& in, const std::string& source) {
  ParsedGrid out;
  bool have_rows = false, have_cols = false, have_size = false;
  bool x_center = false, y_center = false;
  double x = 0.0, y = 0.0;
  // Header lines are "key value"; the first token that parses as a number
  // starts the data block.
  std::string token;
  std::streampos data_start = in.tellg();
  while (in >> token) {
    const std::string key = lower(token);
    if (key == "ncols" || key == "nrows" || key == "xllcorner" || key == "yllcorner" ||
        key == "xllcenter" || key == "yllcenter" || key == "cellsize" || key == "nodata_value") {
      double v = 0.0;
      if (!(in >> v)) throw MissingInputError(source + ": malformed header entry '" + token + "'");
      if (key == "ncols") { out.header.n_cols = static_cast<std::size_t>(v); have_cols = true; }
      else if (key == "nrows") { out.header.n_rows = static_cast<std::size_t>(v); have_rows = true; }
      else if (key == "xllcorner") x = v;
      else if (key == "yllcorner") y = v;
      else if (key == "xllcenter") { x = v; x_center = true; }
      else if (key == "yllcenter") { y = v; y_center = true; }
      else if (key == "cellsize") { out.header.cell_size = v; have_size = true; }
      else out.header.nodata = v;
      data_start = in.tellg();
    } else {
      in.clear();
      in.seekg(data_start);
      break;
    }
  }
  if (!have_rows || !have_cols || !have_size)
    throw MissingInputError(source + ": ESRI ASCII header requires ncols, nrows and cellsize");
  out.header.x_origin = x_center ? x - 0.5 * out.header.cell_size : x;
  out.header.y_origin = y_center ? y - 0.5 * out.header.cell_size : y;
  out.values.reserve(out.header.size());
  double v = 0.0;
  while (out.values.size() < out.header.size() && in >> v) out.values.push_back(v);
  if (out.values.size() != out.header.size()) {
    std::ostringstream msg;
    msg << source << ": expected " << out.header.size() << " values, read " << out.values.size();
    throw MissingInputError(msg.str());
  }
  return out;
}

void write_header(std::ostream& out, const GridHeader& h) {
  out << std::setprecision(17);
  out << "ncols " << h.n_cols << "\n"
      << "nrows " << h.n_rows << "\n"
      << "xllcorner " << h.x_origin << "\n"
      << "yllcorner " << h.y_origin << "\n"
      << "cellsize " << h.cell_size << "\n"
      << "NODATA_value " << h.nodata << "\n";
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path.string());
  return out;
}

}  // namespace

DemRaster parse_ascii_grid(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  auto parsed = parse(in, source);
  try {
    return DemRaster(parsed.header, std::move(parsed.values));
  } catch (const std::invalid_argument& e) {
    throw MissingInputError(source + ": " + e.what());
  }
}

DemRaster read_ascii_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open raster: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_ascii_grid(buffer.str(), path.string());
}

void write_ascii_grid(const std::filesystem::path& path, const DemRaster& dem) {
  auto out = open_out(path);
  write_header(out, dem.header());
  const auto& v = dem.values();
  for (std::size_t r = 0; r < dem.n_rows(); ++r) {
    for (std::size_t c = 0; c < dem.n_cols(); ++c) {
      if (c) out << ' ';
      out << v[r * dem.n_cols() + c];
    }
    out << '\n';
  }
}

void write_ascii_grid(const std::filesystem::path& path, const WetMask& mask) {
  IntRaster r{mask.header, {}};
  r.header.nodata = -9999;
  r.cells.reserve(mask.cells.size());
  for (auto c : mask.cells) r.cells.push_back(c == WetMask::kNoData ? -9999 : c);
  write_ascii_grid(path, r);
}

void write_ascii_grid(const std::filesystem::path& path, const IntRaster& raster) {
  auto out = open_out(path);
  write_header(out, raster.header);
  for (std::size_t r = 0; r < raster.header.n_rows; ++r) {
    for (std::size_t c = 0; c < raster.header.n_cols; ++c) {
      if (c) out << ' ';
      out << raster.cells[r * raster.header.n_cols + c];
    }
    out << '\n';
  }
}

WetMask read_wet_mask(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open mask: " + path.string());
  auto parsed = parse(in, path.string());
  WetMask mask{parsed.header, {}};
  mask.cells.reserve(parsed.values.size());
  for (double v : parsed.values) {
    if (v == parsed.header.nodata) mask.cells.push_back(WetMask::kNoData);
    else mask.cells.push_back(v != 0.0 ? WetMask::kWet : WetMask::kDry);
  }
  return mask;
}

}  // namespace floodda
