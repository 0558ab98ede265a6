#include <filesystem>

#include <gtest/gtest.h>

#include "floodda/csv.hpp"
#include "floodda/raster.hpp"

#include "test_util.hpp"

using namespace floodda;

TEST(Raster, ParsesCornerHeader) {
  const auto dem = parse_ascii_grid(
      "ncols 3\nnrows 2\nxllcorner 10\nyllcorner 20\ncellsize 5\nNODATA_value -9999\n"
      "1 2 3\n4 -9999 6\n");
  EXPECT_EQ(dem.n_rows(), 2u);
  EXPECT_EQ(dem.n_cols(), 3u);
  EXPECT_DOUBLE_EQ(dem.at(1, 2), 6.0);
  EXPECT_EQ(dem.valid_count(), 5u);
  EXPECT_DOUBLE_EQ(dem.min_elevation(), 1.0);
  EXPECT_DOUBLE_EQ(dem.max_elevation(), 6.0);
  EXPECT_DOUBLE_EQ(dem.header().x_origin, 10.0);
}

TEST(Raster, CenterHeaderShiftsToCorner) {
  const auto dem = parse_ascii_grid("ncols 1\nnrows 1\nxllcenter 10\nyllcenter 20\ncellsize 4\n7\n");
  EXPECT_DOUBLE_EQ(dem.header().x_origin, 8.0);
  EXPECT_DOUBLE_EQ(dem.header().y_origin, 18.0);
}

TEST(Raster, RejectsMalformedGrids) {
  EXPECT_ANY_THROW(parse_ascii_grid("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n"));
  EXPECT_ANY_THROW(parse_ascii_grid("nrows 1\n1\n"));
}

TEST(Raster, RoundTripsThroughFiles) {
  const test::TempDir dir;
  const auto dem = parse_ascii_grid(
      "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 2.5\nNODATA_value -9999\n0.1 -9999\n3 4.25\n");
  write_ascii_grid(dir.path / "d.asc", dem);
  const auto back = read_ascii_grid(dir.path / "d.asc");
  EXPECT_EQ(back.values(), dem.values());
  EXPECT_DOUBLE_EQ(back.cell_size(), 2.5);

  WetMask m{dem.header(), {1, WetMask::kNoData, 0, 1}};
  write_ascii_grid(dir.path / "m.asc", m);
  const auto mb = read_wet_mask(dir.path / "m.asc");
  EXPECT_EQ(mb.cells, m.cells);
  EXPECT_EQ(mb.wet_count(), 2u);
  EXPECT_EQ(mb.valid_count(), 3u);
}

TEST(Csv, ParsesColumnsByName) {
  const auto t = csv::parse("time_s,wl_m\n0,1.5\n900,1.75\n");
  EXPECT_EQ(t.numbers("wl_m"), (std::vector<double>{1.5, 1.75}));
  EXPECT_EQ(t.strings("time_s")[1], "900");
  EXPECT_ANY_THROW(t.column("missing"));
  EXPECT_ANY_THROW(csv::parse("a,b\n1\n"));
}

TEST(Csv, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 5100.0, 123456789.123456789}) {
    EXPECT_EQ(std::stod(csv::format_double(v)), v);
  }
  EXPECT_EQ(csv::format_double(900.0), "900");
}
