#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace floodda::csv {

/// Comma-separated table with a single header row. Values are kept as text;
/// column accessors convert on demand.
struct Table {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
  std::vector<double> numbers(std::string_view name) const;
  std::vector<std::string> strings(std::string_view name) const;
};

Table read(const std::filesystem::path& path);
Table parse(const std::string& text, const std::string& source = "<memory>");

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

/// Line-oriented writer; creates parent directories.
class Writer {
 public:
  Writer(const std::filesystem::path& path, const std::vector<std::string>& header);

  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
};

}  // namespace floodda::csv
