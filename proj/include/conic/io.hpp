#ifndef CONIC_IO_HPP
#define CONIC_IO_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "conic/types.hpp"

namespace conic {

using Json = nlohmann::ordered_json;

/// Round-trip formatting (17 significant digits, classic locale); "nan"/"inf" spelled out.
std::string format_double(double v);

/// Comma-separated table with LF endings. Every row must match the header width.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  void add_row(const std::vector<double>& row);
  std::size_t rows() const { return rows_.size(); }
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

/// Writes bytes as-is (no newline translation). Throws Error on I/O failure.
void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

Json to_json(const Vec& v);
Vec vec_from_json(const Json& j, const std::string& what);

/// gnuplot script plotting columns of a CSV (1-based column numbers) to a PNG. The header
/// row does not parse as numbers, so gnuplot skips it.
struct PlotSpec {
  std::string title;
  std::string csv;  // file name, relative to the script
  std::string xlabel;
  std::string ylabel;
  int xcol = 1;
  std::vector<int> ycols;
  std::vector<std::string> labels;
  bool points = false;
};

std::string gnuplot_script(const PlotSpec& spec);

}  // namespace conic

#endif  // CONIC_IO_HPP
