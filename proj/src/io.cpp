#include "conic/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <locale>
#include <sstream>

namespace conic {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add_row(const std::vector<double>& row) {
  if (row.size() != header_.size())
    throw Error("csv row has " + std::to_string(row.size()) + " fields, header has " +
                std::to_string(header_.size()));
  rows_.push_back(row);
}

std::string CsvTable::str() const {
  std::string out;
  for (std::size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + header_[i];
  out += '\n';
  for (const auto& row : rows_) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + format_double(row[i]);
    out += '\n';
  }
  return out;
}

void CsvTable::write(const std::filesystem::path& path) const { write_text(path, str()); }

void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw Error("write to '" + path.string() + "' failed");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

Json to_json(const Vec& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

Vec vec_from_json(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw DomainError(what + ": expected a nonempty array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw DomainError(what + ": expected a nonempty array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

std::string gnuplot_script(const PlotSpec& spec) {
  std::string stem = spec.csv.substr(0, spec.csv.rfind('.'));
  std::ostringstream os;
  os << "set datafile separator ','\n"
     << "set terminal pngcairo size 900,650\n"
     << "set output '" << stem << ".png'\n"
     << "set title '" << spec.title << "'\n"
     << "set xlabel '" << spec.xlabel << "'\n"
     << "set ylabel '" << spec.ylabel << "'\n"
     << "set key outside\n"
     << "plot ";
  for (std::size_t i = 0; i < spec.ycols.size(); ++i) {
    if (i) os << ", \\\n     ";
    os << "'" << spec.csv << "' using " << spec.xcol << ":" << spec.ycols[i] << " with "
       << (spec.points ? "points pt 7 ps 0.5" : "lines");
    if (i < spec.labels.size()) os << " title '" << spec.labels[i] << "'";
  }
  os << "\n";
  return os.str();
}

}  // namespace conic
