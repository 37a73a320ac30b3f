#include "tubefield/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tubefield {

std::string format_full(double v) {
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("format_full: to_chars failed");
  return std::string(buf, end);
}

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& columns, const Mat& rows) {
  if (columns.size() != static_cast<std::size_t>(rows.cols())) {
    throw std::invalid_argument("write_csv: header/column mismatch");
  }
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path.string());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (j) out << ',';
    out << columns[j];
  }
  out << '\n';
  std::string line;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (j) line += ',';
      line += format_full(rows(i, j));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw std::runtime_error("write_csv: write failed for " + path.string());
}

Mat read_csv(const std::filesystem::path& path, std::vector<std::string>* columns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("read_csv: empty file " + path.string());
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (columns) *columns = header;
  std::vector<double> values;
  Eigen::Index n_rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t n_cells = 0;
    while (std::getline(ss, cell, ',')) {
      values.push_back(std::stod(cell));
      ++n_cells;
    }
    if (n_cells != header.size()) throw FormatError("read_csv: ragged row in " + path.string());
    ++n_rows;
  }
  Mat out(n_rows, static_cast<Eigen::Index>(header.size()));
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      out(i, j) = values[static_cast<std::size_t>(i) * header.size() + j];
    }
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_text: cannot open " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_text: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace tubefield
