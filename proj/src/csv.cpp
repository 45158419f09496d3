#include "cfm/csv.hpp"

#include "cfm/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace cfm {

std::string format_points_csv(const Mat& points) {
  std::string out;
  for (Eigen::Index d = 0; d < points.cols(); ++d) out += (d ? ",x" : "x") + std::to_string(d);
  out += '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index d = 0; d < points.cols(); ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", points(i, d));
      if (d) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Mat parse_points_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("csv: missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.empty()) throw IoError("csv: empty header row");
  const auto dim = static_cast<Eigen::Index>(header.size());
  std::vector<double> values;
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (static_cast<Eigen::Index>(cells.size()) != dim) {
      throw IoError("csv: row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " columns, expected " +
                    std::to_string(dim));
    }
    for (const auto& c : cells) {
      double v = 0.0;
      const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (res.ec != std::errc() || res.ptr != c.data() + c.size()) {
        throw IoError("csv: row " + std::to_string(row) + ": cannot parse '" + c + "'");
      }
      values.push_back(v);
    }
  }
  const auto n = static_cast<Eigen::Index>(values.size()) / dim;
  Mat out(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index d = 0; d < dim; ++d) out(i, d) = values[static_cast<std::size_t>(i * dim + d)];
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_points_csv(const std::filesystem::path& path, const Mat& points) {
  write_text_file(path, format_points_csv(points));
}

Mat read_points_csv(const std::filesystem::path& path) { return parse_points_csv(read_text_file(path)); }

}  // namespace cfm
