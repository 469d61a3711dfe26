#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fdre/core.hpp"

namespace fdre {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline double parse_real(std::string_view cell, std::size_t row, const std::string& column) {
  const std::string_view t = trim(cell);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw IngestError("csv: non-numeric cell '" + std::string(cell) + "' at row " +
                      std::to_string(row) + ", column '" + column + "'");
  return value;
}

}  // namespace detail

// UTF-8, comma-separated, header row, decimal-point reals. Row numbers in
// error messages are 1-based data rows (the header is row 0).
inline LabeledData load_csv(const std::string& path,
                            const std::optional<std::string>& label_column = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IngestError("csv: cannot open file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw IngestError("csv: empty file '" + path + "'");
  std::vector<std::string> header = detail::split_csv_line(line);
  for (auto& h : header) h = std::string(detail::trim(h));

  std::ptrdiff_t label_idx = -1;
  if (label_column) {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == *label_column) label_idx = static_cast<std::ptrdiff_t>(j);
    if (label_idx < 0)
      throw IngestError("csv: missing column '" + *label_column + "' in '" + path + "'");
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw IngestError("csv: row " + std::to_string(row_no) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    std::vector<double> feat;
    feat.reserve(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (static_cast<std::ptrdiff_t>(j) == label_idx) {
        const double v = detail::parse_real(cells[j], row_no, header[j]);
        labels.push_back(static_cast<int>(std::llround(v)));
      } else {
        feat.push_back(detail::parse_real(cells[j], row_no, header[j]));
      }
    }
    rows.push_back(std::move(feat));
  }
  if (rows.empty()) throw IngestError("csv: no data rows in '" + path + "'");

  Matrix values(static_cast<Eigen::Index>(rows.size()),
                static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

  LabeledData out{DataMatrix(std::move(values)), std::move(labels)};
  out.validate("csv");
  return out;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const Matrix& values) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw IngestError("csv: cannot write file '" + path + "'");
  out.precision(17);
  for (std::size_t j = 0; j < header.size(); ++j)
    out << header[j] << (j + 1 < header.size() ? "," : "\n");
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      out << values(i, j) << (j + 1 < values.cols() ? "," : "\n");
}

}  // namespace fdre
