#pragma once

// CSV ingestion and output. Panels are long-format files with header
// "i,t,y,x1,...,xp", one row per (unit, time) cell; the panel must be balanced.
// Numbers are written with 17 significant digits so doubles round-trip exactly.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nnqr/errors.hpp"
#include "nnqr/numcore.hpp"
#include "nnqr/panel.hpp"

namespace nnqr {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char ch = line[k];
    if (quoted) {
      if (ch == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          field.push_back('"');
          ++k;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  if (quoted) throw DataError("unterminated quoted field");
  out.push_back(std::move(field));
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

/// Parses a finite double occupying the whole field.
inline bool parse_double(const std::string& text, double& out) {
  const std::string s = trim(text);
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

struct LoadedPanel {
  PanelData data;
  /// Unit and time identifiers in row / column order.
  std::vector<std::string> units;
  std::vector<std::string> times;
  std::vector<std::string> covariate_names;
};

namespace detail {

/// Identifier order: numeric ids compare by value, anything else lexicographically after numbers.
struct IdLess {
  bool operator()(const std::string& a, const std::string& b) const {
    double x = 0.0, y = 0.0;
    const bool na = parse_double(a, x);
    const bool nb = parse_double(b, y);
    if (na && nb) {
      if (x != y) return x < y;
      return a < b;
    }
    if (na != nb) return na;
    return a < b;
  }
};

}  // namespace detail

inline LoadedPanel read_panel(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);
  if (header.size() < 3 || header[0] != "i" || header[1] != "t" || header[2] != "y") {
    throw DataError(source + ": header must start with i,t,y");
  }
  const std::size_t p = header.size() - 3;

  struct Row {
    std::string unit, time;
    std::vector<double> values;  // y, x1..xp
  };
  std::vector<Row> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty() || trim(line) == "\r") continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(cells.size()));
    }
    Row r;
    r.unit = trim(cells[0]);
    r.time = trim(cells[1]);
    if (r.unit.empty() || r.time.empty()) throw DataError(source + ":" + std::to_string(lineno) + ": missing id");
    r.values.resize(p + 1);
    for (std::size_t k = 0; k < p + 1; ++k) {
      const std::string& cell = cells[k + 2];
      if (trim(cell).empty()) {
        throw DataError(source + ":" + std::to_string(lineno) + ": missing value in column " + header[k + 2]);
      }
      if (!parse_double(cell, r.values[k])) {
        throw DataError(source + ":" + std::to_string(lineno) + ": non-numeric value '" + cell + "' in column " +
                        header[k + 2]);
      }
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError(source + ": no data rows");

  std::map<std::string, Eigen::Index, detail::IdLess> unit_index, time_index;
  for (const Row& r : rows) {
    unit_index.emplace(r.unit, 0);
    time_index.emplace(r.time, 0);
  }
  LoadedPanel out;
  for (auto& [id, idx] : unit_index) {
    idx = static_cast<Eigen::Index>(out.units.size());
    out.units.push_back(id);
  }
  for (auto& [id, idx] : time_index) {
    idx = static_cast<Eigen::Index>(out.times.size());
    out.times.push_back(id);
  }
  const auto n = static_cast<Eigen::Index>(out.units.size());
  const auto t = static_cast<Eigen::Index>(out.times.size());

  Matrix y(n, t);
  std::vector<Matrix> x(p, Matrix(n, t));
  std::vector<char> seen(static_cast<std::size_t>(n * t), 0);
  for (const Row& r : rows) {
    const Eigen::Index i = unit_index.at(r.unit);
    const Eigen::Index s = time_index.at(r.time);
    char& flag = seen[static_cast<std::size_t>(i * t + s)];
    if (flag) throw DataError(source + ": duplicate cell (" + r.unit + "," + r.time + ")");
    flag = 1;
    y(i, s) = r.values[0];
    for (std::size_t k = 0; k < p; ++k) x[k](i, s) = r.values[k + 1];
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index s = 0; s < t; ++s) {
      if (!seen[static_cast<std::size_t>(i * t + s)]) {
        throw DataError(source + ": unbalanced panel, cell (" + out.units[static_cast<std::size_t>(i)] + "," +
                        out.times[static_cast<std::size_t>(s)] + ") is missing");
      }
    }
  }
  out.covariate_names.assign(header.begin() + 3, header.end());
  out.data = PanelData(std::move(y), std::move(x));
  return out;
}

inline LoadedPanel load_panel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open panel file '" + path + "'");
  return read_panel(in, path);
}

inline std::vector<std::string> default_ids(Eigen::Index count) {
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index k = 1; k <= count; ++k) ids.push_back(std::to_string(k));
  return ids;
}

inline void write_panel(std::ostream& out, const PanelData& data) {
  out << "i,t,y";
  for (Eigen::Index j = 1; j <= data.p(); ++j) out << ",x" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < data.N(); ++i) {
    for (Eigen::Index s = 0; s < data.T(); ++s) {
      out << (i + 1) << ',' << (s + 1) << ',' << format_double(data.Y(i, s));
      for (const Matrix& x : data.X) out << ',' << format_double(x(i, s));
      out << '\n';
    }
  }
}

namespace detail {

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace detail

inline void save_panel(const std::string& path, const PanelData& data) {
  auto out = detail::open_output(path);
  write_panel(out, data);
}

/// Matrix as CSV: header "i,<column ids>", one row per unit.
inline void save_matrix(const std::string& path, const Matrix& m, const std::vector<std::string>& row_ids,
                        const std::vector<std::string>& col_ids) {
  if (static_cast<Eigen::Index>(row_ids.size()) != m.rows() || static_cast<Eigen::Index>(col_ids.size()) != m.cols()) {
    detail::invalid("matrix id lists do not match its shape");
  }
  auto out = detail::open_output(path);
  out << 'i';
  for (const auto& c : col_ids) out << ',' << c;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << row_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index s = 0; s < m.cols(); ++s) out << ',' << format_double(m(i, s));
    out << '\n';
  }
}

/// Reads a matrix written by save_matrix (ids are discarded).
inline Matrix load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open matrix file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const std::size_t cols = split_csv_line(line).size() - 1;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != cols + 1) throw DataError(path + ": ragged matrix row");
    std::vector<double> row(cols);
    for (std::size_t k = 0; k < cols; ++k) {
      if (!parse_double(cells[k + 1], row[k])) throw DataError(path + ": non-numeric matrix entry");
    }
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < cols; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  return m;
}

/// Two-column CSV "<index_name>,value" with 1-based indices.
inline void save_indexed(const std::string& path, const std::string& index_name, const Vector& v) {
  auto out = detail::open_output(path);
  out << index_name << ",value\n";
  for (Eigen::Index k = 0; k < v.size(); ++k) out << (k + 1) << ',' << format_double(v(k)) << '\n';
}

}  // namespace nnqr
