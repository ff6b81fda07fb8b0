#pragma once

// CSV output and input. Bodies are plain RFC-4180 with a header row and '.'
// as decimal separator; numbers are printed with %.15g so repeated runs give
// byte-identical files. Frequency-like columns ending in _hz are written in
// cyclic units (the library works in rad/s).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "transim/error.hpp"
#include "transim/grid.hpp"
#include "transim/time_domain.hpp"
#include "transim/units.hpp"

namespace transim {

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", v == 0.0 ? 0.0 : v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : path_(path), out_(path) {
    if (!out_) throw Error("cannot open " + path.string() + " for writing");
    write_fields(header);
    width_ = header.size();
  }

  void row(const std::vector<double>& values) {
    std::vector<std::string> f;
    f.reserve(values.size());
    for (double v : values) f.push_back(format_number(v));
    write_fields(f);
  }

  void row(const std::vector<std::string>& fields) { write_fields(fields); }

  const std::filesystem::path& path() const { return path_; }

 private:
  void write_fields(const std::vector<std::string>& fields) {
    if (width_ && fields.size() != width_) throw Error("CSV row width does not match the header");
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_field(fields[i]);
    }
    out_ << '\n';
  }

  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t width_ = 0;
};

/// Axis conversion for CSV columns: names ending in _hz are angular rates
/// stored as rad/s and written as Hz.
inline double column_value(const std::string& name, double v) {
  return name.size() > 3 && name.compare(name.size() - 3, 3, "_hz") == 0 ? cyclic(v) : v;
}

/// Long-format grid: <y_name>, <x_name>, re, im, abs2.
inline void write_grid_csv(const std::filesystem::path& path, const SweepGrid2D& grid) {
  grid.check_shape();
  CsvWriter w(path, {grid.y_name, grid.x_name, "re", "im", "abs2"});
  for (std::size_t r = 0; r < grid.rows(); ++r)
    for (std::size_t c = 0; c < grid.cols(); ++c) {
      const auto v = grid.at(r, c);
      w.row(std::vector<double>{column_value(grid.y_name, grid.y[r]), column_value(grid.x_name, grid.x[c]), v.real(),
                                v.imag(), std::norm(v)});
    }
}

/// Real-valued grid: <y_name>, <x_name>, <value_name>.
inline void write_real_grid_csv(const std::filesystem::path& path, const SweepGrid2D& grid, const std::string& value_name) {
  grid.check_shape();
  CsvWriter w(path, {grid.y_name, grid.x_name, value_name});
  for (std::size_t r = 0; r < grid.rows(); ++r)
    for (std::size_t c = 0; c < grid.cols(); ++c)
      w.row(std::vector<double>{column_value(grid.y_name, grid.y[r]), column_value(grid.x_name, grid.x[c]),
                                grid.at(r, c).real()});
}

/// time_s followed by one n_<label> occupation column per mode.
inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::vector<std::string> header{"time_s"};
  for (const auto& l : traj.labels) header.push_back("n_" + l);
  CsvWriter w(path, header);
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    std::vector<double> row{traj.times[k]};
    for (const auto& o : traj.occupations) row.push_back(o[k]);
    w.row(row);
  }
}

// ---------------------------------------------------------------------------
// Reading

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  bool has(const std::string& name) const { return std::find(header.begin(), header.end(), name) != header.end(); }

  std::vector<double> column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error("CSV has no column '" + name + "'");
    const auto i = static_cast<std::size_t>(it - header.begin());
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[i]);
    return out;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

/// Numeric CSV with a header row. Non-numeric cells are an error.
inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + " is empty");
  t.header = detail::split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != t.header.size())
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) + " fields");
    std::vector<double> row;
    for (const auto& cell : f) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cell.size())
        throw Error(path.string() + ":" + std::to_string(lineno) + ": non-numeric value '" + cell + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Rebuilds a grid from long-format rows (y, x, value...). Axis values are
/// taken in order of first appearance; column names ending in _hz are
/// converted back to rad/s. Real-valued files fill the real part only.
inline SweepGrid2D grid_from_table(const CsvTable& t, const std::string& y_col, const std::string& x_col,
                                   const std::string& value_col, const std::string& imag_col = "") {
  const auto ys = t.column(y_col), xs = t.column(x_col), vs = t.column(value_col);
  const auto is = imag_col.empty() ? std::vector<double>(vs.size(), 0.0) : t.column(imag_col);
  auto to_internal = [](const std::string& name, double v) {
    return name.size() > 3 && name.compare(name.size() - 3, 3, "_hz") == 0 ? angular(v) : v;
  };
  std::vector<double> yax, xax;
  std::map<double, std::size_t> yi, xi;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    if (!yi.count(ys[k])) {
      yi[ys[k]] = yax.size();
      yax.push_back(ys[k]);
    }
    if (!xi.count(xs[k])) {
      xi[xs[k]] = xax.size();
      xax.push_back(xs[k]);
    }
  }
  if (yax.size() * xax.size() != ys.size()) throw Error("grid CSV is not a complete rectangular grid");
  std::vector<double> yconv, xconv;
  for (double v : yax) yconv.push_back(to_internal(y_col, v));
  for (double v : xax) xconv.push_back(to_internal(x_col, v));
  SweepGrid2D g(xconv, yconv);
  g.y_name = y_col;
  g.x_name = x_col;
  for (std::size_t k = 0; k < ys.size(); ++k) g.at(yi[ys[k]], xi[xs[k]]) = cdouble(vs[k], is[k]);
  return g;
}

}  // namespace transim
