#pragma once

// Plain-text formats used by the command-line tool.
//
//   histogram CSV : one weight per line
//   point CSV     : d coordinate columns, then a weight column
//   cost CSV      : dense row-major matrix
//   raster CSV    : dense row-major grid, preceded by "# shape: n1,n2"
//
// Lines starting with '#' are comments; "# normalize" rescales weights to sum 1.

#include "otkit/core.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace otkit::io {

namespace detail {

struct CsvTable {
  std::vector<std::vector<double>> rows;
  bool normalize = false;
  std::vector<Index> shape;  // from "# shape: ..."
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& tok, const std::string& where) {
  const std::string t = trim(tok);
  if (t.empty()) throw InputError(where + ": empty field");
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw InputError(where + ": not a number: '" + t + "'");
  }
  if (used != t.size()) throw InputError(where + ": not a number: '" + t + "'");
  if (!std::isfinite(v)) throw InputError(where + ": non-finite value");
  return v;
}

inline CsvTable read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open file");
  CsvTable t;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty()) continue;
    if (s[0] == '#') {
      const std::string body = trim(s.substr(1));
      if (body == "normalize") t.normalize = true;
      if (body.rfind("shape:", 0) == 0) {
        std::stringstream ss(body.substr(6));
        std::string tok;
        while (std::getline(ss, tok, ','))
          t.shape.push_back(static_cast<Index>(parse_number(tok, path + ":" + std::to_string(lineno))));
      }
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(parse_number(tok, path + ":" + std::to_string(lineno)));
    if (!t.rows.empty() && row.size() != t.rows.front().size())
      throw InputError(path + ":" + std::to_string(lineno) + ": inconsistent column count");
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw InputError(path + ": no data rows");
  return t;
}

inline Vector finish_weights(Vector w, bool normalize, const std::string& path) {
  if (w.minCoeff() < 0.0) throw InputError(path + ": negative weight");
  if (normalize) {
    const double s = w.sum();
    if (!(s > 0.0)) throw InputError(path + ": weights sum to zero");
    w /= s;
  }
  if (std::abs(w.sum() - 1.0) > kProbabilityTolerance)
    throw InputError(path + ": weights must sum to 1 (add '# normalize' to rescale)");
  return w;
}

}  // namespace detail

/// Histogram CSV: one weight per line.
inline Vector read_histogram(const std::string& path) {
  const detail::CsvTable t = detail::read_table(path);
  if (t.rows.front().size() != 1) throw InputError(path + ": histogram CSV needs exactly one column");
  Vector w(static_cast<Index>(t.rows.size()));
  for (std::size_t k = 0; k < t.rows.size(); ++k) w[static_cast<Index>(k)] = t.rows[k][0];
  return detail::finish_weights(std::move(w), t.normalize, path);
}

struct PointCloud {
  Matrix points;
  Vector weights;
};

/// Point CSV: d coordinates then a weight on every line.
inline PointCloud read_points(const std::string& path) {
  const detail::CsvTable t = detail::read_table(path);
  const auto cols = static_cast<Index>(t.rows.front().size());
  if (cols < 2) throw InputError(path + ": point CSV needs coordinates and a weight column");
  PointCloud pc{Matrix(static_cast<Index>(t.rows.size()), cols - 1), Vector(static_cast<Index>(t.rows.size()))};
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    for (Index c = 0; c + 1 < cols; ++c) pc.points(static_cast<Index>(k), c) = t.rows[k][static_cast<std::size_t>(c)];
    pc.weights[static_cast<Index>(k)] = t.rows[k].back();
  }
  pc.weights = detail::finish_weights(std::move(pc.weights), t.normalize, path);
  return pc;
}

/// Dense row-major matrix.
inline Matrix read_matrix(const std::string& path) {
  const detail::CsvTable t = detail::read_table(path);
  Matrix M(static_cast<Index>(t.rows.size()), static_cast<Index>(t.rows.front().size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < t.rows[i].size(); ++j) M(static_cast<Index>(i), static_cast<Index>(j)) = t.rows[i][j];
  return M;
}

struct Raster {
  Vector values;  // row-major n1 x n2
  Index n1 = 0;
  Index n2 = 1;
};

/// Grid CSV with a "# shape: n1,n2" header; a single column without a header
/// is read as an n x 1 grid.
inline Raster read_raster(const std::string& path) {
  const detail::CsvTable t = detail::read_table(path);
  Raster r;
  r.n1 = static_cast<Index>(t.rows.size());
  r.n2 = static_cast<Index>(t.rows.front().size());
  if (!t.shape.empty()) {
    if (t.shape.size() != 2 || t.shape[0] != r.n1 || t.shape[1] != r.n2)
      throw InputError(path + ": '# shape' header does not match the data");
  }
  r.values.resize(r.n1 * r.n2);
  for (Index i = 0; i < r.n1; ++i)
    for (Index j = 0; j < r.n2; ++j) r.values[i * r.n2 + j] = t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  r.values = detail::finish_weights(std::move(r.values), t.normalize, path);
  return r;
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(path + ": cannot write file");
  out << text;
}

inline std::string histogram_csv(const Vector& w) {
  std::string s;
  for (Index i = 0; i < w.size(); ++i) s += format_number(w[i]) + "\n";
  return s;
}

inline std::string raster_csv(const Vector& w, Index n1, Index n2) {
  std::string s = "# shape: " + std::to_string(n1) + "," + std::to_string(n2) + "\n";
  for (Index i = 0; i < n1; ++i) {
    for (Index j = 0; j < n2; ++j) {
      if (j) s += ",";
      s += format_number(w[i * n2 + j]);
    }
    s += "\n";
  }
  return s;
}

inline std::string points_csv(const Matrix& x, const Vector& w) {
  std::string s;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index c = 0; c < x.cols(); ++c) s += format_number(x(i, c)) + ",";
    s += format_number(w[i]) + "\n";
  }
  return s;
}

/// Triplets i,j,mass for entries above `threshold`.
inline std::string plan_triplets_csv(const Matrix& P, double threshold = 1e-12) {
  std::string s = "i,j,mass\n";
  for (Index i = 0; i < P.rows(); ++i)
    for (Index j = 0; j < P.cols(); ++j)
      if (P(i, j) > threshold) s += std::to_string(i) + "," + std::to_string(j) + "," + format_number(P(i, j)) + "\n";
  return s;
}

}  // namespace otkit::io
