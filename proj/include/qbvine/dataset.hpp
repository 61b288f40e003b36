#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qbvine/errors.hpp"
#include "qbvine/rng.hpp"

namespace qbvine {

struct Standardization {
  std::vector<double> mean;
  std::vector<double> sd;
};

// Rectangular numeric table with optional per-column standardization state
// and an optional target column (supervised tasks).
struct Dataset {
  std::vector<std::vector<double>> values;  // row-major, n x d
  std::vector<std::string> column_names;
  std::optional<Standardization> standardization;
  std::optional<std::size_t> target_column;

  std::size_t n_rows() const { return values.size(); }
  std::size_t n_cols() const { return values.empty() ? 0 : values.front().size(); }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> col;
    col.reserve(values.size());
    for (const auto& row : values) col.push_back(row[j]);
    return col;
  }
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delimiter)) cells.push_back(cell);
  if (!line.empty() && line.back() == delimiter) cells.emplace_back();
  return cells;
}

inline double parse_cell(const std::string& raw, std::size_t row, std::size_t col) {
  std::size_t begin = raw.find_first_not_of(" \t\r");
  if (begin == std::string::npos)
    throw DataError("csv: empty cell at row " + std::to_string(row) + ", column " +
                    std::to_string(col));
  std::size_t end = raw.find_last_not_of(" \t\r");
  const char* first = raw.data() + begin;
  const char* last = raw.data() + end + 1;
  double value{};
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw DataError("csv: non-numeric cell '" + raw + "' at row " + std::to_string(row) +
                    ", column " + std::to_string(col));
  if (!std::isfinite(value))
    throw DataError("csv: non-finite cell at row " + std::to_string(row) + ", column " +
                    std::to_string(col));
  return value;
}

}  // namespace detail

// Loads a '.'-decimal numeric CSV. Rows and columns in errors are 1-based
// data coordinates (the header row, when present, is not counted).
inline Dataset load_csv(const std::string& path, bool has_header = false,
                        char delimiter = ',') {
  std::ifstream in(path);
  if (!in) throw DataError("csv: cannot open file: " + path);

  Dataset ds;
  std::string line;
  std::size_t row_idx = 0;
  bool first_line = true;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_line(line, delimiter);
    if (first_line) {
      first_line = false;
      width = cells.size();
      if (has_header) {
        ds.column_names = cells;
        continue;
      }
    }
    if (cells.size() != width)
      throw DataError("csv: ragged row " + std::to_string(row_idx + 1) + " (expected " +
                      std::to_string(width) + " cells, got " +
                      std::to_string(cells.size()) + ")");
    ++row_idx;
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c)
      row.push_back(detail::parse_cell(cells[c], row_idx, c + 1));
    ds.values.push_back(std::move(row));
  }
  if (ds.values.empty()) throw DataError("csv: no data rows in " + path);
  if (ds.column_names.empty())
    for (std::size_t c = 0; c < width; ++c)
      ds.column_names.push_back("col" + std::to_string(c));
  return ds;
}

inline void save_csv(const std::string& path,
                     const std::vector<std::vector<double>>& rows,
                     const std::vector<std::string>& header = {}) {
  std::ofstream out(path);
  if (!out) throw DataError("csv: cannot write file: " + path);
  out.precision(17);
  if (!header.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      out << header[c] << (c + 1 < header.size() ? "," : "");
    out << "\n";
  }
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c)
      out << row[c] << (c + 1 < row.size() ? "," : "");
    out << "\n";
  }
}

// Centers and scales every column to mean 0, sd 1, recording the affine map
// so samples and densities can be pushed back to the original scale.
inline Dataset standardize(const Dataset& ds) {
  if (ds.standardization)
    return ds;  // already standardized; repeated application is a no-op
  Dataset out = ds;
  const std::size_t n = ds.n_rows(), d = ds.n_cols();
  Standardization st;
  st.mean.resize(d);
  st.sd.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (const auto& row : ds.values) m += row[j];
    m /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& row : ds.values) ss += (row[j] - m) * (row[j] - m);
    const double sd = std::sqrt(ss / static_cast<double>(n > 1 ? n - 1 : 1));
    if (!(sd > 0.0))
      throw DataError("standardize: column " + std::to_string(j + 1) + " is constant");
    st.mean[j] = m;
    st.sd[j] = sd;
  }
  for (auto& row : out.values)
    for (std::size_t j = 0; j < d; ++j) row[j] = (row[j] - st.mean[j]) / st.sd[j];
  out.standardization = st;
  return out;
}

inline Dataset destandardize(const Dataset& ds) {
  if (!ds.standardization) return ds;
  Dataset out = ds;
  const auto& st = *ds.standardization;
  for (auto& row : out.values)
    for (std::size_t j = 0; j < row.size(); ++j)
      row[j] = row[j] * st.sd[j] + st.mean[j];
  out.standardization.reset();
  return out;
}

// Seeded uniform shuffle, then a disjoint covering split.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                         std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split: train_fraction must lie in (0,1)");
  const std::size_t n = ds.n_rows();
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n)
    throw DataError("split: degenerate split sizes for n = " + std::to_string(n));

  Rng rng(derive_seed(seed, {seed_tag::kSplit}));
  std::vector<std::size_t> idx = rng.permutation(n);

  Dataset train, test;
  train.column_names = test.column_names = ds.column_names;
  train.target_column = test.target_column = ds.target_column;
  train.standardization = test.standardization = ds.standardization;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) train.values.push_back(ds.values[idx[i]]);
    else test.values.push_back(ds.values[idx[i]]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace qbvine
