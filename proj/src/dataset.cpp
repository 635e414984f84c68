#include "cmlr/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cmlr/rng.hpp"

namespace cmlr {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // Trim surrounding whitespace.
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || errno == ERANGE || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

}  // namespace

TabularData ingest_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw DataError("ingest_csv: cannot open " + path.string());

  std::vector<std::vector<std::string>> raw;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    raw.push_back(split_line(line));
  }
  if (raw.empty()) throw DataError("ingest_csv: empty file " + path.string());

  const std::size_t cols = raw[0].size();
  for (std::size_t r = 0; r < raw.size(); ++r) {
    if (raw[r].size() != cols) {
      throw DataError("ingest_csv: row " + std::to_string(r + 1) + " has " +
                      std::to_string(raw[r].size()) + " cells, expected " +
                      std::to_string(cols));
    }
  }

  // Header detection: any non-numeric cell in the first row.
  bool has_header = false;
  for (const auto& cell : raw[0]) {
    if (!parse_number(cell)) {
      has_header = true;
      break;
    }
  }

  std::size_t label_index = cols;
  std::vector<std::string> names(cols);
  if (has_header) {
    for (std::size_t c = 0; c < cols; ++c) {
      names[c] = raw[0][c];
      if (raw[0][c] == label_column) label_index = c;
    }
    if (label_index == cols) {
      throw DataError("ingest_csv: label column '" + label_column + "' not found");
    }
  } else {
    std::size_t parsed = 0;
    const auto [ptr, ec] = std::from_chars(label_column.data(),
                                           label_column.data() + label_column.size(), parsed);
    if (ec != std::errc() || ptr != label_column.data() + label_column.size() ||
        parsed >= cols) {
      throw DataError("ingest_csv: no header; label must be a column index < " +
                      std::to_string(cols));
    }
    label_index = parsed;
    for (std::size_t c = 0; c < cols; ++c) names[c] = "c" + std::to_string(c);
  }

  TabularData data;
  for (std::size_t c = 0; c < cols; ++c) {
    if (c != label_index) data.feature_names.push_back(names[c]);
  }
  const std::size_t first_row = has_header ? 1 : 0;
  const std::size_t n = raw.size() - first_row;
  if (n == 0) throw DataError("ingest_csv: no data rows");
  data.x = Matrix(n, cols - 1);
  data.y.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& cells = raw[first_row + r];
    std::size_t out_c = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const auto v = parse_number(cells[c]);
      if (!v) {
        throw DataError("ingest_csv: unparsable cell at row " +
                        std::to_string(first_row + r + 1) + ", column " + std::to_string(c + 1) +
                        " ('" + cells[c] + "')");
      }
      if (c == label_index) {
        if (*v != 0.0 && *v != 1.0) {
          throw DataError("ingest_csv: label at row " + std::to_string(first_row + r + 1) +
                          " is not 0/1");
        }
        data.y[r] = *v;
      } else {
        data.x(r, out_c++) = *v;
      }
    }
  }
  return data;
}

void export_csv(const std::filesystem::path& path, const TabularData& data) {
  std::ofstream out(path);
  if (!out) throw DataError("export_csv: cannot open " + path.string());
  for (const auto& name : data.feature_names) out << name << ',';
  out << "label\n";
  char buf[64];
  for (std::size_t r = 0; r < data.x.rows(); ++r) {
    for (std::size_t c = 0; c < data.x.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.x(r, c));
      out << buf << ',';
    }
    std::snprintf(buf, sizeof(buf), "%.17g", data.y[r]);
    out << buf << '\n';
  }
}

std::vector<LocalDataset> split_agencies(const TabularData& data, std::size_t agencies,
                                         const std::vector<double>& proportions,
                                         std::optional<std::uint64_t> shuffle_seed) {
  const std::size_t n = data.x.rows();
  if (agencies < 1) throw ConfigError("split_agencies: need at least one agency");
  if (agencies > n) throw ConfigError("split_agencies: more agencies than samples");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_seed) {
    Rng rng(mix_seed(*shuffle_seed, 0x53));
    const auto image = random_permutation_image(n, rng);
    for (std::size_t i = 0; i < n; ++i) order[image[i]] = i;
  }

  std::vector<std::size_t> sizes(agencies, 0);
  if (proportions.empty()) {
    for (std::size_t i = 0; i < agencies; ++i) sizes[i] = n / agencies;
    sizes[agencies - 1] += n % agencies;
  } else {
    if (proportions.size() != agencies) {
      throw ConfigError("split_agencies: proportions size != agencies");
    }
    double total = 0.0;
    for (double p : proportions) {
      if (p <= 0.0) throw ConfigError("split_agencies: proportions must be positive");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split_agencies: proportions must sum to 1");
    std::size_t assigned = 0;
    for (std::size_t i = 0; i + 1 < agencies; ++i) {
      sizes[i] = static_cast<std::size_t>(std::floor(proportions[i] * static_cast<double>(n)));
      assigned += sizes[i];
    }
    sizes[agencies - 1] = n - assigned;
  }
  for (std::size_t s : sizes) {
    if (s == 0) throw ConfigError("split_agencies: an agency would receive zero rows");
  }

  std::vector<LocalDataset> out;
  std::size_t row = 0;
  for (std::size_t a = 0; a < agencies; ++a) {
    LocalDataset part;
    part.agency_id = static_cast<std::uint16_t>(a + 1);
    part.x = Matrix(sizes[a], data.x.cols());
    part.y.resize(sizes[a]);
    for (std::size_t i = 0; i < sizes[a]; ++i, ++row) {
      const std::size_t src = order[row];
      for (std::size_t c = 0; c < data.x.cols(); ++c) part.x(i, c) = data.x(src, c);
      part.y[i] = data.y[src];
    }
    out.push_back(std::move(part));
  }
  return out;
}

TabularData make_synthetic(std::size_t n, std::size_t p, std::uint64_t seed) {
  if (n == 0 || p == 0) throw ConfigError("make_synthetic: n and p must be positive");
  Rng beta_rng(mix_seed(seed, 0xB1));
  std::vector<double> beta(p + 1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(p + 1));
  for (double& b : beta) b = scale * beta_rng.normal();

  Rng rng(mix_seed(seed, 0xD2));
  TabularData data;
  data.x = Matrix(n, p);
  data.y.resize(n);
  data.feature_names.resize(p);
  for (std::size_t c = 0; c < p; ++c) data.feature_names[c] = "x" + std::to_string(c);
  for (std::size_t i = 0; i < n; ++i) {
    double lin = beta[0];
    for (std::size_t c = 0; c < p; ++c) {
      const double v = rng.normal();
      data.x(i, c) = v;
      lin += beta[c + 1] * v;
    }
    const double prob = lin >= 0.0 ? 1.0 / (1.0 + std::exp(-lin))
                                   : std::exp(lin) / (1.0 + std::exp(lin));
    data.y[i] = rng.uniform() < prob ? 1.0 : 0.0;
  }
  return data;
}

std::pair<Matrix, std::vector<double>> join_datasets(const std::vector<LocalDataset>& parts) {
  if (parts.empty()) throw ConfigError("join_datasets: no parts");
  const std::size_t p = parts[0].features();
  std::size_t total = 0;
  for (const auto& part : parts) {
    if (part.features() != p) throw DimensionError("join_datasets: feature mismatch");
    total += part.samples();
  }
  Matrix x(total, p);
  std::vector<double> y(total);
  std::size_t row = 0;
  for (const auto& part : parts) {
    for (std::size_t i = 0; i < part.samples(); ++i, ++row) {
      for (std::size_t c = 0; c < p; ++c) x(row, c) = part.x(i, c);
      y[row] = part.y[i];
    }
  }
  return {std::move(x), std::move(y)};
}

void validate_local_dataset(const LocalDataset& data) {
  if (data.samples() == 0) throw DataError("local dataset: no samples");
  if (data.y.size() != data.samples()) throw DimensionError("local dataset: label count");
  data.x.ensure_finite("local dataset");
  for (double v : data.y) {
    if (v != 0.0 && v != 1.0) throw DataError("local dataset: labels must be 0/1");
  }
}

}  // namespace cmlr
