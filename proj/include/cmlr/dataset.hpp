#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cmlr/matrix.hpp"

namespace cmlr {

// One agency's private slice: n_i samples over the shared feature set,
// features only (no intercept column), labels in {0,1}.
struct LocalDataset {
  std::uint16_t agency_id = 0;
  Matrix x;
  std::vector<double> y;

  std::size_t samples() const noexcept { return x.rows(); }
  std::size_t features() const noexcept { return x.cols(); }
};

struct TabularData {
  std::vector<std::string> feature_names;
  Matrix x;
  std::vector<double> y;
};

// Numeric CSV with the label in a named column (or a 0-based column index
// when there is no header). A header row is detected by a non-numeric
// first row. Unparsable cells are reported with their row/column location.
TabularData ingest_csv(const std::filesystem::path& path, const std::string& label_column);
void export_csv(const std::filesystem::path& path, const TabularData& data);

// Contiguous blocks by default (remainder rows go to the last agency);
// optional proportions must sum to 1; optional seeded shuffle first.
std::vector<LocalDataset> split_agencies(const TabularData& data, std::size_t agencies,
                                         const std::vector<double>& proportions = {},
                                         std::optional<std::uint64_t> shuffle_seed = {});

// Gaussian features with a logistic ground-truth coefficient vector.
TabularData make_synthetic(std::size_t n, std::size_t p, std::uint64_t seed);

std::pair<Matrix, std::vector<double>> join_datasets(const std::vector<LocalDataset>& parts);

void validate_local_dataset(const LocalDataset& data);

}  // namespace cmlr
