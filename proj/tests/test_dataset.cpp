#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "cmlr/dataset.hpp"
#include "cmlr/solver.hpp"

using namespace cmlr;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("ingest_csv: header detection and shapes") {
  const auto path = temp_file("cmlr_basic.csv");
  write_file(path, "a,b,label\n1.5,2,1\n-0.5,3.25,0\n7,0.125,1\n");
  const TabularData data = ingest_csv(path, "label");
  CHECK(data.x.rows() == 3);
  CHECK(data.x.cols() == 2);
  CHECK(data.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(data.x(0, 0) == 1.5);
  CHECK(data.y == std::vector<double>{1.0, 0.0, 1.0});
  std::filesystem::remove(path);
}

TEST_CASE("ingest_csv: headerless file takes a label index") {
  const auto path = temp_file("cmlr_nohdr.csv");
  write_file(path, "1,0.5,0\n0,1.5,1\n");
  const TabularData data = ingest_csv(path, "2");
  CHECK(data.x.cols() == 2);
  CHECK(data.y == std::vector<double>{0.0, 1.0});
  std::filesystem::remove(path);
}

TEST_CASE("ingest_csv: located errors") {
  const auto path = temp_file("cmlr_bad.csv");
  write_file(path, "a,b,label\n1,oops,0\n");
  try {
    ingest_csv(path, "label");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("row 2") != std::string::npos);
    CHECK(what.find("column 2") != std::string::npos);
  }
  write_file(path, "a,b,label\n1,2,\n");
  CHECK_THROWS_AS(ingest_csv(path, "label"), DataError);
  write_file(path, "a,b,label\n1,2,3\n");
  CHECK_THROWS_AS(ingest_csv(path, "label"), DataError);  // non-binary label
  write_file(path, "a,b,label\n");
  CHECK_THROWS_AS(ingest_csv(path, "label"), DataError);  // no data rows
  CHECK_THROWS_AS(ingest_csv(temp_file("cmlr_missing.csv"), "label"), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("csv round trip is bit exact") {
  TabularData data = make_synthetic(37, 5, 99);
  // Exercise awkward magnitudes too.
  data.x(0, 0) = 1.0 / 3.0;
  data.x(1, 1) = 1e-17;
  data.x(2, 2) = 123456789.123456789;
  const auto path = temp_file("cmlr_roundtrip.csv");
  export_csv(path, data);
  const TabularData back = ingest_csv(path, "label");
  REQUIRE(back.x.rows() == data.x.rows());
  REQUIRE(back.x.cols() == data.x.cols());
  CHECK(max_abs_diff(back.x, data.x) == 0.0);
  CHECK(back.y == data.y);
  std::filesystem::remove(path);
}

TEST_CASE("split_agencies: remainder, identity, proportions") {
  TabularData data = make_synthetic(10, 2, 1);
  const auto thirds = split_agencies(data, 3);
  REQUIRE(thirds.size() == 3);
  CHECK(thirds[0].samples() == 3);
  CHECK(thirds[1].samples() == 3);
  CHECK(thirds[2].samples() == 4);
  CHECK(thirds[0].agency_id == 1);
  // Contiguous blocks by default.
  CHECK(thirds[0].x(0, 0) == data.x(0, 0));
  CHECK(thirds[2].x(0, 0) == data.x(6, 0));

  const auto whole = split_agencies(data, 1);
  CHECK(whole[0].samples() == 10);

  TabularData nine = make_synthetic(9, 2, 2);
  const auto halves = split_agencies(nine, 2, {0.5, 0.5});
  CHECK(halves[0].samples() == 4);
  CHECK(halves[1].samples() == 5);

  CHECK_THROWS_AS(split_agencies(nine, 10), ConfigError);
  CHECK_THROWS_AS(split_agencies(nine, 2, {0.7, 0.7}), ConfigError);
}

TEST_CASE("split_agencies: seeded shuffle is deterministic and preserves rows") {
  TabularData data = make_synthetic(12, 3, 5);
  const auto a = split_agencies(data, 2, {}, 77);
  const auto b = split_agencies(data, 2, {}, 77);
  CHECK(max_abs_diff(a[0].x, b[0].x) == 0.0);
  const auto c = split_agencies(data, 2, {}, 78);
  CHECK(max_abs_diff(a[0].x, c[0].x) != 0.0);

  auto [joined, labels] = join_datasets(a);
  CHECK(max_abs_diff(sorted_rows(joined), sorted_rows(data.x)) == 0.0);
}

TEST_CASE("synthetic data is deterministic and learnable") {
  const TabularData a = make_synthetic(400, 4, 11);
  const TabularData b = make_synthetic(400, 4, 11);
  CHECK(max_abs_diff(a.x, b.x) == 0.0);
  CHECK(a.y == b.y);

  FitConfig config;
  config.lambda = 0.1;
  const FitResult res = fit(a.x, a.y, config);
  REQUIRE(res.converged);
  std::vector<double> scores;
  for (std::size_t i = 0; i < a.x.rows(); ++i) scores.push_back(predict(res.beta, a.x.row(i)));
  CHECK(auc(scores, a.y) > 0.6);
}

TEST_CASE("join respects agency order") {
  TabularData data = make_synthetic(8, 2, 21);
  const auto parts = split_agencies(data, 2);
  auto [joined, labels] = join_datasets(parts);
  CHECK(max_abs_diff(joined, data.x) == 0.0);
  CHECK(labels == data.y);
}
