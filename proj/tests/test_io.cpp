#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "tubefield/io.hpp"

using namespace tubefield;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("tubefield_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("format_full round-trips exactly") {
  const double vals[] = {0.0,          -0.0,        1.0 / 3.0,  1e-300,
                         6.62607015e-34, 141178.8,  -12345.0,   0.1,
                         1.2141816415735793, 1.7976931348623157e308};
  for (double v : vals) {
    const std::string s = format_full(v);
    const double back = std::stod(s);
    CHECK(back == v);
  }
  CHECK(format_full(-0.0)[0] == '-');
}

TEST_CASE("csv round-trips bitwise") {
  TempDir tmp;
  Mat m(3, 2);
  m << 0.1, 1.0 / 3.0, -1e-300, 6.02214076e23, 0.0, -0.0;
  const auto p = tmp.path / "sub" / "t.csv";
  write_csv(p, {"a", "b"}, m);
  std::vector<std::string> cols;
  const Mat back = read_csv(p, &cols);
  REQUIRE(cols.size() == 2);
  CHECK(cols[0] == "a");
  CHECK(cols[1] == "b");
  REQUIRE(back.rows() == 3);
  REQUIRE(back.cols() == 2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) CHECK(back(i, j) == m(i, j));
}

TEST_CASE("csv writes are byte-identical across calls") {
  TempDir tmp;
  Mat m = Mat::Random(20, 3);
  write_csv(tmp.path / "a.csv", {"x", "y", "z"}, m);
  write_csv(tmp.path / "b.csv", {"x", "y", "z"}, m);
  CHECK(read_text(tmp.path / "a.csv") == read_text(tmp.path / "b.csv"));
}

TEST_CASE("csv errors") {
  TempDir tmp;
  Mat m(1, 2);
  m << 1.0, 2.0;
  CHECK_THROWS_AS(write_csv(tmp.path / "bad.csv", {"only_one"}, m),
                  std::invalid_argument);
  CHECK_THROWS(read_csv(tmp.path / "missing.csv"));
  write_text(tmp.path / "ragged.csv", "a,b\n1.0,2.0\n3.0\n");
  CHECK_THROWS_AS(read_csv(tmp.path / "ragged.csv"), FormatError);
}

TEST_CASE("text round-trip") {
  TempDir tmp;
  const std::string body = "line1\nline2\n";
  write_text(tmp.path / "deep" / "dir" / "f.txt", body);
  CHECK(read_text(tmp.path / "deep" / "dir" / "f.txt") == body);
}

TEST_SUITE_END();
