#include <doctest.h>

#include <cmath>

#include "tubefield/sobol.hpp"

using namespace tubefield;

TEST_SUITE_BEGIN("sobol");

// Reference prefix of the unscrambled 2D sequence (direction numbers
// m = 1 and m = 1,3,5,15,17,..., Gray-code order), cross-checked against
// an independent generator before this implementation existed.
static const double kRef[16][2] = {
    {0.0, 0.0},        {0.5, 0.5},        {0.75, 0.25},     {0.25, 0.75},
    {0.375, 0.375},    {0.875, 0.875},    {0.625, 0.125},   {0.125, 0.625},
    {0.1875, 0.3125},  {0.6875, 0.8125},  {0.9375, 0.0625}, {0.4375, 0.5625},
    {0.3125, 0.1875},  {0.8125, 0.6875},  {0.5625, 0.4375}, {0.0625, 0.9375}};

TEST_CASE("matches the reference prefix") {
  const Mat pts = sobol2d(16, 0);
  REQUIRE(pts.rows() == 16);
  REQUIRE(pts.cols() == 2);
  for (int i = 0; i < 16; ++i) {
    CHECK(pts(i, 0) == kRef[i][0]);
    CHECK(pts(i, 1) == kRef[i][1]);
  }
}

TEST_CASE("default skip drops the origin") {
  const Mat pts = sobol2d(15);
  for (int i = 0; i < 15; ++i) {
    CHECK(pts(i, 0) == kRef[i + 1][0]);
    CHECK(pts(i, 1) == kRef[i + 1][1]);
  }
}

TEST_CASE("all points lie in the half-open unit square") {
  const Mat pts = sobol2d(4096, 0);
  CHECK(pts.minCoeff() >= 0.0);
  CHECK(pts.maxCoeff() < 1.0);
}

TEST_CASE("power-of-two block is a (0,m,2)-net in each axis") {
  // 2^k consecutive points starting at 0 hit every dyadic interval of
  // width 2^-k exactly once per dimension.
  const int k = 8;
  const int n = 1 << k;
  const Mat pts = sobol2d(n, 0);
  for (int dim = 0; dim < 2; ++dim) {
    std::vector<int> hits(n, 0);
    for (int i = 0; i < n; ++i) {
      ++hits[static_cast<int>(pts(i, dim) * n)];
    }
    for (int c : hits) CHECK(c == 1);
  }
}

TEST_CASE("mean converges to the centroid") {
  const Mat pts = sobol2d(4096, 0);
  CHECK(std::abs(pts.col(0).mean() - 0.5) < 1e-3);
  CHECK(std::abs(pts.col(1).mean() - 0.5) < 1e-3);
}

TEST_SUITE_END();
