#include <doctest.h>

#include "tubefield/common.hpp"

using namespace tubefield;

TEST_SUITE_BEGIN("common");

TEST_CASE("fnv1a64 matches published vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
  CHECK(fnv1a64("hello world") == 0x779a65e7023cd2e7ull);
}

TEST_CASE("fnv1a64 chains through the seed argument") {
  const std::string s = "foobar";
  const auto h1 = fnv1a64(s.data(), 3);
  const auto h2 = fnv1a64(s.data() + 3, 3, h1);
  CHECK(h2 == fnv1a64(s));
}

TEST_CASE("to_hex is zero padded") {
  CHECK(to_hex(0) == "0000000000000000");
  CHECK(to_hex(0xcbf29ce484222325ull) == "cbf29ce484222325");
  CHECK(to_hex(255) == "00000000000000ff");
}

TEST_CASE("linspace includes both endpoints") {
  const Vec v = linspace(0.0, 1.0, 5);
  REQUIRE(v.size() == 5);
  CHECK(v[0] == 0.0);
  CHECK(v[4] == 1.0);
  CHECK(v[2] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(linspace(0.0, 1.0, 0), std::invalid_argument);
}

TEST_CASE("linspace_half_open excludes the right endpoint") {
  const Vec v = linspace_half_open(0.0, 1.0, 4);
  REQUIRE(v.size() == 4);
  CHECK(v[0] == 0.0);
  CHECK(v[3] == 0.75);
  const Vec w = linspace_half_open(2.0, 3.0, 1);
  CHECK(w[0] == 2.0);
}

TEST_SUITE_END();
