#include <cmath>
#include <set>
#include <vector>

#include "catch_amalgamated.hpp"
#include "pkde/rng.hpp"

using pkde::CounterRng;
using pkde::philox4x32;

TEST_CASE("philox known-answer vectors", "[rng]") {
  // Published test vectors for the 10-round 4x32 generator.
  const auto zeros = philox4x32({0, 0, 0, 0}, {0, 0});
  CHECK(zeros == std::array<uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});

  const auto ones = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                               {0xffffffffu, 0xffffffffu});
  CHECK(ones == std::array<uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});

  const auto pi = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                             {0xa4093822u, 0x299f31d0u});
  CHECK(pi == std::array<uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams are reproducible and independent", "[rng]") {
  CounterRng a(42, 7), b(42, 7), c(42, 8);
  std::vector<uint32_t> seq_a, seq_b, seq_c;
  for (int i = 0; i < 64; ++i) {
    seq_a.push_back(a.next_u32());
    seq_b.push_back(b.next_u32());
    seq_c.push_back(c.next_u32());
  }
  CHECK(seq_a == seq_b);
  CHECK(seq_a != seq_c);
}

TEST_CASE("uniform doubles live in [0,1) with sane mean", "[rng]") {
  CounterRng rng(1, 2);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.next_double();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK_THAT(sum / n, Catch::Matchers::WithinAbs(0.5, 0.01));
}

TEST_CASE("normal draws have unit scale", "[rng]") {
  CounterRng rng(3, 4);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.next_normal();
    sum += x;
    sq += x * x;
  }
  CHECK_THAT(sum / n, Catch::Matchers::WithinAbs(0.0, 0.03));
  CHECK_THAT(sq / n, Catch::Matchers::WithinAbs(1.0, 0.05));
}

TEST_CASE("poisson matches its mean, including chunked large means", "[rng]") {
  for (double lambda : {0.5, 3.0, 75.0}) {
    CounterRng rng(9, uint64_t(lambda * 1000));
    const int n = 20000;
    long long total = 0;
    for (int i = 0; i < n; ++i) total += rng.next_poisson(lambda);
    const double mean = double(total) / n;
    const double sigma = std::sqrt(lambda / n);
    CHECK_THAT(mean, Catch::Matchers::WithinAbs(lambda, 4.0 * sigma));
  }
  CounterRng rng(9, 9);
  CHECK(rng.next_poisson(0.0) == 0);
}

TEST_CASE("uniform_int stays in range and rejects zero", "[rng]") {
  CounterRng rng(5, 6);
  std::set<uint32_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const uint32_t v = rng.uniform_int(7);
    REQUIRE(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
  CHECK_THROWS_AS(rng.uniform_int(0), pkde::Error);
}

TEST_CASE("shuffle is a seeded permutation", "[rng]") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[size_t(i)] = i;
  auto w = v;
  CounterRng a(11, 12), b(11, 12);
  a.shuffle(v.begin(), v.end());
  b.shuffle(w.begin(), w.end());
  CHECK(v == w);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[size_t(i)] == i);
}
