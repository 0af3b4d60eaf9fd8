#include <cmath>
#include <map>
#include <vector>

#include "catch_amalgamated.hpp"
#include "pkde/core.hpp"
#include "pkde/rng.hpp"

using namespace pkde;

namespace {

LayerImage tiny(Modality m, int w = 4, int h = 4) { return LayerImage::zeros(m, w, h); }

TripletSource source(int part, int layer, int w = 4, int h = 4) {
  return {part, layer, tiny(Modality::HR, w, h), tiny(Modality::OT, w, h),
          tiny(Modality::PP, w, h)};
}

}  // namespace

TEST_CASE("energy density matches the machine-sheet rows", "[core]") {
  CHECK_THAT(energy_density({1, 370, 1300, 190, 30}),
             Catch::Matchers::WithinRel(49.93e9, 0.002));
  CHECK_THAT(energy_density({4, 340, 1300, 210, 30}),
             Catch::Matchers::WithinRel(41.51e9, 0.002));
  CHECK_THAT(energy_density({9, 370, 700, 210, 30}),
             Catch::Matchers::WithinRel(83.90e9, 0.002));
}

TEST_CASE("energy density rejects bad parameters", "[core]") {
  CHECK_THROWS_AS(energy_density({1, 0, 1300, 190, 30}), Error);
  CHECK_THROWS_AS(energy_density({1, 370, -5, 190, 30}), Error);
  CHECK_THROWS_AS(energy_density({1, 370, 1300, std::nan(""), 30}), Error);
}

TEST_CASE("energy density scales homogeneously", "[core]") {
  CounterRng rng(77, 1);
  for (int i = 0; i < 100; ++i) {
    ProcessParams p{1, 50 + 400 * rng.next_double(), 100 + 2000 * rng.next_double(),
                    50 + 300 * rng.next_double(), 10 + 80 * rng.next_double()};
    const double base = energy_density(p);
    ProcessParams p2 = p;
    p2.laser_power *= 2;
    CHECK_THAT(energy_density(p2), Catch::Matchers::WithinRel(2.0 * base, 1e-12));
    ProcessParams pv = p, ph = p, pt = p;
    pv.scan_speed *= 2;
    ph.hatch_distance *= 2;
    pt.layer_thickness *= 2;
    CHECK_THAT(energy_density(pv), Catch::Matchers::WithinRel(0.5 * base, 1e-12));
    CHECK_THAT(energy_density(ph), Catch::Matchers::WithinRel(0.5 * base, 1e-12));
    CHECK_THAT(energy_density(pt), Catch::Matchers::WithinRel(0.5 * base, 1e-12));
  }
}

TEST_CASE("dataset assembly counts, sorts, and validates", "[core]") {
  std::map<int, ProcessParams> params{{1, {1, 370, 1300, 190, 30}}, {2, {2, 340, 1300, 210, 30}}};

  std::vector<TripletSource> sources;
  for (int p = 2; p >= 1; --p)
    for (int l = 3; l >= 1; --l) sources.push_back(source(p, l));
  const Dataset d = assemble_dataset(sources, params);
  CHECK(d.size() == 6);
  const auto keys = d.keys();
  for (size_t i = 1; i < keys.size(); ++i) CHECK(keys[i - 1] < keys[i]);
  CHECK(d.find(2, 3) != nullptr);
  CHECK(d.find(2, 4) == nullptr);

  SECTION("duplicate key names the offender") {
    sources.push_back(source(1, 1));
    CHECK_THROWS_WITH(assemble_dataset(sources, params),
                      Catch::Matchers::ContainsSubstring("(p=1, l=1)"));
  }
  SECTION("dimension mismatch names the offender") {
    auto bad = source(1, 4);
    bad.ot = tiny(Modality::OT, 8, 8);
    sources.push_back(bad);
    CHECK_THROWS_WITH(assemble_dataset(sources, params),
                      Catch::Matchers::ContainsSubstring("(p=1, l=4)"));
  }
}

TEST_CASE("a near-complete grid keeps its triplet count", "[core]") {
  // 10 x 712 with 8 layers removed.
  std::vector<TripletSource> sources;
  std::map<int, ProcessParams> params;
  for (int p = 1; p <= 10; ++p) params[p] = {p, 370, 1300, 190, 30};
  int dropped = 0;
  for (int p = 1; p <= 10; ++p)
    for (int l = 1; l <= 712; ++l) {
      if (p == 1 && l <= 8) {
        ++dropped;
        continue;
      }
      sources.push_back(source(p, l, 2, 2));
    }
  REQUIRE(dropped == 8);
  const Dataset d = assemble_dataset(sources, params);
  CHECK(d.size() == 7112);
}

namespace {

Dataset grid_dataset(int parts, int layers) {
  std::vector<TripletSource> sources;
  std::map<int, ProcessParams> params;
  for (int p = 1; p <= parts; ++p) {
    params[p] = {p, 370, 1300, 190, 30};
    for (int l = 1; l <= layers; ++l) sources.push_back(source(p, l, 2, 2));
  }
  return assemble_dataset(sources, params);
}

}  // namespace

TEST_CASE("splits hit the rounded sizes and partition the keys", "[core]") {
  const Dataset d100 = grid_dataset(4, 25);
  const auto s = split_dataset(d100, {0.6, 0.2, 0.2}, 7);
  CHECK(s.train.size() == 60);
  CHECK(s.validation.size() == 20);
  CHECK(s.test.size() == 20);

  const auto s2 = split_dataset(d100, {0.6, 0.2, 0.2}, 7);
  CHECK(s.train == s2.train);
  CHECK(s.validation == s2.validation);
  CHECK(s.test == s2.test);

  const Dataset d10 = grid_dataset(1, 10);
  const auto t = split_dataset(d10, {0.6, 0.2, 0.2}, 1);
  CHECK(t.train.size() == 6);
  CHECK(t.validation.size() == 2);
  CHECK(t.test.size() == 2);
  // Enumerate: every key lands in exactly one set.
  for (int l = 1; l <= 10; ++l) {
    const LayerKey k{1, l};
    const int hits = int(t.train.count(k)) + int(t.validation.count(k)) + int(t.test.count(k));
    CHECK(hits == 1);
  }
}

TEST_CASE("splits stratify across parts", "[core]") {
  const Dataset d = grid_dataset(2, 50);
  const auto s = split_dataset(d, {0.6, 0.2, 0.2}, 5);
  for (int p = 1; p <= 2; ++p) {
    int test_count = 0;
    for (const auto& k : s.test) test_count += (k.first == p);
    CHECK(test_count == 10);  // 20% of 50 per part
  }
}

TEST_CASE("split rejects bad input", "[core]") {
  const Dataset d = grid_dataset(1, 10);
  CHECK_THROWS_AS(split_dataset(d, {0.5, 0.2, 0.2}, 1), Error);
  Dataset empty;
  CHECK_THROWS_AS(split_dataset(empty, {0.6, 0.2, 0.2}, 1), Error);
}

TEST_CASE("different seeds still partition", "[core]") {
  const Dataset d = grid_dataset(3, 11);
  for (uint64_t seed : {2ull, 3ull, 99ull}) {
    const auto s = split_dataset(d, {0.5, 0.25, 0.25}, seed);
    s.validate_partition(d.keys());
  }
}

TEST_CASE("layer image validation catches bad values", "[core]") {
  auto img = tiny(Modality::PP);
  img.validate();
  img.at(1, 1) = 1.5f;
  CHECK_THROWS_AS(img.validate(), Error);
  img.at(1, 1) = 0.5f;
  img.validate();
  img.modality = Modality::HR;
  img.at(0, 0) = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(img.validate(), Error);
}
