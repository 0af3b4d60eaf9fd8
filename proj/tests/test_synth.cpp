#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "catch_amalgamated.hpp"
#include "pkde/rng.hpp"
#include "pkde/synth.hpp"
#include "pkde/xct.hpp"

using namespace pkde;
using namespace pkde::synth;

namespace {

ProcessParams params_for(int part, double power = 370, double speed = 1300, double hatch = 190) {
  return ProcessParams{part, power, speed, hatch, 30};
}

}  // namespace

TEST_CASE("the cube is a prism: every layer identical", "[synth]") {
  const auto geom = GeometrySpec::cube();
  const auto first = cross_section(geom, 1, 48, 48);
  for (int l : {2, 10, 500}) CHECK(cross_section(geom, l, 48, 48).data == first.data);
  // Mask is a filled centered square with margin.
  CHECK(first.at(24, 24) == 1.0f);
  CHECK(first.at(0, 0) == 0.0f);
}

TEST_CASE("the complex geometry walks through four feature families", "[synth]") {
  const auto geom = GeometrySpec::complex_geometry(712);
  const auto slit = cross_section(geom, 245, 64, 64);
  const auto overhang = cross_section(geom, 246, 64, 64);
  CHECK(slit.data != overhang.data);

  // Slit family: interior vertical gaps inside the part footprint.
  bool has_gap = false;
  for (int y = 20; y < 44 && !has_gap; ++y)
    for (int x = 16; x < 48 && !has_gap; ++x)
      has_gap = slit.at(x, y) == 0.0f && slit.at(16, y) == 1.0f;
  CHECK(has_gap);

  // Plain family: full square, no gaps inside the footprint.
  const auto plain = cross_section(geom, 450, 64, 64);
  bool plain_solid = true;
  for (int y = 18; y < 46; ++y)
    for (int x = 18; x < 46; ++x) plain_solid &= plain.at(x, y) == 1.0f;
  CHECK(plain_solid);

  // Round family: a disc -- on at the center, off at the footprint corner.
  const auto round_mask = cross_section(geom, 700, 64, 64);
  CHECK(round_mask.at(32, 32) == 1.0f);
  CHECK(round_mask.at(9, 9) == 0.0f);
  int on = 0;
  for (float v : round_mask.data) on += v > 0.5f;
  CHECK(on > 0);
  CHECK(on < 48 * 48);  // strictly smaller than the full footprint

  CHECK_THROWS_AS(cross_section(geom, 0, 64, 64), Error);
  CHECK_THROWS_AS(cross_section(geom, 713, 64, 64), Error);
}

TEST_CASE("pore seeding is deterministic and respects the mask", "[synth]") {
  const auto geom = GeometrySpec::complex_geometry(64);
  const auto mask = cross_section(geom, 10, 64, 64);
  const PoreModel model{3.0, 1.0, 42};

  const auto a = seed_pores(mask, params_for(2), model, 10);
  const auto b = seed_pores(mask, params_for(2), model, 10);
  REQUIRE(a.pores.size() == b.pores.size());
  for (size_t i = 0; i < a.pores.size(); ++i) {
    CHECK(a.pores[i].x == b.pores[i].x);
    CHECK(a.pores[i].y == b.pores[i].y);
  }

  // Different layers draw from different streams.
  const auto c = seed_pores(mask, params_for(2), model, 11);
  CHECK((c.pores.size() != a.pores.size() || a.pores.empty() ||
         (c.pores.size() == a.pores.size() && !a.pores.empty() &&
          (c.pores[0].x != a.pores[0].x || c.pores[0].y != a.pores[0].y))));

  CounterRng rng(7, 7);
  for (int rep = 0; rep < 10; ++rep) {
    const int layer = 1 + int(rng.uniform_int(64));
    const auto m2 = cross_section(geom, layer, 64, 64);
    const auto ps = seed_pores(m2, params_for(1), model, layer);
    for (const auto& p : ps.pores) {
      const int px = int(std::lround(p.x));
      const int py = int(std::lround(p.y));
      CHECK(m2.at(px, py) == 1.0f);  // pores sit on part material
    }
  }
}

TEST_CASE("zero base rate seeds nothing", "[synth]") {
  const auto mask = cross_section(GeometrySpec::cube(), 1, 32, 32);
  const auto ps = seed_pores(mask, params_for(1), PoreModel{0.0, 1.0, 1}, 1);
  CHECK(ps.pores.empty());
}

TEST_CASE("seeded counts track the configured mean", "[synth][statistical]") {
  const auto mask = cross_section(GeometrySpec::cube(), 1, 32, 32);
  const PoreModel model{2.5, 0.8, 77};
  const auto params = params_for(6, 340, 1000, 190);
  const double mean = expected_pore_rate(model, params);
  const int layers = 10000;
  long long total = 0;
  for (int l = 1; l <= layers; ++l)
    total += int(seed_pores(mask, params, model, l).pores.size());
  const double empirical = double(total) / layers;
  const double sigma = std::sqrt(mean / layers);
  CHECK_THAT(empirical, Catch::Matchers::WithinAbs(mean, 3.0 * sigma));
}

TEST_CASE("the pore rate is U-shaped in energy density", "[synth]") {
  const PoreModel model{2.0, 1.0, 0};
  const double nominal = kNominalEnergyDensity;
  // Find parameter sets below, near, and above the nominal energy density.
  const auto low = params_for(1, 340, 1300, 210);   // ~41.5e9
  const auto mid = params_for(2, 340, 1000, 190);   // ~59.6e9, near nominal
  const auto high = params_for(3, 390, 700, 160);   // ~116e9
  REQUIRE(energy_density(low) < nominal);
  REQUIRE(energy_density(high) > nominal);
  const double r_low = expected_pore_rate(model, low);
  const double r_mid = expected_pore_rate(model, mid);
  const double r_high = expected_pore_rate(model, high);
  CHECK(r_low > r_mid);
  CHECK(r_high > r_mid);
  CHECK(r_mid >= model.base_rate);
}

TEST_CASE("renders are deterministic with localized pore signatures", "[synth]") {
  const auto mask = cross_section(GeometrySpec::cube(), 3, 48, 48);
  RenderConfig quiet;
  quiet.hr_noise = 0.0;
  quiet.ot_noise = 0.0;

  PoreSet none;
  none.part = 1;
  none.layer = 3;
  const auto clean = render_modalities(mask, none, params_for(1), 9, quiet);
  const auto clean2 = render_modalities(mask, none, params_for(1), 9, quiet);
  CHECK(clean.hr.data == clean2.hr.data);
  CHECK(clean.ot.data == clean2.ot.data);

  PoreSet one = none;
  one.pores.push_back({24.0, 24.0});
  const auto with_pore = render_modalities(mask, one, params_for(1), 9, quiet);
  const double window = 3.0 * quiet.pore_sigma_px + 1.0;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      const double r = std::hypot(x - 24.0, y - 24.0);
      if (r > window) {
        CHECK(with_pore.ot.at(x, y) == clean.ot.at(x, y));
        CHECK(with_pore.hr.at(x, y) == clean.hr.at(x, y));
      }
    }
  // Inside the window the hot spot raises OT and dims HR.
  CHECK(with_pore.ot.at(24, 24) > clean.ot.at(24, 24));
  CHECK(with_pore.hr.at(24, 24) < clean.hr.at(24, 24));
}

TEST_CASE("mean OT intensity follows the energy-density order", "[synth]") {
  const auto mask = cross_section(GeometrySpec::cube(), 1, 48, 48);
  RenderConfig quiet;
  quiet.hr_noise = 0.0;
  quiet.ot_noise = 0.0;
  PoreSet none;
  const auto low = render_modalities(mask, none, params_for(1, 340, 1300, 210), 3, quiet);
  const auto high = render_modalities(mask, none, params_for(2, 390, 700, 160), 3, quiet);
  double mean_low = 0, mean_high = 0;
  for (float v : low.ot.data) mean_low += v;
  for (float v : high.ot.data) mean_high += v;
  CHECK(mean_high > mean_low);
  CHECK(ot_level(energy_density(params_for(2, 390, 700, 160))) >
        ot_level(energy_density(params_for(1, 340, 1300, 210))));
}

TEST_CASE("the build emits consistent per-part artifacts", "[synth]") {
  SynthOptions opt;
  opt.layers = 8;
  opt.width = 32;
  opt.height = 32;
  opt.seed = 5;
  opt.voxel_size_um = 30.0;
  opt.layer_thickness_um = 30.0;

  std::vector<SynthPlanEntry> plan;
  SynthPlanEntry e;
  e.part = 1;
  e.geometry = GeometrySpec::cube();
  e.params = params_for(1);
  plan.push_back(e);

  const auto build = build_synthetic_dataset(plan, opt);
  CHECK(build.hr.size() == 8);
  CHECK(build.ot.size() == 8);
  CHECK(build.seeded.size() == 8);
  REQUIRE(build.volumes.count(1) == 1);
  const auto& vol = build.volumes.at(1);
  CHECK(vol.nx == 32);
  CHECK(vol.ny == 32);
  CHECK(vol.nz == 8);

  SECTION("byte-identical rebuild") {
    const auto again = build_synthetic_dataset(plan, opt);
    CHECK(again.volumes.at(1).data == vol.data);
    for (const auto& [key, img] : build.hr) CHECK(again.hr.at(key).data == img.data);
    for (const auto& [key, img] : build.ot) CHECK(again.ot.at(key).data == img.data);
  }

  SECTION("duplicate parts rejected") {
    plan.push_back(e);
    CHECK_THROWS_AS(build_synthetic_dataset(plan, opt), Error);
  }

  SECTION("dropped layers are absent") {
    opt.drop = {{1, 3}};
    const auto dropped = build_synthetic_dataset(plan, opt);
    CHECK(dropped.hr.size() == 7);
    CHECK(dropped.hr.count({1, 3}) == 0);
    CHECK(dropped.missing.count({1, 3}) == 1);
  }
}

TEST_CASE("seeded voids round-trip through detection", "[synth][oracle]") {
  SynthOptions opt;
  opt.layers = 12;
  opt.width = 48;
  opt.height = 48;
  opt.seed = 21;
  opt.pore_model = PoreModel{1.5, 1.0, 0};

  std::vector<SynthPlanEntry> plan;
  SynthPlanEntry e;
  e.part = 1;
  e.geometry = GeometrySpec::cube();
  e.params = params_for(1);
  plan.push_back(e);

  const auto build = build_synthetic_dataset(plan, opt);
  const auto pores =
      xct::detect_pores(build.volumes.at(1), kDefaultThreshold, 10.0);
  const auto mapped = xct::pores_to_layers(
      pores, xct::VolumeMeta{opt.voxel_size_um, opt.layer_thickness_um},
      xct::CropFrame::full(opt.width, opt.height), 1);

  // Count seeded pores that are isolated enough to stay distinct components.
  int isolated = 0, recovered = 0;
  for (const auto& [key, seeded] : build.seeded) {
    for (size_t i = 0; i < seeded.pores.size(); ++i) {
      bool overlaps = false;
      for (const auto& [key2, other] : build.seeded)
        for (size_t j = 0; j < other.pores.size(); ++j) {
          if (key == key2 && i == j) continue;
          const double dz = 1.0 * std::abs(key.second - key2.second);
          const double d = std::hypot(std::hypot(seeded.pores[i].x - other.pores[j].x,
                                                 seeded.pores[i].y - other.pores[j].y),
                                      dz);
          overlaps |= d < 4.0;
        }
      if (overlaps) continue;
      ++isolated;
      auto it = mapped.by_layer.find(key.second);
      if (it == mapped.by_layer.end()) continue;
      for (const auto& found : it->second.pores)
        if (std::hypot(found.x - seeded.pores[i].x, found.y - seeded.pores[i].y) <= 1.0) {
          ++recovered;
          break;
        }
    }
  }
  REQUIRE(isolated > 0);
  CHECK(double(recovered) >= 0.95 * double(isolated));
}
