// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "adapterforge/error.hpp"
#include "adapterforge/synth_data.hpp"

namespace af = adapterforge;
namespace fs = std::filesystem;

namespace {

double sky_terrain_separation(const af::LabeledScene& s) {
  double sum[3] = {0, 0, 0};
  std::int64_t n[3] = {0, 0, 0};
  for (std::size_t p = 0; p < s.mask.size(); ++p) {
    sum[s.mask.pixels[p]] += s.image.pixels[p];
    ++n[s.mask.pixels[p]];
  }
  return std::abs(sum[af::kSky] / static_cast<double>(n[af::kSky]) - sum[af::kTerrain] / static_cast<double>(n[af::kTerrain]));
}

}  // namespace

TEST(Generate, FixedSeedIsByteIdentical) {
  af::SceneSpec spec = af::default_scene_spec(af::Domain::kMars);
  spec.seed = 77;
  const af::LabeledScene a = af::generate(spec), b = af::generate(spec);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, b.mask);
  spec.seed = 78;
  EXPECT_NE(af::generate(spec).image, a.image);
}

TEST(Generate, NoRocksRequested) {
  af::SceneSpec spec = af::default_scene_spec(af::Domain::kMoon);
  spec.rock_min = spec.rock_max = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    spec.seed = s;
    const af::ClassMask m = af::generate(spec).mask;
    EXPECT_EQ(std::count(m.pixels.begin(), m.pixels.end(), af::kRock), 0);
  }
}

TEST(Generate, MaskUsesOnlyKnownClasses) {
  const af::LabeledScene s = af::generate(af::default_scene_spec(af::Domain::kMoon));
  for (auto v : s.mask.pixels) EXPECT_LT(v, 3);
  EXPECT_EQ(s.image.height, 48);
  EXPECT_EQ(s.mask.width, 48);
}

TEST(Generate, RocksWinOverSky) {
  // Noise-free Moon scenes: a rock pixel above the terrain horizon is drawn
  // with rock intensity and labeled rock.
  af::SceneSpec spec = af::default_scene_spec(af::Domain::kMoon);
  spec.noise_std = 0.0;
  int overlaps = 0;
  for (std::uint64_t seed = 0; seed < 300 && overlaps == 0; ++seed) {
    spec.seed = seed;
    const af::LabeledScene s = af::generate(spec);
    for (int y = 0; y < s.mask.height; ++y)
      for (int x = 0; x < s.mask.width; ++x)
        if (y < s.horizon[static_cast<std::size_t>(x)] && s.mask.at(y, x) == af::kRock) {
          ++overlaps;
          EXPECT_GT(s.image.at(y, x), 100);
        }
  }
  EXPECT_GT(overlaps, 0);
}

TEST(Generate, ImpossibleGeometryIsGenerationError) {
  af::SceneSpec spec = af::default_scene_spec(af::Domain::kMoon);
  spec.rock_min = spec.rock_max = 400;
  try {
    af::generate(spec);
    FAIL();
  } catch (const af::Error& e) {
    EXPECT_EQ(e.kind(), af::ErrorKind::kGeneration);
  }
}

TEST(Generate, InvalidSpecRejected) {
  af::SceneSpec spec = af::default_scene_spec(af::Domain::kMoon);
  spec.sky_fraction = 0.6;
  EXPECT_THROW(af::generate(spec), af::Error);
  EXPECT_THROW(af::parse_domain("venus"), af::Error);
}

TEST(Generate, MarsContrastBelowMoon) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    af::SceneSpec moon = af::default_scene_spec(af::Domain::kMoon);
    af::SceneSpec mars = af::default_scene_spec(af::Domain::kMars);
    moon.seed = mars.seed = seed;
    EXPECT_LT(sky_terrain_separation(af::generate(mars)), sky_terrain_separation(af::generate(moon))) << seed;
  }
}

TEST(Splits, SizesAndDisjointSeeds) {
  const af::Splits s = af::make_splits(10, 4, 6, af::default_scene_spec(af::Domain::kMoon), 5);
  EXPECT_EQ(s.train.size(), 10u);
  EXPECT_EQ(s.val.size(), 4u);
  EXPECT_EQ(s.test.size(), 6u);
  std::set<std::uint64_t> seeds;
  for (const auto* split : {&s.train, &s.val, &s.test})
    for (const auto& sc : *split) seeds.insert(sc.meta.seed);
  EXPECT_EQ(seeds.size(), 20u);
}

TEST(Splits, ClassFrequenciesCountPixels) {
  const af::Splits s = af::make_splits(5, 0, 0, af::default_scene_spec(af::Domain::kMoon), 6);
  const auto f = af::class_frequencies(s.train);
  EXPECT_EQ(f[0] + f[1] + f[2], 5 * 48 * 48);
  std::int64_t rock = 0;
  for (const auto& sc : s.train) rock += std::count(sc.mask.pixels.begin(), sc.mask.pixels.end(), af::kRock);
  EXPECT_EQ(f[af::kRock], rock);
}

TEST(Archive, RoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "adapterforge_archive_test";
  fs::remove_all(dir);
  const af::SceneSpec tmpl = af::default_scene_spec(af::Domain::kMars);
  const af::Splits s = af::make_splits(3, 2, 1, tmpl, 8);
  af::write_archive(dir.string(), s, tmpl, 8);
  const af::Splits back = af::read_archive(dir.string());
  ASSERT_EQ(back.train.size(), 3u);
  ASSERT_EQ(back.val.size(), 2u);
  ASSERT_EQ(back.test.size(), 1u);
  EXPECT_EQ(back.train[2].image, s.train[2].image);
  EXPECT_EQ(back.val[1].mask, s.val[1].mask);
  fs::remove_all(dir);
  try {
    af::read_archive(dir.string());
    FAIL();
  } catch (const af::Error& e) {
    EXPECT_EQ(e.kind(), af::ErrorKind::kIo);
  }
}
