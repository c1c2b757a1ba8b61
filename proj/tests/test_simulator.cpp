#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "prnu/manifest.hpp"
#include "prnu/matcher.hpp"
#include "prnu/pipeline.hpp"
#include "prnu/simulator.hpp"
#include "testing.hpp"

using namespace prnu;
using namespace prnu::sim;

namespace {

double mean_of(std::span<const float> v) {
  double s = 0;
  for (float x : v) s += x;
  return s / v.size();
}

double sd_of(std::span<const float> v) {
  const double m = mean_of(v);
  double s = 0;
  for (float x : v) s += (x - m) * (x - m);
  return std::sqrt(s / v.size());
}

std::string slurp(const std::filesystem::path& p) { return read_file(p); }

}  // namespace

TEST(GenSensor, ZeroMeanAndStrength) {
  Rng rng(1);
  for (double s : {0.005, 0.02, 0.1}) {
    const auto p = gen_sensor(rng, {256, 256}, s);
    EXPECT_NEAR(mean_of(p.true_fingerprint.values()), 0.0, 1e-3);
    EXPECT_NEAR(sd_of(p.true_fingerprint.values()) / s, 1.0, 0.05);
  }
  EXPECT_THROW(gen_sensor(rng, {64, 64}, 0.0), InvalidArgument);
}

TEST(GenSensor, IndependentStreamsAndDeterminism) {
  SimConfig cfg;
  Rng a(sensor_seed(cfg.rng_seed, "sensor_00")), b(sensor_seed(cfg.rng_seed, "sensor_01"));
  const auto pa = gen_sensor(a, {256, 256}, 0.02), pb = gen_sensor(b, {256, 256}, 0.02);
  EXPECT_LT(std::abs(ncc(pa.true_fingerprint, pb.true_fingerprint).value), 0.05);
  Rng c(sensor_seed(cfg.rng_seed, "sensor_00"));
  EXPECT_EQ(gen_sensor(c, {256, 256}, 0.02).true_fingerprint, pa.true_fingerprint);
}

TEST(GenScene, RangeAndDeterminism) {
  for (int i = 0; i < 10; ++i) {
    const auto s = view_scene(101, i, {64, 96});
    for (float v : s.values()) {
      ASSERT_GE(v, 0.1f);
      ASSERT_LE(v, 0.9f);
    }
    EXPECT_EQ(view_scene(101, i, {64, 96}), s);
  }
  Rng r1(5), r2(5);
  EXPECT_EQ(gen_scene(r1, {64, 64}), gen_scene(r2, {64, 64}));
  Rng r3(5);
  EXPECT_THROW(gen_scene(r3, {32, 64}), InvalidArgument);
}

TEST(GenScene, ViewsAreDisjoint) {
  // Recorded regression threshold: min over 100 (view-1, view-2) pairs, defaults.
  double min_diff = 1e9;
  for (int i = 0; i < 10; ++i) {
    const auto a = view_scene(101, i, {256, 256});
    for (int j = 0; j < 10; ++j) {
      const auto b = view_scene(202, j, {256, 256});
      double d = 0;
      for (std::size_t p = 0; p < a.values().size(); ++p) d += std::abs(a.values()[p] - b.values()[p]);
      min_diff = std::min(min_diff, d / a.values().size());
    }
  }
  EXPECT_GT(min_diff, 0.02);
}

TEST(Capture, DegenerateModels) {
  Rng rng(3);
  const auto scene = view_scene(101, 0, {64, 64});
  SensorProfile clean{"s", Plane(64, 64), 0.0, 0.0};
  EXPECT_EQ(capture(scene, clean, rng), scene);

  const ImagePlane black(64, 64, std::vector<float>(64 * 64, 0.0f));
  SensorProfile read_only{"s", Plane(64, 64), 0.01, 0.02};
  Rng a(4), b(4);
  const auto out = capture(black, read_only, a);
  for (std::size_t i = 0; i < out.values().size(); ++i) {
    b.normal();  // shot draw, zero at a black pixel
    EXPECT_EQ(out.values()[i], static_cast<float>(std::clamp(0.01 * b.normal(), 0.0, 1.0)));
  }
  EXPECT_THROW(capture(scene, SensorProfile{"s", Plane(32, 32), 0, 0}, rng), DimensionMismatch);
}

TEST(Capture, ResidualCorrelatesWithTruth) {
  Rng rng(6);
  const auto sensor = gen_sensor(rng, {256, 256}, 0.02);
  const auto scene = view_scene(101, 0, {256, 256});
  const auto img = capture(scene, sensor, rng);
  Plane rel(256, 256);
  for (std::size_t i = 0; i < rel.area(); ++i)
    rel.values()[i] = (img.values()[i] - scene.values()[i]) / scene.values()[i];
  EXPECT_GT(ncc(rel, sensor.true_fingerprint).value, 0.1);
}

TEST(Simulator, SameSensorResidualsCorrelateMore) {
  SimConfig cfg;
  const auto view1 = view_scenes(cfg, 1);
  const Denoiser d = make_denoiser({});
  std::vector<std::vector<Plane>> res(3);
  for (int s = 0; s < 3; ++s) {
    Rng rng(sensor_seed(cfg.rng_seed, sensor_name(s, 3)));
    const auto prof = gen_sensor(rng, cfg.image_size, 0.02);
    for (int j = 0; j < 10; ++j) res[s].push_back(extract_residual(capture(view1[j], prof, rng), d).plane);
  }
  double same = 0, cross = 0;
  int ns = 0, nc = 0;
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < 10; ++i)
      for (int t = 0; t < 3; ++t)
        for (int j = 0; j < 10; ++j) {
          if (i == j) continue;  // same scene would add leakage to both sides
          const double v = ncc(res[s][i], res[t][j]).value;
          if (s == t) {
            same += v;
            ++ns;
          } else if (s < t) {
            cross += v;
            ++nc;
          }
        }
  ASSERT_GE(ns, 50);
  ASSERT_GE(nc, 50);
  EXPECT_GT(same / ns - cross / nc, 0.02);
}

TEST(PlanDataset, SplitArithmetic) {
  SimConfig cfg;
  cfg.n_sensors = 2;
  cfg.images_per_view = 6;
  cfg.image_size = {64, 64};
  const auto m = plan_dataset(cfg);
  EXPECT_EQ(m.records.size(), 24u);
  int refs = 0;
  for (const auto& r : m.records) {
    if (r.role == Role::reference) ++refs;
    if (r.view == 2) EXPECT_EQ(r.role, Role::test);
  }
  EXPECT_EQ(refs, 10);

  cfg.n_sensors = 10;
  const auto m10 = plan_dataset(cfg);
  EXPECT_EQ(m10.pretrain_devices.size(), 5u);
  EXPECT_EQ(m10.eval_devices.size(), 5u);
  std::set<std::string> all(m10.pretrain_devices.begin(), m10.pretrain_devices.end());
  for (const auto& d : m10.eval_devices) EXPECT_TRUE(all.insert(d).second);
  EXPECT_EQ(all.size(), 10u);
}

TEST(PlanDataset, ProtocolInvariantsOverRandomConfigs) {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    SimConfig cfg;
    cfg.n_sensors = 2 + static_cast<int>(rng.below(30));
    cfg.n_refs = 1 + static_cast<int>(rng.below(6));
    cfg.images_per_view = cfg.n_refs + static_cast<int>(rng.below(8));
    cfg.pretrain_fraction = rng.uniform(0.01, 0.99);
    cfg.rng_seed = rng.next();
    const auto m = plan_dataset(cfg);
    ASSERT_NO_THROW(validate_manifest(m));
    std::set<std::string> pre(m.pretrain_devices.begin(), m.pretrain_devices.end());
    for (const auto& d : m.eval_devices) ASSERT_FALSE(pre.count(d));
    ASSERT_FALSE(m.pretrain_devices.empty());
    ASSERT_FALSE(m.eval_devices.empty());
    for (const auto& r : m.records) {
      if (r.view == 2) ASSERT_EQ(r.role, Role::test);
      if (r.role == Role::pretrain) ASSERT_TRUE(pre.count(r.sensor_id));
    }
  }
}

TEST(SimConfig, Validation) {
  for (auto mutate : std::vector<std::function<void(SimConfig&)>>{
           [](SimConfig& c) { c.n_sensors = 1; }, [](SimConfig& c) { c.images_per_view = 4; },
           [](SimConfig& c) { c.view_seeds = {3, 3}; }, [](SimConfig& c) { c.pretrain_fraction = 1.0; },
           [](SimConfig& c) { c.fingerprint_strength = 0.0; }, [](SimConfig& c) { c.image_size = {32, 256}; }}) {
    SimConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), InvalidArgument);
  }
  SimConfig c;
  c.n_sensors = 3;
  SimConfig back;
  merge_json(back, to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(GenDataset, WritesTreeAndIsReproducible) {
  prnu::testing::TempDir a("sim_a"), b("sim_b");
  SimConfig cfg;
  cfg.n_sensors = 2;
  cfg.images_per_view = 6;
  cfg.image_size = {64, 64};
  const auto m = gen_dataset(cfg, a.path());
  gen_dataset(cfg, b.path());
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  const auto loaded = load_manifest(a / "manifest.json");
  EXPECT_EQ(manifest_to_json(loaded), manifest_to_json(m));
  for (const auto& r : m.records) {
    ASSERT_TRUE(std::filesystem::exists(a.path() / r.image_path)) << r.image_path;
    EXPECT_EQ(slurp(a.path() / r.image_path), slurp(b.path() / r.image_path));
  }
  const auto json = nlohmann::ordered_json::parse(slurp(a / "manifest.json"));
  for (const char* key : {"devices", "records", "split", "config_snapshot"}) EXPECT_TRUE(json.contains(key)) << key;
}

TEST(SimulatedImageSource, MatchesFilesOnDisk) {
  prnu::testing::TempDir dir("sim_src");
  SimConfig cfg;
  cfg.n_sensors = 2;
  cfg.images_per_view = 6;
  cfg.image_size = {64, 80};
  const auto m = gen_dataset(cfg, dir.path());
  SimulatedImageSource mem(cfg);
  FileImageSource disk(dir.path());
  for (const auto& r : m.records)
    EXPECT_EQ(mem.load(r, AccessPurpose::query), disk.load(r, AccessPurpose::query)) << r.image_path;
}
