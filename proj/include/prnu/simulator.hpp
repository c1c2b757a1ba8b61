#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"
#include "prnu/manifest.hpp"
#include "prnu/parallel.hpp"
#include "prnu/plane.hpp"
#include "prnu/png_io.hpp"
#include "prnu/random.hpp"

namespace prnu::sim {

/// Synthetic sensor: multiplicative PRNU field plus noise levels.
struct SensorProfile {
  std::string sensor_id;
  Plane true_fingerprint;  // zero mean, std ~ strength
  double read_noise_std = 0.01;
  double shot_noise_scale = 0.02;
};

struct SimConfig {
  int n_sensors = 16;
  Size image_size{256, 256};
  int images_per_view = 20;
  int n_refs = 5;
  double fingerprint_strength = 0.02;
  double read_noise_std = 0.01;
  double shot_noise_scale = 0.02;
  std::array<std::uint64_t, 2> view_seeds{101, 202};
  double pretrain_fraction = 0.5;
  std::uint64_t rng_seed = 7;

  void validate() const {
    if (n_sensors < 2) throw InvalidArgument("n_sensors must be >= 2");
    if (image_size.height < 64 || image_size.width < 64) throw InvalidArgument("image_size must be at least 64x64");
    if (n_refs < 1) throw InvalidArgument("n_refs must be >= 1");
    if (images_per_view < n_refs) throw InvalidArgument("images_per_view must be >= n_refs");
    if (!(fingerprint_strength > 0.0)) throw InvalidArgument("fingerprint_strength must be positive");
    if (read_noise_std < 0.0 || shot_noise_scale < 0.0) throw InvalidArgument("noise levels must be >= 0");
    if (view_seeds[0] == view_seeds[1]) throw InvalidArgument("view seeds must differ");
    if (!(pretrain_fraction > 0.0 && pretrain_fraction < 1.0)) throw InvalidArgument("pretrain_fraction must be in (0,1)");
  }
};

inline nlohmann::ordered_json to_json(const SimConfig& c) {
  return {{"n_sensors", c.n_sensors},
          {"image_size", {c.image_size.height, c.image_size.width}},
          {"images_per_view", c.images_per_view},
          {"n_refs", c.n_refs},
          {"fingerprint_strength", c.fingerprint_strength},
          {"read_noise_std", c.read_noise_std},
          {"shot_noise_scale", c.shot_noise_scale},
          {"view_seeds", {c.view_seeds[0], c.view_seeds[1]}},
          {"pretrain_fraction", c.pretrain_fraction},
          {"rng_seed", c.rng_seed}};
}

/// Reads the keys present in j over the defaults in c.
inline void merge_json(SimConfig& c, const nlohmann::ordered_json& j) {
  if (j.contains("n_sensors")) c.n_sensors = j["n_sensors"].get<int>();
  if (j.contains("image_size")) c.image_size = {j["image_size"][0].get<int>(), j["image_size"][1].get<int>()};
  if (j.contains("images_per_view")) c.images_per_view = j["images_per_view"].get<int>();
  if (j.contains("n_refs")) c.n_refs = j["n_refs"].get<int>();
  if (j.contains("fingerprint_strength")) c.fingerprint_strength = j["fingerprint_strength"].get<double>();
  if (j.contains("read_noise_std")) c.read_noise_std = j["read_noise_std"].get<double>();
  if (j.contains("shot_noise_scale")) c.shot_noise_scale = j["shot_noise_scale"].get<double>();
  if (j.contains("view_seeds"))
    c.view_seeds = {j["view_seeds"][0].get<std::uint64_t>(), j["view_seeds"][1].get<std::uint64_t>()};
  if (j.contains("pretrain_fraction")) c.pretrain_fraction = j["pretrain_fraction"].get<double>();
  if (j.contains("rng_seed")) c.rng_seed = j["rng_seed"].get<std::uint64_t>();
}

inline SensorProfile gen_sensor(Rng& rng, Size size, double strength, double read_noise_std = 0.01,
                                double shot_noise_scale = 0.02, std::string sensor_id = {}) {
  if (!(strength > 0.0)) throw InvalidArgument("gen_sensor: strength must be positive");
  std::vector<double> field(size.area());
  double mean = 0.0;
  for (double& v : field) {
    v = rng.normal(0.0, strength);
    mean += v;
  }
  mean /= static_cast<double>(field.size());
  Plane k(size.height, size.width);
  auto kv = k.values();
  for (std::size_t i = 0; i < field.size(); ++i) kv[i] = static_cast<float>(field[i] - mean);
  return {std::move(sensor_id), std::move(k), read_noise_std, shot_noise_scale};
}

/// Highest grating frequency in cycles per pixel.
inline constexpr double kMaxGratingFrequency = 0.06;

/// Smooth textured scene: 3-8 sinusoidal gratings plus low-pass noise, mapped to [0.1, 0.9].
inline ImagePlane gen_scene(Rng& rng, Size size) {
  if (size.height < 64 || size.width < 64) throw InvalidArgument("gen_scene: size must be at least 64x64");
  const int h = size.height, w = size.width;
  std::vector<double> s(size.area(), 0.0);

  const int gratings = 3 + static_cast<int>(rng.below(6));
  for (int g = 0; g < gratings; ++g) {
    const double amp = rng.uniform(0.3, 1.0);
    const double freq = rng.uniform(0.005, kMaxGratingFrequency);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double fy = 2.0 * std::numbers::pi * freq * std::sin(angle);
    const double fx = 2.0 * std::numbers::pi * freq * std::cos(angle);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) s[static_cast<std::size_t>(y) * w + x] += amp * std::sin(fy * y + fx * x + phase);
  }

  // Low-pass noise: white noise through a separable Gaussian blur (sigma 3).
  std::vector<double> noise(size.area());
  for (double& v : noise) v = rng.normal();
  constexpr int radius = 9;
  std::array<double, 2 * radius + 1> kernel{};
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += kernel[i + radius] = std::exp(-(i * i) / 18.0);
  for (double& k : kernel) k /= total;
  std::vector<double> tmp(size.area());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * noise[static_cast<std::size_t>(y) * w + std::clamp(x + k, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  double ss = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
      noise[static_cast<std::size_t>(y) * w + x] = acc;
      ss += acc * acc;
    }
  const double nscale = 0.5 / std::sqrt(ss / static_cast<double>(noise.size()) + 1e-300);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] += nscale * noise[i];

  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const double span = *hi - *lo;
  Plane out(h, w);
  auto o = out.values();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double t = span > 0.0 ? (s[i] - *lo) / span : 0.5;
    o[i] = static_cast<float>(std::clamp(0.1 + 0.8 * t, 0.1, 0.9));
  }
  return ImagePlane(std::move(out));
}

/// Scene `index` of the view identified by view_seed; each (view_seed, index) is its own stream.
inline ImagePlane view_scene(std::uint64_t view_seed, int index, Size size) {
  Rng rng(hash_combine(hash_combine(0x7363656e65ULL, view_seed), static_cast<std::uint64_t>(index)));
  return gen_scene(rng, size);
}

/// I = scene * (1 + K) + shot + read, clamped to [0,1].
inline ImagePlane capture(const ImagePlane& scene, const SensorProfile& sensor, Rng& rng) {
  require_same_size(scene.size(), sensor.true_fingerprint.size(), "capture");
  Plane out(scene.height(), scene.width());
  auto sv = scene.values();
  auto kv = sensor.true_fingerprint.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double s = sv[i];
    double v = s * (1.0 + kv[i]);
    if (sensor.shot_noise_scale > 0.0) v += sensor.shot_noise_scale * std::sqrt(s) * rng.normal();
    if (sensor.read_noise_std > 0.0) v += sensor.read_noise_std * rng.normal();
    o[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return ImagePlane(std::move(out));
}

inline std::string sensor_name(int index, int count) {
  const int digits = std::max(2, static_cast<int>(std::to_string(std::max(count - 1, 0)).size()));
  std::string n = std::to_string(index);
  if (static_cast<int>(n.size()) < digits) n.insert(0, static_cast<std::size_t>(digits) - n.size(), '0');
  return "sensor_" + n;
}

inline std::string image_relpath(const std::string& sensor_id, int view, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d.png", index);
  return sensor_id + "/" + std::to_string(view) + "/" + buf;
}

inline std::uint64_t sensor_seed(std::uint64_t rng_seed, const std::string& sensor_id) {
  return hash_combine(rng_seed, hash_string(sensor_id));
}

/// Indices of the sensors assigned to pre-training, sorted.
inline std::vector<int> pretrain_assignment(const SimConfig& cfg) {
  std::vector<int> order(cfg.n_sensors);
  for (int i = 0; i < cfg.n_sensors; ++i) order[i] = i;
  Rng rng(hash_combine(cfg.rng_seed, hash_string("pretrain-split")));
  for (int i = cfg.n_sensors - 1; i > 0; --i) std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  int n_pre = static_cast<int>(std::lround(cfg.n_sensors * cfg.pretrain_fraction));
  n_pre = std::clamp(n_pre, 1, cfg.n_sensors - 1);
  std::vector<int> pre(order.begin(), order.begin() + n_pre);
  std::sort(pre.begin(), pre.end());
  return pre;
}

/// Manifest for cfg without touching the filesystem.
inline DatasetManifest plan_dataset(const SimConfig& cfg) {
  cfg.validate();
  const auto pre_idx = pretrain_assignment(cfg);
  DatasetManifest m;
  m.n_refs = cfg.n_refs;
  m.config_snapshot = to_json(cfg);
  for (int s = 0; s < cfg.n_sensors; ++s) {
    const std::string id = sensor_name(s, cfg.n_sensors);
    const bool is_pre = std::binary_search(pre_idx.begin(), pre_idx.end(), s);
    m.devices.push_back(id);
    (is_pre ? m.pretrain_devices : m.eval_devices).push_back(id);
    for (int view = 1; view <= 2; ++view)
      for (int j = 0; j < cfg.images_per_view; ++j) {
        Role role = Role::test;
        if (view == 1) role = j < cfg.n_refs ? Role::reference : (is_pre ? Role::pretrain : Role::unused);
        m.records.push_back({image_relpath(id, view, j), id, view, role});
      }
  }
  return m;
}

/// Captures for one sensor in manifest order: all view-1 scenes, then all view-2 scenes.
template <class Sink>
void render_sensor(const SimConfig& cfg, const std::string& sensor_id, const std::vector<ImagePlane>& view1,
                   const std::vector<ImagePlane>& view2, Sink&& sink) {
  Rng rng(sensor_seed(cfg.rng_seed, sensor_id));
  const SensorProfile profile =
      gen_sensor(rng, cfg.image_size, cfg.fingerprint_strength, cfg.read_noise_std, cfg.shot_noise_scale, sensor_id);
  for (int view = 1; view <= 2; ++view) {
    const auto& scenes = view == 1 ? view1 : view2;
    for (int j = 0; j < static_cast<int>(scenes.size()); ++j) sink(view, j, capture(scenes[j], profile, rng));
  }
}

inline std::vector<ImagePlane> view_scenes(const SimConfig& cfg, int view) {
  std::vector<ImagePlane> scenes(cfg.images_per_view);
  const std::uint64_t seed = cfg.view_seeds[view - 1];
  parallel_for(scenes.size(), [&](std::size_t j) { scenes[j] = view_scene(seed, static_cast<int>(j), cfg.image_size); });
  return scenes;
}

/// Renders every capture as 16-bit PNG under out_dir/<sensor>/<view>/<index>.png and writes
/// out_dir/manifest.json.
inline DatasetManifest gen_dataset(const SimConfig& cfg, const std::filesystem::path& out_dir) {
  DatasetManifest m = plan_dataset(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());

  const auto view1 = view_scenes(cfg, 1);
  const auto view2 = view_scenes(cfg, 2);
  parallel_for(m.devices.size(), [&](std::size_t s) {
    const std::string& id = m.devices[s];
    for (int view = 1; view <= 2; ++view) std::filesystem::create_directories(out_dir / id / std::to_string(view));
    render_sensor(cfg, id, view1, view2, [&](int view, int j, const ImagePlane& img) {
      write_png16(out_dir / image_relpath(id, view, j), img);
    });
  });
  validate_manifest(m);
  save_manifest(out_dir / "manifest.json", m);
  return m;
}

/// In-memory image source that renders captures on demand. Captures are quantized exactly as
/// a write_png16/read_png round trip would.
class SimulatedImageSource : public ImageSource {
 public:
  explicit SimulatedImageSource(SimConfig cfg) : cfg_(std::move(cfg)) {
    view1_ = view_scenes(cfg_, 1);
    view2_ = view_scenes(cfg_, 2);
  }

 protected:
  ImagePlane do_load(const ManifestRecord& rec) override {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(rec.sensor_id);
    if (it == cache_.end()) {
      std::vector<ImagePlane> images(2 * static_cast<std::size_t>(cfg_.images_per_view));
      render_sensor(cfg_, rec.sensor_id, view1_, view2_, [&](int view, int j, const ImagePlane& img) {
        images[static_cast<std::size_t>(view - 1) * cfg_.images_per_view + j] = quantize16(img);
      });
      it = cache_.emplace(rec.sensor_id, std::move(images)).first;
    }
    const auto slash = rec.image_path.rfind('/');
    const int index = std::stoi(rec.image_path.substr(slash + 1));
    return it->second[static_cast<std::size_t>(rec.view - 1) * cfg_.images_per_view + index];
  }

 private:
  SimConfig cfg_;
  std::vector<ImagePlane> view1_, view2_;
  std::mutex mutex_;
  std::map<std::string, std::vector<ImagePlane>> cache_;
};

}  // namespace prnu::sim
