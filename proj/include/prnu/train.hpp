#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "prnu/manifest.hpp"
#include "prnu/matcher.hpp"
#include "prnu/neural.hpp"
#include "prnu/parallel.hpp"
#include "prnu/pipeline.hpp"
#include "prnu/random.hpp"

namespace prnu::neural {

/// Pre-training data of one device, standardized for the comparator.
struct TrainingDevice {
  std::string sensor_id;
  std::vector<Plane> fingerprint;           // per level
  std::vector<std::vector<Plane>> images;   // [image][level] residuals
};

struct TrainingSet {
  std::vector<TrainingDevice> devices;

  [[nodiscard]] std::size_t image_count() const {
    std::size_t n = 0;
    for (const auto& d : devices) n += d.images.size();
    return n;
  }
  [[nodiscard]] std::size_t levels() const { return devices.empty() ? 0 : devices.front().fingerprint.size(); }
};

/// Builds a training set from enrolled devices and their non-reference residuals.
inline TrainingSet make_training_set(const std::vector<GalleryEntry>& gallery, const std::vector<std::vector<Query>>& pools) {
  if (gallery.size() != pools.size()) throw InvalidArgument("make_training_set: gallery and pools differ in length");
  TrainingSet set;
  for (std::size_t d = 0; d < gallery.size(); ++d) {
    TrainingDevice dev;
    dev.sensor_id = gallery[d].sensor_id;
    for (const auto& fp : gallery[d].levels) dev.fingerprint.push_back(standardize(fp.plane));
    for (const auto& q : pools[d]) {
      if (q.levels.size() != dev.fingerprint.size()) throw InvalidArgument("make_training_set: level count mismatch");
      std::vector<Plane> levels;
      for (std::size_t l = 0; l < q.levels.size(); ++l) {
        require_same_size(q.levels[l].size(), dev.fingerprint[l].size(), "make_training_set");
        levels.push_back(standardize(q.levels[l].plane));
      }
      dev.images.push_back(std::move(levels));
    }
    set.devices.push_back(std::move(dev));
  }
  return set;
}

/// Training set for the manifest's pretrain devices: fingerprints from their references,
/// samples from their pretrain-role (view 1) images.
inline TrainingSet build_training_set(const DatasetManifest& manifest, ImageSource& images, const PipelineConfig& cfg) {
  validate_manifest(manifest);
  std::vector<std::string> devices = manifest.pretrain_devices;
  std::sort(devices.begin(), devices.end());
  if (devices.size() < 2) throw InvalidArgument("training needs at least 2 pretrain devices");
  std::vector<GalleryEntry> gallery(devices.size());
  std::vector<std::vector<Query>> pools(devices.size());
  parallel_for(devices.size(), [&](std::size_t d) {
    std::vector<NamedImage> refs;
    for (const ManifestRecord* r : manifest.select(devices[d], Role::reference))
      refs.push_back({r->image_path, images.load(*r, AccessPurpose::reference)});
    gallery[d] = enroll_device(devices[d], refs, cfg);
    for (const ManifestRecord* r : manifest.select(devices[d], Role::pretrain))
      pools[d].push_back(make_query(images.load(*r, AccessPurpose::training), r->image_path, cfg));
    if (pools[d].empty()) throw InvalidArgument("pretrain device " + devices[d] + " has no pretrain images");
  });
  return make_training_set(gallery, pools);
}

/// Indices into TrainingSet: fingerprint device, one of its images, another device and one of its images.
struct TrainSample {
  std::size_t device = 0;
  std::size_t positive = 0;
  std::size_t negative_device = 0;
  std::size_t negative = 0;
};

/// Fingerprint device uniform over all devices, positive uniform over its images, negative
/// device uniform over the remaining d-1 devices, negative image uniform over that device's images.
inline std::vector<TrainSample> sample_batch(const TrainingSet& set, Rng& rng, std::size_t batch_size) {
  const std::size_t d = set.devices.size();
  if (d < 2) throw InvalidArgument("sample_batch: need at least 2 devices");
  for (const auto& dev : set.devices)
    if (dev.images.empty()) throw InvalidArgument("sample_batch: device " + dev.sensor_id + " has no images");
  std::vector<TrainSample> out(batch_size);
  for (auto& s : out) {
    s.device = rng.below(d);
    s.positive = rng.below(set.devices[s.device].images.size());
    const std::size_t k = rng.below(d - 1);
    s.negative_device = k < s.device ? k : k + 1;
    s.negative = rng.below(set.devices[s.negative_device].images.size());
  }
  return out;
}

struct TrainConfig {
  int epochs = 10;
  double learning_rate = 1e-3;
  int batch_size = 8;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int steps_per_epoch = 0;  // 0: ceil(training images / batch_size)
  int crop = 64;
  Architecture arch{};

  void validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (!(learning_rate >= 0.0)) throw InvalidArgument("learning_rate must be >= 0");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (steps_per_epoch < 0) throw InvalidArgument("steps_per_epoch must be >= 0");
    if (crop < kMinInputSide) throw InvalidArgument("crop must be >= 16");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("adam betas must be in [0,1)");
    if (!(adam_eps > 0.0)) throw InvalidArgument("adam_eps must be positive");
    arch.validate();
  }

  [[nodiscard]] AdamConfig adam() const { return {learning_rate, beta1, beta2, adam_eps}; }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},         {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"seed", c.seed},             {"adam_betas", {c.beta1, c.beta2}}, {"adam_eps", c.adam_eps},
          {"steps_per_epoch", c.steps_per_epoch}, {"crop", c.crop},      {"channels", c.arch.channels}};
}

inline void merge_json(TrainConfig& c, const nlohmann::ordered_json& j) {
  if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
  if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("adam_betas")) {
    c.beta1 = j["adam_betas"][0].get<double>();
    c.beta2 = j["adam_betas"][1].get<double>();
  }
  if (j.contains("adam_eps")) c.adam_eps = j["adam_eps"].get<double>();
  if (j.contains("steps_per_epoch")) c.steps_per_epoch = j["steps_per_epoch"].get<int>();
  if (j.contains("crop")) c.crop = j["crop"].get<int>();
  if (j.contains("channels")) c.arch.channels = j["channels"].get<std::vector<int>>();
}

struct LossEntry {
  int epoch = 0;
  int step = 0;
  double loss = 0.0;  // mean pair loss over the batch
};

struct TrainResult {
  ComparatorModel model;
  AdamState optimizer;
  std::vector<LossEntry> trace;
};

/// Crop of the Hadamard product of two standardized planes.
inline Plane product_crop(const Plane& a, const Plane& b, int oy, int ox, int ch, int cw) {
  Plane out(ch, cw);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x) out(y, x) = a(oy + y, ox + x) * b(oy + y, ox + x);
  return out;
}

inline int steps_per_epoch(const TrainingSet& set, const TrainConfig& cfg) {
  if (cfg.steps_per_epoch > 0) return cfg.steps_per_epoch;
  const auto n = set.image_count();
  return static_cast<int>((n + cfg.batch_size - 1) / cfg.batch_size);
}

/// Trains with the pair loss -log E(K*R_pos) - log(1 - E(K*R_neg)) and Adam. Each sample
/// picks a resolution level and a random crop shared by both products. Passing `resume`
/// continues from its parameters and optimizer state.
inline TrainResult train(const TrainingSet& set, const TrainConfig& cfg, const TrainResult* resume = nullptr) {
  cfg.validate();
  if (set.levels() == 0) throw InvalidArgument("train: empty training set");
  TrainResult result;
  if (resume) {
    if (resume->optimizer.m.empty()) throw InvalidArgument("train: resume state has no optimizer moments");
    if (!(resume->model.arch == cfg.arch)) throw InvalidArgument("train: resume architecture differs from config");
    result = *resume;
  } else {
    result.model = ComparatorModel::initialized(cfg.arch, cfg.seed);
  }
  Rng rng(hash_combine(cfg.seed, result.optimizer.step));
  const int steps = steps_per_epoch(set, cfg);
  const AdamConfig adam = cfg.adam();

  std::vector<Plane> inputs;
  std::vector<double> labels;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int step = 0; step < steps; ++step) {
      inputs.clear();
      labels.clear();
      for (const TrainSample& s : sample_batch(set, rng, static_cast<std::size_t>(cfg.batch_size))) {
        const std::size_t level = rng.below(set.levels());
        const Plane& k = set.devices[s.device].fingerprint[level];
        const int ch = std::min(cfg.crop, k.height()), cw = std::min(cfg.crop, k.width());
        const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(k.height() - ch + 1)));
        const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(k.width() - cw + 1)));
        inputs.push_back(product_crop(k, set.devices[s.device].images[s.positive][level], oy, ox, ch, cw));
        labels.push_back(1.0);
        inputs.push_back(product_crop(k, set.devices[s.negative_device].images[s.negative][level], oy, ox, ch, cw));
        labels.push_back(0.0);
      }
      const Gradients g = backward(result.model, inputs, labels);
      const double pair_loss = 2.0 * g.loss;
      result.trace.push_back({epoch, step, pair_loss});
      if (!std::isfinite(pair_loss)) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << " step " << step << "; recent losses:";
        const std::size_t from = result.trace.size() > 10 ? result.trace.size() - 10 : 0;
        for (std::size_t i = from; i < result.trace.size(); ++i) msg << ' ' << result.trace[i].loss;
        throw TrainingDiverged(msg.str());
      }
      adam_step(result.model.params, g.values, result.optimizer, adam);
    }
  }
  return result;
}

inline void write_loss_csv(std::ostream& os, const std::vector<LossEntry>& trace) {
  os << "epoch,step,loss\n";
  for (const auto& e : trace) os << e.epoch << ',' << e.step << ',' << format_real(e.loss) << '\n';
}

}  // namespace prnu::neural
