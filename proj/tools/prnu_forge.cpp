// prnu_forge: simulate, enroll, identify, train and evaluate from the command line.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prnu/prnu.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

/// Bad flags, bad config values, or a request that cannot be satisfied as stated.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string resolutions;
  std::string mode;
};

struct Options {
  Common common;
  // simulate
  std::optional<int> sensors, images_per_view, refs;
  std::optional<double> strength;
  std::string size;
  // enroll / train / eval
  std::string manifest;
  std::string devices = "eval";
  // identify / eval
  std::string store;
  std::string model;
  std::string query;
  std::string pairing;
  // train
  std::optional<int> epochs, batch_size, crop;
  std::optional<double> lr;
  std::string resume;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    auto j = json::parse(prnu::read_file(path));
    if (!j.is_object()) throw UsageError("config " + path + " must hold a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw UsageError("cannot parse config " + path + ": " + e.what());
  } catch (const std::runtime_error& e) {
    if (dynamic_cast<const UsageError*>(&e)) throw;
    throw UsageError(e.what());
  }
}

json section(const json& cfg, const char* key) { return cfg.contains(key) ? cfg[key] : json::object(); }

void apply_threads(const Common& c) {
  int n = 1;
  if (c.threads) {
    n = *c.threads;
  } else if (const char* env = std::getenv("PRNU_FORGE_THREADS"); env && *env) {
    try {
      n = std::stoi(env);
    } catch (const std::logic_error&) {
      throw UsageError(std::string("PRNU_FORGE_THREADS is not an integer: ") + env);
    }
  }
  if (n < 1) throw UsageError("thread count must be >= 1");
  prnu::thread_cap() = n;
}

prnu::PipelineConfig resolve_pipeline(const json& cfg, const Common& c) {
  prnu::PipelineConfig p;
  prnu::merge_json(p, section(cfg, "pipeline"));
  if (!c.resolutions.empty()) p.resolutions = prnu::ResolutionSpec::parse(c.resolutions);
  return p;
}

prnu::ScoreMode resolve_mode(const json& cfg, const Common& c) {
  if (!c.mode.empty()) return prnu::parse_score_mode(c.mode);
  if (cfg.contains("mode")) return prnu::parse_score_mode(cfg["mode"].get<std::string>());
  return prnu::ScoreMode::ncc;
}

void write_text(const fs::path& path, const std::string& text) { prnu::write_file_atomic(path, text); }

void write_snapshot(const fs::path& out, const std::string& command, json resolved) {
  json j;
  j["command"] = command;
  for (auto& [k, v] : resolved.items()) j[k] = v;
  write_text(out / "run_config.json", j.dump(2) + "\n");
}

fs::path prepare_out(const std::string& out) {
  const fs::path p(out);
  fs::create_directories(p);
  return p;
}

/// Groups a flat fingerprint store into devices, one entry per level, in store order.
std::vector<prnu::GalleryEntry> gallery_from_store(const std::vector<prnu::Fingerprint>& fps, const std::string& path) {
  if (fps.empty()) throw std::runtime_error("fingerprint store " + path + " is empty");
  std::vector<prnu::GalleryEntry> gallery;
  std::map<std::string, std::size_t> index;
  for (const auto& fp : fps) {
    auto [it, fresh] = index.emplace(fp.sensor_id, gallery.size());
    if (fresh) gallery.push_back({fp.sensor_id, {}});
    gallery[it->second].levels.push_back(fp);
  }
  for (const auto& g : gallery) {
    if (g.levels.size() != gallery.front().levels.size())
      throw prnu::FormatError("store " + path + ": device " + g.sensor_id + " has a different level count");
    for (std::size_t l = 0; l < g.levels.size(); ++l)
      if (g.levels[l].resolution_tag != gallery.front().levels[l].resolution_tag)
        throw prnu::FormatError("store " + path + ": device " + g.sensor_id + " has different resolutions");
  }
  return gallery;
}

/// Levels of an enrolled gallery; an explicit --resolutions must agree with them.
prnu::ResolutionSpec store_resolutions(const std::vector<prnu::GalleryEntry>& gallery, const Common& c) {
  std::vector<prnu::Size> levels;
  for (const auto& fp : gallery.front().levels) levels.push_back(fp.resolution_tag);
  prnu::ResolutionSpec spec(levels);
  if (!c.resolutions.empty() && prnu::ResolutionSpec::parse(c.resolutions).levels() != spec.levels())
    throw UsageError("--resolutions " + c.resolutions + " does not match the store's levels " + spec.to_string());
  return spec;
}

std::optional<prnu::neural::ComparatorModel> load_model_for(prnu::ScoreMode mode, const std::string& path) {
  if (mode == prnu::ScoreMode::ncc) return std::nullopt;
  if (path.empty()) throw UsageError("mode " + prnu::to_string(mode) + " needs --model");
  return prnu::load_model(path).model;
}

int cmd_simulate(const Options& o) {
  const json cfg = load_config(o.common.config_path);
  prnu::sim::SimConfig sim;
  prnu::sim::merge_json(sim, section(cfg, "simulate"));
  if (o.sensors) sim.n_sensors = *o.sensors;
  if (o.images_per_view) sim.images_per_view = *o.images_per_view;
  if (o.refs) sim.n_refs = *o.refs;
  if (o.strength) sim.fingerprint_strength = *o.strength;
  if (o.common.seed) sim.rng_seed = *o.common.seed;
  if (!o.size.empty()) {
    const auto spec = prnu::ResolutionSpec::parse(o.size);
    if (spec.count() != 1) throw UsageError("--size takes a single HxW");
    sim.image_size = spec[0];
  }
  sim.validate();
  const fs::path out = prepare_out(o.common.out);
  const auto m = prnu::sim::gen_dataset(sim, out);
  write_snapshot(out, "simulate", {{"simulate", prnu::sim::to_json(sim)}});
  std::cout << "wrote " << m.devices.size() << " devices, " << m.records.size() << " images to " << out.string() << '\n';
  return 0;
}

std::vector<std::string> pick_devices(const prnu::DatasetManifest& m, const std::string& which) {
  if (which == "eval") return m.eval_devices;
  if (which == "pretrain") return m.pretrain_devices;
  if (which == "all") return m.devices;
  throw UsageError("--devices must be eval, pretrain or all");
}

int cmd_enroll(const Options& o) {
  const json cfg = load_config(o.common.config_path);
  const auto pipeline = resolve_pipeline(cfg, o.common);
  if (o.devices != "eval" && o.devices != "pretrain" && o.devices != "all")
    throw UsageError("--devices must be eval, pretrain or all");
  const auto m = prnu::load_manifest(o.manifest);
  prnu::validate_manifest(m);
  auto devices = pick_devices(m, o.devices);
  std::sort(devices.begin(), devices.end());
  prnu::FileImageSource images(fs::path(o.manifest).parent_path());

  std::vector<prnu::GalleryEntry> gallery(devices.size());
  prnu::parallel_for(devices.size(), [&](std::size_t d) {
    std::vector<prnu::NamedImage> refs;
    for (const auto* r : m.select(devices[d], prnu::Role::reference))
      refs.push_back({r->image_path, images.load(*r, prnu::AccessPurpose::reference)});
    gallery[d] = prnu::enroll_device(devices[d], refs, pipeline);
  });
  std::vector<prnu::Fingerprint> flat;
  for (auto& g : gallery)
    for (auto& fp : g.levels) flat.push_back(std::move(fp));

  const fs::path out = prepare_out(o.common.out);
  prnu::save_fingerprints(flat, out / "fingerprints.prnf");
  write_snapshot(out, "enroll",
                 {{"manifest", o.manifest}, {"devices", o.devices}, {"pipeline", prnu::to_json(pipeline)}});
  std::cout << "enrolled " << devices.size() << " devices, " << flat.size() << " fingerprints\n";
  return 0;
}

std::vector<fs::path> query_files(const std::string& q) {
  const fs::path p(q);
  if (!fs::exists(p)) throw std::runtime_error("query " + q + " does not exist");
  if (!fs::is_directory(p)) return {p};
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(p))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw std::runtime_error("no .png files under " + q);
  return out;
}

int cmd_identify(const Options& o) {
  const json cfg = load_config(o.common.config_path);
  auto pipeline = resolve_pipeline(cfg, o.common);
  const auto mode = resolve_mode(cfg, o.common);
  if (mode != prnu::ScoreMode::ncc && o.model.empty()) throw UsageError("mode " + prnu::to_string(mode) + " needs --model");
  const auto gallery = gallery_from_store(prnu::load_fingerprints(o.store), o.store);
  pipeline.resolutions = store_resolutions(gallery, o.common);
  const auto model = load_model_for(mode, o.model);
  const prnu::neural::ComparatorModel* mp = model ? &*model : nullptr;

  const auto files = query_files(o.query);
  const fs::path out = prepare_out(o.common.out);
  std::ostringstream csv;
  prnu::write_scores_csv_header(csv);
  for (const auto& f : files) {
    const auto query = prnu::make_query(prnu::read_png(f), f.generic_string(), pipeline);
    prnu::write_scores_csv_rows(csv, prnu::rank_devices(gallery, query, pipeline.resolutions, mode, mp));
  }
  std::cout << csv.str();
  write_text(out / "scores.csv", csv.str());
  write_snapshot(out, "identify",
                 {{"store", o.store},
                  {"query", o.query},
                  {"model", o.model},
                  {"mode", prnu::to_string(mode)},
                  {"pipeline", prnu::to_json(pipeline)}});
  return 0;
}

int cmd_train(const Options& o) {
  const json cfg = load_config(o.common.config_path);
  const auto pipeline = resolve_pipeline(cfg, o.common);
  prnu::neural::TrainConfig tc;
  prnu::neural::merge_json(tc, section(cfg, "train"));
  if (o.epochs) tc.epochs = *o.epochs;
  if (o.lr) tc.learning_rate = *o.lr;
  if (o.batch_size) tc.batch_size = *o.batch_size;
  if (o.crop) tc.crop = *o.crop;
  if (o.common.seed) tc.seed = *o.common.seed;
  tc.validate();

  std::optional<prnu::neural::TrainResult> resume;
  if (!o.resume.empty()) {
    const auto ck = prnu::load_model(o.resume);
    resume = prnu::neural::TrainResult{ck.model, ck.resume_state(), {}};
  }
  const auto m = prnu::load_manifest(o.manifest);
  prnu::FileImageSource images(fs::path(o.manifest).parent_path());
  const auto set = prnu::neural::build_training_set(m, images, pipeline);
  const auto result = prnu::neural::train(set, tc, resume ? &*resume : nullptr);

  json resolved = {{"manifest", o.manifest},
                   {"resume", o.resume},
                   {"pipeline", prnu::to_json(pipeline)},
                   {"train", prnu::neural::to_json(tc)}};
  const fs::path out = prepare_out(o.common.out);
  prnu::ModelCheckpoint ck{result.model, result.optimizer, tc.seed, resolved.dump()};
  prnu::save_model(ck, out / "model.prnm");
  std::ostringstream loss;
  prnu::neural::write_loss_csv(loss, result.trace);
  write_text(out / "loss.csv", loss.str());
  write_snapshot(out, "train", resolved);
  std::cout << "trained " << result.trace.size() << " steps on " << set.devices.size() << " devices; final loss "
            << prnu::format_real(result.trace.back().loss) << '\n';
  return 0;
}

int cmd_eval(const Options& o) {
  const json cfg = load_config(o.common.config_path);
  prnu::BenchmarkConfig bc;
  bc.pipeline = resolve_pipeline(cfg, o.common);
  bc.mode = resolve_mode(cfg, o.common);
  if (!o.pairing.empty())
    bc.pairing = prnu::parse_pairing(o.pairing);
  else if (cfg.contains("pairing"))
    bc.pairing = prnu::parse_pairing(cfg["pairing"].get<std::string>());
  if (bc.mode != prnu::ScoreMode::ncc && o.model.empty())
    throw UsageError("mode " + prnu::to_string(bc.mode) + " needs --model");

  std::optional<std::vector<prnu::GalleryEntry>> gallery;
  if (!o.store.empty()) {
    gallery = gallery_from_store(prnu::load_fingerprints(o.store), o.store);
    bc.pipeline.resolutions = store_resolutions(*gallery, o.common);
  }
  const auto model = load_model_for(bc.mode, o.model);
  const auto m = prnu::load_manifest(o.manifest);
  prnu::FileImageSource images(fs::path(o.manifest).parent_path());
  const auto report =
      prnu::run_benchmark(m, images, bc, model ? &*model : nullptr, gallery ? &*gallery : nullptr);

  const fs::path out = prepare_out(o.common.out);
  write_text(out / "report.json", prnu::report_to_json(report).dump(2) + "\n");
  std::ostringstream roc, scores;
  prnu::write_roc_csv(roc, report.roc);
  prnu::write_report_scores_csv(scores, report);
  write_text(out / "roc.csv", roc.str());
  write_text(out / "scores.csv", scores.str());
  write_snapshot(out, "eval",
                 {{"manifest", o.manifest},
                  {"store", o.store},
                  {"model", o.model},
                  {"mode", prnu::to_string(bc.mode)},
                  {"pairing", prnu::to_string(bc.pairing)},
                  {"pipeline", prnu::to_json(bc.pipeline)}});
  const auto& mt = report.metrics;
  std::cout << "auc " << prnu::format_real(mt.auc) << " eer " << prnu::format_real(mt.eer) << " top1 "
            << prnu::format_real(mt.top1) << " top" << mt.top5_k << ' ' << prnu::format_real(mt.top5) << '\n';
  return 0;
}

void add_common(CLI::App* sub, Common& c, bool uses_mode, bool uses_seed) {
  sub->add_option("--config", c.config_path, "JSON config file; flags override it")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "Output directory")->required();
  sub->add_option("--threads", c.threads, "Worker thread cap (default: PRNU_FORGE_THREADS or 1)");
  sub->add_option("--resolutions", c.resolutions, "Resolution levels, e.g. 192x192,256x256");
  if (uses_seed) sub->add_option("--seed", c.seed, "RNG seed");
  if (uses_mode) sub->add_option("--mode", c.mode, "Scoring mode: ncc, neural or joint");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PRNU source-camera identification toolkit"};
  app.require_subcommand(1);
  Options o;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset and manifest");
  add_common(sim, o.common, false, true);
  sim->add_option("--sensors", o.sensors, "Number of sensors");
  sim->add_option("--images-per-view", o.images_per_view, "Captures per sensor per view");
  sim->add_option("--refs", o.refs, "Reference images per device");
  sim->add_option("--strength", o.strength, "PRNU strength");
  sim->add_option("--size", o.size, "Image size HxW");

  auto* enroll = app.add_subcommand("enroll", "Estimate fingerprints from reference images");
  add_common(enroll, o.common, false, false);
  enroll->add_option("--manifest", o.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  enroll->add_option("--devices", o.devices, "Devices to enroll: eval, pretrain or all");

  auto* identify = app.add_subcommand("identify", "Rank enrolled devices for query images");
  add_common(identify, o.common, true, false);
  identify->add_option("query", o.query, "Query image or directory of PNGs")->required();
  identify->add_option("--store", o.store, "Fingerprint store")->required()->check(CLI::ExistingFile);
  identify->add_option("--model", o.model, "Comparator checkpoint (neural/joint)")->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "Train the comparator on pretrain devices");
  add_common(train, o.common, false, true);
  train->add_option("--manifest", o.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--epochs", o.epochs, "Training epochs");
  train->add_option("--lr", o.lr, "Adam learning rate");
  train->add_option("--batch-size", o.batch_size, "Pairs per step");
  train->add_option("--crop", o.crop, "Training crop side");
  train->add_option("--resume", o.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Run the 1:N benchmark");
  add_common(eval, o.common, true, false);
  eval->add_option("--manifest", o.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--store", o.store, "Pre-enrolled fingerprint store")->check(CLI::ExistingFile);
  eval->add_option("--model", o.model, "Comparator checkpoint (neural/joint)")->check(CLI::ExistingFile);
  eval->add_option("--pairing", o.pairing, "all_pairs or per_query");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    apply_threads(o.common);
    if (sim->parsed()) return cmd_simulate(o);
    if (enroll->parsed()) return cmd_enroll(o);
    if (identify->parsed()) return cmd_identify(o);
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const prnu::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad config value: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
