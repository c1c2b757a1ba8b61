#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "prnu/manifest.hpp"
#include "prnu/matcher.hpp"
#include "prnu/metrics.hpp"
#include "prnu/parallel.hpp"
#include "prnu/pipeline.hpp"

namespace prnu {

/// How (query, device) scores are pooled for AUC/EER.
enum class Pairing { all_pairs, per_query };

inline std::string to_string(Pairing p) { return p == Pairing::all_pairs ? "all_pairs" : "per_query"; }

inline Pairing parse_pairing(const std::string& s) {
  if (s == "all_pairs") return Pairing::all_pairs;
  if (s == "per_query") return Pairing::per_query;
  throw InvalidArgument("unknown pairing '" + s + "'");
}

struct BenchmarkConfig {
  PipelineConfig pipeline{};
  ScoreMode mode = ScoreMode::ncc;
  Pairing pairing = Pairing::all_pairs;
};

struct Metrics {
  double auc = 0.0;
  double eer = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  int top5_k = 5;  // min(5, gallery size)
};

struct EvalReport {
  Metrics metrics;
  std::vector<RocPoint> roc;
  std::vector<std::string> truths;                 // per query
  std::vector<std::vector<ScoreRecord>> rankings;  // per query, best first
  std::vector<std::pair<std::string, double>> per_device_auc;
  std::vector<std::pair<std::string, Metrics>> ablation;
  nlohmann::ordered_json protocol = nlohmann::ordered_json::object();
};

/// Replaces the built-in scorer (tests use oracle or degenerate scorers).
using PairScorer = std::function<ScoreRecord(const GalleryEntry&, const Query&)>;

using ScoreSelector = std::function<std::optional<double>(const ScoreRecord&)>;

namespace detail {

inline std::vector<std::vector<std::string>> ranked_ids(const std::vector<std::vector<ScoreRecord>>& rankings,
                                                        const ScoreSelector& select) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : rankings) {
    std::vector<std::pair<double, std::string>> v;
    for (const auto& rec : r) v.emplace_back(*select(rec), rec.sensor_id);
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::vector<std::string> ids;
    for (auto& p : v) ids.push_back(std::move(p.second));
    out.push_back(std::move(ids));
  }
  return out;
}

}  // namespace detail

/// AUC/EER/top-k of one score variant over the collected rankings.
inline Metrics compute_metrics(const std::vector<std::vector<ScoreRecord>>& rankings,
                               const std::vector<std::string>& truths, Pairing pairing, const ScoreSelector& select,
                               std::vector<RocPoint>* roc_out = nullptr) {
  if (rankings.empty()) throw InvalidArgument("no queries to evaluate");
  Metrics m;
  if (pairing == Pairing::all_pairs) {
    std::vector<double> scores;
    std::vector<bool> labels;
    for (std::size_t q = 0; q < rankings.size(); ++q)
      for (const auto& rec : rankings[q]) {
        scores.push_back(*select(rec));
        labels.push_back(rec.sensor_id == truths[q]);
      }
    m.auc = roc_auc(scores, labels);
    auto roc = roc_curve(scores, labels);
    m.eer = eer_from_roc(roc);
    if (roc_out) *roc_out = std::move(roc);
  } else {
    double auc = 0.0, err = 0.0;
    for (std::size_t q = 0; q < rankings.size(); ++q) {
      std::vector<double> scores;
      std::vector<bool> labels;
      for (const auto& rec : rankings[q]) {
        scores.push_back(*select(rec));
        labels.push_back(rec.sensor_id == truths[q]);
      }
      auc += roc_auc(scores, labels);
      err += eer(scores, labels);
    }
    m.auc = auc / static_cast<double>(rankings.size());
    m.eer = err / static_cast<double>(rankings.size());
    if (roc_out) roc_out->clear();
  }
  const auto ids = detail::ranked_ids(rankings, select);
  const int gallery = static_cast<int>(rankings.front().size());
  m.top5_k = std::min(5, gallery);
  m.top1 = topk_accuracy(ids, truths, 1);
  m.top5 = topk_accuracy(ids, truths, m.top5_k);
  return m;
}

/// Score variants available for a mode: weighted multi-resolution aggregates and the
/// full-weight level alone, per scorer.
inline std::vector<std::pair<std::string, ScoreSelector>> ablation_selectors(ScoreMode mode, const ResolutionSpec& spec) {
  const auto w = spec.weights();
  const std::size_t top = static_cast<std::size_t>(std::find(w.begin(), w.end(), 1.0) - w.begin());
  std::vector<std::pair<std::string, ScoreSelector>> out;
  const bool has_ncc = mode != ScoreMode::neural;
  const bool has_neural = mode != ScoreMode::ncc;
  if (has_ncc) {
    out.emplace_back("ncc_single", [top](const ScoreRecord& r) { return r.per_resolution.at(top).ncc; });
    out.emplace_back("ncc_multires", [](const ScoreRecord& r) { return r.ncc; });
  }
  if (has_neural) {
    out.emplace_back("neural_single", [top](const ScoreRecord& r) { return r.per_resolution.at(top).neural; });
    out.emplace_back("neural_multires", [](const ScoreRecord& r) { return r.neural; });
  }
  if (has_ncc && has_neural) {
    out.emplace_back("joint_single", [top](const ScoreRecord& r) -> std::optional<double> {
      const auto& l = r.per_resolution.at(top);
      return *l.neural + *l.ncc;
    });
    out.emplace_back("joint_multires", [](const ScoreRecord& r) { return std::optional<double>(r.fused); });
  }
  return out;
}

/// 1:N benchmark: enroll every eval device from its view-1 references, then score every
/// view-2 test image of the eval devices against all of them.
inline EvalReport run_benchmark(const DatasetManifest& manifest, ImageSource& images, const BenchmarkConfig& cfg,
                                const neural::ComparatorModel* model = nullptr,
                                const std::vector<GalleryEntry>* enrolled = nullptr, PairScorer scorer = {}) {
  validate_manifest(manifest);
  std::vector<std::string> devices = manifest.eval_devices;
  std::sort(devices.begin(), devices.end());
  if (devices.size() < 2) throw InvalidArgument("benchmark needs at least 2 eval devices");
  if (!scorer && cfg.mode != ScoreMode::ncc && model == nullptr)
    throw InvalidArgument("mode " + to_string(cfg.mode) + " needs a model");
  const auto& spec = cfg.pipeline.resolutions;

  std::vector<GalleryEntry> gallery(devices.size());
  if (enrolled) {
    for (std::size_t d = 0; d < devices.size(); ++d) {
      auto it = std::find_if(enrolled->begin(), enrolled->end(),
                             [&](const GalleryEntry& g) { return g.sensor_id == devices[d]; });
      if (it == enrolled->end()) throw InvalidArgument("no enrolled fingerprint for eval device " + devices[d]);
      if (it->levels.size() != spec.count()) throw InvalidArgument("enrolled levels do not match resolutions");
      gallery[d] = *it;
    }
  } else {
    parallel_for(devices.size(), [&](std::size_t d) {
      std::vector<NamedImage> refs;
      for (const ManifestRecord* r : manifest.select(devices[d], Role::reference))
        refs.push_back({r->image_path, images.load(*r, AccessPurpose::reference)});
      gallery[d] = enroll_device(devices[d], refs, cfg.pipeline);
    });
  }

  std::vector<const ManifestRecord*> tests;
  for (const auto& d : devices)
    for (const ManifestRecord* r : manifest.select(d, Role::test)) tests.push_back(r);
  if (tests.empty()) throw InvalidArgument("no test images for eval devices");

  EvalReport report;
  report.rankings.resize(tests.size());
  report.truths.resize(tests.size());
  parallel_for(tests.size(), [&](std::size_t q) {
    const ManifestRecord& rec = *tests[q];
    const Query query = make_query(images.load(rec, AccessPurpose::query), rec.image_path, cfg.pipeline);
    std::vector<ScoreRecord> ranking;
    for (const auto& g : gallery) {
      ScoreRecord s = scorer ? scorer(g, query) : score_pair(g.levels, query.levels, spec, cfg.mode, model);
      s.sensor_id = g.sensor_id;
      s.query_id = query.query_id;
      ranking.push_back(std::move(s));
    }
    sort_ranking(ranking);
    report.rankings[q] = std::move(ranking);
    report.truths[q] = rec.sensor_id;
  });

  const ScoreSelector fused = [](const ScoreRecord& r) { return std::optional<double>(r.fused); };
  report.metrics = compute_metrics(report.rankings, report.truths, cfg.pairing, fused, &report.roc);
  if (cfg.pairing == Pairing::per_query) {
    std::vector<double> all;
    std::vector<bool> labels;
    for (std::size_t q = 0; q < report.rankings.size(); ++q)
      for (const auto& r : report.rankings[q]) {
        all.push_back(r.fused);
        labels.push_back(r.sensor_id == report.truths[q]);
      }
    report.roc = roc_curve(all, labels);
  }

  for (const auto& d : devices) {
    std::vector<double> s;
    std::vector<bool> labels;
    for (std::size_t q = 0; q < report.rankings.size(); ++q)
      for (const auto& r : report.rankings[q])
        if (r.sensor_id == d) {
          s.push_back(r.fused);
          labels.push_back(report.truths[q] == d);
        }
    report.per_device_auc.emplace_back(d, roc_auc(s, labels));
  }

  if (!scorer)
    for (const auto& [name, select] : ablation_selectors(cfg.mode, spec))
      report.ablation.emplace_back(name, compute_metrics(report.rankings, report.truths, cfg.pairing, select));

  report.protocol = {{"n_refs", manifest.n_refs},
                     {"resolutions", spec.to_string()},
                     {"mode", to_string(cfg.mode)},
                     {"pairing", to_string(cfg.pairing)},
                     {"eval_devices", devices.size()},
                     {"queries", tests.size()},
                     {"pipeline", to_json(cfg.pipeline)}};
  return report;
}

/// Value as printed with 9 significant digits.
inline double round9(double v) { return std::isfinite(v) ? std::stod(format_real(v)) : v; }

inline nlohmann::ordered_json to_json(const Metrics& m) {
  return {{"auc", round9(m.auc)}, {"eer", round9(m.eer)}, {"top1", round9(m.top1)}, {"top5", round9(m.top5)},
          {"top5_k", m.top5_k}};
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["metrics"] = to_json(r.metrics);
  j["protocol"] = r.protocol;
  j["per_device_auc"] = nlohmann::ordered_json::object();
  for (const auto& [d, v] : r.per_device_auc) j["per_device_auc"][d] = round9(v);
  j["ablation"] = nlohmann::ordered_json::object();
  for (const auto& [name, m] : r.ablation) j["ablation"][name] = to_json(m);
  j["roc_points"] = nlohmann::ordered_json::array();
  for (const auto& p : r.roc)
    j["roc_points"].push_back({round9(p.fpr), round9(p.tpr),
                               std::isfinite(p.threshold) ? nlohmann::ordered_json(round9(p.threshold)) : nullptr});
  return j;
}

inline void write_roc_csv(std::ostream& os, const std::vector<RocPoint>& roc) {
  os << "fpr,tpr,threshold\n";
  for (const auto& p : roc) os << format_real(p.fpr) << ',' << format_real(p.tpr) << ',' << format_real(p.threshold) << '\n';
}

inline void write_report_scores_csv(std::ostream& os, const EvalReport& r) {
  write_scores_csv_header(os);
  for (const auto& ranking : r.rankings) write_scores_csv_rows(os, ranking);
}

}  // namespace prnu
