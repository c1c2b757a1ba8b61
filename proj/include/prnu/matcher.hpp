#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "prnu/neural.hpp"
#include "prnu/parallel.hpp"
#include "prnu/plane.hpp"

namespace prnu {

struct NccScore {
  double value = 0.0;
  bool constant_input = false;  // one side had zero centered norm; value is then 0
};

/// Normalized cross-correlation of the mean-removed planes.
inline NccScore ncc(const Plane& a, const Plane& b) {
  require_same_size(a.size(), b.size(), "ncc");
  auto av = a.values();
  auto bv = b.values();
  if (av.empty()) return {0.0, true};
  const auto is_constant = [](std::span<const float> v) {
    return std::all_of(v.begin(), v.end(), [&](float x) { return x == v.front(); });
  };
  if (is_constant(av) || is_constant(bv)) return {0.0, true};

  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    ma += av[i];
    mb += bv[i];
  }
  ma /= static_cast<double>(av.size());
  mb /= static_cast<double>(bv.size());
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double da = av[i] - ma, db = bv[i] - mb;
    dot += da * db;
    na += da * da;
    nb += db * db;
  }
  if (na <= 0.0 || nb <= 0.0) return {0.0, true};
  return {std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0), false};
}

inline NccScore ncc(const Fingerprint& fp, const ResidualPlane& res) { return ncc(fp.plane, res.plane); }

inline Plane hadamard(const Plane& a, const Plane& b) {
  require_same_size(a.size(), b.size(), "hadamard");
  Plane out(a.height(), a.width());
  auto av = a.values(), bv = b.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  return out;
}

inline Plane hadamard(const Fingerprint& fp, const ResidualPlane& res) { return hadamard(fp.plane, res.plane); }

inline std::vector<double> resolution_weights(const ResolutionSpec& spec) { return spec.weights(); }

/// Zero mean, unit variance copy; constant planes map to all zeros.
inline Plane standardize(const Plane& p) {
  auto v = p.values();
  Plane out(p.height(), p.width());
  if (v.empty()) return out;
  double mean = 0.0;
  for (float x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (float x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size()));
  if (!(sd > 0.0)) return out;
  auto o = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) o[i] = static_cast<float>((v[i] - mean) / sd);
  return out;
}

/// Comparator input: Hadamard product of the standardized fingerprint and residual.
/// Its spatial mean equals the NCC of the pair.
inline Plane comparator_input(const Fingerprint& fp, const ResidualPlane& res) {
  require_same_size(fp.size(), res.size(), "comparator_input");
  return hadamard(standardize(fp.plane), standardize(res.plane));
}

inline double neural_score(const neural::ComparatorModel& model, const Fingerprint& fp, const ResidualPlane& res) {
  return neural::forward(model, comparator_input(fp, res));
}

enum class ScoreMode { ncc, neural, joint };

inline std::string to_string(ScoreMode m) {
  switch (m) {
    case ScoreMode::ncc: return "ncc";
    case ScoreMode::neural: return "neural";
    case ScoreMode::joint: return "joint";
  }
  return "?";
}

inline ScoreMode parse_score_mode(const std::string& s) {
  if (s == "ncc") return ScoreMode::ncc;
  if (s == "neural") return ScoreMode::neural;
  if (s == "joint") return ScoreMode::joint;
  throw InvalidArgument("unknown mode '" + s + "' (expected ncc|neural|joint)");
}

using LevelScorer = std::function<double(const Fingerprint&, const ResidualPlane&)>;

inline void require_aligned(std::span<const Fingerprint> fps, std::span<const ResidualPlane> ress,
                            const ResolutionSpec& spec) {
  if (fps.size() != spec.count() || ress.size() != spec.count())
    throw DimensionMismatch("multi-resolution inputs not aligned with " + std::to_string(spec.count()) + " levels");
  for (std::size_t i = 0; i < spec.count(); ++i) {
    require_same_size(fps[i].size(), ress[i].size(), "multi-resolution level");
    require_same_size(fps[i].size(), spec[i], "multi-resolution level vs spec");
  }
}

/// Weighted sum over levels of scorer(K^i, R^i), weights from resolution_weights().
inline double multires_score(std::span<const Fingerprint> fps, std::span<const ResidualPlane> ress,
                             const ResolutionSpec& spec, const LevelScorer& scorer) {
  require_aligned(fps, ress, spec);
  const auto alpha = spec.weights();
  double s = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) s += alpha[i] * scorer(fps[i], ress[i]);
  return s;
}

struct LevelScore {
  Size resolution;
  std::optional<double> ncc;
  std::optional<double> neural;
};

/// Score of one (device, query) pair. ncc and neural hold the weighted multi-resolution
/// aggregates of each scorer; fused is the value used for ranking.
struct ScoreRecord {
  std::string sensor_id;
  std::string query_id;
  std::optional<double> ncc;
  std::optional<double> neural;
  double fused = 0.0;
  bool ncc_constant_input = false;
  std::vector<LevelScore> per_resolution;
};

/// Scores one pair in the given mode. Joint mode sums neural and NCC per level before weighting.
inline ScoreRecord score_pair(std::span<const Fingerprint> fps, std::span<const ResidualPlane> ress,
                              const ResolutionSpec& spec, ScoreMode mode, const neural::ComparatorModel* model) {
  require_aligned(fps, ress, spec);
  if (mode != ScoreMode::ncc && model == nullptr) throw InvalidArgument("mode " + to_string(mode) + " needs a model");
  const auto alpha = spec.weights();
  const bool use_ncc = mode != ScoreMode::neural;
  const bool use_neural = mode != ScoreMode::ncc;

  ScoreRecord rec;
  rec.sensor_id = fps.front().sensor_id;
  rec.query_id = ress.front().source_id;
  double ncc_sum = 0.0, neural_sum = 0.0, fused = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    LevelScore level{spec[i], std::nullopt, std::nullopt};
    double c = 0.0, n = 0.0;
    if (use_ncc) {
      const NccScore s = ncc(fps[i], ress[i]);
      rec.ncc_constant_input = rec.ncc_constant_input || s.constant_input;
      c = s.value;
      level.ncc = c;
      ncc_sum += alpha[i] * c;
    }
    if (use_neural) {
      n = neural_score(*model, fps[i], ress[i]);
      level.neural = n;
      neural_sum += alpha[i] * n;
    }
    fused += alpha[i] * (n + c);
    rec.per_resolution.push_back(level);
  }
  if (use_ncc) rec.ncc = ncc_sum;
  if (use_neural) rec.neural = neural_sum;
  rec.fused = fused;
  return rec;
}

inline ScoreRecord joint_score(std::span<const Fingerprint> fps, std::span<const ResidualPlane> ress,
                               const ResolutionSpec& spec, const neural::ComparatorModel& model) {
  return score_pair(fps, ress, spec, ScoreMode::joint, &model);
}

/// Enrolled device: one fingerprint per resolution level.
struct GalleryEntry {
  std::string sensor_id;
  std::vector<Fingerprint> levels;
};

/// Query residuals, one per resolution level.
struct Query {
  std::string query_id;
  std::vector<ResidualPlane> levels;
};

/// Descending by fused score, ties by ascending sensor_id.
inline void sort_ranking(std::vector<ScoreRecord>& records) {
  std::sort(records.begin(), records.end(), [](const ScoreRecord& a, const ScoreRecord& b) {
    if (a.fused != b.fused) return a.fused > b.fused;
    return a.sensor_id < b.sensor_id;
  });
}

inline std::vector<ScoreRecord> rank_devices(std::span<const GalleryEntry> gallery, const Query& query,
                                             const ResolutionSpec& spec, ScoreMode mode,
                                             const neural::ComparatorModel* model) {
  if (gallery.empty()) throw InvalidArgument("rank_devices: empty gallery");
  std::vector<ScoreRecord> out(gallery.size());
  parallel_for(gallery.size(), [&](std::size_t i) {
    out[i] = score_pair(gallery[i].levels, query.levels, spec, mode, model);
    out[i].sensor_id = gallery[i].sensor_id;
    out[i].query_id = query.query_id;
  });
  sort_ranking(out);
  return out;
}

/// printf-style "%.9g".
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_scores_csv_header(std::ostream& os) { os << "query_id,sensor_id,ncc,neural,fused\n"; }

inline void write_scores_csv_rows(std::ostream& os, std::span<const ScoreRecord> records) {
  for (const auto& r : records) {
    os << r.query_id << ',' << r.sensor_id << ',' << (r.ncc ? format_real(*r.ncc) : "") << ','
       << (r.neural ? format_real(*r.neural) : "") << ',' << format_real(r.fused) << '\n';
  }
}

}  // namespace prnu
