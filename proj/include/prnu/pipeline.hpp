#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prnu/denoise.hpp"
#include "prnu/matcher.hpp"
#include "prnu/plane.hpp"
#include "prnu/signal.hpp"

namespace prnu {

/// Everything needed to turn images into per-level fingerprints and query residuals.
struct PipelineConfig {
  ResolutionSpec resolutions{{{256, 256}}};
  DenoiserConfig denoiser{};
  bool wiener = true;  // post-filter every level's fingerprint
  int wiener_window = 3;
  std::optional<double> wiener_noise_variance;  // median local variance when absent
};

inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["resolutions"] = c.resolutions.to_string();
  j["denoiser"] = {{"kind", to_string(c.denoiser.kind)},
                   {"wavelet_levels", c.denoiser.wavelet_levels},
                   {"noise_variance", c.denoiser.noise_variance},
                   {"gaussian_sigma", c.denoiser.gaussian_sigma}};
  j["wiener"] = c.wiener;
  j["wiener_window"] = c.wiener_window;
  j["wiener_noise_variance"] = c.wiener_noise_variance ? nlohmann::ordered_json(*c.wiener_noise_variance) : nullptr;
  return j;
}

inline void merge_json(PipelineConfig& c, const nlohmann::ordered_json& j) {
  if (j.contains("resolutions")) c.resolutions = ResolutionSpec::parse(j["resolutions"].get<std::string>());
  if (j.contains("denoiser")) {
    const auto& d = j["denoiser"];
    if (d.contains("kind")) c.denoiser.kind = parse_denoiser_kind(d["kind"].get<std::string>());
    if (d.contains("wavelet_levels")) c.denoiser.wavelet_levels = d["wavelet_levels"].get<int>();
    if (d.contains("noise_variance")) c.denoiser.noise_variance = d["noise_variance"].get<double>();
    if (d.contains("gaussian_sigma")) c.denoiser.gaussian_sigma = d["gaussian_sigma"].get<double>();
  }
  if (j.contains("wiener")) c.wiener = j["wiener"].get<bool>();
  if (j.contains("wiener_window")) c.wiener_window = j["wiener_window"].get<int>();
  if (j.contains("wiener_noise_variance")) {
    if (j["wiener_noise_variance"].is_null())
      c.wiener_noise_variance.reset();
    else
      c.wiener_noise_variance = j["wiener_noise_variance"].get<double>();
  }
}

/// The image at every level: mirror-padded to square, then bicubic-resized.
inline std::vector<ImagePlane> resolution_pyramid(const ImagePlane& image, const ResolutionSpec& spec) {
  const ImagePlane square = pad_reflect_square(image);
  std::vector<ImagePlane> out;
  out.reserve(spec.count());
  for (const auto& level : spec.levels()) out.push_back(resize_bicubic(square, level));
  return out;
}

/// Residual of the image at every level (resize first, then denoise).
inline std::vector<ResidualPlane> level_residuals(const ImagePlane& image, const std::string& id,
                                                  const PipelineConfig& cfg) {
  const Denoiser denoiser = make_denoiser(cfg.denoiser);
  std::vector<ResidualPlane> out;
  for (const auto& level : resolution_pyramid(image, cfg.resolutions)) out.push_back(extract_residual(level, denoiser, id));
  return out;
}

/// Per-level fingerprint from residuals[level][image], post-filtered when configured.
inline std::vector<Fingerprint> fingerprints_from_residuals(const std::vector<std::vector<ResidualPlane>>& per_level,
                                                            const std::string& sensor_id, const PipelineConfig& cfg) {
  std::vector<Fingerprint> out;
  for (const auto& residuals : per_level) {
    Fingerprint fp = estimate_fingerprint(residuals, sensor_id);
    if (cfg.wiener) fp = wiener_postfilter(fp, cfg.wiener_window, cfg.wiener_noise_variance);
    out.push_back(std::move(fp));
  }
  return out;
}

struct NamedImage {
  std::string id;
  ImagePlane image;
};

/// Registration: one fingerprint per resolution level from the reference images.
inline GalleryEntry enroll_device(const std::string& sensor_id, const std::vector<NamedImage>& references,
                                  const PipelineConfig& cfg) {
  if (references.empty()) throw InvalidArgument("device " + sensor_id + " has no reference images");
  std::vector<std::vector<ResidualPlane>> per_level(cfg.resolutions.count());
  for (const auto& ref : references) {
    auto levels = level_residuals(ref.image, ref.id, cfg);
    for (std::size_t l = 0; l < levels.size(); ++l) per_level[l].push_back(std::move(levels[l]));
  }
  return {sensor_id, fingerprints_from_residuals(per_level, sensor_id, cfg)};
}

inline Query make_query(const ImagePlane& image, const std::string& id, const PipelineConfig& cfg) {
  return {id, level_residuals(image, id, cfg)};
}

}  // namespace prnu
