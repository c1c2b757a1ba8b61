#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "prnu/plane.hpp"

namespace prnu {

/// A denoiser maps an image to its estimated clean content, preserving size.
using Denoiser = std::function<Plane(const ImagePlane&)>;

struct RgbImage {
  Plane r, g, b;
};

/// ITU-R BT.601 luma weights.
inline constexpr std::array<double, 3> kBt601 = {0.299, 0.587, 0.114};

inline ImagePlane to_luminance(const RgbImage& rgb, const std::array<double, 3>& weights = kBt601) {
  require_same_size(rgb.r.size(), rgb.g.size(), "to_luminance");
  require_same_size(rgb.r.size(), rgb.b.size(), "to_luminance");
  const double total = weights[0] + weights[1] + weights[2];
  if (std::abs(total - 1.0) > 1e-9 || weights[0] < 0 || weights[1] < 0 || weights[2] < 0)
    throw InvalidArgument("luminance weights must be nonnegative and sum to 1");
  Plane out(rgb.r.height(), rgb.r.width());
  auto r = rgb.r.values(), g = rgb.g.values(), b = rgb.b.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double v = weights[0] * r[i] + weights[1] * g[i] + weights[2] * b[i];
    o[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return ImagePlane(std::move(out));
}

/// R = I - D(I).
inline ResidualPlane extract_residual(const ImagePlane& image, const Denoiser& denoiser,
                                      std::string source_id = {}) {
  Plane denoised = denoiser(image);
  if (denoised.size() != image.size())
    throw DimensionMismatch("denoiser changed dimensions: " + to_string(image.size()) + " -> " +
                            to_string(denoised.size()));
  auto in = image.values();
  auto d = denoised.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = in[i] - d[i];
  return {std::move(denoised), std::move(source_id)};
}

/// Mean of the residuals. Residuals are summed in double precision in source_id order so the
/// result does not depend on the order the caller supplies them in.
inline Fingerprint estimate_fingerprint(const std::vector<ResidualPlane>& residuals, std::string sensor_id) {
  if (residuals.empty()) throw InvalidArgument("estimate_fingerprint: no residuals");
  const Size size = residuals.front().size();
  std::vector<const ResidualPlane*> order;
  order.reserve(residuals.size());
  for (const auto& r : residuals) {
    require_same_size(size, r.size(), "estimate_fingerprint");
    order.push_back(&r);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const ResidualPlane* a, const ResidualPlane* b) { return a->source_id < b->source_id; });

  std::vector<double> acc(size.area(), 0.0);
  for (const ResidualPlane* r : order) {
    auto v = r->plane.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  const double n = static_cast<double>(residuals.size());
  Plane k(size.height, size.width);
  auto kv = k.values();
  for (std::size_t i = 0; i < acc.size(); ++i) kv[i] = static_cast<float>(acc[i] / n);

  Fingerprint fp;
  fp.sensor_id = std::move(sensor_id);
  fp.plane = std::move(k);
  fp.n_images = static_cast<int>(residuals.size());
  fp.wiener_applied = false;
  fp.resolution_tag = size;
  return fp;
}

namespace detail {

// Local mean and variance over a (2r+1)^2 window truncated at the borders.
inline void local_moments(const Plane& p, int radius, std::vector<double>& mean, std::vector<double>& var) {
  const int h = p.height(), w = p.width();
  mean.assign(p.area(), 0.0);
  var.assign(p.area(), 0.0);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
      double s = 0.0;
      for (int yy = y0; yy <= y1; ++yy)
        for (int xx = x0; xx <= x1; ++xx) s += p(yy, xx);
      const double cnt = static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
      const double mu = s / cnt;
      double ss = 0.0;
      for (int yy = y0; yy <= y1; ++yy)
        for (int xx = x0; xx <= x1; ++xx) {
          const double d = p(yy, xx) - mu;
          ss += d * d;
        }
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      mean[i] = mu;
      var[i] = ss / cnt;
    }
  }
}

// Edge-exclusive mirror of index i into [0, n).
inline int reflect_index(int i, int n) noexcept {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

inline double cubic_weight(double d, double a = -0.5) noexcept {
  d = std::abs(d);
  if (d <= 1.0) return ((a + 2.0) * d - (a + 3.0)) * d * d + 1.0;
  if (d < 2.0) return ((a * d - 5.0 * a) * d + 8.0 * a) * d - 4.0 * a;
  return 0.0;
}

struct ResampleTaps {
  std::vector<std::array<int, 4>> index;
  std::vector<std::array<double, 4>> weight;
};

inline ResampleTaps resample_taps(int in, int out) {
  ResampleTaps taps;
  taps.index.resize(out);
  taps.weight.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    const double src = (i + 0.5) * scale - 0.5;
    const int base = static_cast<int>(std::floor(src));
    const double t = src - base;
    for (int k = 0; k < 4; ++k) {
      taps.index[i][k] = std::clamp(base - 1 + k, 0, in - 1);
      taps.weight[i][k] = cubic_weight(t - (k - 1));
    }
  }
  return taps;
}

}  // namespace detail

/// Adaptive Wiener shrinkage of a fingerprint towards its local mean.
/// When noise_variance is absent it is estimated as the median local variance.
inline Fingerprint wiener_postfilter(const Fingerprint& fp, int window = 3,
                                     std::optional<double> noise_variance = std::nullopt) {
  if (fp.wiener_applied) throw InvalidArgument("wiener_postfilter: fingerprint already filtered");
  if (window < 3 || window % 2 == 0) throw InvalidArgument("wiener_postfilter: window must be odd and >= 3");
  if (noise_variance && !(*noise_variance > 0.0))
    throw InvalidArgument("wiener_postfilter: noise variance must be positive");

  std::vector<double> mean, var;
  detail::local_moments(fp.plane, window / 2, mean, var);

  double nu = 0.0;
  if (noise_variance) {
    nu = *noise_variance;
  } else if (!var.empty()) {
    std::vector<double> tmp = var;
    auto mid = tmp.begin() + static_cast<std::ptrdiff_t>(tmp.size() / 2);
    std::nth_element(tmp.begin(), mid, tmp.end());
    nu = *mid;
  }

  Fingerprint out = fp;
  auto in = fp.plane.values();
  auto o = out.plane.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double v = var[i];
    const double gain = v > 0.0 ? std::max(v - nu, 0.0) / v : 0.0;
    o[i] = static_cast<float>(mean[i] + gain * (in[i] - mean[i]));
  }
  out.wiener_applied = true;
  return out;
}

/// Pads to max(h,w) square with mirrored samples; content stays at the top-left.
inline ImagePlane pad_reflect_square(const ImagePlane& image) {
  const int h = image.height(), w = image.width();
  if (h < 2 || w < 2) throw InvalidArgument("pad_reflect_square: dimensions must be >= 2");
  if (h == w) return image;
  const int n = std::max(h, w);
  Plane out(n, n);
  for (int y = 0; y < n; ++y) {
    const int sy = detail::reflect_index(y, h);
    for (int x = 0; x < n; ++x) out(y, x) = image(sy, detail::reflect_index(x, w));
  }
  return ImagePlane(std::move(out));
}

/// Separable cubic convolution resize (a = -0.5), clamped borders. No-op at equal size.
inline Plane resize_bicubic(const Plane& src, Size target) {
  if (target.height < 4 || target.width < 4) throw InvalidArgument("resize_bicubic: target below 4 pixels");
  if (src.empty()) throw InvalidArgument("resize_bicubic: empty source");
  if (src.size() == target) return src;

  const int ih = src.height(), iw = src.width();
  const auto tx = detail::resample_taps(iw, target.width);
  const auto ty = detail::resample_taps(ih, target.height);

  std::vector<double> rows(static_cast<std::size_t>(ih) * target.width);
  for (int y = 0; y < ih; ++y)
    for (int x = 0; x < target.width; ++x) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += tx.weight[x][k] * src(y, tx.index[x][k]);
      rows[static_cast<std::size_t>(y) * target.width + x] = s;
    }

  Plane out(target.height, target.width);
  for (int y = 0; y < target.height; ++y)
    for (int x = 0; x < target.width; ++x) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k)
        s += ty.weight[y][k] * rows[static_cast<std::size_t>(ty.index[y][k]) * target.width + x];
      out(y, x) = static_cast<float>(s);
    }
  return out;
}

inline ImagePlane resize_bicubic(const ImagePlane& image, Size target) {
  if (image.size() == target) {
    if (target.height < 4 || target.width < 4) throw InvalidArgument("resize_bicubic: target below 4 pixels");
    return image;
  }
  return ImagePlane::clamped(resize_bicubic(image.plane(), target));
}

}  // namespace prnu
