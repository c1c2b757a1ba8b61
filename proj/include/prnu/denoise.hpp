#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <string>
#include <vector>

#include "prnu/plane.hpp"
#include "prnu/signal.hpp"

namespace prnu {

enum class DenoiserKind { wavelet_wiener, gaussian, identity };

inline std::string to_string(DenoiserKind k) {
  switch (k) {
    case DenoiserKind::wavelet_wiener: return "wavelet_wiener";
    case DenoiserKind::gaussian: return "gaussian";
    case DenoiserKind::identity: return "identity";
  }
  return "?";
}

inline DenoiserKind parse_denoiser_kind(const std::string& s) {
  if (s == "wavelet_wiener") return DenoiserKind::wavelet_wiener;
  if (s == "gaussian") return DenoiserKind::gaussian;
  if (s == "identity") return DenoiserKind::identity;
  throw InvalidArgument("unknown denoiser '" + s + "'");
}

struct DenoiserConfig {
  DenoiserKind kind = DenoiserKind::wavelet_wiener;
  int wavelet_levels = 4;
  double noise_variance = 0.0009;  // sigma0^2 for [0,1] luminance
  double gaussian_sigma = 1.0;

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

/// Separable Gaussian blur with radius ceil(3 sigma) and clamped borders.
inline Plane denoise_gaussian(const ImagePlane& image, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("denoise_gaussian: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;

  const int h = image.height(), w = image.width();
  std::vector<double> tmp(image.size().area());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k) s += kernel[k + radius] * image(y, std::clamp(x + k, 0, w - 1));
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  Plane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k)
        s += kernel[k + radius] * tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
      out(y, x) = static_cast<float>(s);
    }
  return out;
}

namespace wavelet {

/// Daubechies-4 (8-tap) scaling filter.
inline constexpr std::array<double, 8> kDb4Low = {
    0.23037781330885523,  0.7148465705525415,   0.6308807679295904,   -0.02798376941698385,
    -0.18703481171888114, 0.030841381835986965, 0.032883011666982945, -0.010597401784997278};

inline constexpr std::array<double, 8> high_pass() {
  std::array<double, 8> g{};
  for (std::size_t m = 0; m < 8; ++m) g[m] = (m % 2 == 0 ? 1.0 : -1.0) * kDb4Low[7 - m];
  return g;
}
inline constexpr std::array<double, 8> kDb4High = high_pass();

// One periodized analysis step on a strided 1D signal of even length n.
inline void analyze(double* x, std::size_t stride, int n, std::vector<double>& scratch) {
  scratch.assign(n, 0.0);
  const int half = n / 2;
  for (int k = 0; k < half; ++k) {
    double a = 0.0, d = 0.0;
    for (int m = 0; m < 8; ++m) {
      const double v = x[static_cast<std::size_t>((2 * k + m) % n) * stride];
      a += kDb4Low[m] * v;
      d += kDb4High[m] * v;
    }
    scratch[k] = a;
    scratch[half + k] = d;
  }
  for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i) * stride] = scratch[i];
}

// Adjoint (= inverse, the transform being orthogonal) of analyze().
inline void synthesize(double* x, std::size_t stride, int n, std::vector<double>& scratch) {
  scratch.assign(n, 0.0);
  const int half = n / 2;
  for (int k = 0; k < half; ++k) {
    const double a = x[static_cast<std::size_t>(k) * stride];
    const double d = x[static_cast<std::size_t>(half + k) * stride];
    for (int m = 0; m < 8; ++m) scratch[(2 * k + m) % n] += kDb4Low[m] * a + kDb4High[m] * d;
  }
  for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i) * stride] = scratch[i];
}

/// In-place multi-level 2D transform of a row-major h x w array; both dims divisible by 2^levels.
/// After level l the coarse block occupies the top-left (h >> l) x (w >> l) corner.
inline void forward_2d(std::vector<double>& a, int h, int w, int levels) {
  std::vector<double> scratch;
  int ch = h, cw = w;
  for (int l = 0; l < levels; ++l) {
    for (int y = 0; y < ch; ++y) analyze(&a[static_cast<std::size_t>(y) * w], 1, cw, scratch);
    for (int x = 0; x < cw; ++x) analyze(&a[x], static_cast<std::size_t>(w), ch, scratch);
    ch /= 2;
    cw /= 2;
  }
}

inline void inverse_2d(std::vector<double>& a, int h, int w, int levels) {
  std::vector<double> scratch;
  for (int l = levels - 1; l >= 0; --l) {
    const int ch = h >> l, cw = w >> l;
    for (int x = 0; x < cw; ++x) synthesize(&a[x], static_cast<std::size_t>(w), ch, scratch);
    for (int y = 0; y < ch; ++y) synthesize(&a[static_cast<std::size_t>(y) * w], 1, cw, scratch);
  }
}

struct Band {
  int y0, x0, h, w;
};

/// Detail subbands (LH, HL, HH) of every level, finest first.
inline std::vector<Band> detail_bands(int h, int w, int levels) {
  std::vector<Band> bands;
  for (int l = 1; l <= levels; ++l) {
    const int bh = h >> l, bw = w >> l;
    bands.push_back({0, bw, bh, bw});
    bands.push_back({bh, 0, bh, bw});
    bands.push_back({bh, bw, bh, bw});
  }
  return bands;
}

// Wiener shrinkage of one subband: variance estimate is the smallest local energy minus
// sigma0^2 over square windows of side 3, 5, 7 and 9.
inline void shrink_band(std::vector<double>& a, int stride, const Band& b, double sigma0_sq) {
  if (sigma0_sq <= 0.0) return;
  const int bh = b.h, bw = b.w;
  std::vector<double> integral(static_cast<std::size_t>(bh + 1) * (bw + 1), 0.0);
  auto at = [&](int y, int x) -> double& { return integral[static_cast<std::size_t>(y) * (bw + 1) + x]; };
  for (int y = 0; y < bh; ++y) {
    double row = 0.0;
    for (int x = 0; x < bw; ++x) {
      const double c = a[static_cast<std::size_t>(b.y0 + y) * stride + b.x0 + x];
      row += c * c;
      at(y + 1, x + 1) = at(y, x + 1) + row;
    }
  }
  for (int y = 0; y < bh; ++y)
    for (int x = 0; x < bw; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (int r = 1; r <= 4; ++r) {
        const int ya = std::max(0, y - r), yb = std::min(bh, y + r + 1);
        const int xa = std::max(0, x - r), xb = std::min(bw, x + r + 1);
        const double energy = at(yb, xb) - at(ya, xb) - at(yb, xa) + at(ya, xa);
        const double local = energy / static_cast<double>((yb - ya) * (xb - xa));
        best = std::min(best, std::max(0.0, local - sigma0_sq));
      }
      double& c = a[static_cast<std::size_t>(b.y0 + y) * stride + b.x0 + x];
      c *= best / (best + sigma0_sq);
    }
}

}  // namespace wavelet

/// Wavelet-domain Wiener denoiser: Db4 decomposition, locally adaptive shrinkage of the
/// detail subbands, approximation untouched. Sizes are mirror-padded to a multiple of
/// 2^levels and cropped back.
inline Plane denoise_wavelet_wiener(const ImagePlane& image, const DenoiserConfig& cfg) {
  const int levels = cfg.wavelet_levels;
  if (levels < 1) throw InvalidArgument("wavelet_levels must be >= 1");
  if (cfg.noise_variance < 0.0) throw InvalidArgument("noise_variance must be >= 0");
  const int h = image.height(), w = image.width();
  const int block = 1 << levels;
  if (h < block || w < block)
    throw InvalidArgument("image " + to_string(image.size()) + " smaller than 2^levels = " + std::to_string(block));

  const int ph = (h + block - 1) / block * block;
  const int pw = (w + block - 1) / block * block;
  std::vector<double> a(static_cast<std::size_t>(ph) * pw);
  for (int y = 0; y < ph; ++y) {
    const int sy = detail::reflect_index(y, h);
    for (int x = 0; x < pw; ++x) a[static_cast<std::size_t>(y) * pw + x] = image(sy, detail::reflect_index(x, w));
  }

  wavelet::forward_2d(a, ph, pw, levels);
  for (const auto& band : wavelet::detail_bands(ph, pw, levels))
    wavelet::shrink_band(a, pw, band, cfg.noise_variance);
  wavelet::inverse_2d(a, ph, pw, levels);

  Plane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(y, x) = static_cast<float>(a[static_cast<std::size_t>(y) * pw + x]);
  return out;
}

inline Denoiser make_denoiser(const DenoiserConfig& cfg) {
  switch (cfg.kind) {
    case DenoiserKind::wavelet_wiener:
      return [cfg](const ImagePlane& im) { return denoise_wavelet_wiener(im, cfg); };
    case DenoiserKind::gaussian:
      if (!(cfg.gaussian_sigma > 0.0)) throw InvalidArgument("gaussian_sigma must be positive");
      return [sigma = cfg.gaussian_sigma](const ImagePlane& im) { return denoise_gaussian(im, sigma); };
    case DenoiserKind::identity:
      return [](const ImagePlane& im) { return im.plane(); };
  }
  throw InvalidArgument("unknown denoiser kind");
}

}  // namespace prnu
