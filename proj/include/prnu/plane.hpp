#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace prnu {

/// Raised when a precondition on shapes or values is violated.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when two planes that must agree in size do not.
class DimensionMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct Size {
  int height = 0;
  int width = 0;

  [[nodiscard]] std::size_t area() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  [[nodiscard]] int max_side() const noexcept { return std::max(height, width); }
  friend bool operator==(const Size&, const Size&) = default;
};

inline std::string to_string(Size s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width);
}

/// Row-major single-precision grid. The storage behind every plane type.
class Plane {
 public:
  Plane() = default;
  Plane(int height, int width, float fill = 0.0f) : size_{height, width} {
    if (height < 0 || width < 0) throw InvalidArgument("negative plane dimensions");
    data_.assign(size_.area(), fill);
  }
  Plane(int height, int width, std::vector<float> data) : size_{height, width}, data_(std::move(data)) {
    if (height < 0 || width < 0) throw InvalidArgument("negative plane dimensions");
    if (data_.size() != size_.area())
      throw InvalidArgument("plane data length " + std::to_string(data_.size()) + " != " +
                            std::to_string(size_.area()));
  }

  [[nodiscard]] int height() const noexcept { return size_.height; }
  [[nodiscard]] int width() const noexcept { return size_.width; }
  [[nodiscard]] Size size() const noexcept { return size_; }
  [[nodiscard]] std::size_t area() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] float& operator()(int y, int x) noexcept {
    return data_[static_cast<std::size_t>(y) * size_.width + x];
  }
  [[nodiscard]] float operator()(int y, int x) const noexcept {
    return data_[static_cast<std::size_t>(y) * size_.width + x];
  }

  [[nodiscard]] std::span<float> values() noexcept { return data_; }
  [[nodiscard]] std::span<const float> values() const noexcept { return data_; }
  [[nodiscard]] const std::vector<float>& data() const noexcept { return data_; }

  [[nodiscard]] bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  Size size_{};
  std::vector<float> data_;
};

inline void require_same_size(Size a, Size b, const char* what) {
  if (a != b)
    throw DimensionMismatch(std::string(what) + ": " + to_string(a) + " vs " + to_string(b));
}

/// Luminance image with values in [0,1].
class ImagePlane {
 public:
  ImagePlane() = default;
  explicit ImagePlane(Plane p) : plane_(std::move(p)) {
    for (float v : plane_.values()) {
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
        throw InvalidArgument("luminance value outside [0,1]");
    }
  }
  ImagePlane(int height, int width, std::vector<float> data)
      : ImagePlane(Plane(height, width, std::move(data))) {}

  /// Builds a plane after clamping every value into [0,1].
  static ImagePlane clamped(Plane p) {
    for (float& v : p.values()) {
      if (!std::isfinite(v)) throw InvalidArgument("non-finite luminance value");
      v = std::clamp(v, 0.0f, 1.0f);
    }
    ImagePlane out;
    out.plane_ = std::move(p);
    return out;
  }

  [[nodiscard]] const Plane& plane() const noexcept { return plane_; }
  [[nodiscard]] int height() const noexcept { return plane_.height(); }
  [[nodiscard]] int width() const noexcept { return plane_.width(); }
  [[nodiscard]] Size size() const noexcept { return plane_.size(); }
  [[nodiscard]] float operator()(int y, int x) const noexcept { return plane_(y, x); }
  [[nodiscard]] std::span<const float> values() const noexcept { return plane_.values(); }

  friend bool operator==(const ImagePlane&, const ImagePlane&) = default;

 private:
  Plane plane_;
};

/// Noise residual of one image: zero-centered, unbounded.
struct ResidualPlane {
  Plane plane;
  std::string source_id;

  [[nodiscard]] Size size() const noexcept { return plane.size(); }
};

/// PRNU estimate for one sensor at one resolution.
struct Fingerprint {
  std::string sensor_id;
  Plane plane;
  int n_images = 0;
  bool wiener_applied = false;
  Size resolution_tag{};

  [[nodiscard]] Size size() const noexcept { return plane.size(); }
  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

/// Ordered set of (h, w) levels used for multi-resolution scoring.
class ResolutionSpec {
 public:
  ResolutionSpec() = default;
  explicit ResolutionSpec(std::vector<Size> levels) : levels_(std::move(levels)) {
    if (levels_.empty()) throw InvalidArgument("resolution spec needs at least one level");
    for (const auto& s : levels_)
      if (s.height <= 0 || s.width <= 0) throw InvalidArgument("resolution levels must be positive");
  }

  [[nodiscard]] const std::vector<Size>& levels() const noexcept { return levels_; }
  [[nodiscard]] std::size_t count() const noexcept { return levels_.size(); }
  [[nodiscard]] const Size& operator[](std::size_t i) const { return levels_.at(i); }

  /// Weight of each level: its largest side over the largest side of any level.
  [[nodiscard]] std::vector<double> weights() const {
    int top = 0;
    for (const auto& s : levels_) top = std::max(top, s.max_side());
    std::vector<double> w;
    w.reserve(levels_.size());
    for (const auto& s : levels_) w.push_back(static_cast<double>(s.max_side()) / top);
    return w;
  }

  /// Parses "h1xw1,h2xw2".
  static ResolutionSpec parse(const std::string& text) {
    std::vector<Size> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto comma = text.find(',', pos);
      if (comma == std::string::npos) comma = text.size();
      const std::string item = text.substr(pos, comma - pos);
      const auto x = item.find_first_of("xX");
      if (x == std::string::npos || x == 0 || x + 1 == item.size())
        throw InvalidArgument("bad resolution '" + item + "', expected HxW");
      try {
        std::size_t used_h = 0, used_w = 0;
        const int h = std::stoi(item.substr(0, x), &used_h);
        const int w = std::stoi(item.substr(x + 1), &used_w);
        if (used_h != x || used_w != item.size() - x - 1) throw std::invalid_argument(item);
        out.push_back({h, w});
      } catch (const std::logic_error&) {
        throw InvalidArgument("bad resolution '" + item + "', expected HxW");
      }
      pos = comma + 1;
    }
    return ResolutionSpec(std::move(out));
  }

  [[nodiscard]] std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      if (i) s += ',';
      s += prnu::to_string(levels_[i]);
    }
    return s;
  }

  friend bool operator==(const ResolutionSpec&, const ResolutionSpec&) = default;

 private:
  std::vector<Size> levels_;
};

}  // namespace prnu
