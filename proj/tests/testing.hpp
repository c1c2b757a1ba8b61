#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "prnu/plane.hpp"
#include "prnu/random.hpp"

namespace prnu::testing {

inline Plane random_plane(Rng& rng, int h, int w, double sd = 1.0) {
  Plane p(h, w);
  for (float& v : p.values()) v = static_cast<float>(rng.normal(0.0, sd));
  return p;
}

inline ImagePlane random_image(Rng& rng, int h, int w) {
  Plane p(h, w);
  for (float& v : p.values()) v = static_cast<float>(rng.uniform());
  return ImagePlane(std::move(p));
}

inline Fingerprint make_fingerprint(std::string id, Plane p) {
  Fingerprint fp;
  fp.sensor_id = std::move(id);
  fp.resolution_tag = p.size();
  fp.plane = std::move(p);
  fp.n_images = 1;
  return fp;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("prnu_test_" + tag + "_" + std::to_string(hash_combine(reinterpret_cast<std::uintptr_t>(this), ++counter)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace prnu::testing
