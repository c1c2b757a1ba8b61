#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "prnu/manifest.hpp"
#include "prnu/neural.hpp"
#include "prnu/plane.hpp"

namespace prnu {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace store {

inline constexpr char kFingerprintMagic[4] = {'P', 'R', 'N', 'F'};
inline constexpr char kModelMagic[4] = {'P', 'R', 'N', 'M'};
inline constexpr std::uint32_t kVersion = 1;

/// Little-endian byte sink.
class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  [[nodiscard]] const std::string& data() const { return out_; }

 private:
  std::string out_;
};

/// Bounds-checked little-endian reader; every read states what it expected.
class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  void need(std::uint64_t n, const char* what) const {
    if (n > data_.size() - pos_)
      throw FormatError(std::string("truncated file: ") + what + " needs " + std::to_string(n) + " bytes, " +
                        std::to_string(data_.size() - pos_) + " left");
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  void magic(const char (&expected)[4]) {
    need(4, "magic");
    if (std::memcmp(data_.data() + pos_, expected, 4) != 0)
      throw FormatError("bad magic: expected " + std::string(expected, 4));
    pos_ += 4;
  }
  void version() {
    const std::uint32_t v = u32("version");
    if (v != kVersion) throw FormatError("unsupported format version " + std::to_string(v));
  }
  [[nodiscard]] std::size_t remaining() const { return data_.size() - pos_; }
  void finish() const {
    if (remaining() != 0) throw FormatError(std::to_string(remaining()) + " trailing bytes");
  }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace store

inline std::string encode_fingerprints(const std::vector<Fingerprint>& set) {
  store::Writer w;
  w.bytes(store::kFingerprintMagic, 4);
  w.u32(store::kVersion);
  w.u32(static_cast<std::uint32_t>(set.size()));
  for (const auto& fp : set) {
    w.str(fp.sensor_id);
    w.u32(static_cast<std::uint32_t>(fp.plane.height()));
    w.u32(static_cast<std::uint32_t>(fp.plane.width()));
    w.u32(static_cast<std::uint32_t>(fp.n_images));
    w.u8(fp.wiener_applied ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(fp.resolution_tag.height));
    w.u32(static_cast<std::uint32_t>(fp.resolution_tag.width));
    for (float v : fp.plane.values()) w.f32(v);
  }
  return w.data();
}

inline std::vector<Fingerprint> decode_fingerprints(std::string_view bytes) {
  store::Reader r(bytes);
  r.magic(store::kFingerprintMagic);
  r.version();
  const std::uint32_t count = r.u32("entry count");
  std::vector<Fingerprint> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    Fingerprint fp;
    fp.sensor_id = r.str("sensor id");
    const std::uint32_t h = r.u32("height"), w = r.u32("width");
    const std::uint32_t n = r.u32("n_images");
    const std::uint8_t wiener = r.u8("wiener flag");
    const std::uint32_t th = r.u32("resolution tag"), tw = r.u32("resolution tag");
    if (h == 0 || w == 0 || h > INT32_MAX || w > INT32_MAX || n > INT32_MAX || th > INT32_MAX || tw > INT32_MAX ||
        wiener > 1)
      throw FormatError("invalid header for entry " + std::to_string(i));
    r.need(4ull * h * w, "fingerprint payload");
    std::vector<float> values(static_cast<std::size_t>(h) * w);
    for (float& v : values) v = r.f32("fingerprint payload");
    fp.plane = Plane(static_cast<int>(h), static_cast<int>(w), std::move(values));
    fp.n_images = static_cast<int>(n);
    fp.wiener_applied = wiener == 1;
    fp.resolution_tag = {static_cast<int>(th), static_cast<int>(tw)};
    out.push_back(std::move(fp));
  }
  r.finish();
  return out;
}

inline void save_fingerprints(const std::vector<Fingerprint>& set, const std::filesystem::path& path) {
  write_file_atomic(path, encode_fingerprints(set));
}

inline std::vector<Fingerprint> load_fingerprints(const std::filesystem::path& path) {
  return decode_fingerprints(read_file(path));
}

/// Trained comparator plus what is needed to resume or audit training.
struct ModelCheckpoint {
  neural::ComparatorModel model;
  std::optional<neural::AdamState> optimizer;
  std::uint64_t seed = 0;
  std::string config_json = "{}";

  friend bool operator==(const ModelCheckpoint&, const ModelCheckpoint&) = default;

  /// Optimizer state for resuming; inference-only checkpoints refuse.
  [[nodiscard]] const neural::AdamState& resume_state() const {
    if (!optimizer) throw InvalidArgument("checkpoint has no optimizer state; it can be used for inference only");
    return *optimizer;
  }
};

inline std::string encode_model(const ModelCheckpoint& c) {
  const auto& arch = c.model.arch;
  arch.validate();
  if (c.model.params.size() != arch.param_count()) throw InvalidArgument("model parameters do not match architecture");
  store::Writer w;
  w.bytes(store::kModelMagic, 4);
  w.u32(store::kVersion);
  w.u32(static_cast<std::uint32_t>(arch.channels.size()));
  for (int ch : arch.channels) w.u32(static_cast<std::uint32_t>(ch));
  w.u64(c.model.params.size());
  for (double v : c.model.params) w.f64(v);
  w.u8(c.optimizer ? 1 : 0);
  if (c.optimizer) {
    const auto& o = *c.optimizer;
    if (o.m.size() != c.model.params.size() || o.v.size() != c.model.params.size())
      throw InvalidArgument("optimizer moments do not match parameter count");
    w.u64(o.step);
    for (double v : o.m) w.f64(v);
    for (double v : o.v) w.f64(v);
  }
  w.u64(c.seed);
  w.str(c.config_json);
  return w.data();
}

inline ModelCheckpoint decode_model(std::string_view bytes) {
  store::Reader r(bytes);
  r.magic(store::kModelMagic);
  r.version();
  const std::uint32_t layers = r.u32("layer count");
  if (layers == 0 || layers > 64) throw FormatError("implausible layer count " + std::to_string(layers));
  neural::Architecture arch;
  arch.channels.clear();
  for (std::uint32_t l = 0; l < layers; ++l) {
    const std::uint32_t ch = r.u32("layer size");
    if (ch == 0 || ch > 4096) throw FormatError("implausible layer size " + std::to_string(ch));
    arch.channels.push_back(static_cast<int>(ch));
  }
  const std::uint64_t count = r.u64("parameter count");
  if (count != arch.param_count())
    throw FormatError("descriptor implies " + std::to_string(arch.param_count()) + " parameters, header says " +
                      std::to_string(count));
  r.need(8 * count, "parameter payload");
  ModelCheckpoint c;
  c.model = neural::ComparatorModel(arch);
  for (double& v : c.model.params) v = r.f64("parameter payload");
  const std::uint8_t has_opt = r.u8("optimizer flag");
  if (has_opt > 1) throw FormatError("invalid optimizer flag");
  if (has_opt) {
    neural::AdamState o;
    o.step = r.u64("optimizer step");
    r.need(16 * count, "optimizer moments");
    o.m.resize(count);
    o.v.resize(count);
    for (double& v : o.m) v = r.f64("optimizer moments");
    for (double& v : o.v) v = r.f64("optimizer moments");
    c.optimizer = std::move(o);
  }
  c.seed = r.u64("seed");
  c.config_json = r.str("config snapshot");
  r.finish();
  return c;
}

inline void save_model(const ModelCheckpoint& c, const std::filesystem::path& path) {
  write_file_atomic(path, encode_model(c));
}

inline ModelCheckpoint load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

}  // namespace prnu
