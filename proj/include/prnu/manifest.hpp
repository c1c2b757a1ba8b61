#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "prnu/plane.hpp"
#include "prnu/png_io.hpp"

namespace prnu {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Role { reference, pretrain, test, unused };

inline std::string to_string(Role r) {
  switch (r) {
    case Role::reference: return "reference";
    case Role::pretrain: return "pretrain";
    case Role::test: return "test";
    case Role::unused: return "unused";
  }
  return "?";
}

inline Role parse_role(const std::string& s) {
  if (s == "reference") return Role::reference;
  if (s == "pretrain") return Role::pretrain;
  if (s == "test") return Role::test;
  if (s == "unused") return Role::unused;
  throw ManifestError("unknown role '" + s + "'");
}

struct ManifestRecord {
  std::string image_path;  // relative to the manifest directory
  std::string sensor_id;
  int view = 1;
  Role role = Role::unused;
};

struct DatasetManifest {
  std::vector<std::string> devices;
  std::vector<ManifestRecord> records;
  std::vector<std::string> pretrain_devices;
  std::vector<std::string> eval_devices;
  int n_refs = 5;
  nlohmann::ordered_json config_snapshot = nlohmann::ordered_json::object();

  [[nodiscard]] std::vector<const ManifestRecord*> select(const std::string& sensor_id, Role role) const {
    std::vector<const ManifestRecord*> out;
    for (const auto& r : records)
      if (r.sensor_id == sensor_id && r.role == role) out.push_back(&r);
    return out;
  }
};

/// Throws ManifestError describing the first violated protocol constraint.
inline void validate_manifest(const DatasetManifest& m) {
  if (m.n_refs < 1) throw ManifestError("n_refs must be >= 1");
  std::set<std::string> devices(m.devices.begin(), m.devices.end());
  if (devices.size() != m.devices.size()) throw ManifestError("duplicate device ids");
  std::set<std::string> pre(m.pretrain_devices.begin(), m.pretrain_devices.end());
  std::set<std::string> ev(m.eval_devices.begin(), m.eval_devices.end());
  for (const auto& d : pre) {
    if (ev.count(d)) throw ManifestError("device " + d + " is in both pretrain and eval splits");
    if (!devices.count(d)) throw ManifestError("pretrain device " + d + " not listed");
  }
  for (const auto& d : ev)
    if (!devices.count(d)) throw ManifestError("eval device " + d + " not listed");

  std::set<std::string> paths;
  for (const auto& r : m.records) {
    if (!devices.count(r.sensor_id)) throw ManifestError("record for unknown device " + r.sensor_id);
    if (r.view != 1 && r.view != 2) throw ManifestError("record " + r.image_path + " has view " + std::to_string(r.view));
    if ((r.role == Role::reference || r.role == Role::pretrain) && r.view != 1)
      throw ManifestError("record " + r.image_path + ": " + to_string(r.role) + " role outside view 1");
    if (r.role == Role::test && r.view != 2) throw ManifestError("record " + r.image_path + ": test role outside view 2");
    if (r.role == Role::pretrain && !pre.count(r.sensor_id))
      throw ManifestError("record " + r.image_path + ": pretrain role on non-pretrain device");
    if (!paths.insert(r.image_path).second) throw ManifestError("duplicate image path " + r.image_path);
  }
  for (const auto& d : m.devices) {
    const auto refs = m.select(d, Role::reference).size();
    if (refs != static_cast<std::size_t>(m.n_refs))
      throw ManifestError("device " + d + " has " + std::to_string(refs) + " reference images, expected " +
                          std::to_string(m.n_refs));
  }
}

inline nlohmann::ordered_json manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["devices"] = nlohmann::ordered_json::array();
  for (const auto& d : m.devices) {
    const bool is_pre = std::find(m.pretrain_devices.begin(), m.pretrain_devices.end(), d) != m.pretrain_devices.end();
    j["devices"].push_back({{"sensor_id", d}, {"split", is_pre ? "pretrain" : "eval"}});
  }
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : m.records)
    j["records"].push_back(
        {{"image_path", r.image_path}, {"sensor_id", r.sensor_id}, {"view", r.view}, {"role", to_string(r.role)}});
  j["split"] = {{"pretrain_devices", m.pretrain_devices}, {"eval_devices", m.eval_devices}, {"n_refs", m.n_refs}};
  j["config_snapshot"] = m.config_snapshot;
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::ordered_json& j) {
  DatasetManifest m;
  try {
    for (const auto& d : j.at("devices")) m.devices.push_back(d.at("sensor_id").get<std::string>());
    for (const auto& r : j.at("records")) {
      ManifestRecord rec;
      rec.image_path = r.at("image_path").get<std::string>();
      rec.sensor_id = r.at("sensor_id").get<std::string>();
      rec.view = r.at("view").get<int>();
      rec.role = parse_role(r.at("role").get<std::string>());
      m.records.push_back(std::move(rec));
    }
    const auto& split = j.at("split");
    m.pretrain_devices = split.at("pretrain_devices").get<std::vector<std::string>>();
    m.eval_devices = split.at("eval_devices").get<std::vector<std::string>>();
    m.n_refs = split.at("n_refs").get<int>();
    if (j.contains("config_snapshot")) m.config_snapshot = j.at("config_snapshot");
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

/// Writes text to path via a temporary file and rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  write_file_atomic(path, manifest_to_json(m).dump(2) + "\n");
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ManifestError("cannot parse " + path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

enum class AccessPurpose { reference, query, training };

inline std::string to_string(AccessPurpose p) {
  switch (p) {
    case AccessPurpose::reference: return "reference";
    case AccessPurpose::query: return "query";
    case AccessPurpose::training: return "training";
  }
  return "?";
}

struct AccessEntry {
  std::string image_path;
  int view = 0;
  Role role = Role::unused;
  AccessPurpose purpose = AccessPurpose::reference;
};

/// Loads manifest images and logs every read.
class ImageSource {
 public:
  virtual ~ImageSource() = default;

  ImagePlane load(const ManifestRecord& rec, AccessPurpose purpose) {
    {
      std::lock_guard lock(mutex_);
      log_.push_back({rec.image_path, rec.view, rec.role, purpose});
    }
    return do_load(rec);
  }

  [[nodiscard]] std::vector<AccessEntry> access_log() const {
    std::lock_guard lock(mutex_);
    return log_;
  }

 protected:
  virtual ImagePlane do_load(const ManifestRecord& rec) = 0;

 private:
  mutable std::mutex mutex_;
  std::vector<AccessEntry> log_;
};

class FileImageSource : public ImageSource {
 public:
  explicit FileImageSource(std::filesystem::path root) : root_(std::move(root)) {}

 protected:
  ImagePlane do_load(const ManifestRecord& rec) override {
    const auto path = root_ / rec.image_path;
    if (!std::filesystem::exists(path)) throw ImageIoError("missing image " + path.string());
    return read_png(path);
  }

 private:
  std::filesystem::path root_;
};

}  // namespace prnu
