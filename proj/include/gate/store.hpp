#pragma once

// File-backed record store. One JSON document per (kind, id), written via a
// temporary file and an atomic rename.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gate/core.hpp"
#include "gate/prediction.hpp"

namespace gate {

class FileStore {
 public:
  explicit FileStore(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw Error(Errc::io, "cannot create store root " + root_.string() + ": " + ec.message());
  }

  /// Store rooted at GATE_DATA_DIR, or `fallback` when unset.
  static FileStore from_env(const std::filesystem::path& fallback) {
    const char* dir = std::getenv("GATE_DATA_DIR");
    return FileStore(dir && *dir ? std::filesystem::path(dir) : fallback);
  }

  const std::filesystem::path& root() const { return root_; }

  /// Writes `doc` (which must carry schema_version) and returns its new
  /// revision, one past the previous revision of the same key.
  int put(const std::string& kind, const std::string& id, nlohmann::json doc) {
    check_key(kind, id);
    if (!doc.is_object() || !doc.contains("schema_version"))
      throw Error(Errc::invalid_argument, "stored documents need a schema_version");
    std::lock_guard lock(key_mutex(kind, id));
    int revision = 1;
    const auto path = path_for(kind, id);
    if (std::filesystem::exists(path)) {
      try {
        revision = read_file(path).value("revision", 0) + 1;
      } catch (const Error&) {
        // A corrupt predecessor does not block overwriting it.
        revision = 1;
      }
    }
    doc["revision"] = revision;
    std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.parent_path() / ("." + id + ".tmp" + std::to_string(++tmp_counter_));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(Errc::io, "cannot write " + tmp.string());
      out << doc.dump(2) << '\n';
      out.flush();
      if (!out) throw Error(Errc::io, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
      std::filesystem::remove(tmp, ec);
      throw Error(Errc::io, "cannot commit " + path.string());
    }
    return revision;
  }

  /// Reads a document; throws not_found, corrupt_record or version_mismatch.
  nlohmann::json get(const std::string& kind, const std::string& id) const {
    check_key(kind, id);
    const auto path = path_for(kind, id);
    if (!std::filesystem::exists(path)) throw Error(Errc::not_found, kind + "/" + id);
    return read_file(path);
  }

  bool contains(const std::string& kind, const std::string& id) const {
    return std::filesystem::exists(path_for(kind, id));
  }

  std::vector<std::string> list(const std::string& kind) const {
    std::vector<std::string> ids;
    const auto dir = root_ / kind;
    if (!std::filesystem::is_directory(dir)) return ids;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (entry.is_regular_file() && name.front() != '.' && entry.path().extension() == ".json")
        ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  static nlohmann::json read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::corrupt_record, path.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("schema_version") || !doc["schema_version"].is_number_integer())
      throw Error(Errc::corrupt_record, path.string() + ": missing schema_version");
    if (doc["schema_version"].get<int>() != kSchemaVersion)
      throw Error(Errc::version_mismatch, path.string() + ": schema_version " + doc["schema_version"].dump());
    return doc;
  }

 private:
  static void check_key(const std::string& kind, const std::string& id) {
    auto bad = [](const std::string& s) {
      return s.empty() || s.front() == '.' || s.find('/') != std::string::npos || s.find('\\') != std::string::npos;
    };
    if (bad(kind) || bad(id)) throw Error(Errc::invalid_argument, "invalid store key " + kind + "/" + id);
  }

  std::filesystem::path path_for(const std::string& kind, const std::string& id) const {
    return root_ / kind / (id + ".json");
  }

  std::mutex& key_mutex(const std::string& kind, const std::string& id) {
    std::lock_guard lock(map_mu_);
    auto& m = key_mutexes_[kind + "/" + id];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
  }

  std::filesystem::path root_;
  std::mutex map_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> key_mutexes_;
  std::atomic<std::uint64_t> tmp_counter_{0};
};

inline constexpr std::string_view kSessionKind = "sessions";
inline constexpr std::string_view kPredictionKind = "predictions";

inline int save_session(FileStore& store, const Session& s) {
  return store.put(std::string(kSessionKind), s.id, nlohmann::json(s));
}

inline Session load_session(const FileStore& store, const std::string& id) {
  auto doc = store.get(std::string(kSessionKind), id);
  doc.erase("revision");
  return session_from_json(doc);
}

inline int save_predictions(FileStore& store, const std::string& session_id,
                            const std::vector<PredictionRecord>& records) {
  return store.put(std::string(kPredictionKind), session_id,
                   {{"schema_version", kSchemaVersion}, {"session_id", session_id}, {"records", records}});
}

inline std::vector<PredictionRecord> load_predictions(const FileStore& store, const std::string& session_id) {
  const auto doc = store.get(std::string(kPredictionKind), session_id);
  try {
    return doc.at("records").get<std::vector<PredictionRecord>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::corrupt_record, e.what());
  }
}

}  // namespace gate
