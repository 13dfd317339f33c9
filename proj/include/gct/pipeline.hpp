#pragma once

// Stage orchestration over one working directory. Every stage reads the
// artifacts of earlier stages, writes its own, and records input and output
// hashes in <workdir>/manifest.json. A stage whose key (config slice plus
// input hashes) and outputs are unchanged is skipped.

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "gct/config.hpp"

namespace gct {

enum class Stage { simulate, fit, select, stability, explain, storygen, present, evaluate, report };

const std::vector<Stage>& all_stages();
std::string to_string(Stage s);
/// Throws ConfigError on an unknown name.
Stage stage_from_string(std::string_view s);

struct StageRecord {
  std::string status;  ///< "ran" | "skipped, up-to-date"
  std::string key;     ///< hash of the config slice and input hashes
  std::map<std::string, std::string> inputs;   ///< relative path -> fnv1a64
  std::map<std::string, std::string> outputs;  ///< relative path -> fnv1a64
  std::uint64_t seed = 0;
  std::string started_at, finished_at;  ///< UTC, informational only

  Json to_json() const;
  static StageRecord from_json(const Json& j);
};

struct RunManifest {
  Json config;              ///< snapshot
  std::string config_text;  ///< the same, as parseable config text
  std::uint64_t seed = 0;
  std::map<std::string, std::string> module_versions;
  std::map<std::string, StageRecord> stages;

  Json to_json() const;
  static RunManifest from_json(const Json& j);
};

inline constexpr std::string_view kManifestName = "manifest.json";
inline constexpr std::string_view kLockName = ".gct.lock";

/// The manifest's config with the working directory replaced, for reruns.
PipelineConfig config_from_manifest(const RunManifest& manifest, const std::string& workdir);

/// Loads <workdir>/manifest.json; an absent file gives an empty manifest.
RunManifest load_manifest(const std::filesystem::path& workdir);
/// Output files whose current hash differs from the manifest (or which are gone).
std::vector<std::string> verify_manifest(const std::filesystem::path& workdir, const RunManifest& manifest);

/// Exclusive lock on a working directory, released on destruction.
class WorkdirLock {
 public:
  explicit WorkdirLock(const std::filesystem::path& workdir);
  ~WorkdirLock();
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct RunOptions {
  bool force = false;
  std::ostream* log = nullptr;  ///< one line per stage
};

/// Runs one stage. Throws MissingDependency if an input artifact is absent,
/// StageFailure wrapping any module error.
RunManifest run_pipeline(const PipelineConfig& config, Stage stage, const RunOptions& options = {});
/// Runs the stages in order under one lock.
RunManifest run_pipeline(const PipelineConfig& config, const std::vector<Stage>& stages,
                         const RunOptions& options = {});

/// Paths (relative to the workdir) of the artifacts a stage writes.
std::vector<std::string> stage_outputs(const PipelineConfig& config, Stage stage);

/// 0 ok, 2 config, 3 dependency, 4 stage failure.
int exit_code_for(const std::exception& e);

/// Hash of a file's bytes, 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace gct
