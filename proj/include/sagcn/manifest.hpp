#pragma once

#include <map>
#include <string>
#include <vector>

#include "sagcn/common.hpp"

namespace sagcn {

struct ManifestError : std::runtime_error {
  explicit ManifestError(const std::string& msg) : std::runtime_error(msg) {}
};

struct StageRecord {
  bool completed = false;
  std::map<std::string, std::string> input_hashes;   /* workspace-relative path -> sha256 */
  std::map<std::string, std::string> output_hashes;
  std::string config_hash;
};

/* Tracks which pipeline stages completed and the content hashes of their
   inputs and outputs, so stages re-run only when something changed and
   downstream stages refuse to consume stale artifacts. Lives at
   <workspace>/manifest.json. */
class PipelineManifest {
 public:
  static PipelineManifest load(const std::filesystem::path& workspace);
  void save() const;

  /* True when the stage completed with identical config and every input and
     output file still matches its recorded hash. */
  bool is_fresh(const std::string& stage, const std::vector<std::filesystem::path>& inputs,
                const std::string& config_hash) const;

  /* Records a completed stage and persists the manifest. */
  void record(const std::string& stage, const std::vector<std::filesystem::path>& inputs,
              const std::vector<std::filesystem::path>& outputs, const std::string& config_hash);

  /* Throws ManifestError when the stage has not completed or its recorded
     outputs changed on disk (naming the stage to re-run). */
  void require(const std::string& stage) const;

  const std::filesystem::path& workspace() const { return workspace_; }

 private:
  std::filesystem::path workspace_;
  std::map<std::string, StageRecord> stages_;

  std::string relative(const std::filesystem::path& p) const;
  std::string hash_or_empty(const std::string& rel) const;
};

/* Canonical hash for a stage configuration (serialize, then digest). */
std::string config_digest(const std::map<std::string, std::string>& fields);

}  // namespace sagcn
