#include "sagcn/manifest.hpp"

#include <json.hpp>

namespace sagcn {

using nlohmann::json;

PipelineManifest PipelineManifest::load(const std::filesystem::path& workspace) {
  PipelineManifest m;
  m.workspace_ = workspace;
  const auto path = workspace / "manifest.json";
  if (!std::filesystem::exists(path)) return m;
  const json j = json::parse(read_file(path));
  for (auto it = j.at("stages").begin(); it != j.at("stages").end(); ++it) {
    StageRecord rec;
    const json& s = it.value();
    rec.completed = s.at("completed").get<bool>();
    rec.config_hash = s.at("config_hash").get<std::string>();
    for (auto h = s.at("inputs").begin(); h != s.at("inputs").end(); ++h)
      rec.input_hashes[h.key()] = h.value().get<std::string>();
    for (auto h = s.at("outputs").begin(); h != s.at("outputs").end(); ++h)
      rec.output_hashes[h.key()] = h.value().get<std::string>();
    m.stages_[it.key()] = std::move(rec);
  }
  return m;
}

void PipelineManifest::save() const {
  json j;
  j["stages"] = json::object();
  for (const auto& [name, rec] : stages_) {
    j["stages"][name] = {{"completed", rec.completed},
                         {"config_hash", rec.config_hash},
                         {"inputs", rec.input_hashes},
                         {"outputs", rec.output_hashes}};
  }
  std::filesystem::create_directories(workspace_);
  write_file_atomic(workspace_ / "manifest.json", j.dump(2) + "\n");
}

std::string PipelineManifest::relative(const std::filesystem::path& p) const {
  std::error_code ec;
  const auto rel = std::filesystem::relative(p, workspace_, ec);
  if (ec || rel.empty()) return p.generic_string();
  return rel.generic_string();
}

std::string PipelineManifest::hash_or_empty(const std::string& rel) const {
  std::filesystem::path p(rel);
  if (p.is_relative()) p = workspace_ / p;
  if (!std::filesystem::exists(p)) return "";
  return sha256_file_hex(p);
}

bool PipelineManifest::is_fresh(const std::string& stage,
                                const std::vector<std::filesystem::path>& inputs,
                                const std::string& config_hash) const {
  const auto it = stages_.find(stage);
  if (it == stages_.end() || !it->second.completed) return false;
  const StageRecord& rec = it->second;
  if (rec.config_hash != config_hash) return false;
  if (rec.input_hashes.size() != inputs.size()) return false;
  for (const auto& input : inputs) {
    const std::string rel = relative(input);
    const auto h = rec.input_hashes.find(rel);
    if (h == rec.input_hashes.end() || h->second != hash_or_empty(rel)) return false;
  }
  for (const auto& [rel, hash] : rec.output_hashes) {
    if (hash_or_empty(rel) != hash) return false;
  }
  return true;
}

void PipelineManifest::record(const std::string& stage,
                              const std::vector<std::filesystem::path>& inputs,
                              const std::vector<std::filesystem::path>& outputs,
                              const std::string& config_hash) {
  StageRecord rec;
  rec.completed = true;
  rec.config_hash = config_hash;
  for (const auto& p : inputs) {
    const std::string rel = relative(p);
    rec.input_hashes[rel] = hash_or_empty(rel);
  }
  for (const auto& p : outputs) {
    const std::string rel = relative(p);
    const std::string hash = hash_or_empty(rel);
    if (hash.empty()) throw ManifestError("stage '" + stage + "' did not produce " + rel);
    rec.output_hashes[rel] = hash;
  }
  stages_[stage] = std::move(rec);
  save();
}

void PipelineManifest::require(const std::string& stage) const {
  const auto it = stages_.find(stage);
  if (it == stages_.end() || !it->second.completed)
    throw ManifestError("stage '" + stage + "' has not run; run `sagcn " + stage + "` first");
  for (const auto& [rel, hash] : it->second.output_hashes) {
    if (hash_or_empty(rel) != hash)
      throw ManifestError("artifacts of stage '" + stage + "' changed on disk; re-run `sagcn " +
                          stage + "`");
  }
}

std::string config_digest(const std::map<std::string, std::string>& fields) {
  json j = json::object();
  for (const auto& [k, v] : fields) j[k] = v;
  return sha256_hex(j.dump());
}

}  // namespace sagcn
