#pragma once

// Builders shared by the unit and acceptance suites.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "concord/backend.hpp"
#include "concord/grammar.hpp"
#include "concord/hash.hpp"
#include "concord/types.hpp"

namespace concord::testing {

inline std::filesystem::path source_dir() { return CONCORD_SOURCE_DIR; }

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    const auto base = std::filesystem::temp_directory_path();
    for (;;) {
      path_ = base / ("concord-test-" + std::to_string(rd()));
      if (std::filesystem::create_directory(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
}

inline std::vector<std::string> model_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("m" + std::to_string(i + 1));
  return ids;
}

// A text-only task over `members`; the schema and policies are left to the caller.
inline TaskSpec base_task(const std::vector<std::string>& members, int quorum) {
  TaskSpec task;
  task.workflow_id = "test";
  task.run_id = "run-1";
  for (const auto& id : members) task.consortium.push_back({id, id, ModelRole::consortium_member, Modality::text, "pool"});
  task.reasoner = {"judge", "judge", ModelRole::reasoner, Modality::text, "pool"};
  task.prompt_template = "Classify the document.\n{{doc}}\n";
  task.reasoner_template = "{{canonical_prompt}}\n{{candidates}}\n{{consensus_summary}}\n{{policies}}\n{{output_grammar}}";
  task.context.text_inputs.push_back({"doc", "The signal hops across channels in short bursts."});
  task.quorum = quorum;
  return task;
}

inline TaskSpec label_task(const std::vector<std::string>& members, std::vector<std::string> labels, int quorum = 2,
                           int support = 2) {
  TaskSpec task = base_task(members, quorum);
  task.schema.kind = SchemaKind::single_label;
  task.schema.label_universe = std::move(labels);
  task.schema.allows_unknown = true;
  task.policies.support_threshold = support;
  return task;
}

inline TaskSpec items_task(const std::vector<std::string>& members, std::vector<std::string> items,
                           std::vector<std::string> statuses, std::vector<std::string> scale, int quorum = 2,
                           int support = 2) {
  TaskSpec task = base_task(members, quorum);
  task.schema.kind = SchemaKind::labeled_items;
  task.schema.item_universe = std::move(items);
  task.schema.label_universe = std::move(statuses);
  task.schema.severity_scale = std::move(scale);
  task.policies.support_threshold = support;
  return task;
}

inline ScriptedResponse reply(std::string text, std::int64_t latency_ms = 0) {
  return ScriptedResponse{std::move(text), latency_ms, ScriptedFailure::none};
}

inline ScriptedResponse failing(ScriptedFailure failure) { return ScriptedResponse{"", 0, failure}; }

struct ScriptedSetup {
  BackendRegistry registry;
  std::map<std::string, std::shared_ptr<ScriptedBackend>> backends;
};

// One scripted backend per member (and for the reasoner); unscripted models fail upstream.
inline ScriptedSetup scripted(const TaskSpec& task, const std::map<std::string, ScriptedResponse>& members,
                              std::optional<ScriptedResponse> reasoner = std::nullopt) {
  ScriptedSetup setup;
  BackendConfig pool;
  pool.backend_ref = "pool";
  pool.timeout_ms = 1000;
  setup.registry.add(pool, nullptr);
  for (const auto& m : task.consortium) {
    auto it = members.find(m.model_id);
    auto backend = ScriptedBackend::always("pool", it != members.end() ? it->second : failing(ScriptedFailure::upstream));
    setup.backends[m.model_id] = backend;
    setup.registry.override_model(m.model_id, backend);
  }
  auto judge = ScriptedBackend::always("pool", reasoner.value_or(failing(ScriptedFailure::upstream)));
  setup.backends[task.reasoner.model_id] = judge;
  setup.registry.override_model(task.reasoner.model_id, judge);
  return setup;
}

// An ok candidate parsed under `schema`.
inline CandidateOutput candidate(const std::string& model_id, const std::string& raw_text, const OutputSchema& schema,
                                 const std::string& run_id = "run-1") {
  CandidateOutput c;
  c.run_id = run_id;
  c.model_id = model_id;
  c.raw_text = raw_text;
  c.content_hash = hash_content(raw_text);
  c.parsed = parse_structured(raw_text, schema);
  c.status = c.parsed ? CandidateStatus::ok : CandidateStatus::parse_failed;
  return c;
}

}  // namespace concord::testing
