#pragma once

// Declarative workflow definitions (YAML) and scripted fixture scenarios.
// The file format is described in docs/workflow-format.md.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "concord/backend.hpp"
#include "concord/types.hpp"

namespace concord {

struct WorkflowDefinition {
  std::filesystem::path source;
  // Everything but the context and run_id.
  TaskSpec task;
  std::vector<BackendConfig> backends;
  // Context fields the templates expect.
  std::vector<std::string> text_inputs;
  std::vector<std::string> image_inputs;
  std::vector<std::string> metadata_keys;
};

// Parses and validates a definition. Throws ConfigError with the path of the
// offending field (e.g. "quorum", "schema.kind", "consortium[1].backend_ref").
WorkflowDefinition load_workflow(const std::filesystem::path& path);

// Completes the task for one run and validates it.
TaskSpec bind_task(const WorkflowDefinition& definition, SharedContext context, std::string run_id);

// Backends from the definition, talking HTTP.
BackendRegistry http_registry(const WorkflowDefinition& definition, std::uint64_t seed);

struct Scenario {
  std::string name;
  std::string run_id;
  SharedContext context;
  std::map<std::string, ScriptedResponse> members;
  std::optional<ScriptedResponse> reasoner;
};

// Image paths in a scenario resolve relative to the scenario file.
Scenario load_scenario(const std::filesystem::path& path);

// One scripted backend per consortium member and one for the reasoner. A
// member without a scripted response fails with an upstream error; so does
// the reasoner when the scenario scripts none.
BackendRegistry scripted_registry(const WorkflowDefinition& definition, const Scenario& scenario);

}  // namespace concord
