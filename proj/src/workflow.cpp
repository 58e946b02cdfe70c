#include "concord/workflow.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

#include "concord/error.hpp"
#include "concord/hash.hpp"
#include "concord/prompt.hpp"

namespace concord {

namespace {

std::string child(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

std::string indexed(const std::string& parent, std::size_t i) { return parent + "[" + std::to_string(i) + "]"; }

void require_map(const YAML::Node& node, const std::string& path) {
  if (!node.IsMap()) throw ConfigError(path.empty() ? "$" : path, "expected a mapping");
}

// Rejects keys outside `allowed` so that typos do not pass silently.
void check_keys(const YAML::Node& node, const std::string& path, std::initializer_list<std::string_view> allowed) {
  require_map(node, path);
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(child(path, key), "unknown key");
    }
  }
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& path) {
  if (!node.IsScalar()) throw ConfigError(path, "expected a scalar");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(path, "invalid value '" + node.Scalar() + "'");
  }
}

template <typename T>
T required(const YAML::Node& map, const std::string& parent, const std::string& key) {
  const auto node = map[key];
  if (!node) throw ConfigError(child(parent, key), "required");
  return scalar<T>(node, child(parent, key));
}

template <typename T>
void optional_into(const YAML::Node& map, const std::string& parent, const std::string& key, T& out) {
  if (const auto node = map[key]) out = scalar<T>(node, child(parent, key));
}

std::vector<std::string> string_list(const YAML::Node& map, const std::string& parent, const std::string& key) {
  std::vector<std::string> out;
  const auto node = map[key];
  if (!node) return out;
  const std::string path = child(parent, key);
  if (!node.IsSequence()) throw ConfigError(path, "expected a list");
  for (std::size_t i = 0; i < node.size(); ++i) out.push_back(scalar<std::string>(node[i], indexed(path, i)));
  return out;
}

std::map<std::string, std::string> string_map(const YAML::Node& map, const std::string& parent,
                                              const std::string& key) {
  std::map<std::string, std::string> out;
  const auto node = map[key];
  if (!node) return out;
  const std::string path = child(parent, key);
  require_map(node, path);
  for (const auto& kv : node) {
    const auto k = kv.first.as<std::string>();
    out[k] = scalar<std::string>(kv.second, child(path, k));
  }
  return out;
}

template <typename Enum>
Enum enum_value(const YAML::Node& map, const std::string& parent, const std::string& key,
                std::initializer_list<std::pair<std::string_view, Enum>> values, std::optional<Enum> fallback) {
  const auto node = map[key];
  if (!node) {
    if (fallback) return *fallback;
    throw ConfigError(child(parent, key), "required");
  }
  const auto text = scalar<std::string>(node, child(parent, key));
  for (const auto& [name, value] : values) {
    if (name == text) return value;
  }
  throw ConfigError(child(parent, key), "unknown value '" + text + "'");
}

OutputSchema parse_schema(const YAML::Node& node) {
  const std::string path = "schema";
  if (!node) throw ConfigError(path, "required");
  check_keys(node, path,
             {"kind", "label_universe", "item_universe", "severity_scale", "sections", "allows_unknown",
              "label_codes"});
  OutputSchema schema;
  schema.kind = enum_value<SchemaKind>(node, path, "kind",
                                       {{"free_text", SchemaKind::free_text},
                                        {"single_label", SchemaKind::single_label},
                                        {"labeled_items", SchemaKind::labeled_items},
                                        {"clinical_report", SchemaKind::clinical_report}},
                                       std::nullopt);
  schema.label_universe = string_list(node, path, "label_universe");
  schema.item_universe = string_list(node, path, "item_universe");
  schema.severity_scale = string_list(node, path, "severity_scale");
  schema.sections = string_list(node, path, "sections");
  optional_into(node, path, "allows_unknown", schema.allows_unknown);
  schema.label_codes = string_map(node, path, "label_codes");
  return schema;
}

PolicySet parse_policies(const YAML::Node& node) {
  PolicySet p;
  if (!node) return p;
  const std::string path = "policies";
  check_keys(node, path,
             {"support_threshold", "confidence_bands", "grounding_required", "grounding_fraction",
              "unknown_escalation", "divergence_action", "banned_patterns", "allow_deterministic_fallback",
              "similarity_threshold", "severity_divergence_step"});
  optional_into(node, path, "support_threshold", p.support_threshold);
  if (const auto bands = node["confidence_bands"]) {
    const std::string bands_path = child(path, "confidence_bands");
    check_keys(bands, bands_path, {"high", "medium"});
    optional_into(bands, bands_path, "high", p.band_high);
    optional_into(bands, bands_path, "medium", p.band_medium);
  }
  optional_into(node, path, "grounding_required", p.grounding_required);
  optional_into(node, path, "grounding_fraction", p.grounding_fraction);
  optional_into(node, path, "unknown_escalation", p.unknown_escalation);
  p.divergence_action = enum_value<DivergenceAction>(
      node, path, "divergence_action",
      {{"downgrade_and_flag", DivergenceAction::downgrade_and_flag}, {"reject", DivergenceAction::reject}},
      DivergenceAction::downgrade_and_flag);
  if (const auto banned = node["banned_patterns"]) {
    const std::string banned_path = child(path, "banned_patterns");
    if (!banned.IsSequence()) throw ConfigError(banned_path, "expected a list");
    for (std::size_t i = 0; i < banned.size(); ++i) {
      const auto item = banned[i];
      const auto item_path = indexed(banned_path, i);
      if (item.IsScalar()) {
        p.banned_patterns.push_back({item.as<std::string>(), false});
        continue;
      }
      check_keys(item, item_path, {"literal", "regex"});
      if (item["regex"]) {
        p.banned_patterns.push_back({scalar<std::string>(item["regex"], child(item_path, "regex")), true});
      } else {
        p.banned_patterns.push_back({required<std::string>(item, item_path, "literal"), false});
      }
    }
  }
  optional_into(node, path, "allow_deterministic_fallback", p.allow_deterministic_fallback);
  optional_into(node, path, "similarity_threshold", p.similarity_threshold);
  optional_into(node, path, "severity_divergence_step", p.severity_divergence_step);
  return p;
}

ModelDescriptor parse_model(const YAML::Node& node, const std::string& path, ModelRole role) {
  check_keys(node, path, {"model_id", "display_name", "modality", "backend_ref"});
  ModelDescriptor m;
  m.role = role;
  m.model_id = required<std::string>(node, path, "model_id");
  m.display_name = m.model_id;
  optional_into(node, path, "display_name", m.display_name);
  m.modality = enum_value<Modality>(node, path, "modality",
                                    {{"text", Modality::text}, {"vision_text", Modality::vision_text}},
                                    Modality::text);
  m.backend_ref = required<std::string>(node, path, "backend_ref");
  return m;
}

BackendConfig parse_backend(const YAML::Node& node, const std::string& path) {
  check_keys(node, path,
             {"backend_ref", "endpoint_url", "auth_token_env", "model_name", "timeout_ms", "max_retries",
              "temperature"});
  BackendConfig c;
  c.backend_ref = required<std::string>(node, path, "backend_ref");
  optional_into(node, path, "endpoint_url", c.endpoint_url);
  optional_into(node, path, "auth_token_env", c.auth_token_env);
  optional_into(node, path, "model_name", c.model_name);
  optional_into(node, path, "timeout_ms", c.timeout_ms);
  optional_into(node, path, "max_retries", c.max_retries);
  optional_into(node, path, "temperature", c.temperature);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + e.field_path().substr(e.field_path().rfind('.')), e.what());
  }
  return c;
}

// Stand-in context carrying every declared input, used to validate the
// templates before real inputs exist.
SharedContext declared_context(const WorkflowDefinition& def) {
  SharedContext ctx;
  for (const auto& id : def.text_inputs) ctx.text_inputs.push_back({id, "declared"});
  for (const auto& id : def.image_inputs) ctx.image_inputs.push_back({id, "", zero_hash()});
  for (const auto& key : def.metadata_keys) ctx.metadata[key] = "declared";
  return ctx;
}

YAML::Node load_yaml(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("$", "file not found: " + path.string());
  try {
    return YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError("$", path.string() + ": " + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path, const std::string& field) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(field, "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ScriptedResponse parse_response(const YAML::Node& node, const std::string& path) {
  ScriptedResponse r;
  if (node.IsScalar()) {
    r.text = node.as<std::string>();
    return r;
  }
  check_keys(node, path, {"text", "latency_ms", "failure"});
  optional_into(node, path, "text", r.text);
  optional_into(node, path, "latency_ms", r.latency_ms);
  r.failure = enum_value<ScriptedFailure>(node, path, "failure",
                                          {{"none", ScriptedFailure::none},
                                           {"timeout", ScriptedFailure::timeout},
                                           {"transport", ScriptedFailure::transport},
                                           {"upstream", ScriptedFailure::upstream},
                                           {"auth", ScriptedFailure::auth}},
                                          ScriptedFailure::none);
  return r;
}

}  // namespace

WorkflowDefinition load_workflow(const std::filesystem::path& path) {
  const YAML::Node root = load_yaml(path);
  check_keys(root, "",
             {"workflow_id", "quorum", "schema", "policies", "backends", "consortium", "reasoner", "inputs",
              "prompt_template", "reasoner_template"});
  WorkflowDefinition def;
  def.source = path;
  TaskSpec& task = def.task;
  task.workflow_id = required<std::string>(root, "", "workflow_id");
  task.quorum = required<int>(root, "", "quorum");
  task.schema = parse_schema(root["schema"]);
  task.policies = parse_policies(root["policies"]);

  if (const auto backends = root["backends"]) {
    if (!backends.IsSequence()) throw ConfigError("backends", "expected a list");
    std::set<std::string> refs;
    for (std::size_t i = 0; i < backends.size(); ++i) {
      auto config = parse_backend(backends[i], indexed("backends", i));
      if (!refs.insert(config.backend_ref).second) {
        throw ConfigError(indexed("backends", i) + ".backend_ref", "duplicate " + config.backend_ref);
      }
      def.backends.push_back(std::move(config));
    }
  }

  const auto consortium = root["consortium"];
  if (!consortium) throw ConfigError("consortium", "required");
  if (!consortium.IsSequence()) throw ConfigError("consortium", "expected a list");
  for (std::size_t i = 0; i < consortium.size(); ++i) {
    task.consortium.push_back(parse_model(consortium[i], indexed("consortium", i), ModelRole::consortium_member));
  }
  if (!root["reasoner"]) throw ConfigError("reasoner", "required");
  task.reasoner = parse_model(root["reasoner"], "reasoner", ModelRole::reasoner);

  if (const auto inputs = root["inputs"]) {
    check_keys(inputs, "inputs", {"text", "images", "metadata"});
    def.text_inputs = string_list(inputs, "inputs", "text");
    def.image_inputs = string_list(inputs, "inputs", "images");
    def.metadata_keys = string_list(inputs, "inputs", "metadata");
  }
  task.prompt_template = required<std::string>(root, "", "prompt_template");
  task.reasoner_template = required<std::string>(root, "", "reasoner_template");

  if (!def.backends.empty()) {
    std::set<std::string> refs;
    for (const auto& b : def.backends) refs.insert(b.backend_ref);
    for (std::size_t i = 0; i < task.consortium.size(); ++i) {
      if (refs.count(task.consortium[i].backend_ref) == 0) {
        throw ConfigError(indexed("consortium", i) + ".backend_ref",
                          "no backend named " + task.consortium[i].backend_ref);
      }
    }
    if (refs.count(task.reasoner.backend_ref) == 0) {
      throw ConfigError("reasoner.backend_ref", "no backend named " + task.reasoner.backend_ref);
    }
  }

  TaskSpec probe = task;
  probe.run_id = "validate";
  probe.context = declared_context(def);
  probe.validate();
  return def;
}

TaskSpec bind_task(const WorkflowDefinition& definition, SharedContext context, std::string run_id) {
  TaskSpec task = definition.task;
  task.context = std::move(context);
  task.run_id = std::move(run_id);
  task.validate();
  return task;
}

BackendRegistry http_registry(const WorkflowDefinition& definition, std::uint64_t seed) {
  BackendRegistry registry;
  std::uint64_t n = 0;
  for (const auto& config : definition.backends) {
    if (config.endpoint_url.empty()) throw ConfigError("backends." + config.backend_ref + ".endpoint_url", "required");
    registry.add(config, std::make_shared<HttpBackend>(config, seed + n++));
  }
  return registry;
}

Scenario load_scenario(const std::filesystem::path& path) {
  const YAML::Node root = load_yaml(path);
  check_keys(root, "", {"name", "run_id", "context", "members", "reasoner"});
  Scenario s;
  s.name = path.stem().string();
  optional_into(root, "", "name", s.name);
  s.run_id = required<std::string>(root, "", "run_id");
  const auto base = path.parent_path();

  if (const auto ctx = root["context"]) {
    check_keys(ctx, "context", {"text", "text_files", "images", "metadata"});
    for (const auto& [id, body] : string_map(ctx, "context", "text")) s.context.text_inputs.push_back({id, body});
    for (const auto& [id, file] : string_map(ctx, "context", "text_files")) {
      s.context.text_inputs.push_back({id, read_text_file(base / file, "context.text_files." + id)});
    }
    for (const auto& [id, file] : string_map(ctx, "context", "images")) {
      s.context.image_inputs.push_back(load_image(id, (base / file).string()));
    }
    s.context.metadata = string_map(ctx, "context", "metadata");
  }
  if (const auto members = root["members"]) {
    require_map(members, "members");
    for (const auto& kv : members) {
      const auto id = kv.first.as<std::string>();
      s.members[id] = parse_response(kv.second, "members." + id);
    }
  }
  if (const auto reasoner = root["reasoner"]) s.reasoner = parse_response(reasoner, "reasoner");
  return s;
}

BackendRegistry scripted_registry(const WorkflowDefinition& definition, const Scenario& scenario) {
  BackendRegistry registry;
  for (const auto& config : definition.backends) registry.add(config, nullptr);
  const ScriptedResponse unscripted{"", 0, ScriptedFailure::upstream};
  for (const auto& m : definition.task.consortium) {
    auto it = scenario.members.find(m.model_id);
    registry.override_model(m.model_id,
                            ScriptedBackend::always(m.backend_ref, it != scenario.members.end() ? it->second : unscripted));
  }
  registry.override_model(definition.task.reasoner.model_id,
                          ScriptedBackend::always(definition.task.reasoner.backend_ref,
                                                  scenario.reasoner.value_or(unscripted)));
  return registry;
}

}  // namespace concord
