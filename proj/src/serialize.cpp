#include "concord/serialize.hpp"

namespace concord {

namespace {

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    out = it->get<T>();
  } else {
    out.reset();
  }
}

template <typename T>
void read_or(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) it->get_to(out);
}

}  // namespace

std::string canonical_dump(const json& value) {
  return value.dump(-1, ' ', false, json::error_handler_t::replace);
}

void to_json(json& j, const ModelDescriptor& v) {
  j = {{"model_id", v.model_id},
       {"display_name", v.display_name},
       {"role", v.role},
       {"modality", v.modality},
       {"backend_ref", v.backend_ref}};
}

void from_json(const json& j, ModelDescriptor& v) {
  j.at("model_id").get_to(v.model_id);
  read_or(j, "display_name", v.display_name);
  read_or(j, "role", v.role);
  read_or(j, "modality", v.modality);
  read_or(j, "backend_ref", v.backend_ref);
}

void to_json(json& j, const TextInput& v) { j = {{"source_id", v.source_id}, {"body", v.body}}; }

void from_json(const json& j, TextInput& v) {
  j.at("source_id").get_to(v.source_id);
  j.at("body").get_to(v.body);
}

void to_json(json& j, const ImageInput& v) { j = {{"source_id", v.source_id}, {"content_hash", v.content_hash}}; }

void from_json(const json& j, ImageInput& v) {
  j.at("source_id").get_to(v.source_id);
  j.at("content_hash").get_to(v.content_hash);
  read_or(j, "media_ref", v.media_ref);
}

void to_json(json& j, const SharedContext& v) {
  j = {{"text_inputs", v.text_inputs}, {"image_inputs", v.image_inputs}, {"metadata", v.metadata}};
}

void from_json(const json& j, SharedContext& v) {
  v = SharedContext{};
  read_or(j, "text_inputs", v.text_inputs);
  read_or(j, "image_inputs", v.image_inputs);
  read_or(j, "metadata", v.metadata);
}

void to_json(json& j, const CanonicalPrompt& v) {
  j = {{"template_id", v.template_id},
       {"rendered_text", v.rendered_text},
       {"attached_images", v.attached_images},
       {"prompt_hash", v.prompt_hash}};
}

void from_json(const json& j, CanonicalPrompt& v) {
  j.at("template_id").get_to(v.template_id);
  j.at("rendered_text").get_to(v.rendered_text);
  read_or(j, "attached_images", v.attached_images);
  j.at("prompt_hash").get_to(v.prompt_hash);
}

void to_json(json& j, const OutputSchema& v) {
  j = {{"kind", v.kind},
       {"label_universe", v.label_universe},
       {"item_universe", v.item_universe},
       {"severity_scale", v.severity_scale},
       {"sections", v.sections},
       {"allows_unknown", v.allows_unknown},
       {"label_codes", v.label_codes}};
}

void from_json(const json& j, OutputSchema& v) {
  v = OutputSchema{};
  j.at("kind").get_to(v.kind);
  read_or(j, "label_universe", v.label_universe);
  read_or(j, "item_universe", v.item_universe);
  read_or(j, "severity_scale", v.severity_scale);
  read_or(j, "sections", v.sections);
  read_or(j, "allows_unknown", v.allows_unknown);
  read_or(j, "label_codes", v.label_codes);
}

void to_json(json& j, const ItemAssessment& v) {
  j = {{"status", v.status}};
  if (v.severity) j["severity"] = *v.severity;
  if (v.rationale) j["rationale"] = *v.rationale;
}

void from_json(const json& j, ItemAssessment& v) {
  j.at("status").get_to(v.status);
  read_optional(j, "severity", v.severity);
  read_optional(j, "rationale", v.rationale);
}

void to_json(json& j, const ReportSection& v) { j = {{"name", v.name}, {"claims", v.claims}}; }

void from_json(const json& j, ReportSection& v) {
  j.at("name").get_to(v.name);
  j.at("claims").get_to(v.claims);
}

void to_json(json& j, const StructuredPayload& v) {
  j = {{"kind", v.kind}};
  switch (v.kind) {
    case SchemaKind::single_label:
      j["label"] = v.label;
      if (v.rationale) j["rationale"] = *v.rationale;
      break;
    case SchemaKind::labeled_items:
      j["items"] = v.items;
      break;
    case SchemaKind::clinical_report:
      j["sections"] = v.sections;
      break;
    case SchemaKind::free_text:
      j["claims"] = v.claims;
      break;
  }
}

void from_json(const json& j, StructuredPayload& v) {
  v = StructuredPayload{};
  j.at("kind").get_to(v.kind);
  read_or(j, "label", v.label);
  read_optional(j, "rationale", v.rationale);
  read_or(j, "items", v.items);
  read_or(j, "sections", v.sections);
  read_or(j, "claims", v.claims);
}

void to_json(json& j, const CandidateOutput& v) {
  j = {{"run_id", v.run_id},
       {"model_id", v.model_id},
       {"raw_text", v.raw_text},
       {"content_hash", v.content_hash},
       {"status", v.status},
       {"parsed", v.parsed ? json(*v.parsed) : json(nullptr)}};
  if (!v.error_detail.empty()) j["error_detail"] = v.error_detail;
}

void from_json(const json& j, CandidateOutput& v) {
  v = CandidateOutput{};
  j.at("run_id").get_to(v.run_id);
  j.at("model_id").get_to(v.model_id);
  j.at("raw_text").get_to(v.raw_text);
  j.at("content_hash").get_to(v.content_hash);
  j.at("status").get_to(v.status);
  read_optional(j, "parsed", v.parsed);
  read_or(j, "error_detail", v.error_detail);
  read_or(j, "latency_ms", v.latency_ms);
  read_or(j, "received_at", v.received_at);
}

json candidate_timing(const CandidateOutput& v) {
  return {{"model_id", v.model_id}, {"latency_ms", v.latency_ms}, {"received_at", v.received_at}};
}

void to_json(json& j, const BannedPattern& v) {
  if (v.is_regex) {
    j = {{"regex", v.pattern}};
  } else {
    j = {{"literal", v.pattern}};
  }
}

void from_json(const json& j, BannedPattern& v) {
  if (j.is_string()) {
    v = {j.get<std::string>(), false};
  } else if (j.contains("regex")) {
    v = {j.at("regex").get<std::string>(), true};
  } else {
    v = {j.at("literal").get<std::string>(), false};
  }
}

void to_json(json& j, const PolicySet& v) {
  j = {{"support_threshold", v.support_threshold},
       {"confidence_bands", {{"high", v.band_high}, {"medium", v.band_medium}}},
       {"grounding_required", v.grounding_required},
       {"grounding_fraction", v.grounding_fraction},
       {"unknown_escalation", v.unknown_escalation},
       {"divergence_action", v.divergence_action},
       {"banned_patterns", v.banned_patterns},
       {"allow_deterministic_fallback", v.allow_deterministic_fallback},
       {"similarity_threshold", v.similarity_threshold},
       {"severity_divergence_step", v.severity_divergence_step}};
}

void from_json(const json& j, PolicySet& v) {
  v = PolicySet{};
  read_or(j, "support_threshold", v.support_threshold);
  if (auto it = j.find("confidence_bands"); it != j.end()) {
    read_or(*it, "high", v.band_high);
    read_or(*it, "medium", v.band_medium);
  }
  read_or(j, "grounding_required", v.grounding_required);
  read_or(j, "grounding_fraction", v.grounding_fraction);
  read_or(j, "unknown_escalation", v.unknown_escalation);
  read_or(j, "divergence_action", v.divergence_action);
  read_or(j, "banned_patterns", v.banned_patterns);
  read_or(j, "allow_deterministic_fallback", v.allow_deterministic_fallback);
  read_or(j, "similarity_threshold", v.similarity_threshold);
  read_or(j, "severity_divergence_step", v.severity_divergence_step);
}

void to_json(json& j, const TaskSpec& v) {
  j = {{"workflow_id", v.workflow_id},
       {"run_id", v.run_id},
       {"consortium", v.consortium},
       {"reasoner", v.reasoner},
       {"prompt_template", v.prompt_template},
       {"reasoner_template", v.reasoner_template},
       {"context", v.context},
       {"schema", v.schema},
       {"policies", v.policies},
       {"quorum", v.quorum}};
}

void from_json(const json& j, TaskSpec& v) {
  v = TaskSpec{};
  j.at("workflow_id").get_to(v.workflow_id);
  j.at("run_id").get_to(v.run_id);
  j.at("consortium").get_to(v.consortium);
  j.at("reasoner").get_to(v.reasoner);
  j.at("prompt_template").get_to(v.prompt_template);
  j.at("reasoner_template").get_to(v.reasoner_template);
  j.at("context").get_to(v.context);
  j.at("schema").get_to(v.schema);
  j.at("policies").get_to(v.policies);
  j.at("quorum").get_to(v.quorum);
}

}  // namespace concord
