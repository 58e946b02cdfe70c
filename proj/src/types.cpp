#include "concord/types.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <regex>
#include <set>
#include <sstream>

#include "concord/error.hpp"
#include "concord/hash.hpp"
#include "concord/prompt.hpp"
#include "concord/serialize.hpp"
#include "concord/text.hpp"

namespace concord {

namespace {

std::optional<std::string> find_ci(const std::vector<std::string>& universe, std::string_view value) {
  const std::string wanted = text::trim(value);
  for (const auto& entry : universe) {
    if (text::iequals(entry, wanted)) return entry;
  }
  return std::nullopt;
}

bool has_duplicates(const std::vector<std::string>& values) {
  std::set<std::string> seen;
  for (const auto& v : values) {
    if (!seen.insert(text::to_lower(v)).second) return true;
  }
  return false;
}

}  // namespace

ImageInput load_image(std::string source_id, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingImage(source_id);
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return ImageInput{std::move(source_id), path, hash_content(bytes.str())};
}

std::string media_type_of(const ImageInput& image) {
  const auto ext = text::to_lower(std::filesystem::path(image.media_ref).extension().string());
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

std::optional<std::string_view> SharedContext::lookup(std::string_view name) const {
  for (const auto& input : text_inputs) {
    if (input.source_id == name) return std::string_view(input.body);
  }
  if (auto it = metadata.find(std::string(name)); it != metadata.end()) return std::string_view(it->second);
  return std::nullopt;
}

void SharedContext::validate() const {
  std::set<std::string> ids;
  for (const auto& input : text_inputs) {
    if (input.source_id.empty()) throw ConfigError("context.text_inputs", "empty source_id");
    if (!ids.insert(input.source_id).second)
      throw ConfigError("context.text_inputs." + input.source_id, "duplicate source_id");
  }
  for (const auto& image : image_inputs) {
    if (image.source_id.empty()) throw ConfigError("context.image_inputs", "empty source_id");
    if (!ids.insert(image.source_id).second)
      throw ConfigError("context.image_inputs." + image.source_id, "duplicate source_id");
  }
  for (const auto& [key, value] : metadata) {
    if (ids.count(key) != 0) throw ConfigError("context.metadata." + key, "key shadows a source_id");
  }
}

std::string SharedContext::content_hash() const { return hash_content(canonical_dump(json(*this))); }

std::string_view to_string(SchemaKind kind) {
  switch (kind) {
    case SchemaKind::free_text: return "free_text";
    case SchemaKind::single_label: return "single_label";
    case SchemaKind::labeled_items: return "labeled_items";
    case SchemaKind::clinical_report: return "clinical_report";
  }
  return "?";
}

std::string_view to_string(CandidateStatus status) {
  switch (status) {
    case CandidateStatus::ok: return "ok";
    case CandidateStatus::backend_error: return "backend_error";
    case CandidateStatus::timeout: return "timeout";
    case CandidateStatus::parse_failed: return "parse_failed";
  }
  return "?";
}

void OutputSchema::validate() const {
  if (has_duplicates(label_universe)) throw ConfigError("schema.label_universe", "duplicate label");
  if (has_duplicates(item_universe)) throw ConfigError("schema.item_universe", "duplicate item");
  if (has_duplicates(severity_scale)) throw ConfigError("schema.severity_scale", "duplicate grade");
  if (has_duplicates(sections)) throw ConfigError("schema.sections", "duplicate section");
  for (const auto& label : label_universe) {
    if (text::iequals(label, kUncertainLabel)) throw ConfigError("schema.label_universe", "'Uncertain' is reserved");
  }
  switch (kind) {
    case SchemaKind::single_label:
      if (label_universe.empty() && !allows_unknown)
        throw ConfigError("schema.label_universe", "single_label needs labels or allows_unknown");
      break;
    case SchemaKind::labeled_items:
      if (item_universe.empty()) throw ConfigError("schema.item_universe", "required for labeled_items");
      if (label_universe.empty()) throw ConfigError("schema.label_universe", "required for labeled_items");
      break;
    case SchemaKind::clinical_report:
      if (sections.empty()) throw ConfigError("schema.sections", "required for clinical_report");
      break;
    case SchemaKind::free_text:
      break;
  }
  for (const auto& [label, code] : label_codes) {
    if (!canonical_label(label)) throw ConfigError("schema.label_codes." + label, "label not in label_universe");
  }
}

std::optional<std::string> OutputSchema::canonical_label(std::string_view label) const {
  if (auto found = find_ci(label_universe, label)) return found;
  if (allows_unknown && text::iequals(text::trim(label), kUnknownLabel)) return std::string(kUnknownLabel);
  return std::nullopt;
}

std::optional<std::string> OutputSchema::canonical_item(std::string_view item) const {
  return find_ci(item_universe, item);
}

std::optional<std::string> OutputSchema::canonical_severity(std::string_view grade) const {
  return find_ci(severity_scale, grade);
}

std::optional<std::string> OutputSchema::canonical_section(std::string_view section) const {
  return find_ci(sections, section);
}

int OutputSchema::severity_rank(std::string_view grade) const {
  for (std::size_t i = 0; i < severity_scale.size(); ++i) {
    if (severity_scale[i] == grade) return static_cast<int>(i);
  }
  return -1;
}

void validate_payload(const StructuredPayload& payload, const OutputSchema& schema) {
  if (payload.kind != schema.kind) throw ConfigError("payload.kind", "does not match schema kind");
  switch (payload.kind) {
    case SchemaKind::single_label: {
      const auto canon = schema.canonical_label(payload.label);
      if (!canon || *canon != payload.label) throw ConfigError("payload.label", "'" + payload.label + "' not allowed");
      break;
    }
    case SchemaKind::labeled_items:
      if (payload.items.empty()) throw ConfigError("payload.items", "empty");
      for (const auto& [item, assessment] : payload.items) {
        const auto canon_item = schema.canonical_item(item);
        if (!canon_item || *canon_item != item) throw ConfigError("payload.items." + item, "unknown item");
        const auto canon_status = schema.canonical_label(assessment.status);
        if (!canon_status || *canon_status != assessment.status)
          throw ConfigError("payload.items." + item + ".status", "'" + assessment.status + "' not allowed");
        if (assessment.severity && schema.severity_rank(*assessment.severity) < 0)
          throw ConfigError("payload.items." + item + ".severity", "'" + *assessment.severity + "' not on scale");
      }
      break;
    case SchemaKind::clinical_report:
      if (payload.sections.empty()) throw ConfigError("payload.sections", "empty");
      for (const auto& section : payload.sections) {
        const auto canon = schema.canonical_section(section.name);
        if (!canon || *canon != section.name) throw ConfigError("payload.sections." + section.name, "unknown section");
      }
      break;
    case SchemaKind::free_text:
      if (payload.claims.empty()) throw ConfigError("payload.claims", "empty");
      break;
  }
}

bool BannedPattern::matches(std::string_view text) const {
  if (pattern.empty()) return false;
  if (is_regex) {
    const std::regex re(pattern, std::regex::ECMAScript | std::regex::icase);
    return std::regex_search(text.begin(), text.end(), re);
  }
  return text::to_lower(text).find(text::to_lower(pattern)) != std::string::npos;
}

void PolicySet::validate(std::size_t consortium_size) const {
  if (support_threshold < 1 || static_cast<std::size_t>(support_threshold) > consortium_size)
    throw ConfigError("policies.support_threshold", "must be in [1, consortium size]");
  if (!(band_medium > 0.0 && band_medium <= band_high && band_high <= 1.0))
    throw ConfigError("policies.confidence_bands", "require 0 < medium <= high <= 1");
  if (grounding_fraction < 0.0 || grounding_fraction > 1.0)
    throw ConfigError("policies.grounding_fraction", "must be in [0, 1]");
  if (similarity_threshold <= 0.0 || similarity_threshold > 1.0)
    throw ConfigError("policies.similarity_threshold", "must be in (0, 1]");
  if (severity_divergence_step < 1) throw ConfigError("policies.severity_divergence_step", "must be >= 1");
  for (std::size_t i = 0; i < banned_patterns.size(); ++i) {
    if (!banned_patterns[i].is_regex) continue;
    try {
      std::regex(banned_patterns[i].pattern, std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
      throw ConfigError("policies.banned_patterns[" + std::to_string(i) + "]", e.what());
    }
  }
}

void TaskSpec::validate() const {
  if (workflow_id.empty()) throw ConfigError("workflow_id", "required");
  if (run_id.empty()) throw ConfigError("run_id", "required");
  if (consortium.size() < 2) throw ConfigError("consortium", "at least two members required");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < consortium.size(); ++i) {
    const auto& member = consortium[i];
    const std::string path = "consortium[" + std::to_string(i) + "]";
    if (member.model_id.empty()) throw ConfigError(path + ".model_id", "required");
    if (member.role != ModelRole::consortium_member) throw ConfigError(path + ".role", "must be consortium_member");
    if (member.backend_ref.empty()) throw ConfigError(path + ".backend_ref", "required");
    if (!ids.insert(member.model_id).second) throw ConfigError(path + ".model_id", "duplicate " + member.model_id);
  }
  if (reasoner.model_id.empty()) throw ConfigError("reasoner.model_id", "required");
  if (reasoner.role != ModelRole::reasoner) throw ConfigError("reasoner.role", "must be reasoner");
  if (!ids.insert(reasoner.model_id).second) throw ConfigError("reasoner.model_id", "duplicate " + reasoner.model_id);
  if (quorum < 2 || static_cast<std::size_t>(quorum) > consortium.size())
    throw ConfigError("quorum", "must satisfy 2 <= quorum <= consortium size");
  schema.validate();
  policies.validate(consortium.size());
  context.validate();
  for (const auto& name : placeholders_in(prompt_template)) {
    if (!context.lookup(name)) throw ConfigError("prompt_template", "unresolved placeholder {{" + name + "}}");
  }
  for (const auto& name : placeholders_in(reasoner_template)) {
    if (!is_reasoner_placeholder(name) && !context.lookup(name))
      throw ConfigError("reasoner_template", "unresolved placeholder {{" + name + "}}");
  }
}

std::string utc_timestamp() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
  return out.str();
}

}  // namespace concord
