#pragma once

// Domain types shared by every stage of a run. All of them are plain values:
// once a run starts nothing here is mutated, so they can be shared freely
// between fan-out workers.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace concord {

inline constexpr std::string_view kUnknownLabel = "Unknown";
// Pseudo-label emitted when a single-label field cannot be decided.
inline constexpr std::string_view kUncertainLabel = "Uncertain";

enum class ModelRole { consortium_member, reasoner };
enum class Modality { text, vision_text };

struct ModelDescriptor {
  std::string model_id;
  std::string display_name;
  ModelRole role = ModelRole::consortium_member;
  Modality modality = Modality::text;
  std::string backend_ref;

  bool operator==(const ModelDescriptor&) const = default;
};

struct TextInput {
  std::string source_id;
  std::string body;

  bool operator==(const TextInput&) const = default;
};

// media_ref is a locator (file path) and is deliberately kept out of every
// hash; identity of an image is its content_hash.
struct ImageInput {
  std::string source_id;
  std::string media_ref;
  std::string content_hash;

  bool operator==(const ImageInput&) const = default;
};

// Reads the file at `path` and fills content_hash from its bytes.
ImageInput load_image(std::string source_id, const std::string& path);

// MIME type guessed from the media_ref extension.
std::string media_type_of(const ImageInput& image);

struct SharedContext {
  std::vector<TextInput> text_inputs;
  std::vector<ImageInput> image_inputs;
  std::map<std::string, std::string> metadata;

  // Value a `{{name}}` placeholder resolves to: a text input body, then a
  // metadata value. Images are not substitutable.
  std::optional<std::string_view> lookup(std::string_view name) const;

  // Throws ConfigError on duplicate source ids or metadata keys that shadow them.
  void validate() const;

  // Hash of the canonical serialization (source ids, bodies, image hashes,
  // metadata). Independent of media_ref and of serialization round trips.
  std::string content_hash() const;

  bool operator==(const SharedContext&) const = default;
};

struct CanonicalPrompt {
  std::string template_id;
  std::string rendered_text;
  std::vector<ImageInput> attached_images;
  std::string prompt_hash;

  bool operator==(const CanonicalPrompt&) const = default;
};

enum class SchemaKind { free_text, single_label, labeled_items, clinical_report };

std::string_view to_string(SchemaKind kind);

struct OutputSchema {
  SchemaKind kind = SchemaKind::free_text;
  std::vector<std::string> label_universe;
  std::vector<std::string> item_universe;
  // Ordered from least to most severe.
  std::vector<std::string> severity_scale;
  // Section names for clinical_report, in report order.
  std::vector<std::string> sections;
  bool allows_unknown = false;
  // Optional display codes per label (e.g. diagnostic codes).
  std::map<std::string, std::string> label_codes;

  void validate() const;

  // Canonical spelling of `label` in the accepted output space, matched
  // case-insensitively; "Unknown" is accepted when allows_unknown.
  std::optional<std::string> canonical_label(std::string_view label) const;
  std::optional<std::string> canonical_item(std::string_view item) const;
  std::optional<std::string> canonical_severity(std::string_view grade) const;
  std::optional<std::string> canonical_section(std::string_view section) const;
  // Position of a grade on severity_scale; -1 when absent.
  int severity_rank(std::string_view grade) const;

  bool operator==(const OutputSchema&) const = default;
};

struct ItemAssessment {
  std::string status;
  std::optional<std::string> severity;
  std::optional<std::string> rationale;

  bool operator==(const ItemAssessment&) const = default;
};

struct ReportSection {
  std::string name;
  std::vector<std::string> claims;

  bool operator==(const ReportSection&) const = default;
};

// Schema-directed view of one response. Only the members matching `kind`
// are populated.
struct StructuredPayload {
  SchemaKind kind = SchemaKind::free_text;
  std::string label;
  std::optional<std::string> rationale;
  std::map<std::string, ItemAssessment> items;
  std::vector<ReportSection> sections;
  std::vector<std::string> claims;

  bool operator==(const StructuredPayload&) const = default;
};

// Throws ConfigError naming the first offending field.
void validate_payload(const StructuredPayload& payload, const OutputSchema& schema);

enum class CandidateStatus { ok, backend_error, timeout, parse_failed };

std::string_view to_string(CandidateStatus status);

struct CandidateOutput {
  std::string run_id;
  std::string model_id;
  // Verbatim response body; never trimmed or rewritten.
  std::string raw_text;
  std::optional<StructuredPayload> parsed;
  std::int64_t latency_ms = 0;
  std::string received_at;
  std::string content_hash;
  CandidateStatus status = CandidateStatus::ok;
  std::string error_detail;

  bool ok() const { return status == CandidateStatus::ok; }
  bool operator==(const CandidateOutput&) const = default;
};

struct BannedPattern {
  std::string pattern;
  // Both forms match case-insensitively: literals as substrings, regex
  // patterns (ECMAScript syntax) anywhere in the text.
  bool is_regex = false;

  bool matches(std::string_view text) const;
  bool operator==(const BannedPattern&) const = default;
};

enum class DivergenceAction { downgrade_and_flag, reject };

struct PolicySet {
  int support_threshold = 2;
  double band_high = 1.0;
  double band_medium = 0.5;
  bool grounding_required = false;
  double grounding_fraction = 0.3;
  bool unknown_escalation = true;
  DivergenceAction divergence_action = DivergenceAction::downgrade_and_flag;
  std::vector<BannedPattern> banned_patterns;
  bool allow_deterministic_fallback = true;
  // Token-set Jaccard at or above which two claims count as the same claim.
  double similarity_threshold = 0.6;
  // Grade gap on the severity scale that turns disagreement into a conflict.
  int severity_divergence_step = 2;

  // consortium_size bounds support_threshold.
  void validate(std::size_t consortium_size) const;

  bool operator==(const PolicySet&) const = default;
};

struct TaskSpec {
  std::string workflow_id;
  std::string run_id;
  std::vector<ModelDescriptor> consortium;
  ModelDescriptor reasoner;
  std::string prompt_template;
  std::string reasoner_template;
  SharedContext context;
  OutputSchema schema;
  PolicySet policies;
  int quorum = 2;

  // Checks every type invariant, including placeholder resolvability.
  void validate() const;

  bool operator==(const TaskSpec&) const = default;
};

// Current wall-clock time as ISO-8601 UTC with millisecond precision.
std::string utc_timestamp();

}  // namespace concord
