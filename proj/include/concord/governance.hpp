#pragma once

// Reasoning-layer governance: turns a consensus report into one governed
// decision, either by the deterministic rules below or by a reasoner model
// constrained to the decision grammar.
//
// Deterministic rules, per field:
//   * the unique tally leader wins when its support is >= support_threshold;
//     confidence comes from support / ok-candidates against the bands
//   * a tie at the top or sub-threshold support marks the field uncertain
//     (single_label emits the pseudo-label "Uncertain"; labeled_items flag
//     secondary_review); ties are never broken
//   * severity resolves to the supported median (lower weighted median over
//     the scale); a severity_divergence conflict downgrades it to low with
//     secondary_review, or marks it uncertain when divergence_action=reject
//   * claims (text kinds) are cluster representatives; banned, ungrounded
//     and under-supported clusters are discarded with that reason
//   * unanimous "Unknown" with unknown_escalation yields "Unknown", high
//     confidence, flag anomalous
// Every tallied value ends up either in an entry or in `discarded`.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "concord/backend.hpp"
#include "concord/consensus.hpp"
#include "concord/serialize.hpp"
#include "concord/types.hpp"

namespace concord {

enum class Confidence { high, medium, low };
enum class DiscardReason { insufficient_support, ungrounded, banned, outlier, contradiction_unresolved };
enum class ConsolidationMode { reasoner, deterministic };

NLOHMANN_JSON_SERIALIZE_ENUM(Confidence, {{Confidence::high, "high"},
                                          {Confidence::medium, "medium"},
                                          {Confidence::low, "low"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DiscardReason, {{DiscardReason::insufficient_support, "insufficient_support"},
                                             {DiscardReason::ungrounded, "ungrounded"},
                                             {DiscardReason::banned, "banned"},
                                             {DiscardReason::outlier, "outlier"},
                                             {DiscardReason::contradiction_unresolved, "contradiction_unresolved"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ConsolidationMode, {{ConsolidationMode::reasoner, "reasoner"},
                                                 {ConsolidationMode::deterministic, "deterministic"}})

std::string_view to_string(Confidence c);
std::string_view to_string(DiscardReason r);
std::string_view to_string(ConsolidationMode m);

namespace flag {
inline constexpr std::string_view uncertain = "uncertain";
inline constexpr std::string_view secondary_review = "secondary_review";
inline constexpr std::string_view anomalous = "anomalous";
inline constexpr std::string_view uncited = "uncited";
inline constexpr std::string_view invalid_citation = "invalid_citation";
}  // namespace flag

struct DecisionEntry {
  // "label", "<item>.status", "<item>.severity", or a claim id.
  std::string field;
  // Clinical report section of a claim; empty otherwise.
  std::string section;
  std::string value;
  Confidence confidence = Confidence::low;
  std::vector<std::string> provenance;
  std::vector<std::string> flags;
  std::optional<std::string> rationale;

  bool has_flag(std::string_view f) const;
  // Entries flagged uncertain are markers, not accepted values.
  bool accepted() const { return !has_flag(flag::uncertain); }
  bool operator==(const DecisionEntry&) const = default;
};

struct DiscardedValue {
  std::string field;
  std::string section;
  std::string value;
  DiscardReason reason = DiscardReason::insufficient_support;
  std::vector<std::string> models;

  bool operator==(const DiscardedValue&) const = default;
};

struct ConsolidatedDecision {
  std::string run_id;
  SchemaKind kind = SchemaKind::free_text;
  StructuredPayload payload;
  std::vector<DecisionEntry> entries;
  std::vector<DiscardedValue> discarded;
  ConsolidationMode consolidation_mode = ConsolidationMode::deterministic;
  std::optional<std::string> reasoner_rationale;
  // Number of ok-candidates the decision was computed over.
  std::size_t ok_candidates = 0;

  bool operator==(const ConsolidatedDecision&) const = default;
};

void to_json(json& j, const DecisionEntry& v);
void from_json(const json& j, DecisionEntry& v);
void to_json(json& j, const DiscardedValue& v);
void from_json(const json& j, DiscardedValue& v);
void to_json(json& j, const ConsolidatedDecision& v);
void from_json(const json& j, ConsolidatedDecision& v);

// Bytes of a {run_id}.decision file: canonical JSON plus a trailing newline.
std::string decision_document(const ConsolidatedDecision& decision);
ConsolidatedDecision parse_decision_document(std::string_view document);

Confidence confidence_band(std::size_t support, std::size_t ok_candidates, const PolicySet& policies);

// Fraction of the claim's content tokens that also occur in the context's
// text inputs or metadata values. 0 for claims without content tokens.
double grounding_score(std::string_view claim, const SharedContext& context);

// Rebuilds the payload from the entries (and the rationale they carry).
StructuredPayload payload_from_entries(SchemaKind kind, const std::vector<DecisionEntry>& entries,
                                       const OutputSchema& schema);

ConsolidatedDecision consolidate_deterministic(const ConsensusReport& report, const OutputSchema& schema,
                                               const PolicySet& policies, const SharedContext& context);

// Moves every entry whose value matches a banned pattern into discarded
// (reason banned). Pseudo-label entries are exempt. Idempotent.
ConsolidatedDecision enforce_policies(const ConsolidatedDecision& decision, const PolicySet& policies,
                                      const OutputSchema& schema);

// ── reasoner ────────────────────────────────────────────────────────────────

// Candidate fencing. Each ok-candidate is embedded as
//
//   <<<CANDIDATE model_id=<id> sha256=<content_hash>>>>
//   <escaped raw_text>
//   <<<END CANDIDATE model_id=<id>>>>
//
// where escaping prefixes a backslash to every line of raw_text that starts
// with "<<<" or with a backslash. Unescaping strips exactly one leading
// backslash from every line, so extract_candidate_blocks round-trips any
// raw_text.
std::string fence_candidate(const CandidateOutput& candidate);

struct FencedCandidate {
  std::string model_id;
  std::string content_hash;
  std::string raw_text;
};

std::vector<FencedCandidate> extract_candidate_blocks(std::string_view prompt_text);

// The grammar the reasoner must answer in, worded for the schema.
std::string output_grammar_text(const OutputSchema& schema);
std::string consensus_summary_text(const ConsensusReport& report, const std::vector<CandidateOutput>& candidates);
std::string policies_text(const PolicySet& policies);

// Renders the reasoner template. Reserved placeholders: canonical_prompt,
// candidates, consensus_summary, policies, output_grammar; everything else
// resolves against the shared context. Images are passed by reference
// (source id and hash appended to canonical_prompt), never attached.
CanonicalPrompt build_reasoner_prompt(std::string_view reasoner_template, const CanonicalPrompt& member_prompt,
                                      const std::vector<CandidateOutput>& candidates, const ConsensusReport& report,
                                      const PolicySet& policies, const SharedContext& context,
                                      const OutputSchema& schema);

// Decision grammar:
//
//   <field> | <value> | <high|medium|low> | cites: <model_id>[, <model_id>...]
//   ...
//   RATIONALE: <free text to the end of the response>
//
// Fields: `label` (single_label); `<item>.status`, `<item>.severity`
// (labeled_items); `claim` (free_text); a section name (clinical_report).
// Structured values must come from the tally space (or be "Uncertain").
// Citations of unknown models are dropped and flagged invalid_citation;
// entries left without citations are demoted to low and flagged uncited.
// Throws ReasonerOutputInvalid when the response does not fit.
ConsolidatedDecision parse_reasoner_decision(std::string_view response, const ConsensusReport& report,
                                             const OutputSchema& schema, const PolicySet& policies,
                                             const SharedContext& context);

struct ReasonerOutcome {
  ConsolidatedDecision decision;
  CanonicalPrompt prompt;
  std::optional<std::string> response;
  std::int64_t latency_ms = 0;
  // Empty when the reasoner's decision was used.
  std::string failure;
};

// Invokes the reasoner once and parses its decision. On invocation or parse
// failure falls back to consolidate_deterministic when the policy allows,
// otherwise throws ReasonerFailed / ReasonerOutputInvalid.
ReasonerOutcome consolidate_with_reasoner(const TaskSpec& task, const CanonicalPrompt& member_prompt,
                                          const std::vector<CandidateOutput>& candidates,
                                          const ConsensusReport& report, Backend& reasoner,
                                          const InvokeOptions& options);

}  // namespace concord
