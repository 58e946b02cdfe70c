#pragma once

// JSON mapping for the domain types. nlohmann::json keeps object keys in a
// std::map, so dump() output is already canonical (sorted keys, compact).

#include <nlohmann/json.hpp>

#include "concord/types.hpp"

namespace concord {

using json = nlohmann::json;

// Compact dump with sorted keys. Invalid UTF-8 is replaced with U+FFFD since
// JSON cannot carry it.
std::string canonical_dump(const json& value);

NLOHMANN_JSON_SERIALIZE_ENUM(ModelRole, {{ModelRole::consortium_member, "consortium_member"},
                                         {ModelRole::reasoner, "reasoner"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Modality, {{Modality::text, "text"}, {Modality::vision_text, "vision_text"}})
NLOHMANN_JSON_SERIALIZE_ENUM(SchemaKind, {{SchemaKind::free_text, "free_text"},
                                          {SchemaKind::single_label, "single_label"},
                                          {SchemaKind::labeled_items, "labeled_items"},
                                          {SchemaKind::clinical_report, "clinical_report"}})
NLOHMANN_JSON_SERIALIZE_ENUM(CandidateStatus, {{CandidateStatus::ok, "ok"},
                                               {CandidateStatus::backend_error, "backend_error"},
                                               {CandidateStatus::timeout, "timeout"},
                                               {CandidateStatus::parse_failed, "parse_failed"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DivergenceAction, {{DivergenceAction::downgrade_and_flag, "downgrade_and_flag"},
                                                {DivergenceAction::reject, "reject"}})

void to_json(json& j, const ModelDescriptor& v);
void from_json(const json& j, ModelDescriptor& v);
void to_json(json& j, const TextInput& v);
void from_json(const json& j, TextInput& v);
// Canonical form: media_ref omitted.
void to_json(json& j, const ImageInput& v);
void from_json(const json& j, ImageInput& v);
void to_json(json& j, const SharedContext& v);
void from_json(const json& j, SharedContext& v);
void to_json(json& j, const CanonicalPrompt& v);
void from_json(const json& j, CanonicalPrompt& v);
void to_json(json& j, const OutputSchema& v);
void from_json(const json& j, OutputSchema& v);
void to_json(json& j, const ItemAssessment& v);
void from_json(const json& j, ItemAssessment& v);
void to_json(json& j, const ReportSection& v);
void from_json(const json& j, ReportSection& v);
void to_json(json& j, const StructuredPayload& v);
void from_json(const json& j, StructuredPayload& v);
// latency_ms and received_at are wall-clock data and are not part of this
// form; see candidate_timing().
void to_json(json& j, const CandidateOutput& v);
void from_json(const json& j, CandidateOutput& v);
void to_json(json& j, const BannedPattern& v);
void from_json(const json& j, BannedPattern& v);
void to_json(json& j, const PolicySet& v);
void from_json(const json& j, PolicySet& v);
void to_json(json& j, const TaskSpec& v);
void from_json(const json& j, TaskSpec& v);

json candidate_timing(const CandidateOutput& v);

}  // namespace concord
