#pragma once

// Line-oriented response grammar for consortium members. Keys are matched
// case-insensitively and values may be wrapped in `*`, `` ` `` or `"`.
//
//   single_label     label: <label>
//                    rationale: <one line>            (optional)
//   labeled_items    <item>: <status>[, <severity>][; <rationale>]
//                    one line per item; lines with other keys are ignored
//   clinical_report  section: <name>
//                    <free text, segmented into claims>
//   free_text        the whole body, segmented into claims
//
// Anything that does not fit the grammar for its schema yields nullopt.

#include <optional>
#include <string>
#include <string_view>

#include "concord/types.hpp"

namespace concord {

std::optional<StructuredPayload> parse_structured(std::string_view raw_text, const OutputSchema& schema);

// Inverse of parse_structured for payloads whose text fields contain no
// line breaks (and, for claims, no inner sentence terminators).
std::string render_structured(const StructuredPayload& payload);

}  // namespace concord
