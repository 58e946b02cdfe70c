#pragma once

#include <string>

#include "concord/governance.hpp"

namespace concord {

// Console summary of a decision: one line per entry (value, confidence,
// provenance, flags), then the discarded values. Depends only on the
// decision, so re-rendering a stored decision file reproduces it.
std::string render_summary(const ConsolidatedDecision& decision);

}  // namespace concord
