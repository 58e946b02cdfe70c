#include "concord/summary.hpp"

#include <sstream>

namespace concord {

namespace {

std::string list_or_dash(const std::vector<std::string>& values) {
  if (values.empty()) return "-";
  std::string out;
  for (const auto& v : values) out += (out.empty() ? "" : ",") + v;
  return out;
}

}  // namespace

std::string render_summary(const ConsolidatedDecision& decision) {
  std::ostringstream out;
  out << "run " << decision.run_id << ": " << to_string(decision.kind) << ", " << to_string(decision.consolidation_mode)
      << ", " << decision.ok_candidates << " ok candidates\n";
  for (const auto& e : decision.entries) {
    out << "  " << e.field;
    if (!e.section.empty()) out << " [" << e.section << "]";
    out << " = " << e.value << "  (" << to_string(e.confidence) << "; models " << list_or_dash(e.provenance)
        << "; flags " << list_or_dash(e.flags) << ")\n";
  }
  if (!decision.discarded.empty()) out << "  discarded:\n";
  for (const auto& d : decision.discarded) {
    out << "    " << d.field << " = " << d.value << "  (" << to_string(d.reason) << "; models "
        << list_or_dash(d.models) << ")\n";
  }
  return out.str();
}

}  // namespace concord
