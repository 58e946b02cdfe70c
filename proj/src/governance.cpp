#include "concord/governance.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "concord/error.hpp"
#include "concord/prompt.hpp"
#include "concord/text.hpp"

namespace concord {

namespace {

constexpr double kBandEpsilon = 1e-12;

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

std::string format_ratio(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", value);
  return buf;
}

std::string join(const std::vector<std::string>& values, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i != 0) out.append(sep);
    out.append(values[i]);
  }
  return out;
}

bool is_pseudo(const DecisionEntry& entry) { return entry.value == kUncertainLabel; }

DiscardReason loser_reason(std::size_t support, const PolicySet& policies) {
  return support >= static_cast<std::size_t>(policies.support_threshold) ? DiscardReason::outlier
                                                                          : DiscardReason::insufficient_support;
}

DecisionEntry pseudo_entry(std::string field, bool item_level) {
  DecisionEntry entry;
  entry.field = std::move(field);
  entry.value = std::string(kUncertainLabel);
  entry.confidence = Confidence::low;
  if (item_level) entry.flags.emplace_back(flag::secondary_review);
  entry.flags.emplace_back(flag::uncertain);
  return entry;
}

// Flags are kept sorted and unique.
void sort_flags(DecisionEntry& entry) {
  std::sort(entry.flags.begin(), entry.flags.end());
  entry.flags.erase(std::unique(entry.flags.begin(), entry.flags.end()), entry.flags.end());
}

// Rationale of the first supporter (by model id) that gave one.
using RationaleLookup = std::function<std::optional<std::string>(const std::string& model_id)>;

struct FieldOutcome {
  std::vector<DecisionEntry> entries;
  std::vector<DiscardedValue> discarded;

  void absorb(FieldOutcome&& other) {
    for (auto& e : other.entries) entries.push_back(std::move(e));
    for (auto& d : other.discarded) discarded.push_back(std::move(d));
  }
};

bool tie_at_top(const Tally& tally) {
  const auto top = top_count(tally);
  return std::count_if(tally.begin(), tally.end(), [&](const auto& kv) { return kv.second.size() == top; }) > 1;
}

FieldOutcome resolve_categorical(const std::string& field, const Tally& tally, std::size_t n_ok,
                                 const PolicySet& policies, bool item_level, const RationaleLookup& rationale_of) {
  FieldOutcome out;
  const auto k = static_cast<std::size_t>(policies.support_threshold);
  const bool unanimous_unknown = policies.unknown_escalation && tally.size() == 1 &&
                                 tally.begin()->first == kUnknownLabel && tally.begin()->second.size() == n_ok &&
                                 n_ok >= k;
  const auto winner = majority_winner(tally);
  if (unanimous_unknown || (winner && support_of(tally, *winner) >= k)) {
    const std::string value = unanimous_unknown ? std::string(kUnknownLabel) : *winner;
    DecisionEntry entry;
    entry.field = field;
    entry.value = value;
    entry.provenance = tally.at(value);
    entry.confidence = unanimous_unknown ? Confidence::high : confidence_band(entry.provenance.size(), n_ok, policies);
    if (unanimous_unknown) entry.flags.emplace_back(flag::anomalous);
    for (const auto& id : entry.provenance) {
      if (auto r = rationale_of(id)) {
        entry.rationale = *r;
        break;
      }
    }
    out.entries.push_back(std::move(entry));
    for (const auto& [v, ids] : tally) {
      if (v != value) out.discarded.push_back({field, "", v, loser_reason(ids.size(), policies), ids});
    }
    return out;
  }
  out.entries.push_back(pseudo_entry(field, item_level));
  const bool tied = tie_at_top(tally);
  const auto top = top_count(tally);
  for (const auto& [v, ids] : tally) {
    const auto reason = tied && ids.size() == top ? DiscardReason::contradiction_unresolved
                                                  : loser_reason(ids.size(), policies);
    out.discarded.push_back({field, "", v, reason, ids});
  }
  return out;
}

// Lower weighted median of the grades on the ordered scale.
std::string supported_median(const Tally& tally, const OutputSchema& schema) {
  std::vector<std::pair<int, std::string>> ranked;
  std::size_t total = 0;
  for (const auto& [grade, ids] : tally) {
    ranked.emplace_back(schema.severity_rank(grade), grade);
    total += ids.size();
  }
  std::sort(ranked.begin(), ranked.end());
  std::size_t cumulative = 0;
  for (const auto& [rank, grade] : ranked) {
    cumulative += tally.at(grade).size();
    if (cumulative * 2 >= total) return grade;
  }
  return ranked.back().second;
}

FieldOutcome resolve_severity(const std::string& item, const Tally& tally, bool divergent, std::size_t n_ok,
                              const PolicySet& policies, const OutputSchema& schema) {
  FieldOutcome out;
  const std::string field = item + ".severity";
  const auto k = static_cast<std::size_t>(policies.support_threshold);
  const auto loser = [&](std::size_t support) {
    return divergent ? DiscardReason::contradiction_unresolved : loser_reason(support, policies);
  };

  if (divergent && policies.divergence_action == DivergenceAction::reject) {
    out.entries.push_back(pseudo_entry(field, true));
    for (const auto& [grade, ids] : tally) out.discarded.push_back({field, "", grade, loser(ids.size()), ids});
    return out;
  }

  const std::string median = supported_median(tally, schema);
  const auto& supporters = tally.at(median);
  DecisionEntry entry;
  entry.field = field;
  entry.value = median;
  entry.provenance = supporters;
  // A median outvoted by another grade stays uncertain, so an extra vote for it can only help.
  const bool supported = supporters.size() >= k && supporters.size() == top_count(tally) && !tie_at_top(tally);
  if (supported && !divergent) {
    entry.confidence = confidence_band(supporters.size(), n_ok, policies);
  } else if (supported) {
    entry.confidence = Confidence::low;
    entry.flags.emplace_back(flag::secondary_review);
  } else {
    entry.confidence = Confidence::low;
    entry.flags.emplace_back(flag::secondary_review);
    entry.flags.emplace_back(flag::uncertain);
  }
  sort_flags(entry);
  out.entries.push_back(std::move(entry));
  for (const auto& [grade, ids] : tally) {
    if (grade != median) out.discarded.push_back({field, "", grade, loser(ids.size()), ids});
  }
  return out;
}

bool has_conflict(const ConsensusReport& report, const std::string& target, ConflictKind kind) {
  return std::any_of(report.conflicts.begin(), report.conflicts.end(),
                     [&](const Conflict& c) { return c.target == target && c.kind == kind; });
}

std::optional<std::string> label_rationale(const ConsensusReport& report, const std::string& model_id) {
  auto it = report.positions.find(model_id);
  if (it == report.positions.end()) return std::nullopt;
  return it->second.rationale;
}

std::optional<std::string> item_rationale(const ConsensusReport& report, const std::string& item,
                                          const std::string& model_id) {
  auto it = report.positions.find(model_id);
  if (it == report.positions.end()) return std::nullopt;
  auto item_it = it->second.items.find(item);
  if (item_it == it->second.items.end()) return std::nullopt;
  return item_it->second.rationale;
}

std::vector<std::string> split_cites(std::string_view cites) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= cites.size()) {
    auto comma = cites.find(',', start);
    if (comma == std::string_view::npos) comma = cites.size();
    auto id = text::trim(cites.substr(start, comma - start));
    if (!id.empty()) out.push_back(std::move(id));
    start = comma + 1;
  }
  return out;
}

std::optional<Confidence> parse_confidence(std::string_view s) {
  const auto lower = text::to_lower(text::trim(s));
  if (lower == "high") return Confidence::high;
  if (lower == "medium") return Confidence::medium;
  if (lower == "low") return Confidence::low;
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Confidence c) {
  switch (c) {
    case Confidence::high: return "high";
    case Confidence::medium: return "medium";
    case Confidence::low: return "low";
  }
  return "?";
}

std::string_view to_string(DiscardReason r) {
  switch (r) {
    case DiscardReason::insufficient_support: return "insufficient_support";
    case DiscardReason::ungrounded: return "ungrounded";
    case DiscardReason::banned: return "banned";
    case DiscardReason::outlier: return "outlier";
    case DiscardReason::contradiction_unresolved: return "contradiction_unresolved";
  }
  return "?";
}

std::string_view to_string(ConsolidationMode m) {
  return m == ConsolidationMode::reasoner ? "reasoner" : "deterministic";
}

bool DecisionEntry::has_flag(std::string_view f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }

void to_json(json& j, const DecisionEntry& v) {
  j = {{"field", v.field},
       {"value", v.value},
       {"confidence", v.confidence},
       {"provenance", v.provenance},
       {"flags", v.flags}};
  if (!v.section.empty()) j["section"] = v.section;
  if (v.rationale) j["rationale"] = *v.rationale;
}

void from_json(const json& j, DecisionEntry& v) {
  v = DecisionEntry{};
  j.at("field").get_to(v.field);
  j.at("value").get_to(v.value);
  j.at("confidence").get_to(v.confidence);
  j.at("provenance").get_to(v.provenance);
  j.at("flags").get_to(v.flags);
  if (j.contains("section")) j.at("section").get_to(v.section);
  if (j.contains("rationale")) v.rationale = j.at("rationale").get<std::string>();
}

void to_json(json& j, const DiscardedValue& v) {
  j = {{"field", v.field}, {"value", v.value}, {"reason", v.reason}, {"models", v.models}};
  if (!v.section.empty()) j["section"] = v.section;
}

void from_json(const json& j, DiscardedValue& v) {
  v = DiscardedValue{};
  j.at("field").get_to(v.field);
  j.at("value").get_to(v.value);
  j.at("reason").get_to(v.reason);
  j.at("models").get_to(v.models);
  if (j.contains("section")) j.at("section").get_to(v.section);
}

void to_json(json& j, const ConsolidatedDecision& v) {
  j = {{"run_id", v.run_id},
       {"kind", v.kind},
       {"payload", v.payload},
       {"entries", v.entries},
       {"discarded", v.discarded},
       {"consolidation_mode", v.consolidation_mode},
       {"ok_candidates", v.ok_candidates}};
  if (v.reasoner_rationale) j["reasoner_rationale"] = *v.reasoner_rationale;
}

void from_json(const json& j, ConsolidatedDecision& v) {
  v = ConsolidatedDecision{};
  j.at("run_id").get_to(v.run_id);
  j.at("kind").get_to(v.kind);
  j.at("payload").get_to(v.payload);
  j.at("entries").get_to(v.entries);
  j.at("discarded").get_to(v.discarded);
  j.at("consolidation_mode").get_to(v.consolidation_mode);
  j.at("ok_candidates").get_to(v.ok_candidates);
  if (j.contains("reasoner_rationale")) v.reasoner_rationale = j.at("reasoner_rationale").get<std::string>();
}

std::string decision_document(const ConsolidatedDecision& decision) { return canonical_dump(json(decision)) + "\n"; }

ConsolidatedDecision parse_decision_document(std::string_view document) {
  return json::parse(document).get<ConsolidatedDecision>();
}

Confidence confidence_band(std::size_t support, std::size_t ok_candidates, const PolicySet& policies) {
  if (ok_candidates == 0) return Confidence::low;
  const double fraction = static_cast<double>(support) / static_cast<double>(ok_candidates);
  if (fraction + kBandEpsilon >= policies.band_high) return Confidence::high;
  if (fraction + kBandEpsilon >= policies.band_medium) return Confidence::medium;
  return Confidence::low;
}

double grounding_score(std::string_view claim, const SharedContext& context) {
  const auto claim_tokens = text::content_tokens(claim);
  if (claim_tokens.empty()) return 0.0;
  std::set<std::string> source;
  for (const auto& input : context.text_inputs) {
    auto tokens = text::token_set(input.body);
    source.insert(tokens.begin(), tokens.end());
  }
  for (const auto& [key, value] : context.metadata) {
    auto tokens = text::token_set(value);
    source.insert(tokens.begin(), tokens.end());
  }
  std::size_t shared = 0;
  for (const auto& token : claim_tokens) shared += source.count(token);
  return static_cast<double>(shared) / static_cast<double>(claim_tokens.size());
}

StructuredPayload payload_from_entries(SchemaKind kind, const std::vector<DecisionEntry>& entries,
                                       const OutputSchema& schema) {
  StructuredPayload payload;
  payload.kind = kind;
  switch (kind) {
    case SchemaKind::single_label:
      for (const auto& e : entries) {
        if (e.field != "label") continue;
        payload.label = e.value;
        payload.rationale = e.rationale;
      }
      break;
    case SchemaKind::labeled_items:
      for (const auto& e : entries) {
        const auto dot = e.field.rfind('.');
        if (dot == std::string::npos) continue;
        const std::string item = e.field.substr(0, dot);
        const std::string attribute = e.field.substr(dot + 1);
        auto& assessment = payload.items[item];
        if (attribute == "status") {
          assessment.status = e.value;
          assessment.rationale = e.rationale;
        } else if (attribute == "severity") {
          assessment.severity = e.value;
        }
      }
      break;
    case SchemaKind::clinical_report:
      for (const auto& name : schema.sections) {
        ReportSection section{name, {}};
        for (const auto& e : entries) {
          if (e.section == name && e.accepted()) section.claims.push_back(e.value);
        }
        payload.sections.push_back(std::move(section));
      }
      break;
    case SchemaKind::free_text:
      for (const auto& e : entries) {
        if (e.accepted()) payload.claims.push_back(e.value);
      }
      break;
  }
  return payload;
}

ConsolidatedDecision consolidate_deterministic(const ConsensusReport& report, const OutputSchema& schema,
                                               const PolicySet& policies, const SharedContext& context) {
  ConsolidatedDecision decision;
  decision.run_id = report.run_id;
  decision.kind = schema.kind;
  decision.consolidation_mode = ConsolidationMode::deterministic;
  const std::size_t n_ok = report.ok_models.size();
  decision.ok_candidates = n_ok;

  FieldOutcome outcome;
  switch (schema.kind) {
    case SchemaKind::single_label:
      if (!report.label_tally.empty()) {
        outcome.absorb(resolve_categorical("label", report.label_tally, n_ok, policies, false,
                                           [&](const std::string& id) { return label_rationale(report, id); }));
      }
      break;
    case SchemaKind::labeled_items:
      for (const auto& item : schema.item_universe) {
        auto status_it = report.item_status_tally.find(item);
        if (status_it == report.item_status_tally.end()) continue;
        outcome.absorb(resolve_categorical(item + ".status", status_it->second, n_ok, policies, true,
                                           [&](const std::string& id) { return item_rationale(report, item, id); }));
        if (auto sev_it = report.item_severity_tally.find(item); sev_it != report.item_severity_tally.end()) {
          const bool divergent = has_conflict(report, item + ".severity", ConflictKind::severity_divergence);
          outcome.absorb(resolve_severity(item, sev_it->second, divergent, n_ok, policies, schema));
        }
      }
      break;
    case SchemaKind::free_text:
    case SchemaKind::clinical_report:
      for (const auto& cluster : report.clusters) {
        const std::string& value = cluster.representative().text;
        const bool banned = std::any_of(policies.banned_patterns.begin(), policies.banned_patterns.end(),
                                        [&](const BannedPattern& p) { return p.matches(value); });
        DiscardedValue discard{cluster.id, cluster.section, value, DiscardReason::banned, cluster.supporters};
        if (banned) {
          outcome.discarded.push_back(std::move(discard));
        } else if (policies.grounding_required && grounding_score(value, context) < policies.grounding_fraction) {
          discard.reason = DiscardReason::ungrounded;
          outcome.discarded.push_back(std::move(discard));
        } else if (cluster.supporters.size() >= static_cast<std::size_t>(policies.support_threshold)) {
          DecisionEntry entry;
          entry.field = cluster.id;
          entry.section = cluster.section;
          entry.value = value;
          entry.provenance = cluster.supporters;
          entry.confidence = confidence_band(cluster.supporters.size(), n_ok, policies);
          outcome.entries.push_back(std::move(entry));
        } else {
          discard.reason = DiscardReason::insufficient_support;
          outcome.discarded.push_back(std::move(discard));
        }
      }
      break;
  }
  decision.entries = std::move(outcome.entries);
  decision.discarded = std::move(outcome.discarded);
  decision.payload = payload_from_entries(schema.kind, decision.entries, schema);
  return enforce_policies(decision, policies, schema);
}

ConsolidatedDecision enforce_policies(const ConsolidatedDecision& decision, const PolicySet& policies,
                                      const OutputSchema& schema) {
  ConsolidatedDecision out = decision;
  out.entries.clear();
  const bool structured = decision.kind == SchemaKind::single_label || decision.kind == SchemaKind::labeled_items;
  for (const auto& entry : decision.entries) {
    const bool banned = !is_pseudo(entry) &&
                        std::any_of(policies.banned_patterns.begin(), policies.banned_patterns.end(),
                                    [&](const BannedPattern& p) { return p.matches(entry.value); });
    if (!banned) {
      out.entries.push_back(entry);
      continue;
    }
    out.discarded.push_back({entry.field, entry.section, entry.value, DiscardReason::banned, entry.provenance});
    if (structured) out.entries.push_back(pseudo_entry(entry.field, decision.kind == SchemaKind::labeled_items));
  }
  out.payload = payload_from_entries(decision.kind, out.entries, schema);
  return out;
}

// ── reasoner ────────────────────────────────────────────────────────────────

std::string fence_candidate(const CandidateOutput& candidate) {
  std::string out = "<<<CANDIDATE model_id=" + candidate.model_id + " sha256=" + candidate.content_hash + ">>>\n";
  const auto lines = text::split_lines(candidate.raw_text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i != 0) out.push_back('\n');
    if (starts_with(lines[i], "<<<") || starts_with(lines[i], "\\")) out.push_back('\\');
    out.append(lines[i]);
  }
  out += "\n<<<END CANDIDATE model_id=" + candidate.model_id + ">>>";
  return out;
}

std::vector<FencedCandidate> extract_candidate_blocks(std::string_view prompt_text) {
  std::vector<FencedCandidate> blocks;
  const auto lines = text::split_lines(prompt_text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = lines[i];
    if (!starts_with(line, "<<<CANDIDATE model_id=") || line.size() < 3 ||
        line.substr(line.size() - 3) != ">>>") {
      continue;
    }
    const auto attrs = line.substr(22, line.size() - 25);
    const auto space = attrs.find(" sha256=");
    if (space == std::string_view::npos) continue;
    FencedCandidate block{std::string(attrs.substr(0, space)), std::string(attrs.substr(space + 8)), {}};
    const std::string end_line = "<<<END CANDIDATE model_id=" + block.model_id + ">>>";
    std::size_t j = i + 1;
    bool first = true;
    for (; j < lines.size() && lines[j] != end_line; ++j) {
      if (!first) block.raw_text.push_back('\n');
      first = false;
      auto body = lines[j];
      if (starts_with(body, "\\")) body.remove_prefix(1);
      block.raw_text.append(body);
    }
    if (j == lines.size()) break;
    blocks.push_back(std::move(block));
    i = j;
  }
  return blocks;
}

std::string output_grammar_text(const OutputSchema& schema) {
  std::string out =
      "Respond with one decision line per field, in the form\n"
      "  field | value | confidence | cites: model_id, model_id\n"
      "where confidence is high, medium or low and cites lists every candidate model whose output supports the "
      "value.\n";
  switch (schema.kind) {
    case SchemaKind::single_label:
      out += "Use the field `label`. The value must be a label proposed by at least one candidate, or Uncertain.\n";
      break;
    case SchemaKind::labeled_items:
      out +=
          "Use fields `<item>.status` and `<item>.severity` (for example `" +
          (schema.item_universe.empty() ? std::string("item") : schema.item_universe.front()) +
          ".status`). Values must be proposed by at least one candidate for that item, or Uncertain.\n";
      break;
    case SchemaKind::clinical_report:
      out += "Use the section name as the field (one of: " + join(schema.sections, ", ") +
             "); the value is one sentence supported by the candidates.\n";
      break;
    case SchemaKind::free_text:
      out += "Use the field `claim`; the value is one sentence supported by the candidates.\n";
      break;
  }
  out += "After the decision lines write a line starting with RATIONALE: followed by your reasoning.\n";
  return out;
}

std::string consensus_summary_text(const ConsensusReport& report, const std::vector<CandidateOutput>& candidates) {
  std::string out = "ok candidates: " + join(report.ok_models, ", ") + "\n";
  for (const auto& c : candidates) {
    if (std::find(report.ok_models.begin(), report.ok_models.end(), c.model_id) == report.ok_models.end()) {
      out += "excluded candidate: " + c.model_id + " (" + std::string(to_string(c.status)) + ")\n";
    }
  }
  out += "agreement ratio: " + format_ratio(report.agreement_ratio) + "\n";
  auto tally_line = [](const Tally& tally) {
    std::vector<std::string> parts;
    for (const auto& [value, ids] : tally) parts.push_back(value + "=[" + join(ids, ",") + "]");
    return join(parts, " ");
  };
  if (!report.label_tally.empty()) out += "label tally: " + tally_line(report.label_tally) + "\n";
  for (const auto& [item, tally] : report.item_status_tally) out += item + " status tally: " + tally_line(tally) + "\n";
  for (const auto& [item, tally] : report.item_severity_tally) {
    out += item + " severity tally: " + tally_line(tally) + "\n";
  }
  for (const auto& cluster : report.clusters) {
    out += cluster.id + (cluster.section.empty() ? "" : " [" + cluster.section + "]") + " supported by " +
           join(cluster.supporters, ",") + ": " + cluster.representative().text + "\n";
  }
  for (const auto& conflict : report.conflicts) {
    std::vector<std::string> parts;
    for (const auto& [id, value] : conflict.positions) parts.push_back(id + "=" + value);
    out += "conflict (" + json(conflict.kind).get<std::string>() + ") on " + conflict.target + ": " +
           join(parts, ", ") + "\n";
  }
  return out;
}

std::string policies_text(const PolicySet& p) {
  std::string out;
  out += "- a value needs at least " + std::to_string(p.support_threshold) + " supporting models\n";
  out += "- confidence high at support fraction >= " + format_ratio(p.band_high) + ", medium at >= " +
         format_ratio(p.band_medium) + ", otherwise low\n";
  if (p.grounding_required) {
    out += "- every claim must be grounded in the shared input sources (>= " + format_ratio(p.grounding_fraction) +
           " of its content words)\n";
  }
  if (p.unknown_escalation) out += "- a unanimous Unknown is reported as a high-confidence anomaly\n";
  out += "- divergent severity grades: " + json(p.divergence_action).get<std::string>() + "\n";
  for (const auto& banned : p.banned_patterns) {
    out += std::string("- never output content matching ") + (banned.is_regex ? "regex " : "") + "\"" +
           banned.pattern + "\"\n";
  }
  return out;
}

CanonicalPrompt build_reasoner_prompt(std::string_view reasoner_template, const CanonicalPrompt& member_prompt,
                                      const std::vector<CandidateOutput>& candidates, const ConsensusReport& report,
                                      const PolicySet& policies, const SharedContext& context,
                                      const OutputSchema& schema) {
  std::string canonical = member_prompt.rendered_text;
  for (const auto& image : member_prompt.attached_images) {
    canonical += "\n[attached image " + image.source_id + " sha256:" + image.content_hash + "]";
  }
  std::string blocks;
  for (const auto& c : candidates) {
    if (!c.ok()) continue;
    if (!blocks.empty()) blocks += "\n\n";
    blocks += fence_candidate(c);
  }
  const std::string summary = consensus_summary_text(report, candidates);
  const std::string policy = policies_text(policies);
  const std::string grammar = output_grammar_text(schema);

  CanonicalPrompt prompt;
  prompt.template_id = "reasoner";
  try {
    prompt.rendered_text = substitute(reasoner_template, [&](std::string_view name) -> std::optional<std::string> {
      if (name == "canonical_prompt") return canonical;
      if (name == "candidates") return blocks;
      if (name == "consensus_summary") return summary;
      if (name == "policies") return policy;
      if (name == "output_grammar") return grammar;
      if (auto value = context.lookup(name)) return std::string(*value);
      return std::nullopt;
    });
  } catch (const UnresolvedPlaceholder& e) {
    throw TemplateError(std::string("reasoner template: ") + e.what());
  }
  prompt.prompt_hash = compute_prompt_hash(prompt.rendered_text, prompt.attached_images);
  return prompt;
}

ConsolidatedDecision parse_reasoner_decision(std::string_view response, const ConsensusReport& report,
                                             const OutputSchema& schema, const PolicySet& policies,
                                             const SharedContext& context) {
  ConsolidatedDecision decision;
  decision.run_id = report.run_id;
  decision.kind = schema.kind;
  decision.consolidation_mode = ConsolidationMode::reasoner;
  const std::size_t n_ok = report.ok_models.size();
  decision.ok_candidates = n_ok;

  struct RawLine {
    std::string field, value;
    Confidence confidence;
    std::vector<std::string> cites;
  };
  std::vector<RawLine> lines;
  std::size_t offset = 0;
  for (auto line : text::split_lines(response)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    const auto trimmed = text::trim(line);
    if (text::to_lower(trimmed).rfind("rationale:", 0) == 0) {
      const auto colon = response.find(':', line_start);
      decision.reasoner_rationale = text::trim(response.substr(colon + 1));
      break;
    }
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      const auto bar = trimmed.find('|', start);
      parts.push_back(text::trim(std::string_view(trimmed).substr(start, bar - start)));
      if (bar == std::string::npos) break;
      start = bar + 1;
    }
    if (parts.size() != 4 || text::to_lower(parts[3]).rfind("cites:", 0) != 0) continue;
    auto confidence = parse_confidence(parts[2]);
    if (!confidence) throw ReasonerOutputInvalid("bad confidence '" + parts[2] + "'");
    if (parts[0].empty() || parts[1].empty()) throw ReasonerOutputInvalid("empty field or value");
    lines.push_back({parts[0], parts[1], *confidence, split_cites(std::string_view(parts[3]).substr(6))});
  }
  if (lines.empty()) throw ReasonerOutputInvalid("no decision lines");

  auto make_entry = [&](std::string field, std::string value, const RawLine& raw) {
    DecisionEntry entry;
    entry.field = std::move(field);
    entry.value = std::move(value);
    entry.confidence = raw.confidence;
    std::set<std::string> cited;
    for (const auto& id : raw.cites) {
      if (std::binary_search(report.ok_models.begin(), report.ok_models.end(), id)) {
        cited.insert(id);
      } else if (std::find(entry.flags.begin(), entry.flags.end(), flag::invalid_citation) == entry.flags.end()) {
        entry.flags.emplace_back(flag::invalid_citation);
      }
    }
    entry.provenance.assign(cited.begin(), cited.end());
    if (entry.provenance.empty()) {
      entry.confidence = Confidence::low;
      entry.flags.emplace_back(flag::uncited);
    }
    return entry;
  };

  auto conserve = [&](const std::string& field, const Tally& tally, const std::optional<std::string>& chosen) {
    const bool divergent = has_conflict(report, field, ConflictKind::severity_divergence);
    for (const auto& [value, ids] : tally) {
      if (chosen && value == *chosen) continue;
      const auto reason = chosen && *chosen != kUncertainLabel && !divergent ? loser_reason(ids.size(), policies)
                                                                             : DiscardReason::contradiction_unresolved;
      decision.discarded.push_back({field, "", value, reason, ids});
    }
  };

  auto escalate_unknown = [&](DecisionEntry& entry, const Tally& tally) {
    if (policies.unknown_escalation && entry.value == kUnknownLabel && tally.size() == 1 &&
        tally.begin()->second.size() == n_ok && n_ok >= static_cast<std::size_t>(policies.support_threshold)) {
      entry.confidence = Confidence::high;
      entry.flags.emplace_back(flag::anomalous);
    }
  };

  switch (schema.kind) {
    case SchemaKind::single_label: {
      std::optional<DecisionEntry> chosen;
      for (const auto& raw : lines) {
        if (!text::iequals(raw.field, "label")) throw ReasonerOutputInvalid("unexpected field '" + raw.field + "'");
        if (chosen) throw ReasonerOutputInvalid("more than one label line");
        if (text::iequals(raw.value, kUncertainLabel)) {
          chosen = make_entry("label", std::string(kUncertainLabel), raw);
          chosen->confidence = Confidence::low;
          chosen->flags.emplace_back(flag::uncertain);
          continue;
        }
        auto label = schema.canonical_label(raw.value);
        if (!label || report.label_tally.count(*label) == 0)
          throw ReasonerOutputInvalid("label '" + raw.value + "' is outside the tally space");
        chosen = make_entry("label", *label, raw);
        escalate_unknown(*chosen, report.label_tally);
      }
      sort_flags(*chosen);
      conserve("label", report.label_tally, chosen->value);
      decision.entries.push_back(std::move(*chosen));
      break;
    }
    case SchemaKind::labeled_items: {
      std::map<std::string, DecisionEntry> by_field;
      for (const auto& raw : lines) {
        const auto dot = raw.field.rfind('.');
        if (dot == std::string::npos) throw ReasonerOutputInvalid("field '" + raw.field + "' lacks an attribute");
        auto item = schema.canonical_item(raw.field.substr(0, dot));
        const auto attribute = text::to_lower(raw.field.substr(dot + 1));
        if (!item || (attribute != "status" && attribute != "severity"))
          throw ReasonerOutputInvalid("unknown field '" + raw.field + "'");
        const std::string field = *item + "." + attribute;
        if (by_field.count(field) != 0) throw ReasonerOutputInvalid("duplicate field '" + field + "'");
        const auto& tallies = attribute == "status" ? report.item_status_tally : report.item_severity_tally;
        auto tally_it = tallies.find(*item);
        if (text::iequals(raw.value, kUncertainLabel)) {
          auto entry = make_entry(field, std::string(kUncertainLabel), raw);
          entry.confidence = Confidence::low;
          entry.flags.emplace_back(flag::uncertain);
          entry.flags.emplace_back(flag::secondary_review);
          by_field.emplace(field, std::move(entry));
          continue;
        }
        auto value = attribute == "status" ? schema.canonical_label(raw.value) : schema.canonical_severity(raw.value);
        if (!value || tally_it == tallies.end() || tally_it->second.count(*value) == 0)
          throw ReasonerOutputInvalid("value '" + raw.value + "' for " + field + " is outside the tally space");
        auto entry = make_entry(field, *value, raw);
        if (attribute == "status") escalate_unknown(entry, tally_it->second);
        // The divergence policy binds the reasoner as well.
        if (attribute == "severity" && has_conflict(report, field, ConflictKind::severity_divergence)) {
          if (policies.divergence_action == DivergenceAction::reject) {
            auto pseudo = pseudo_entry(field, true);
            pseudo.provenance = entry.provenance;
            entry = std::move(pseudo);
          } else {
            entry.confidence = Confidence::low;
            entry.flags.emplace_back(flag::secondary_review);
          }
        }
        by_field.emplace(field, std::move(entry));
      }
      for (const auto& item : schema.item_universe) {
        for (const char* attribute : {"status", "severity"}) {
          const std::string field = item + "." + attribute;
          const auto& tallies = std::string_view(attribute) == "status" ? report.item_status_tally
                                                                         : report.item_severity_tally;
          auto entry_it = by_field.find(field);
          std::optional<std::string> chosen;
          if (entry_it != by_field.end()) {
            chosen = entry_it->second.value;
            sort_flags(entry_it->second);
            decision.entries.push_back(entry_it->second);
          }
          if (auto tally_it = tallies.find(item); tally_it != tallies.end()) {
            // An item the reasoner skipped is discarded by the support rule.
            if (!chosen) {
              for (const auto& [value, ids] : tally_it->second) {
                decision.discarded.push_back({field, "", value, loser_reason(ids.size(), policies), ids});
              }
            } else {
              conserve(field, tally_it->second, chosen);
            }
          }
        }
      }
      break;
    }
    case SchemaKind::free_text:
    case SchemaKind::clinical_report: {
      std::size_t index = 0;
      for (const auto& raw : lines) {
        std::string section;
        if (schema.kind == SchemaKind::free_text) {
          if (!text::iequals(raw.field, "claim")) throw ReasonerOutputInvalid("unexpected field '" + raw.field + "'");
        } else {
          auto name = schema.canonical_section(raw.field);
          if (!name) throw ReasonerOutputInvalid("unknown section '" + raw.field + "'");
          section = *name;
        }
        if (text::token_set(raw.value).empty()) throw ReasonerOutputInvalid("claim without content");
        auto entry = make_entry("r" + std::to_string(index++), raw.value, raw);
        entry.section = section;
        sort_flags(entry);
        if (policies.grounding_required && grounding_score(entry.value, context) < policies.grounding_fraction) {
          decision.discarded.push_back(
              {entry.field, entry.section, entry.value, DiscardReason::ungrounded, entry.provenance});
          continue;
        }
        decision.entries.push_back(std::move(entry));
      }
      for (const auto& cluster : report.clusters) {
        const auto& rep = cluster.representative().text;
        const bool covered = std::any_of(lines.begin(), lines.end(), [&](const RawLine& raw) {
          if (schema.kind == SchemaKind::clinical_report &&
              schema.canonical_section(raw.field).value_or("") != cluster.section) {
            return false;
          }
          return text_similarity(raw.value, rep) >= policies.similarity_threshold;
        });
        if (!covered) {
          const bool banned = std::any_of(policies.banned_patterns.begin(), policies.banned_patterns.end(),
                                          [&](const BannedPattern& p) { return p.matches(rep); });
          const bool ungrounded =
              policies.grounding_required && grounding_score(rep, context) < policies.grounding_fraction;
          const auto reason = banned       ? DiscardReason::banned
                              : ungrounded ? DiscardReason::ungrounded
                                           : loser_reason(cluster.supporters.size(), policies);
          decision.discarded.push_back({cluster.id, cluster.section, rep, reason, cluster.supporters});
        }
      }
      break;
    }
  }
  decision.payload = payload_from_entries(schema.kind, decision.entries, schema);
  return decision;
}

ReasonerOutcome consolidate_with_reasoner(const TaskSpec& task, const CanonicalPrompt& member_prompt,
                                          const std::vector<CandidateOutput>& candidates,
                                          const ConsensusReport& report, Backend& reasoner,
                                          const InvokeOptions& options) {
  ReasonerOutcome outcome;
  outcome.prompt = build_reasoner_prompt(task.reasoner_template, member_prompt, candidates, report, task.policies,
                                         task.context, task.schema);
  auto fall_back = [&](const std::string& failure) {
    outcome.failure = failure;
    outcome.decision = consolidate_deterministic(report, task.schema, task.policies, task.context);
    return outcome;
  };
  try {
    auto result = reasoner.invoke(outcome.prompt, options);
    outcome.response = std::move(result.content);
    outcome.latency_ms = result.latency_ms;
  } catch (const Error& e) {
    if (!task.policies.allow_deterministic_fallback) throw ReasonerFailed(e.what());
    return fall_back(std::string("ReasonerFailed: ") + e.what());
  }
  try {
    outcome.decision = enforce_policies(
        parse_reasoner_decision(*outcome.response, report, task.schema, task.policies, task.context), task.policies,
        task.schema);
  } catch (const ReasonerOutputInvalid& e) {
    if (!task.policies.allow_deterministic_fallback) throw;
    return fall_back(e.what());
  }
  return outcome;
}

}  // namespace concord
