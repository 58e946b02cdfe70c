#include "concord/audit.hpp"

#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "concord/error.hpp"
#include "concord/hash.hpp"
#include "concord/orchestrator.hpp"

namespace concord {

namespace {

json record_json(const AuditRecord& r) {
  return {{"seq", r.seq},
          {"run_id", r.run_id},
          {"kind", r.kind},
          {"body", r.body},
          {"body_hash", r.body_hash},
          {"prev_hash", r.prev_hash},
          {"record_hash", r.record_hash},
          {"meta", r.meta},
          {"meta_hash", r.meta_hash}};
}

AuditRecord record_from_json(const json& j) {
  AuditRecord r;
  r.seq = j.at("seq").get<std::uint64_t>();
  r.run_id = j.at("run_id").get<std::string>();
  r.kind = j.at("kind").get<RecordKind>();
  // Unknown kind strings map to the first enumerator; reject them.
  if (j.at("kind").get<std::string>() != to_string(r.kind)) throw std::invalid_argument("unknown record kind");
  r.body = j.at("body");
  r.body_hash = j.at("body_hash").get<std::string>();
  r.prev_hash = j.at("prev_hash").get<std::string>();
  r.record_hash = j.at("record_hash").get<std::string>();
  r.meta = j.at("meta");
  r.meta_hash = j.at("meta_hash").get<std::string>();
  return r;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

const AuditRecord* find_first(const std::vector<AuditRecord>& records, RecordKind kind) {
  for (const auto& r : records) {
    if (r.kind == kind) return &r;
  }
  return nullptr;
}

std::vector<const AuditRecord*> find_all(const std::vector<AuditRecord>& records, RecordKind kind) {
  std::vector<const AuditRecord*> out;
  for (const auto& r : records) {
    if (r.kind == kind) out.push_back(&r);
  }
  return out;
}

ScriptedResponse scripted_from_candidate(const CandidateOutput& c) {
  ScriptedResponse response;
  response.latency_ms = c.latency_ms;
  switch (c.status) {
    case CandidateStatus::ok:
    case CandidateStatus::parse_failed: response.text = c.raw_text; break;
    case CandidateStatus::timeout: response.failure = ScriptedFailure::timeout; break;
    case CandidateStatus::backend_error: response.failure = ScriptedFailure::upstream; break;
  }
  return response;
}

struct TrailView {
  TaskSpec task;
  std::vector<CandidateOutput> candidates;
  ConsolidatedDecision decision;
  json decision_json;
  const AuditRecord* reasoner = nullptr;
};

TrailView view_of(const std::vector<AuditRecord>& records) {
  TrailView view;
  view.task = task_from_trail(records);
  view.candidates = candidates_from_trail(records);
  std::set<std::string> seen;
  for (const auto& c : view.candidates) seen.insert(c.model_id);
  for (const auto& m : view.task.consortium) {
    if (seen.count(m.model_id) == 0) throw IncompleteTrail("candidate_received for " + m.model_id);
  }
  const auto* decision = find_first(records, RecordKind::decision_issued);
  if (decision == nullptr) throw IncompleteTrail("decision_issued");
  view.decision_json = decision->body;
  view.decision = decision->body.get<ConsolidatedDecision>();
  view.reasoner = find_first(records, RecordKind::reasoner_invoked);
  return view;
}

std::string join(const std::vector<std::string>& values, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i != 0) out.append(sep);
    out.append(values[i]);
  }
  return out;
}

std::string or_dash(const std::vector<std::string>& values) { return values.empty() ? "-" : join(values, ","); }

std::string excerpt(std::string_view s, std::size_t max = 120) {
  std::string out(s.substr(0, max));
  std::replace(out.begin(), out.end(), '\n', ' ');
  if (s.size() > max) out += "...";
  return out;
}

// The claim of `model_id` closest to `value` (within `section` for reports).
std::optional<std::string> closest_claim(const ConsensusReport& report, const std::string& model_id,
                                         const std::string& section, const std::string& value) {
  auto it = report.positions.find(model_id);
  if (it == report.positions.end()) return std::nullopt;
  std::vector<std::string> claims;
  if (report.kind == SchemaKind::free_text) {
    claims = it->second.claims;
  } else {
    for (const auto& s : it->second.sections) {
      if (s.name == section) claims.insert(claims.end(), s.claims.begin(), s.claims.end());
    }
  }
  std::optional<std::string> best;
  double best_score = -1.0;
  for (const auto& claim : claims) {
    double score = 0.0;
    try {
      score = text_similarity(claim, value);
    } catch (const EmptyAfterNormalization&) {
      continue;
    }
    if (score > best_score) {
      best_score = score;
      best = claim;
    }
  }
  return best;
}

}  // namespace

std::string_view to_string(RecordKind kind) {
  switch (kind) {
    case RecordKind::run_started: return "run_started";
    case RecordKind::prompt_rendered: return "prompt_rendered";
    case RecordKind::candidate_received: return "candidate_received";
    case RecordKind::consensus_computed: return "consensus_computed";
    case RecordKind::reasoner_invoked: return "reasoner_invoked";
    case RecordKind::decision_issued: return "decision_issued";
    case RecordKind::policy_applied: return "policy_applied";
    case RecordKind::run_failed: return "run_failed";
  }
  return "?";
}

std::string compute_record_hash(std::uint64_t seq, std::string_view run_id, RecordKind kind,
                                std::string_view body_hash, std::string_view prev_hash) {
  std::string material;
  material += std::to_string(seq) + "\n";
  material.append(run_id).push_back('\n');
  material.append(to_string(kind)).push_back('\n');
  material.append(body_hash).push_back('\n');
  material.append(prev_hash).push_back('\n');
  return hash_content(material);
}

std::string record_line(const AuditRecord& record) { return canonical_dump(record_json(record)); }

std::filesystem::path trail_path(const std::filesystem::path& dir, std::string_view run_id) {
  return dir / (std::string(run_id) + ".audit.jsonl");
}

AuditTrail::AuditTrail(const std::filesystem::path& dir, std::string run_id)
    : path_(trail_path(dir, run_id)), run_id_(std::move(run_id)) {
  // "x" makes creation exclusive: an existing trail is never reopened.
  file_ = std::fopen(path_.c_str(), "wbx");
  if (file_ == nullptr) throw StorageError("cannot create " + path_.string() + ": " + std::strerror(errno));
}

AuditTrail::~AuditTrail() {
  if (file_ != nullptr) std::fclose(file_);
}

const AuditRecord& AuditTrail::append(RecordKind kind, json body, json meta) {
  if (file_ == nullptr) throw StorageError("append to closed trail " + path_.string());
  AuditRecord record;
  record.seq = records_.size();
  record.run_id = run_id_;
  record.kind = kind;
  record.body = std::move(body);
  record.body_hash = hash_content(canonical_dump(record.body));
  record.prev_hash = records_.empty() ? zero_hash() : records_.back().record_hash;
  record.record_hash = compute_record_hash(record.seq, record.run_id, kind, record.body_hash, record.prev_hash);
  record.meta = std::move(meta);
  record.meta_hash = hash_content(canonical_dump(record.meta));
  const std::string line = record_line(record) + "\n";
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0 ||
      ::fsync(::fileno(file_)) != 0) {
    throw StorageError("write failed for " + path_.string() + ": " + std::strerror(errno));
  }
  records_.push_back(std::move(record));
  return records_.back();
}

void AuditTrail::close() {
  if (file_ == nullptr) return;
  const bool failed = std::fclose(file_) != 0;
  file_ = nullptr;
  if (failed) throw StorageError("close failed for " + path_.string());
}

VerifyResult verify_chain(const std::filesystem::path& trail_file) {
  const auto lines = read_lines(trail_file);
  VerifyResult result;
  result.record_count = lines.size();
  std::string prev = zero_hash();
  std::optional<RecordKind> last_kind;
  auto broken = [&](std::uint64_t seq, std::string reason) {
    result.ok = false;
    result.broken_seq = seq;
    result.reason = std::move(reason);
    return result;
  };
  for (std::size_t i = 0; i < lines.size(); ++i) {
    AuditRecord record;
    try {
      const json parsed = json::parse(lines[i]);
      record = record_from_json(parsed);
      if (canonical_dump(parsed) != lines[i]) return broken(i, "record bytes are not canonical");
    } catch (const std::exception&) {
      return broken(i, "record does not parse");
    }
    if (hash_content(canonical_dump(record.body)) != record.body_hash) return broken(i, "body_hash mismatch");
    if (hash_content(canonical_dump(record.meta)) != record.meta_hash) return broken(i, "meta_hash mismatch");
    if (compute_record_hash(record.seq, record.run_id, record.kind, record.body_hash, record.prev_hash) !=
        record.record_hash) {
      return broken(i, "record_hash mismatch");
    }
    if (record.seq != i) return broken(record.seq, "sequence gap: expected seq " + std::to_string(i));
    if (record.prev_hash != prev) return broken(record.seq, "prev_hash does not link to the previous record");
    prev = record.record_hash;
    last_kind = record.kind;
  }
  result.complete = last_kind == RecordKind::decision_issued || last_kind == RecordKind::run_failed;
  return result;
}

std::vector<AuditRecord> read_trail(const std::filesystem::path& trail_file) {
  const auto lines = read_lines(trail_file);
  std::vector<AuditRecord> records;
  records.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      records.push_back(record_from_json(json::parse(lines[i])));
    } catch (const std::exception&) {
      throw MalformedRecord(i);
    }
  }
  return records;
}

TaskSpec task_from_trail(const std::vector<AuditRecord>& records) {
  const auto* started = find_first(records, RecordKind::run_started);
  if (started == nullptr) throw IncompleteTrail("run_started");
  return started->body.at("task").get<TaskSpec>();
}

std::vector<CandidateOutput> candidates_from_trail(const std::vector<AuditRecord>& records) {
  std::vector<CandidateOutput> out;
  for (const auto* r : find_all(records, RecordKind::candidate_received)) {
    auto c = r->body.get<CandidateOutput>();
    c.latency_ms = r->meta.value("latency_ms", std::int64_t{0});
    c.received_at = r->meta.value("received_at", std::string());
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(),
            [](const CandidateOutput& a, const CandidateOutput& b) { return a.model_id < b.model_id; });
  return out;
}

BackendRegistry scripted_registry_from_trail(const std::vector<AuditRecord>& records) {
  const TaskSpec task = task_from_trail(records);
  BackendRegistry registry;
  for (const auto& c : candidates_from_trail(records)) {
    registry.override_model(c.model_id, ScriptedBackend::always("trail:" + c.model_id, scripted_from_candidate(c)));
  }
  ScriptedResponse reasoner_response{"", 0, ScriptedFailure::upstream};
  if (const auto* r = find_first(records, RecordKind::reasoner_invoked); r && r->body.at("response").is_string()) {
    reasoner_response = {r->body.at("response").get<std::string>(), r->meta.value("latency_ms", std::int64_t{0}),
                         ScriptedFailure::none};
  }
  registry.override_model(task.reasoner.model_id,
                          ScriptedBackend::always("trail:" + task.reasoner.model_id, reasoner_response));
  return registry;
}

ConsolidatedDecision replay_records(const std::vector<AuditRecord>& records) {
  const TrailView view = view_of(records);
  const auto candidates = parse_candidates(view.candidates, view.task.schema);
  ConsensusReport report = compute_consensus(candidates, view.task.schema, view.task.policies);
  report.run_id = view.task.run_id;

  ConsolidatedDecision replayed;
  if (view.decision.consolidation_mode == ConsolidationMode::reasoner) {
    if (view.reasoner == nullptr || !view.reasoner->body.at("response").is_string()) {
      throw IncompleteTrail("reasoner_invoked response");
    }
    replayed = enforce_policies(parse_reasoner_decision(view.reasoner->body.at("response").get<std::string>(), report,
                                                        view.task.schema, view.task.policies, view.task.context),
                                view.task.policies, view.task.schema);
  } else {
    replayed = consolidate_deterministic(report, view.task.schema, view.task.policies, view.task.context);
  }
  replayed.run_id = view.task.run_id;

  const json replayed_json = replayed;
  if (canonical_dump(replayed_json) != canonical_dump(view.decision_json)) {
    throw ReplayDivergence(json::diff(view.decision_json, replayed_json).dump());
  }
  return replayed;
}

ConsolidatedDecision replay(const std::filesystem::path& trail_file) { return replay_records(read_trail(trail_file)); }

json explain_document(const std::vector<AuditRecord>& records) {
  const TrailView view = view_of(records);
  const auto candidates = parse_candidates(view.candidates, view.task.schema);
  ConsensusReport report;
  try {
    report = compute_consensus(candidates, view.task.schema, view.task.policies);
  } catch (const NoComparableContent&) {
  }
  report.run_id = view.task.run_id;

  json cands = json::array();
  for (const auto& c : candidates) {
    json entry = {{"model_id", c.model_id}, {"status", c.status}, {"content_hash", c.content_hash}};
    if (!c.error_detail.empty()) entry["error_detail"] = c.error_detail;
    cands.push_back(std::move(entry));
  }
  json doc = {{"run_id", view.task.run_id},
              {"workflow_id", view.task.workflow_id},
              {"kind", view.task.schema.kind},
              {"candidates", cands},
              {"consensus", report},
              {"decision", view.decision_json}};
  if (view.reasoner != nullptr) {
    doc["reasoner"] = {{"model_id", view.reasoner->body.value("model_id", "")},
                       {"failure", view.reasoner->body.value("failure", "")},
                       {"response", view.reasoner->body.at("response")}};
  }
  return doc;
}

std::string explain_report(const std::vector<AuditRecord>& records) {
  const TrailView view = view_of(records);
  const auto candidates = parse_candidates(view.candidates, view.task.schema);
  ConsensusReport report;
  try {
    report = compute_consensus(candidates, view.task.schema, view.task.policies);
  } catch (const NoComparableContent&) {
  }
  const auto& decision = view.decision;
  std::ostringstream out;
  out << "run " << view.task.run_id << " (workflow " << view.task.workflow_id << ", "
      << to_string(view.task.schema.kind) << ")\n";
  out << "consolidation: " << to_string(decision.consolidation_mode);
  if (view.reasoner != nullptr && !view.reasoner->body.value("failure", "").empty()) {
    out << " (reasoner failed: " << view.reasoner->body.value("failure", "") << ")";
  }
  out << "\n\ncandidates:\n";
  for (const auto& c : candidates) {
    out << "  " << c.model_id << "  " << to_string(c.status) << "  sha256:" << c.content_hash.substr(0, 12);
    if (!c.error_detail.empty()) out << "  (" << c.error_detail << ")";
    out << "\n";
  }
  char ratio[32];
  std::snprintf(ratio, sizeof ratio, "%.3f", report.agreement_ratio);
  out << "agreement ratio: " << ratio << "\n";

  auto tally_text = [](const Tally& tally) {
    std::vector<std::string> parts;
    for (const auto& [value, ids] : tally) parts.push_back(value + "=[" + join(ids, ",") + "]");
    return join(parts, "  ");
  };
  auto conflicts_on = [&](const std::string& target) {
    for (const auto& c : report.conflicts) {
      if (c.target != target) continue;
      std::vector<std::string> parts;
      for (const auto& [id, value] : c.positions) parts.push_back(id + "=" + value);
      out << "  conflict (" << json(c.kind).get<std::string>() << "): " << join(parts, ", ") << "\n";
    }
    for (const auto& f : report.uncertainty_flags) {
      if (f.target == target) out << "  uncertainty: " << f.reason << "\n";
    }
  };
  auto final_line = [&](const DecisionEntry& e) {
    out << "  final: " << e.value << "  confidence " << to_string(e.confidence) << "  provenance "
        << or_dash(e.provenance) << "  flags " << or_dash(e.flags) << "\n";
    if (e.rationale) out << "  rationale: " << *e.rationale << "\n";
  };
  auto discards_for = [&](const std::string& field) {
    for (const auto& d : decision.discarded) {
      if (d.field == field) {
        out << "  discarded: " << d.value << "  [" << or_dash(d.models) << "]  " << to_string(d.reason) << "\n";
      }
    }
  };
  auto entry_for = [&](const std::string& field) -> const DecisionEntry* {
    for (const auto& e : decision.entries) {
      if (e.field == field) return &e;
    }
    return nullptr;
  };
  auto categorical_field = [&](const std::string& field, const Tally& tally,
                               const std::function<std::optional<std::string>(const StructuredPayload&)>& value_of,
                               const std::string& extra_target = {}) {
    out << "\nfield " << field << "\n";
    std::vector<std::string> positions;
    for (const auto& id : report.ok_models) {
      auto v = value_of(report.positions.at(id));
      positions.push_back(id + "=" + v.value_or(std::string(kOmittedPosition)));
    }
    out << "  positions: " << join(positions, "  ") << "\n";
    out << "  tally: " << tally_text(tally) << "\n";
    conflicts_on(field);
    if (!extra_target.empty()) conflicts_on(extra_target);
    if (const auto* e = entry_for(field)) final_line(*e);
    discards_for(field);
  };

  switch (view.task.schema.kind) {
    case SchemaKind::single_label:
      if (!report.label_tally.empty()) {
        categorical_field("label", report.label_tally,
                          [](const StructuredPayload& p) -> std::optional<std::string> { return p.label; });
      }
      break;
    case SchemaKind::labeled_items:
      for (const auto& item : view.task.schema.item_universe) {
        auto status = report.item_status_tally.find(item);
        if (status == report.item_status_tally.end()) continue;
        categorical_field(
            item + ".status", status->second,
            [&](const StructuredPayload& p) -> std::optional<std::string> {
              auto it = p.items.find(item);
              if (it == p.items.end()) return std::nullopt;
              return it->second.status;
            },
            item);
        if (auto sev = report.item_severity_tally.find(item); sev != report.item_severity_tally.end()) {
          categorical_field(item + ".severity", sev->second,
                            [&](const StructuredPayload& p) -> std::optional<std::string> {
                              auto it = p.items.find(item);
                              if (it == p.items.end()) return std::nullopt;
                              return it->second.severity;
                            });
        }
      }
      break;
    case SchemaKind::free_text:
    case SchemaKind::clinical_report:
      for (const auto& e : decision.entries) {
        out << "\nclaim " << e.field;
        if (!e.section.empty()) out << " [" << e.section << "]";
        out << "\n  text: " << e.value << "\n";
        out << "  confidence " << to_string(e.confidence) << "  provenance " << or_dash(e.provenance) << "  flags "
            << or_dash(e.flags) << "\n";
        for (const auto& id : e.provenance) {
          if (auto draft = closest_claim(report, id, e.section, e.value)) {
            out << "  draft " << id << ": \"" << excerpt(*draft) << "\"\n";
          }
        }
      }
      if (!decision.discarded.empty()) out << "\ndiscarded claims\n";
      for (const auto& d : decision.discarded) {
        out << "  " << d.field;
        if (!d.section.empty()) out << " [" << d.section << "]";
        out << "  " << to_string(d.reason) << "  [" << or_dash(d.models) << "]: " << excerpt(d.value) << "\n";
      }
      break;
  }
  if (decision.reasoner_rationale) out << "\nreasoner rationale: " << *decision.reasoner_rationale << "\n";
  return out.str();
}

std::string explain_report(const std::filesystem::path& trail_file) { return explain_report(read_trail(trail_file)); }

}  // namespace concord
