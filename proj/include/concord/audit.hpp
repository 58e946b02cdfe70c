#pragma once

// Hash-chained, append-only run trail. One file per run,
// {run_id}.audit.jsonl, one canonical JSON record per line:
//
//   {"body":{...},"body_hash":H(body),"kind":"...","meta":{...},
//    "meta_hash":H(meta),"prev_hash":...,"record_hash":...,"run_id":"...",
//    "seq":N}
//
// body_hash   = sha256(canonical body)
// record_hash = sha256(seq "\n" run_id "\n" kind "\n" body_hash "\n" prev_hash "\n")
// prev_hash   = record_hash of the previous record, 64 zeros for seq 0.
// meta holds wall-clock fields (wall_time, latency_ms, received_at). It is
// kept out of the chain so that repeated runs chain identically; meta_hash
// only makes edits to it detectable.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "concord/backend.hpp"
#include "concord/consensus.hpp"
#include "concord/governance.hpp"
#include "concord/serialize.hpp"
#include "concord/types.hpp"

namespace concord {

enum class RecordKind {
  run_started,
  prompt_rendered,
  candidate_received,
  consensus_computed,
  reasoner_invoked,
  decision_issued,
  policy_applied,
  run_failed
};

NLOHMANN_JSON_SERIALIZE_ENUM(RecordKind, {{RecordKind::run_started, "run_started"},
                                          {RecordKind::prompt_rendered, "prompt_rendered"},
                                          {RecordKind::candidate_received, "candidate_received"},
                                          {RecordKind::consensus_computed, "consensus_computed"},
                                          {RecordKind::reasoner_invoked, "reasoner_invoked"},
                                          {RecordKind::decision_issued, "decision_issued"},
                                          {RecordKind::policy_applied, "policy_applied"},
                                          {RecordKind::run_failed, "run_failed"}})

std::string_view to_string(RecordKind kind);

struct AuditRecord {
  std::uint64_t seq = 0;
  std::string run_id;
  RecordKind kind = RecordKind::run_started;
  json body;
  std::string body_hash;
  std::string prev_hash;
  std::string record_hash;
  json meta = json::object();
  std::string meta_hash;
};

std::string compute_record_hash(std::uint64_t seq, std::string_view run_id, RecordKind kind,
                                std::string_view body_hash, std::string_view prev_hash);

// The line stored for a record, without the newline.
std::string record_line(const AuditRecord& record);

std::filesystem::path trail_path(const std::filesystem::path& dir, std::string_view run_id);

// Single writer for one run's trail. Each append is written, flushed and
// fsync'ed before it returns.
class AuditTrail {
 public:
  // Throws StorageError if the file already exists or cannot be created.
  AuditTrail(const std::filesystem::path& dir, std::string run_id);
  ~AuditTrail();
  AuditTrail(const AuditTrail&) = delete;
  AuditTrail& operator=(const AuditTrail&) = delete;

  const AuditRecord& append(RecordKind kind, json body, json meta = json::object());
  void close();
  bool is_open() const { return file_ != nullptr; }

  const std::filesystem::path& path() const { return path_; }
  const std::vector<AuditRecord>& records() const { return records_; }

 private:
  std::filesystem::path path_;
  std::string run_id_;
  std::FILE* file_ = nullptr;
  std::vector<AuditRecord> records_;
};

struct VerifyResult {
  bool ok = true;
  // Sequence number of the first broken record.
  std::optional<std::uint64_t> broken_seq;
  std::string reason;
  std::size_t record_count = 0;
  // True when the trail ends in decision_issued or run_failed.
  bool complete = false;
};

// Recomputes every hash and link. A record that is not self-consistent
// (unparsable, non-canonical bytes, a body, meta or record hash mismatch) is
// reported at its line position; a self-consistent record with the wrong
// seq or prev_hash is reported at the seq it claims, so a deleted record i
// surfaces as i + 1.
VerifyResult verify_chain(const std::filesystem::path& trail_file);

// Parses every line; no hash checking. Throws MalformedRecord(line index)
// for a line that is not a record, StorageError when unreadable.
std::vector<AuditRecord> read_trail(const std::filesystem::path& trail_file);

// Reconstructs the task from the run_started record. Images carry their
// hashes but no media_ref.
TaskSpec task_from_trail(const std::vector<AuditRecord>& records);

// Candidates from candidate_received records (timing restored from meta).
std::vector<CandidateOutput> candidates_from_trail(const std::vector<AuditRecord>& records);

// Registry of scripted backends answering exactly what the trail recorded,
// so the run can be executed again offline.
BackendRegistry scripted_registry_from_trail(const std::vector<AuditRecord>& records);

// Recomputes consensus and governance from the recorded candidates and
// policies; a reasoner-mode decision is re-derived from the recorded
// reasoner response. Throws IncompleteTrail when run_started, a candidate,
// or decision_issued is missing, ReplayDivergence when the result differs
// from the recorded decision in any byte.
ConsolidatedDecision replay(const std::filesystem::path& trail_file);
ConsolidatedDecision replay_records(const std::vector<AuditRecord>& records);

// Per-field explanation: model positions, tallies, conflicts, final value,
// confidence, discard reasons, rationale. Throws IncompleteTrail.
std::string explain_report(const std::filesystem::path& trail_file);
std::string explain_report(const std::vector<AuditRecord>& records);
// Same content as a canonical document.
json explain_document(const std::vector<AuditRecord>& records);

}  // namespace concord
