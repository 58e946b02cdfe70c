#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "concord/backend.hpp"
#include "concord/consensus.hpp"
#include "concord/governance.hpp"
#include "concord/types.hpp"

namespace concord {

enum class RunPhase { rendering, fan_out, consensus, governance, complete, failed };

std::string_view to_string(RunPhase phase);

// Owned by the run coordinator only. Phases move strictly forward (failed is
// reachable from any phase); candidates can only be appended.
class RunState {
 public:
  explicit RunState(std::string run_id);

  void advance(RunPhase next);
  void fail();
  void append(CandidateOutput candidate);

  const std::string& run_id() const { return run_id_; }
  RunPhase phase() const { return phase_; }
  const std::vector<CandidateOutput>& candidates() const { return candidates_; }
  const std::string& started_at() const { return started_at_; }
  const std::string& finished_at() const { return finished_at_; }

 private:
  std::string run_id_;
  RunPhase phase_ = RunPhase::rendering;
  std::vector<CandidateOutput> candidates_;
  std::string started_at_;
  std::string finished_at_;
};

struct FanOutMember {
  ModelDescriptor model;
  std::shared_ptr<Backend> backend;
  InvokeOptions options;
};

inline constexpr std::int64_t kDefaultFanOutTimeoutMs = 120000;

// Invokes every member concurrently with the identical prompt. Results are
// collected through a single-writer channel until all members settle or the
// global deadline passes; members still pending then become timeout
// candidates. Every member yields exactly one candidate; the list is sorted
// by model_id. Candidates are unparsed.
std::vector<CandidateOutput> fan_out(const std::string& run_id, const CanonicalPrompt& prompt,
                                     const std::vector<FanOutMember>& members,
                                     std::int64_t global_timeout_ms = kDefaultFanOutTimeoutMs);

// Members that returned a response, before parsing.
std::size_t responded_count(const std::vector<CandidateOutput>& candidates);

// Schema-directed extraction for every candidate that responded. A response
// that does not fit the grammar becomes parse_failed with raw_text intact.
std::vector<CandidateOutput> parse_candidates(std::vector<CandidateOutput> candidates, const OutputSchema& schema);

struct RunOptions {
  std::filesystem::path out_dir = ".";
  bool deterministic_only = false;
  std::int64_t fan_out_timeout_ms = kDefaultFanOutTimeoutMs;
};

struct RunResult {
  ConsolidatedDecision decision;
  ConsensusReport report;
  std::vector<CandidateOutput> candidates;
  std::filesystem::path trail_file;
  std::filesystem::path decision_file;
  // Non-empty when the reasoner failed and the deterministic fallback was used.
  std::string reasoner_failure;
};

std::filesystem::path decision_path(const std::filesystem::path& dir, std::string_view run_id);

// Full pipeline: render, fan out, quorum gate, consensus, governance. Every
// stage is recorded in the trail before the next one starts; the decision is
// written to {run_id}.decision. Failures after the trail is opened are
// recorded as run_failed before the error propagates.
// Throws ConfigError (including an existing trail for run_id), QuorumNotMet,
// NoComparableContent, ReasonerFailed / ReasonerOutputInvalid when fallback
// is not allowed.
RunResult execute_run(const TaskSpec& task, const BackendRegistry& registry, const RunOptions& options = {});

}  // namespace concord
