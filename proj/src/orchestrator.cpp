#include "concord/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>

#include "concord/audit.hpp"
#include "concord/error.hpp"
#include "concord/grammar.hpp"
#include "concord/hash.hpp"
#include "concord/prompt.hpp"

namespace concord {

namespace {

// Multi-producer queue drained by the coordinator alone. Workers only push;
// the coordinator owns every CandidateOutput it pops.
class CandidateChannel {
 public:
  void push(CandidateOutput candidate) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(candidate));
    }
    ready_.notify_one();
  }

  std::optional<CandidateOutput> pop_until(std::chrono::steady_clock::time_point deadline) {
    std::unique_lock lock(mutex_);
    if (!ready_.wait_until(lock, deadline, [&] { return !queue_.empty(); })) return std::nullopt;
    auto candidate = std::move(queue_.front());
    queue_.pop_front();
    return candidate;
  }

 private:
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<CandidateOutput> queue_;
};

CandidateOutput failed_candidate(const std::string& run_id, const std::string& model_id, CandidateStatus status,
                                 std::string detail) {
  CandidateOutput c;
  c.run_id = run_id;
  c.model_id = model_id;
  c.status = status;
  c.error_detail = std::move(detail);
  c.content_hash = hash_content("");
  c.received_at = utc_timestamp();
  return c;
}

CandidateOutput invoke_member(const std::string& run_id, const CanonicalPrompt& prompt, const FanOutMember& member) {
  try {
    auto result = member.backend->invoke(prompt, member.options);
    CandidateOutput c;
    c.run_id = run_id;
    c.model_id = member.model.model_id;
    c.content_hash = hash_content(result.content);
    c.raw_text = std::move(result.content);
    c.latency_ms = result.latency_ms;
    c.received_at = utc_timestamp();
    c.status = CandidateStatus::ok;
    return c;
  } catch (const Timeout& e) {
    return failed_candidate(run_id, member.model.model_id, CandidateStatus::timeout, e.what());
  } catch (const std::exception& e) {
    return failed_candidate(run_id, member.model.model_id, CandidateStatus::backend_error, e.what());
  }
}

json error_body(std::string_view stage, const std::exception& e) {
  return {{"stage", stage}, {"error", e.what()}};
}

void write_file_durably(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw StorageError("write failed for " + path.string());
}

}  // namespace

std::string_view to_string(RunPhase phase) {
  switch (phase) {
    case RunPhase::rendering: return "rendering";
    case RunPhase::fan_out: return "fan_out";
    case RunPhase::consensus: return "consensus";
    case RunPhase::governance: return "governance";
    case RunPhase::complete: return "complete";
    case RunPhase::failed: return "failed";
  }
  return "?";
}

RunState::RunState(std::string run_id) : run_id_(std::move(run_id)), started_at_(utc_timestamp()) {}

void RunState::advance(RunPhase next) {
  if (phase_ == RunPhase::failed || next == RunPhase::failed || static_cast<int>(next) <= static_cast<int>(phase_)) {
    throw std::logic_error("invalid phase transition " + std::string(to_string(phase_)) + " -> " +
                           std::string(to_string(next)));
  }
  phase_ = next;
  if (next == RunPhase::complete) finished_at_ = utc_timestamp();
}

void RunState::fail() {
  if (phase_ == RunPhase::complete || phase_ == RunPhase::failed) return;
  phase_ = RunPhase::failed;
  finished_at_ = utc_timestamp();
}

void RunState::append(CandidateOutput candidate) { candidates_.push_back(std::move(candidate)); }

std::vector<CandidateOutput> fan_out(const std::string& run_id, const CanonicalPrompt& prompt,
                                     const std::vector<FanOutMember>& members, std::int64_t global_timeout_ms) {
  auto channel = std::make_shared<CandidateChannel>();
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(global_timeout_ms);

  // Workers are detached so a hung backend cannot hold the run past the
  // deadline; they keep the channel, prompt and member alive themselves.
  auto shared_prompt = std::make_shared<const CanonicalPrompt>(prompt);
  for (const auto& member : members) {
    std::thread([channel, shared_prompt, member, run_id] {
      channel->push(invoke_member(run_id, *shared_prompt, member));
    }).detach();
  }

  std::map<std::string, CandidateOutput> settled;
  while (settled.size() < members.size()) {
    auto candidate = channel->pop_until(deadline);
    if (!candidate) break;
    settled.emplace(candidate->model_id, std::move(*candidate));
  }
  for (const auto& member : members) {
    if (settled.count(member.model.model_id) == 0) {
      settled.emplace(member.model.model_id,
                      failed_candidate(run_id, member.model.model_id, CandidateStatus::timeout,
                                       "no response within the fan-out deadline of " +
                                           std::to_string(global_timeout_ms) + " ms"));
    }
  }
  std::vector<CandidateOutput> out;
  out.reserve(settled.size());
  for (auto& [id, candidate] : settled) out.push_back(std::move(candidate));
  return out;
}

std::size_t responded_count(const std::vector<CandidateOutput>& candidates) {
  return static_cast<std::size_t>(std::count_if(candidates.begin(), candidates.end(), [](const CandidateOutput& c) {
    return c.status == CandidateStatus::ok || c.status == CandidateStatus::parse_failed;
  }));
}

std::vector<CandidateOutput> parse_candidates(std::vector<CandidateOutput> candidates, const OutputSchema& schema) {
  for (auto& c : candidates) {
    if (c.status != CandidateStatus::ok && c.status != CandidateStatus::parse_failed) continue;
    c.parsed = parse_structured(c.raw_text, schema);
    c.status = c.parsed ? CandidateStatus::ok : CandidateStatus::parse_failed;
    if (c.status == CandidateStatus::parse_failed) {
      c.error_detail = "response does not fit the " + std::string(to_string(schema.kind)) + " grammar";
    } else {
      c.error_detail.clear();
    }
  }
  return candidates;
}

std::filesystem::path decision_path(const std::filesystem::path& dir, std::string_view run_id) {
  return dir / (std::string(run_id) + ".decision");
}

RunResult execute_run(const TaskSpec& task, const BackendRegistry& registry, const RunOptions& options) {
  task.validate();
  if (std::filesystem::exists(trail_path(options.out_dir, task.run_id))) {
    throw ConfigError("out", "directory already holds the trail of run " + task.run_id);
  }
  std::vector<FanOutMember> members;
  for (const auto& model : task.consortium) {
    auto resolved = registry.resolve(model);
    resolved.config.validate();
    InvokeOptions invoke;
    invoke.model_name = resolved.config.model_name;
    invoke.timeout_ms = resolved.config.timeout_ms;
    invoke.temperature = resolved.config.temperature;
    members.push_back({model, std::move(resolved.backend), std::move(invoke)});
  }
  std::optional<BackendRegistry::Resolved> reasoner;
  if (!options.deterministic_only) {
    reasoner = registry.resolve(task.reasoner);
    reasoner->config.validate();
  }

  std::filesystem::create_directories(options.out_dir);
  AuditTrail trail(options.out_dir, task.run_id);
  RunState state(task.run_id);
  RunResult result;
  result.trail_file = trail.path();
  const auto now = [] { return json{{"wall_time", utc_timestamp()}}; };

  trail.append(RecordKind::run_started,
               {{"task", task},
                {"hash_algorithm", kHashAlgorithm},
                {"context_hash", task.context.content_hash()},
                {"deterministic_only", options.deterministic_only}},
               {{"wall_time", state.started_at()}});

  const char* stage = "rendering";
  try {
    const CanonicalPrompt prompt = render_canonical_prompt(task.prompt_template, task.context);
    trail.append(RecordKind::prompt_rendered, json(prompt), now());

    stage = "fan_out";
    state.advance(RunPhase::fan_out);
    for (auto& c : fan_out(task.run_id, prompt, members, options.fan_out_timeout_ms)) state.append(std::move(c));
    const auto parsed = parse_candidates(state.candidates(), task.schema);
    for (const auto& c : parsed) {
      json meta = candidate_timing(c);
      meta["wall_time"] = utc_timestamp();
      trail.append(RecordKind::candidate_received, json(c), std::move(meta));
    }
    result.candidates = parsed;
    const std::size_t responded = responded_count(parsed);
    if (responded < static_cast<std::size_t>(task.quorum)) {
      throw QuorumNotMet(responded, static_cast<std::size_t>(task.quorum));
    }

    stage = "consensus";
    state.advance(RunPhase::consensus);
    result.report = compute_consensus(parsed, task.schema, task.policies);
    result.report.run_id = task.run_id;
    trail.append(RecordKind::consensus_computed, json(result.report), now());

    stage = "governance";
    state.advance(RunPhase::governance);
    if (reasoner) {
      InvokeOptions invoke;
      invoke.model_name = reasoner->config.model_name;
      invoke.timeout_ms = reasoner->config.timeout_ms;
      invoke.temperature = reasoner->config.temperature;
      invoke.system_text = std::string(kReasonerSystemText);
      ReasonerOutcome outcome;
      try {
        outcome = consolidate_with_reasoner(task, prompt, parsed, result.report, *reasoner->backend, invoke);
      } catch (const Error& e) {
        const auto reasoner_prompt = build_reasoner_prompt(task.reasoner_template, prompt, parsed, result.report,
                                                           task.policies, task.context, task.schema);
        trail.append(RecordKind::reasoner_invoked,
                     {{"model_id", task.reasoner.model_id},
                      {"prompt", reasoner_prompt},
                      {"response", nullptr},
                      {"failure", e.what()},
                      {"fallback", false}},
                     now());
        throw;
      }
      json meta = now();
      meta["latency_ms"] = outcome.latency_ms;
      trail.append(RecordKind::reasoner_invoked,
                   {{"model_id", task.reasoner.model_id},
                    {"prompt", outcome.prompt},
                    {"response", outcome.response ? json(*outcome.response) : json(nullptr)},
                    {"failure", outcome.failure},
                    {"fallback", !outcome.failure.empty()}},
                   std::move(meta));
      result.decision = std::move(outcome.decision);
      result.reasoner_failure = outcome.failure;
    } else {
      result.decision = consolidate_deterministic(result.report, task.schema, task.policies, task.context);
    }
    result.decision.run_id = task.run_id;

    json banned = json::array();
    for (const auto& d : result.decision.discarded) {
      if (d.reason == DiscardReason::banned) banned.push_back(d);
    }
    trail.append(RecordKind::policy_applied,
                 {{"policies", task.policies},
                  {"consolidation_mode", result.decision.consolidation_mode},
                  {"banned", std::move(banned)}},
                 now());

    trail.append(RecordKind::decision_issued, json(result.decision), now());
    state.advance(RunPhase::complete);
  } catch (const std::exception& e) {
    state.fail();
    if (trail.is_open()) trail.append(RecordKind::run_failed, error_body(stage, e), now());
    throw;
  }
  trail.close();

  result.decision_file = decision_path(options.out_dir, task.run_id);
  write_file_durably(result.decision_file, decision_document(result.decision));
  return result;
}

}  // namespace concord
