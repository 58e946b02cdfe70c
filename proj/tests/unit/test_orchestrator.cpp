#include <doctest.h>

#include <chrono>
#include <thread>

#include "concord/audit.hpp"
#include "concord/error.hpp"
#include "concord/orchestrator.hpp"
#include "concord/prompt.hpp"
#include "fixtures.hpp"

using namespace concord;
using namespace concord::testing;

namespace {

class SleepyBackend : public Backend {
 public:
  explicit SleepyBackend(std::int64_t ms) : ms_(ms) {}
  InvokeResult invoke(const CanonicalPrompt&, const InvokeOptions&) override {
    std::this_thread::sleep_for(std::chrono::milliseconds(ms_));
    return {"label: A", ms_};
  }

 private:
  std::int64_t ms_;
};

RunOptions in(const TempDir& dir) {
  RunOptions o;
  o.out_dir = dir.path();
  return o;
}

std::vector<RecordKind> kinds(const std::vector<AuditRecord>& records) {
  std::vector<RecordKind> out;
  for (const auto& r : records) out.push_back(r.kind);
  return out;
}

std::size_t count_kind(const std::vector<AuditRecord>& records, RecordKind kind) {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [&](const AuditRecord& r) { return r.kind == kind; }));
}

}  // namespace

TEST_CASE("unanimous members under full quorum") {
  TempDir dir;
  const auto task = label_task(model_ids(3), {"A", "B"}, 3);
  auto setup = scripted(task, {{"m1", reply("label: A")}, {"m2", reply("label: A")}, {"m3", reply("label: A")}});
  RunOptions options = in(dir);
  options.deterministic_only = true;
  const auto result = execute_run(task, setup.registry, options);
  CHECK(result.decision.payload.label == "A");
  REQUIRE(result.decision.entries.size() == 1);
  CHECK(result.decision.entries[0].confidence == Confidence::high);
  CHECK(result.decision.entries[0].provenance.size() == 3);
  CHECK(std::filesystem::exists(result.decision_file));
  CHECK(read_file(result.decision_file) == decision_document(result.decision));
  CHECK(setup.backends["judge"]->call_count() == 0);
}

TEST_CASE("a timeout under quorum 3 fails the run after recording every candidate") {
  TempDir dir;
  const auto task = label_task(model_ids(3), {"A"}, 3);
  auto setup = scripted(task, {{"m1", reply("label: A")}, {"m2", reply("label: A")}, {"m3", failing(ScriptedFailure::timeout)}});
  try {
    execute_run(task, setup.registry, in(dir));
    FAIL("expected QuorumNotMet");
  } catch (const QuorumNotMet& e) {
    CHECK(e.got() == 2);
    CHECK(e.needed() == 3);
  }
  const auto records = read_trail(trail_path(dir.path(), task.run_id));
  const auto candidates = candidates_from_trail(records);
  REQUIRE(candidates.size() == 3);
  CHECK(candidates[2].status == CandidateStatus::timeout);
  CHECK(records.back().kind == RecordKind::run_failed);
  CHECK(records.back().body.at("stage") == "fan_out");
  CHECK(verify_chain(trail_path(dir.path(), task.run_id)).complete);
  CHECK_FALSE(std::filesystem::exists(decision_path(dir.path(), task.run_id)));
}

TEST_CASE("a timeout under quorum 2 proceeds with two candidates") {
  TempDir dir;
  const auto task = label_task(model_ids(3), {"A"}, 2);
  auto setup = scripted(task, {{"m1", reply("label: A")}, {"m2", reply("label: A")}, {"m3", reply("label: A", 999999)}});
  RunOptions options = in(dir);
  options.deterministic_only = true;
  const auto result = execute_run(task, setup.registry, options);
  CHECK(result.decision.entries[0].provenance == std::vector<std::string>{"m1", "m2"});
  CHECK(result.candidates[2].status == CandidateStatus::timeout);
  CHECK(result.candidates[2].raw_text.empty());
}

TEST_CASE("five members, two failures, quorum 3") {
  TempDir dir;
  const auto task = label_task(model_ids(5), {"A", "B"}, 3);
  auto setup = scripted(task, {{"m1", reply("label: A")},
                               {"m2", failing(ScriptedFailure::upstream)},
                               {"m3", reply("label: B")},
                               {"m4", failing(ScriptedFailure::auth)},
                               {"m5", reply("label: A")}});
  RunOptions options = in(dir);
  options.deterministic_only = true;
  const auto result = execute_run(task, setup.registry, options);
  const auto records = read_trail(result.trail_file);
  CHECK(count_kind(records, RecordKind::candidate_received) == 5);
  CHECK(result.decision.ok_candidates == 3);
  CHECK(result.decision.payload.label == "A");
}

TEST_CASE("unparseable responses are preserved as parse_failed") {
  TempDir dir;
  const auto task = label_task(model_ids(3), {"A"}, 3);
  const std::string noise = "Honestly I cannot tell \xe2\x80\x94 maybe?\n";
  auto setup = scripted(task, {{"m1", reply("label: A")}, {"m2", reply("label: A")}, {"m3", reply(noise)}});
  RunOptions options = in(dir);
  options.deterministic_only = true;
  const auto result = execute_run(task, setup.registry, options);
  CHECK(result.candidates[2].status == CandidateStatus::parse_failed);
  CHECK(result.candidates[2].raw_text == noise);
  CHECK(result.candidates[2].content_hash == hash_content(noise));
}

TEST_CASE("fan-out output is sorted and every request carries the same prompt") {
  const auto task = label_task({"zeta", "alpha", "mid"}, {"A", "B"}, 2);
  auto setup = scripted(task, {{"zeta", reply("label: B")}, {"alpha", reply("label: A")}, {"mid", reply("label: A")}});
  const auto prompt = render_canonical_prompt(task.prompt_template, task.context);
  std::vector<FanOutMember> members;
  for (const auto& m : task.consortium) members.push_back({m, setup.backends[m.model_id], InvokeOptions{}});
  const auto out = fan_out(task.run_id, prompt, members);
  REQUIRE(out.size() == 3);
  CHECK(out[0].model_id == "alpha");
  CHECK(out[2].model_id == "zeta");
  std::string wire;
  for (const auto& m : task.consortium) {
    const auto reqs = setup.backends[m.model_id]->requests();
    REQUIRE(reqs.size() == 1);
    CHECK(reqs[0].prompt_hash == prompt.prompt_hash);
    if (wire.empty()) wire = reqs[0].wire_body;
    CHECK(reqs[0].wire_body == wire);
  }
}

TEST_CASE("the global deadline turns stragglers into timeouts") {
  const auto task = label_task(model_ids(2), {"A"}, 2);
  const auto prompt = render_canonical_prompt(task.prompt_template, task.context);
  std::vector<FanOutMember> members{{task.consortium[0], std::make_shared<SleepyBackend>(0), InvokeOptions{}},
                                    {task.consortium[1], std::make_shared<SleepyBackend>(3000), InvokeOptions{}}};
  const auto started = std::chrono::steady_clock::now();
  const auto out = fan_out(task.run_id, prompt, members, 200);
  const auto elapsed = std::chrono::steady_clock::now() - started;
  CHECK(elapsed < std::chrono::milliseconds(2000));
  CHECK(out[0].status == CandidateStatus::ok);
  CHECK(out[1].status == CandidateStatus::timeout);
}

TEST_CASE("trail stages appear in pipeline order") {
  TempDir dir;
  const auto task = label_task(model_ids(3), {"A", "B"}, 2);
  auto setup = scripted(task, {{"m1", reply("label: A")}, {"m2", reply("label: A")}, {"m3", reply("label: B")}},
                        reply("label | A | medium | cites: m1, m2\nRATIONALE: majority"));
  const auto result = execute_run(task, setup.registry, in(dir));
  CHECK(result.decision.consolidation_mode == ConsolidationMode::reasoner);
  const std::vector<RecordKind> expected{RecordKind::run_started,        RecordKind::prompt_rendered,
                                         RecordKind::candidate_received, RecordKind::candidate_received,
                                         RecordKind::candidate_received, RecordKind::consensus_computed,
                                         RecordKind::reasoner_invoked,   RecordKind::policy_applied,
                                         RecordKind::decision_issued};
  CHECK(kinds(read_trail(result.trail_file)) == expected);
}

TEST_CASE("scripted runs are reproducible") {
  TempDir a, b;
  const auto task = label_task(model_ids(3), {"A", "B"}, 2);
  const std::map<std::string, ScriptedResponse> script{
      {"m1", reply("label: A", 30)}, {"m2", reply("label: B", 10)}, {"m3", reply("label: A", 20)}};
  auto s1 = scripted(task, script, reply("label | A | medium | cites: m1, m3\nRATIONALE: majority"));
  auto s2 = scripted(task, script, reply("label | A | medium | cites: m1, m3\nRATIONALE: majority"));
  const auto r1 = execute_run(task, s1.registry, in(a));
  const auto r2 = execute_run(task, s2.registry, in(b));
  CHECK(read_file(r1.decision_file) == read_file(r2.decision_file));
  const auto t1 = read_trail(r1.trail_file);
  const auto t2 = read_trail(r2.trail_file);
  REQUIRE(t1.size() == t2.size());
  for (std::size_t i = 0; i < t1.size(); ++i) CHECK(t1[i].record_hash == t2[i].record_hash);
}

TEST_CASE("a run refuses to overwrite an existing trail") {
  TempDir dir;
  const auto task = label_task(model_ids(2), {"A"}, 2);
  auto setup = scripted(task, {{"m1", reply("label: A")}, {"m2", reply("label: A")}});
  RunOptions options = in(dir);
  options.deterministic_only = true;
  execute_run(task, setup.registry, options);
  const auto before = read_file(trail_path(dir.path(), task.run_id));
  CHECK_THROWS_AS(execute_run(task, setup.registry, options), ConfigError);
  CHECK(read_file(trail_path(dir.path(), task.run_id)) == before);
}

TEST_CASE("reasoner failure without fallback is recorded, then raised") {
  TempDir dir;
  auto task = label_task(model_ids(2), {"A"}, 2);
  task.policies.allow_deterministic_fallback = false;
  auto setup = scripted(task, {{"m1", reply("label: A")}, {"m2", reply("label: A")}}, failing(ScriptedFailure::transport));
  CHECK_THROWS_AS(execute_run(task, setup.registry, in(dir)), ReasonerFailed);
  const auto records = read_trail(trail_path(dir.path(), task.run_id));
  CHECK(count_kind(records, RecordKind::reasoner_invoked) == 1);
  CHECK(records.back().kind == RecordKind::run_failed);
}

TEST_CASE("run state only moves forward") {
  RunState state("r");
  CHECK(state.phase() == RunPhase::rendering);
  state.advance(RunPhase::fan_out);
  state.advance(RunPhase::consensus);
  CHECK_THROWS(state.advance(RunPhase::fan_out));
  state.fail();
  CHECK(state.phase() == RunPhase::failed);
}
