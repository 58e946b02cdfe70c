#include <doctest.h>

#include "concord/audit.hpp"
#include "concord/error.hpp"
#include "concord/orchestrator.hpp"
#include "concord/text.hpp"
#include "fixtures.hpp"

using namespace concord;
using namespace concord::testing;

namespace {

std::vector<std::string> lines_of(const std::filesystem::path& file) {
  std::vector<std::string> out;
  const std::string bytes = read_file(file);
  for (auto line : text::split_lines(bytes)) {
    if (!line.empty()) out.emplace_back(line);
  }
  return out;
}

void write_lines(const std::filesystem::path& file, const std::vector<std::string>& lines) {
  std::string bytes;
  for (const auto& l : lines) bytes += l + "\n";
  write_file(file, bytes);
}

// Re-serializes records with freshly computed hashes, so the chain verifies.
std::vector<std::string> rechain(std::vector<AuditRecord> records) {
  std::vector<std::string> out;
  std::string prev = zero_hash();
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    r.seq = i;
    r.body_hash = hash_content(canonical_dump(r.body));
    r.meta_hash = hash_content(canonical_dump(r.meta));
    r.prev_hash = prev;
    r.record_hash = compute_record_hash(r.seq, r.run_id, r.kind, r.body_hash, r.prev_hash);
    prev = r.record_hash;
    out.push_back(record_line(r));
  }
  return out;
}

struct SplitRun {
  TempDir dir;
  RunResult result;

  explicit SplitRun(bool deterministic_only = true, std::string mode = "label") {
    auto task = label_task(model_ids(3), {"A", "B"}, 2);
    if (mode == "free_text") {
      task.schema = OutputSchema{};
      task.schema.kind = SchemaKind::free_text;
      auto setup = scripted(task, {{"m1", reply("The signal hops across channels. It bursts.")},
                                   {"m2", reply("The signal hops across channels quickly.")},
                                   {"m3", reply("Aliens are calling.")}});
      RunOptions o;
      o.out_dir = dir.path();
      o.deterministic_only = deterministic_only;
      result = execute_run(task, setup.registry, o);
      return;
    }
    auto setup = scripted(task, {{"m1", reply("label: A")}, {"m2", reply("label: A")}, {"m3", reply("label: B")}},
                          reply("label | A | medium | cites: m1, m2\nRATIONALE: majority"));
    RunOptions o;
    o.out_dir = dir.path();
    o.deterministic_only = deterministic_only;
    result = execute_run(task, setup.registry, o);
  }
};

}  // namespace

TEST_CASE("append links records and close seals the trail") {
  TempDir dir;
  AuditTrail trail(dir.path(), "r1");
  const auto first = trail.append(RecordKind::run_started, {{"x", 1}});
  CHECK(first.seq == 0);
  CHECK(first.prev_hash == zero_hash());
  CHECK(first.body_hash == hash_content(R"({"x":1})"));
  const auto second = trail.append(RecordKind::prompt_rendered, {{"y", 2}}, {{"wall_time", "now"}});
  CHECK(second.seq == 1);
  CHECK(second.prev_hash == first.record_hash);
  CHECK(second.record_hash == compute_record_hash(1, "r1", RecordKind::prompt_rendered, second.body_hash, first.record_hash));
  trail.close();
  CHECK_THROWS_AS(trail.append(RecordKind::run_failed, json::object()), StorageError);
  CHECK_THROWS_AS(AuditTrail(dir.path(), "r1"), StorageError);

  const auto v = verify_chain(trail.path());
  CHECK(v.ok);
  CHECK(v.record_count == 2);
  CHECK_FALSE(v.complete);
}

TEST_CASE("meta is outside the hashes") {
  TempDir dir;
  AuditTrail a(dir.path(), "r1");
  AuditTrail b(dir.path(), "r2");
  const auto ra = a.append(RecordKind::run_started, {{"x", 1}}, {{"wall_time", "t1"}});
  const auto rb = b.append(RecordKind::run_started, {{"x", 1}}, {{"wall_time", "t2"}});
  CHECK(ra.body_hash == rb.body_hash);
}

TEST_CASE("tampering and deletion are located") {
  SplitRun run;
  const auto file = run.result.trail_file;
  CHECK(verify_chain(file).ok);
  CHECK(verify_chain(file).complete);
  const auto original = lines_of(file);
  REQUIRE(original.size() >= 6);

  SUBCASE("flip one byte in record 3's body") {
    auto lines = original;
    const auto at = lines[3].find("\"body\":") + 12;
    lines[3][at] = static_cast<char>(lines[3][at] ^ 0x01);
    write_lines(file, lines);
    const auto v = verify_chain(file);
    CHECK_FALSE(v.ok);
    CHECK(v.broken_seq == 3);
  }
  SUBCASE("delete record 2") {
    auto lines = original;
    lines.erase(lines.begin() + 2);
    write_lines(file, lines);
    const auto v = verify_chain(file);
    CHECK_FALSE(v.ok);
    CHECK(v.broken_seq == 3);
  }
  SUBCASE("number respelled without changing its value") {
    auto lines = original;
    const auto at = lines[0].find("1.0");
    REQUIRE(at != std::string::npos);
    lines[0].replace(at, 3, "1e0");
    write_lines(file, lines);
    CHECK(verify_chain(file).broken_seq == 0);
  }
  SUBCASE("edit inside meta") {
    auto lines = original;
    const auto at = lines[2].find("\"wall_time\":\"") + 14;
    lines[2][at] = lines[2][at] == '1' ? '2' : '1';
    write_lines(file, lines);
    CHECK(verify_chain(file).broken_seq == 2);
  }
  SUBCASE("truncated trail is valid but incomplete") {
    auto lines = original;
    lines.pop_back();
    write_lines(file, lines);
    const auto v = verify_chain(file);
    CHECK(v.ok);
    CHECK_FALSE(v.complete);
    CHECK_THROWS_AS(replay(file), IncompleteTrail);
  }
}

TEST_CASE("replay reproduces the recorded decision") {
  SplitRun deterministic(true);
  CHECK(replay(deterministic.result.trail_file) == deterministic.result.decision);
  SplitRun reasoned(false);
  CHECK(reasoned.result.decision.consolidation_mode == ConsolidationMode::reasoner);
  CHECK(replay(reasoned.result.trail_file) == reasoned.result.decision);
}

TEST_CASE("replay detects mutated policies even in a re-chained trail") {
  SplitRun run;
  auto records = read_trail(run.result.trail_file);
  records[0].body["task"]["policies"]["support_threshold"] = 3;
  write_lines(run.result.trail_file, rechain(records));
  CHECK(verify_chain(run.result.trail_file).ok);
  try {
    replay(run.result.trail_file);
    FAIL("expected ReplayDivergence");
  } catch (const ReplayDivergence& e) {
    CHECK(e.diff().find("Uncertain") != std::string::npos);
  }
}

TEST_CASE("replay recomputes a missing consensus record") {
  SplitRun run;
  auto records = read_trail(run.result.trail_file);
  std::erase_if(records, [](const AuditRecord& r) { return r.kind == RecordKind::consensus_computed; });
  CHECK(replay_records(records) == run.result.decision);
}

TEST_CASE("replay is a fixed point") {
  SplitRun run(false);
  const auto records = read_trail(run.result.trail_file);
  TempDir again;
  RunOptions o;
  o.out_dir = again.path();
  auto task = task_from_trail(records);
  const auto rerun = execute_run(task, scripted_registry_from_trail(records), o);
  CHECK(replay(rerun.trail_file) == replay(run.result.trail_file));
  CHECK(read_file(rerun.decision_file) == read_file(run.result.decision_file));
}

TEST_CASE("one candidate record per member") {
  SplitRun run;
  const auto candidates = candidates_from_trail(read_trail(run.result.trail_file));
  CHECK(candidates.size() == 3);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    CHECK(candidates[i].raw_text == run.result.candidates[i].raw_text);
    CHECK(candidates[i].content_hash == hash_content(candidates[i].raw_text));
  }
}

TEST_CASE("malformed lines are reported by position") {
  SplitRun run;
  auto lines = lines_of(run.result.trail_file);
  lines[4] = "{not json";
  write_lines(run.result.trail_file, lines);
  try {
    read_trail(run.result.trail_file);
    FAIL("expected MalformedRecord");
  } catch (const MalformedRecord& e) {
    CHECK(e.seq() == 4);
  }
}

TEST_CASE("explain reports") {
  SUBCASE("split run lists each model's value") {
    SplitRun run;
    const auto report = explain_report(run.result.trail_file);
    CHECK(report.find("conflict (contradiction): m1=A, m2=A, m3=B") != std::string::npos);
    CHECK(report.find("discarded: B  [m3]  insufficient_support") != std::string::npos);
    const auto doc = explain_document(read_trail(run.result.trail_file));
    CHECK(doc.is_object());
  }
  SUBCASE("unanimous run has no conflict lines") {
    TempDir dir;
    const auto task = label_task(model_ids(3), {"A"}, 2);
    auto setup = scripted(task, {{"m1", reply("label: A")}, {"m2", reply("label: A")}, {"m3", reply("label: A")}});
    RunOptions o;
    o.out_dir = dir.path();
    o.deterministic_only = true;
    const auto report = explain_report(execute_run(task, setup.registry, o).trail_file);
    CHECK(report.find("positions: m1=A  m2=A  m3=A") != std::string::npos);
    CHECK(report.find("conflict") == std::string::npos);
  }
  SUBCASE("free text maps claims to draft excerpts") {
    SplitRun run(true, "free_text");
    const auto report = explain_report(run.result.trail_file);
    CHECK(report.find("draft m1: \"The signal hops across channels.\"") != std::string::npos);
    CHECK(report.find("draft m2: \"The signal hops across channels quickly.\"") != std::string::npos);
  }
}
