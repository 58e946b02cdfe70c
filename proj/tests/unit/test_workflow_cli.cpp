#include <doctest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <set>

#include "concord/audit.hpp"
#include "concord/error.hpp"
#include "concord/orchestrator.hpp"
#include "concord/summary.hpp"
#include "concord/workflow.hpp"
#include "fixtures.hpp"

using namespace concord;
using namespace concord::testing;

namespace {

const std::vector<std::string> kPacks{"podcast", "hreflex", "dental", "psychiatric", "rf"};
const std::vector<std::string> kScenarios{"unanimous", "split", "degenerate"};

std::filesystem::path pack_dir(const std::string& pack) { return source_dir() / "workflows" / pack; }

struct Cli {
  int code = -1;
  std::string out;
};

Cli cli(const std::string& args) {
  const std::string cmd = std::string(CONCORD_CLI_PATH) + " " + args + " 2>/dev/null";
  Cli r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string run_args(const std::string& pack, const std::string& scenario, const TempDir& out) {
  return "run --workflow " + (pack_dir(pack) / "definition.yaml").string() + " --fixture " +
         (pack_dir(pack) / "fixtures" / (scenario + ".yaml")).string() + " --out " + out.path().string();
}

std::string config_error_path(const std::string& yaml) {
  TempDir dir;
  write_file(dir / "wf.yaml", yaml);
  try {
    load_workflow(dir / "wf.yaml");
  } catch (const ConfigError& e) {
    return e.field_path();
  }
  return "";
}

const std::string kMinimal = R"(workflow_id: t
quorum: 2
schema: {kind: single_label, label_universe: [A, B]}
backends: [{backend_ref: pool, endpoint_url: "http://127.0.0.1:1/v1"}]
consortium:
  - {model_id: m1, backend_ref: pool}
  - {model_id: m2, backend_ref: pool}
reasoner: {model_id: judge, backend_ref: pool}
prompt_template: "Classify."
reasoner_template: "{{candidates}}"
)";

}  // namespace

TEST_CASE("shipped packs load with their schemas") {
  const auto dental = load_workflow(pack_dir("dental") / "definition.yaml");
  CHECK(dental.task.schema.kind == SchemaKind::labeled_items);
  CHECK(dental.task.schema.item_universe.size() == 12);
  CHECK(dental.task.schema.severity_scale == std::vector<std::string>{"mild", "moderate", "severe"});
  const auto rf = load_workflow(pack_dir("rf") / "definition.yaml");
  CHECK(rf.task.schema.kind == SchemaKind::single_label);
  CHECK(rf.task.schema.allows_unknown);

  std::set<SchemaKind> kinds;
  for (const auto& pack : kPacks) kinds.insert(load_workflow(pack_dir(pack) / "definition.yaml").task.schema.kind);
  CHECK(kinds.size() == 4);
}

TEST_CASE("definition errors carry the field path") {
  CHECK(config_error_path(kMinimal).empty());
  std::string missing = kMinimal;
  missing.erase(missing.find("quorum: 2\n"), 10);
  CHECK(config_error_path(missing) == "quorum");
  CHECK(config_error_path(kMinimal + "colour: blue\n") == "colour");
  std::string bad_kind = kMinimal;
  bad_kind.replace(bad_kind.find("single_label"), 12, "poem");
  CHECK(config_error_path(bad_kind) == "schema.kind");
  std::string bad_ref = kMinimal;
  bad_ref.replace(bad_ref.find("{model_id: m2, backend_ref: pool}"), 33, "{model_id: m2, backend_ref: gone}");
  CHECK(config_error_path(bad_ref) == "consortium[1].backend_ref");
  CHECK_THROWS_AS(load_workflow("/nonexistent/wf.yaml"), ConfigError);
}

TEST_CASE("every pack reproduces its golden decisions") {
  for (const auto& pack : kPacks) {
    const auto def = load_workflow(pack_dir(pack) / "definition.yaml");
    for (const auto& scenario : kScenarios) {
      CAPTURE(pack);
      CAPTURE(scenario);
      const auto s = load_scenario(pack_dir(pack) / "fixtures" / (scenario + ".yaml"));
      TempDir out;
      RunOptions o;
      o.out_dir = out.path();
      const auto result = execute_run(bind_task(def, s.context, pack + "-" + scenario), scripted_registry(def, s), o);
      CHECK(read_file(result.decision_file) == read_file(pack_dir(pack) / "golden" / (scenario + ".decision")));
    }
  }
}

TEST_CASE("cli run on the rf anomaly fixture") {
  TempDir out;
  const auto r = cli(run_args("rf", "unanimous", out));
  CHECK(r.code == 0);
  CHECK(r.out.find("label = Unknown") != std::string::npos);
  CHECK(r.out.find("anomalous") != std::string::npos);
  const auto decision = parse_decision_document(read_file(out / "rf-unanimous.decision"));
  CHECK(decision.payload.label == "Unknown");
  CHECK(render_summary(decision) == r.out);

  CHECK(cli("verify " + (out / "rf-unanimous.audit.jsonl").string()).code == 0);
  CHECK(cli("replay " + (out / "rf-unanimous.audit.jsonl").string()).code == 0);
  CHECK(cli("explain " + (out / "rf-unanimous.audit.jsonl").string()).code == 0);
  CHECK(cli("explain --json " + (out / "rf-unanimous.audit.jsonl").string()).out.front() == '{');
  CHECK(cli(run_args("rf", "unanimous", out)).code == 3);
}

TEST_CASE("cli exit codes") {
  TempDir out;
  CHECK(cli(run_args("rf", "split", out) + " --quorum 4").code == 3);
  CHECK(cli(run_args("rf", "degenerate", out) + " --run-id other --quorum 3").code == 2);
  CHECK(cli("run --workflow /nonexistent.yaml --out " + out.path().string()).code == 3);
  CHECK(cli("run").code == 3);
  CHECK(cli("validate-config " + (pack_dir("dental") / "definition.yaml").string()).code == 0);

  std::string strict = read_file(pack_dir("rf") / "definition.yaml");
  const std::string key = "allow_deterministic_fallback: true";
  strict.replace(strict.find(key), key.size(), "allow_deterministic_fallback: false");
  write_file(out / "strict.yaml", strict);
  CHECK(cli("run --workflow " + (out / "strict.yaml").string() + " --fixture " +
            (pack_dir("rf") / "fixtures" / "degenerate.yaml").string() + " --out " + out.path().string())
            .code == 4);

  const auto trail = out / "rf-degenerate.audit.jsonl";
  std::string bytes = read_file(trail);
  bytes[bytes.find("\"body\":") + 10] ^= 0x01;
  write_file(trail, bytes);
  CHECK(cli("verify " + trail.string()).code == 1);
}
