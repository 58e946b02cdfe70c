#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "concord/audit.hpp"
#include "concord/error.hpp"
#include "concord/orchestrator.hpp"
#include "concord/summary.hpp"
#include "concord/workflow.hpp"

namespace {

using namespace concord;

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitQuorum = 2;
constexpr int kExitConfig = 3;
constexpr int kExitReasoner = 4;

std::pair<std::string, std::string> split_assignment(const std::string& arg, const std::string& flag) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(flag, "expected key=value, got '" + arg + "'");
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

std::string read_file(const std::string& path, const std::string& flag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(flag, "cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

template <typename T, typename Id>
void upsert(std::vector<T>& values, const Id& id, T value) {
  for (auto& v : values) {
    if (v.source_id == id) {
      v = std::move(value);
      return;
    }
  }
  values.push_back(std::move(value));
}

struct RunArgs {
  std::string workflow;
  std::string fixture;
  std::vector<std::string> texts;
  std::vector<std::string> images;
  std::vector<std::string> metas;
  std::string out = ".";
  std::string run_id;
  int quorum = 0;
  bool deterministic_only = false;
  std::int64_t timeout_ms = kDefaultFanOutTimeoutMs;
  std::uint64_t seed = 7;
};

std::string default_run_id(const std::string& workflow_id) {
  std::string stamp = utc_timestamp();
  std::erase_if(stamp, [](char c) { return c == '-' || c == ':' || c == '.'; });
  return workflow_id + "-" + stamp;
}

int cmd_run(const RunArgs& args) {
  const auto definition = load_workflow(args.workflow);
  SharedContext context;
  std::optional<Scenario> scenario;
  if (!args.fixture.empty()) {
    scenario = load_scenario(args.fixture);
    context = scenario->context;
  }
  for (const auto& t : args.texts) {
    auto [id, path] = split_assignment(t, "--text");
    upsert(context.text_inputs, id, TextInput{id, read_file(path, "--text")});
  }
  for (const auto& i : args.images) {
    auto [id, path] = split_assignment(i, "--image");
    upsert(context.image_inputs, id, load_image(id, path));
  }
  for (const auto& m : args.metas) {
    auto [key, value] = split_assignment(m, "--meta");
    context.metadata[key] = value;
  }
  std::string run_id = args.run_id;
  if (run_id.empty()) run_id = scenario ? scenario->run_id : default_run_id(definition.task.workflow_id);

  WorkflowDefinition effective = definition;
  if (args.quorum != 0) effective.task.quorum = args.quorum;
  const TaskSpec task = bind_task(effective, std::move(context), run_id);
  const BackendRegistry registry =
      scenario ? scripted_registry(effective, *scenario) : http_registry(effective, args.seed);

  RunOptions options;
  options.out_dir = args.out;
  options.deterministic_only = args.deterministic_only;
  options.fan_out_timeout_ms = args.timeout_ms;
  const RunResult result = execute_run(task, registry, options);
  std::cout << render_summary(result.decision);
  if (!result.reasoner_failure.empty()) {
    std::cerr << "reasoner failed, deterministic fallback used: " << result.reasoner_failure << "\n";
  }
  std::cerr << "decision: " << result.decision_file.string() << "\ntrail: " << result.trail_file.string() << "\n";
  return kExitOk;
}

int cmd_verify(const std::string& trail) {
  const auto result = verify_chain(trail);
  if (!result.ok) {
    std::cout << "broken at seq " << *result.broken_seq << ": " << result.reason << "\n";
    return kExitOther;
  }
  std::cout << "ok: " << result.record_count << " records" << (result.complete ? "" : " (trail incomplete)") << "\n";
  return kExitOk;
}

int cmd_replay(const std::string& trail) {
  try {
    std::cout << render_summary(replay(trail));
    std::cout << "replay matches the recorded decision\n";
    return kExitOk;
  } catch (const ReplayDivergence& e) {
    std::cout << "replay diverged: " << e.diff() << "\n";
    return kExitOther;
  }
}

int cmd_explain(const std::string& trail, bool as_json) {
  const auto records = read_trail(trail);
  if (as_json) {
    std::cout << canonical_dump(explain_document(records)) << "\n";
  } else {
    std::cout << explain_report(records);
  }
  return kExitOk;
}

int cmd_validate_config(const std::string& workflow, const std::string& fixture) {
  const auto definition = load_workflow(workflow);
  if (!fixture.empty()) {
    const auto scenario = load_scenario(fixture);
    bind_task(definition, scenario.context, scenario.run_id);
  }
  std::cout << "ok: " << definition.task.workflow_id << " (" << to_string(definition.task.schema.kind) << ", "
            << definition.task.consortium.size() << " members, quorum " << definition.task.quorum << ")\n";
  return kExitOk;
}

int exit_code_for(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const QuorumNotMet& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitQuorum;
  } catch (const NoComparableContent& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitQuorum;
  } catch (const ReasonerFailed& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitReasoner;
  } catch (const ReasonerOutputInvalid& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitReasoner;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TemplateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UnresolvedPlaceholder& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingImage& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"concord: consortium runs with consensus, governance and audit trails"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Execute a workflow and write {run_id}.decision and {run_id}.audit.jsonl");
  run_cmd->add_option("--workflow", run.workflow, "Workflow definition (YAML)")->required();
  run_cmd->add_option("--fixture", run.fixture, "Scenario file; answers come from scripted backends");
  run_cmd->add_option("--text", run.texts, "Text input as id=path");
  run_cmd->add_option("--image", run.images, "Image input as id=path");
  run_cmd->add_option("--meta", run.metas, "Metadata as key=value");
  run_cmd->add_option("--out", run.out, "Output directory")->capture_default_str();
  run_cmd->add_option("--run-id", run.run_id, "Run id (default: fixture run_id or workflow id + time)");
  run_cmd->add_option("--quorum", run.quorum, "Override the workflow quorum");
  run_cmd->add_flag("--deterministic-only", run.deterministic_only, "Skip the reasoner");
  run_cmd->add_option("--timeout-ms", run.timeout_ms, "Global fan-out deadline")->capture_default_str();
  run_cmd->add_option("--seed", run.seed, "Seed for retry jitter")->capture_default_str();

  std::string trail;
  auto* verify_cmd = app.add_subcommand("verify", "Check the hash chain of a trail");
  verify_cmd->add_option("trail", trail, "Trail file")->required();

  auto* replay_cmd = app.add_subcommand("replay", "Recompute a decision from its trail and compare");
  replay_cmd->add_option("trail", trail, "Trail file")->required();

  bool as_json = false;
  auto* explain_cmd = app.add_subcommand("explain", "Explain how a decision was reached");
  explain_cmd->add_option("trail", trail, "Trail file")->required();
  explain_cmd->add_flag("--json", as_json, "Emit the canonical JSON document");

  std::string workflow;
  std::string fixture;
  auto* validate_cmd = app.add_subcommand("validate-config", "Validate a workflow definition");
  validate_cmd->add_option("workflow", workflow, "Workflow definition (YAML)")->required();
  validate_cmd->add_option("--fixture", fixture, "Also bind this scenario's context");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*verify_cmd) return cmd_verify(trail);
    if (*replay_cmd) return cmd_replay(trail);
    if (*explain_cmd) return cmd_explain(trail, as_json);
    if (*validate_cmd) return cmd_validate_config(workflow, fixture);
  } catch (...) {
    return exit_code_for(std::current_exception());
  }
  return kExitOther;
}
