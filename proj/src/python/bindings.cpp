#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "concord/audit.hpp"
#include "concord/error.hpp"
#include "concord/governance.hpp"
#include "concord/hash.hpp"
#include "concord/orchestrator.hpp"
#include "concord/summary.hpp"
#include "concord/workflow.hpp"

namespace py = pybind11;
using namespace concord;

namespace {

std::string validate_workflow(const std::filesystem::path& workflow, const std::optional<std::filesystem::path>& fixture) {
  const auto definition = load_workflow(workflow);
  if (fixture) {
    const auto scenario = load_scenario(*fixture);
    bind_task(definition, scenario.context, scenario.run_id);
  }
  return definition.task.workflow_id;
}

py::dict run_scenario(const std::filesystem::path& workflow, const std::filesystem::path& fixture,
                      const std::filesystem::path& out_dir, const std::optional<std::string>& run_id,
                      bool deterministic_only) {
  RunResult result;
  {
    py::gil_scoped_release release;
    const auto definition = load_workflow(workflow);
    const auto scenario = load_scenario(fixture);
    const auto task = bind_task(definition, scenario.context, run_id.value_or(scenario.run_id));
    RunOptions options;
    options.out_dir = out_dir;
    options.deterministic_only = deterministic_only;
    result = execute_run(task, scripted_registry(definition, scenario), options);
  }
  py::dict out;
  out["decision"] = decision_document(result.decision);
  out["summary"] = render_summary(result.decision);
  out["trail_file"] = result.trail_file;
  out["decision_file"] = result.decision_file;
  out["reasoner_failure"] = result.reasoner_failure;
  return out;
}

py::dict verify(const std::filesystem::path& trail) {
  const auto v = verify_chain(trail);
  py::dict out;
  out["ok"] = v.ok;
  out["broken_seq"] = v.broken_seq;
  out["reason"] = v.reason;
  out["record_count"] = v.record_count;
  out["complete"] = v.complete;
  return out;
}

}  // namespace

PYBIND11_MODULE(_concord, m) {
  m.doc() = "Consortium consolidation engine";

  auto base = py::register_exception<Error>(m, "ConcordError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<QuorumNotMet>(m, "QuorumNotMet", base.ptr());
  py::register_exception<IncompleteTrail>(m, "IncompleteTrail", base.ptr());
  py::register_exception<ReplayDivergence>(m, "ReplayDivergence", base.ptr());

  m.def("hash_content", [](py::bytes data) { return hash_content(std::string(data)); }, py::arg("data"));
  m.def("validate_workflow", &validate_workflow, py::arg("workflow"), py::arg("fixture") = py::none());
  m.def("run_scenario", &run_scenario, py::arg("workflow"), py::arg("fixture"), py::arg("out_dir"),
        py::arg("run_id") = py::none(), py::arg("deterministic_only") = false);
  m.def("verify", &verify, py::arg("trail"));
  m.def("replay", [](const std::filesystem::path& trail) { return decision_document(replay(trail)); }, py::arg("trail"));
  m.def("explain", [](const std::filesystem::path& trail) { return explain_report(trail); }, py::arg("trail"));
}
