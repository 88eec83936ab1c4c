#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfpmp/pmp.hpp"

namespace mfpmp {

using nlohmann::json;

namespace detail {

// shortest-exact double formatting for reproducible text artifacts
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// One row per (time, particle): time, particle_index, x components, optional
// r components, weight.
inline void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                                 const CostateCloud* costate = nullptr) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open output file: " + path);
  const int d = traj.initial().dim();
  out << "time,particle_index";
  for (int c = 0; c < d; ++c) out << ",x" << c;
  if (costate != nullptr)
    for (int c = 0; c < d; ++c) out << ",r" << c;
  out << ",weight\n";
  for (std::size_t k = 0; k < traj.steps(); ++k) {
    const auto& state = traj.states[k];
    for (std::size_t i = 0; i < state.size(); ++i) {
      out << detail::fmt_double(traj.times[k]) << ',' << i;
      for (int c = 0; c < d; ++c) out << ',' << detail::fmt_double(state.point(i)[c]);
      if (costate != nullptr)
        for (int c = 0; c < d; ++c)
          out << ',' << detail::fmt_double(costate->costates[k][i][c]);
      out << ',' << detail::fmt_double(state.weight(i)) << '\n';
    }
  }
}

// Control files carry the time grid and one parameter vector per interval;
// the parameterization structure itself comes from the scenario.
inline json control_to_json(const ControlSignal& u) {
  json j;
  j["grid"] = u.grid();
  json params = json::array();
  for (const auto& f : u.fields()) {
    const Vec theta = f.params();
    std::vector<double> row(theta.data(), theta.data() + theta.size());
    params.push_back(row);
  }
  j["params"] = params;
  return j;
}

inline void write_control_json(const std::string& path, const ControlSignal& u) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open output file: " + path);
  out << control_to_json(u).dump(2) << '\n';
}

// Re-dress a stored parameter file in the scenario's parameterization.
inline ControlSignal control_from_json(const json& j, const ControlSignal& prototype) {
  if (!j.contains("grid") || !j.contains("params"))
    throw InvalidArgument("control file: expected keys 'grid' and 'params'");
  const auto grid = j["grid"].get<std::vector<double>>();
  const auto& params = j["params"];
  if (params.size() + 1 != grid.size())
    throw InvalidArgument("control file: need one parameter vector per interval");
  std::vector<ControlField> fields;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double mid = 0.5 * (grid[k] + grid[k + 1]);
    const ControlField& proto = prototype.field_at(mid);
    const auto raw = params[k].get<std::vector<double>>();
    if (static_cast<int>(raw.size()) != proto.param_count())
      throw InvalidArgument("control file: parameter count mismatch at interval " +
                            std::to_string(k));
    Vec theta(raw.size());
    for (std::size_t m = 0; m < raw.size(); ++m) theta[static_cast<Eigen::Index>(m)] = raw[m];
    fields.push_back(proto.with_params(theta));
  }
  return ControlSignal(grid, std::move(fields));
}

inline ControlSignal load_control_json(const std::string& path, const ControlSignal& prototype) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open control file: " + path);
  json j;
  in >> j;
  return control_from_json(j, prototype);
}

// Per-condition verdicts of a run, emitted as text and as a JSON summary.
struct ConditionResult {
  std::string name;
  bool pass = true;
  bool applicable = true;
  double value = 0.0;      // measured margin / drift / worst value
  double tolerance = 0.0;  // threshold it was compared against
  std::string note;
};

struct RunReport {
  std::string subcommand;
  std::string scenario_path;
  std::vector<ConditionResult> conditions;

  bool overall_pass() const {
    for (const auto& c : conditions)
      if (c.applicable && !c.pass) return false;
    return true;
  }

  json to_json() const {
    json j;
    j["subcommand"] = subcommand;
    j["scenario"] = scenario_path;
    j["overall_pass"] = overall_pass();
    j["conditions"] = json::array();
    for (const auto& c : conditions) {
      json cj;
      cj["name"] = c.name;
      cj["pass"] = c.pass;
      cj["applicable"] = c.applicable;
      cj["value"] = c.value;
      cj["tolerance"] = c.tolerance;
      if (!c.note.empty()) cj["note"] = c.note;
      j["conditions"].push_back(cj);
    }
    return j;
  }

  void print(std::ostream& os) const {
    for (const auto& c : conditions) {
      os << (c.applicable ? (c.pass ? "[pass]" : "[FAIL]") : "[skip]") << ' ' << c.name
         << "  value=" << c.value << "  tol=" << c.tolerance;
      if (!c.note.empty()) os << "  (" << c.note << ')';
      os << '\n';
    }
    os << (overall_pass() ? "ALL CHECKS PASSED" : "CHECKS FAILED") << '\n';
  }
};

inline void write_report_json(const std::string& path, const RunReport& report) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open output file: " + path);
  out << report.to_json().dump(2) << '\n';
}

}  // namespace mfpmp
