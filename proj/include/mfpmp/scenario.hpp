#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mfpmp/optimizer.hpp"

namespace mfpmp {

using nlohmann::json;

// Carries every violation found while validating a scenario file, not just
// the first one.
struct ScenarioError : std::runtime_error {
  std::vector<std::string> violations;

  explicit ScenarioError(std::vector<std::string> v)
      : std::runtime_error(join(v)), violations(std::move(v)) {}

  static std::string join(const std::vector<std::string>& v) {
    std::ostringstream os;
    os << "invalid scenario (" << v.size() << " violation" << (v.size() == 1 ? "" : "s") << "):";
    for (const auto& s : v) os << "\n  - " << s;
    return os.str();
  }
};

struct Tolerances {
  double maximization = 1e-4;      // relative, vs 1 + |H|
  double stationarity = 1e-3;      // relative, vs 1 + |H|
  double first_order = 1e-4;       // absolute lower bound -tol on needle values
  double k_constancy = 1e-3;       // relative, vs 1 + |K(T)|
  double hamiltonian_drift = 1e-5; // relative, vs 1 + |H(0)|
  double candidate_span = 2.0;     // half-width of the candidate parameter box
  int check_times = 10;
  int needle_taus = 10;
  int needle_omegas = 10;
};

// A full problem instance as described by a scenario file.
struct Scenario {
  int dim = 1;
  ControlProblem problem{NonlocalField{}, uniform_measure({Vec::Zero(1)}), 1.0, 1e-3,
                         TerminalCost::variance(), std::nullopt, 5.0};
  ControlSignal control = ControlSignal::zero(1, 1.0);
  std::uint64_t seed = 0;
  Tolerances tolerances;
  OptimizeOptions optimizer;
};

namespace detail {

class ScenarioParser {
 public:
  explicit ScenarioParser(const json& root) : root_(root) {}

  Scenario parse() {
    Scenario sc;
    check_keys(root_, "$",
               {"dim", "initial_measure", "horizon", "dt", "field", "control", "terminal_cost",
                "running_cost", "seed", "tolerances", "optimizer"});

    sc.dim = require_int(root_, "$", "dim", 1, 16);
    sc.seed = root_.value("seed", std::uint64_t{0});
    sc.problem.horizon = require_number(root_, "$", "horizon", 1e-12, 1e6);
    sc.problem.dt = require_number(root_, "$", "dt", 1e-12, 1e6);

    if (const json* j = require(root_, "$", "initial_measure"))
      sc.problem.mu0 = parse_measure(*j, sc.dim, sc.seed);
    if (const json* j = require(root_, "$", "field")) sc.problem.field = parse_field(*j, sc.dim);
    if (const json* j = require(root_, "$", "terminal_cost"))
      sc.problem.terminal = parse_terminal(*j, sc.dim);
    if (root_.contains("running_cost") && !root_["running_cost"].is_null())
      sc.problem.running = parse_running(root_["running_cost"], sc.dim);
    if (root_.contains("tolerances")) parse_tolerances(root_["tolerances"], sc.tolerances);
    if (root_.contains("optimizer")) {
      const json& o = root_["optimizer"];
      check_keys(o, "optimizer", {"max_iters", "tol", "initial_step"});
      sc.optimizer.max_iters = o.value("max_iters", sc.optimizer.max_iters);
      sc.optimizer.tol = o.value("tol", sc.optimizer.tol);
      sc.optimizer.initial_step = o.value("initial_step", sc.optimizer.initial_step);
    }
    if (const json* j = require(root_, "$", "control"))
      sc.control = parse_control(*j, sc.dim, sc.problem.horizon, sc.problem);

    // dt must divide every control interval so switches sit on step ends
    for (std::size_t k = 0; k + 1 < sc.control.grid().size(); ++k) {
      const double len = sc.control.grid()[k + 1] - sc.control.grid()[k];
      const double m = std::round(len / sc.problem.dt);
      if (m < 1.0 || std::abs(len - m * sc.problem.dt) > 1e-9 * std::max(sc.problem.dt, len))
        fail("dt=" + std::to_string(sc.problem.dt) + " does not divide control interval " +
             std::to_string(k) + " = [" + std::to_string(sc.control.grid()[k]) + ", " +
             std::to_string(sc.control.grid()[k + 1]) + ")");
    }

    if (!violations_.empty()) throw ScenarioError(std::move(violations_));
    return sc;
  }

 private:
  void fail(std::string msg) { violations_.push_back(std::move(msg)); }

  void check_keys(const json& obj, const std::string& path,
                  const std::vector<std::string>& known) {
    if (!obj.is_object()) {
      fail(path + ": expected an object");
      return;
    }
    for (const auto& [key, _] : obj.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        std::string msg = path + ": unknown key '" + key + "'; known keys:";
        for (const auto& k : known) msg += " " + k;
        fail(msg);
      }
    }
  }

  const json* require(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.contains(key)) {
      fail(path + ": missing required key '" + key + "'");
      return nullptr;
    }
    return &obj[key];
  }

  double require_number(const json& obj, const std::string& path, const std::string& key,
                        double lo, double hi) {
    if (!obj.contains(key) || !obj[key].is_number()) {
      fail(path + ": '" + key + "' must be a number");
      return lo;
    }
    const double v = obj[key].get<double>();
    if (v < lo || v > hi) {
      fail(path + "." + key + " = " + std::to_string(v) + " outside [" + std::to_string(lo) +
           ", " + std::to_string(hi) + "]");
      return lo;
    }
    return v;
  }

  int require_int(const json& obj, const std::string& path, const std::string& key, int lo,
                  int hi) {
    if (!obj.contains(key) || !obj[key].is_number_integer()) {
      fail(path + ": '" + key + "' must be an integer");
      return lo;
    }
    const int v = obj[key].get<int>();
    if (v < lo || v > hi) {
      fail(path + "." + key + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
      return lo;
    }
    return v;
  }

  Vec parse_vec(const json& j, const std::string& path, int dim) {
    if (!j.is_array() || static_cast<int>(j.size()) != dim) {
      fail(path + ": expected an array of " + std::to_string(dim) + " numbers");
      return Vec::Zero(dim);
    }
    Vec v(dim);
    for (int c = 0; c < dim; ++c) v[c] = j[c].get<double>();
    return v;
  }

  Mat parse_mat(const json& j, const std::string& path, int dim) {
    Mat m = Mat::Zero(dim, dim);
    if (!j.is_array() || static_cast<int>(j.size()) != dim) {
      fail(path + ": expected a " + std::to_string(dim) + "x" + std::to_string(dim) + " matrix");
      return m;
    }
    for (int r = 0; r < dim; ++r) m.row(r) = parse_vec(j[r], path, dim).transpose();
    return m;
  }

  // deterministic, platform-stable draws from a seeded mt19937_64
  static double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
  }

  EmpiricalMeasure parse_measure(const json& j, int dim, std::uint64_t seed) {
    const std::string type = j.value("type", "");
    std::vector<Vec> pts;
    if (type == "points") {
      check_keys(j, "initial_measure", {"type", "points", "weights"});
      if (!j.contains("points") || !j["points"].is_array() || j["points"].empty()) {
        fail("initial_measure: 'points' must be a nonempty array");
        return uniform_measure({Vec::Zero(dim)});
      }
      for (std::size_t i = 0; i < j["points"].size(); ++i)
        pts.push_back(parse_vec(j["points"][i], "initial_measure.points[" + std::to_string(i) + "]",
                                dim));
      if (j.contains("weights")) {
        std::vector<double> w = j["weights"].get<std::vector<double>>();
        if (w.size() != pts.size()) {
          fail("initial_measure: weights/points length mismatch");
          return uniform_measure(std::move(pts));
        }
        double sum = 0.0;
        for (double x : w) {
          if (x < 0.0) fail("initial_measure: negative weight");
          sum += x;
        }
        if (sum <= 0.0) {
          fail("initial_measure: weights sum to zero");
          return uniform_measure(std::move(pts));
        }
        for (double& x : w) x /= sum;
        double s2 = 0.0;
        for (double x : w) s2 += x;
        w.back() += 1.0 - s2;
        return EmpiricalMeasure(std::move(pts), std::move(w));
      }
      return uniform_measure(std::move(pts));
    }
    if (type == "gaussian" || type == "uniform_ball") {
      const bool gauss = type == "gaussian";
      check_keys(j, "initial_measure",
                 gauss ? std::vector<std::string>{"type", "n", "mean", "stddev"}
                       : std::vector<std::string>{"type", "n", "center", "radius"});
      const int n = require_int(j, "initial_measure", "n", 1, 100000);
      const Vec center = j.contains(gauss ? "mean" : "center")
                             ? parse_vec(j[gauss ? "mean" : "center"], "initial_measure", dim)
                             : Vec::Zero(dim);
      const double scale = require_number(j, "initial_measure", gauss ? "stddev" : "radius",
                                          1e-12, 1e6);
      std::mt19937_64 rng(seed);
      for (int i = 0; i < n; ++i) {
        Vec p(dim);
        if (gauss) {
          for (int c = 0; c < dim; ++c) {
            // Box-Muller on explicit uniform draws
            const double u1 = std::max(uniform01(rng), 1e-300);
            const double u2 = uniform01(rng);
            p[c] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
          }
        } else {
          do {
            for (int c = 0; c < dim; ++c) p[c] = 2.0 * uniform01(rng) - 1.0;
          } while (p.norm() > 1.0);
        }
        pts.push_back(center + scale * p);
      }
      return uniform_measure(std::move(pts));
    }
    fail("initial_measure: unknown type '" + type +
         "'; available: points, gaussian, uniform_ball");
    return uniform_measure({Vec::Zero(dim)});
  }

  NonlocalField parse_field(const json& j, int dim) {
    check_keys(j, "field", {"kernel", "drift", "reference_radius"});
    KernelSpec kernel;
    LocalDriftSpec drift;
    if (j.contains("kernel")) {
      const json& k = j["kernel"];
      const std::string type = k.value("type", "");
      if (type == "zero") {
        check_keys(k, "field.kernel", {"type"});
      } else if (type == "linear_attraction") {
        check_keys(k, "field.kernel", {"type", "strength"});
        kernel = KernelSpec::linear_attraction(require_number(k, "field.kernel", "strength",
                                                              -1e6, 1e6));
      } else if (type == "gaussian_gradient") {
        check_keys(k, "field.kernel", {"type", "sigma", "scale"});
        kernel = KernelSpec::gaussian_gradient(require_number(k, "field.kernel", "sigma", 1e-9, 1e6),
                                               k.value("scale", 1.0));
      } else {
        fail("field.kernel: unknown type '" + type +
             "'; available: zero, linear_attraction, gaussian_gradient");
      }
    }
    if (j.contains("drift")) {
      const json& d = j["drift"];
      const std::string type = d.value("type", "");
      if (type == "zero") {
        check_keys(d, "field.drift", {"type"});
      } else if (type == "constant") {
        check_keys(d, "field.drift", {"type", "value"});
        if (const json* v = require(d, "field.drift", "value"))
          drift = LocalDriftSpec::constant(parse_vec(*v, "field.drift.value", dim));
      } else if (type == "linear") {
        check_keys(d, "field.drift", {"type", "matrix", "offset"});
        Mat b = d.contains("matrix") ? parse_mat(d["matrix"], "field.drift.matrix", dim)
                                     : Mat::Zero(dim, dim);
        Vec c = d.contains("offset") ? parse_vec(d["offset"], "field.drift.offset", dim)
                                     : Vec::Zero(dim);
        drift = LocalDriftSpec::linear(std::move(b), std::move(c));
      } else {
        fail("field.drift: unknown type '" + type + "'; available: zero, constant, linear");
      }
    }
    return NonlocalField(kernel, drift, j.value("reference_radius", 10.0));
  }

  TerminalCost parse_terminal(const json& j, int dim) {
    const std::string type = j.value("type", "");
    if (type == "variance") {
      check_keys(j, "terminal_cost", {"type"});
      return TerminalCost::variance();
    }
    if (type == "potential") {
      check_keys(j, "terminal_cost", {"type", "center", "alpha"});
      const Vec center =
          j.contains("center") ? parse_vec(j["center"], "terminal_cost.center", dim) : Vec::Zero(dim);
      const double alpha = j.value("alpha", 1.0);
      if (alpha <= 0.0) {
        fail("terminal_cost.alpha must be positive");
        return TerminalCost::variance();
      }
      return TerminalCost::potential(ScalarField::quadratic(center), alpha);
    }
    if (type == "target_attraction") {
      check_keys(j, "terminal_cost", {"type", "target"});
      Vec target = Vec::Zero(dim);
      if (const json* t = require(j, "terminal_cost", "target"))
        target = parse_vec(*t, "terminal_cost.target", dim);
      return TerminalCost::target_attraction(std::move(target));
    }
    fail("terminal_cost: unknown type '" + type +
         "'; available: variance, potential, target_attraction");
    return TerminalCost::variance();
  }

  RunningCost parse_running(const json& j, int dim) {
    const std::string type = j.value("type", "");
    if (type == "control_energy") {
      check_keys(j, "running_cost", {"type", "lambda"});
      return RunningCost::control_energy(require_number(j, "running_cost", "lambda", 0.0, 1e6));
    }
    if (type == "tracking") {
      check_keys(j, "running_cost", {"type", "lambda", "beta", "target"});
      Vec target = Vec::Zero(dim);
      if (const json* t = require(j, "running_cost", "target"))
        target = parse_vec(*t, "running_cost.target", dim);
      return RunningCost::tracking(require_number(j, "running_cost", "lambda", 0.0, 1e6),
                                   require_number(j, "running_cost", "beta", 0.0, 1e6),
                                   std::move(target));
    }
    fail("running_cost: unknown type '" + type + "'; available: control_energy, tracking");
    return RunningCost::control_energy(1.0);
  }

  FeatureSpec parse_feature(const json& j, const std::string& path, int dim) {
    const std::string type = j.value("type", "");
    if (type == "constant_dir") {
      check_keys(j, path, {"type", "axis"});
      return FeatureSpec::constant_dir(require_int(j, path, "axis", 0, dim - 1));
    }
    if (type == "linear_entry") {
      check_keys(j, path, {"type", "out_axis", "in_axis"});
      return FeatureSpec::linear_entry(require_int(j, path, "out_axis", 0, dim - 1),
                                       require_int(j, path, "in_axis", 0, dim - 1));
    }
    if (type == "gaussian_bump") {
      check_keys(j, path, {"type", "center", "sigma", "axis"});
      Vec center = Vec::Zero(dim);
      if (const json* c = require(j, path, "center")) center = parse_vec(*c, path + ".center", dim);
      return FeatureSpec::gaussian_bump(std::move(center),
                                        require_number(j, path, "sigma", 1e-9, 1e6),
                                        require_int(j, path, "axis", 0, dim - 1));
    }
    fail(path + ": unknown feature type '" + type +
         "'; available: constant_dir, linear_entry, gaussian_bump");
    return FeatureSpec::constant_dir(0);
  }

  ControlSignal parse_control(const json& j, int dim, double horizon, ControlProblem& problem) {
    check_keys(j, "control",
               {"parameterization", "features", "l_u", "intervals", "grid", "values",
                "sampling_radius"});
    problem.control_bound = require_number(j, "control", "l_u", 1e-9, 1e9);
    if (j.contains("sampling_radius"))
      problem.control_sampling_radius = require_number(j, "control", "sampling_radius", 1e-9, 1e9);

    std::vector<double> grid;
    if (j.contains("grid")) {
      grid = j["grid"].get<std::vector<double>>();
      if (grid.size() < 2 || std::abs(grid.front()) > 1e-12 ||
          std::abs(grid.back() - horizon) > 1e-9) {
        fail("control.grid must run from 0 to the horizon");
        grid = {0.0, horizon};
      }
    } else {
      const int intervals = j.contains("intervals") ? require_int(j, "control", "intervals", 1, 10000) : 1;
      for (int k = 0; k <= intervals; ++k)
        grid.push_back(horizon * static_cast<double>(k) / intervals);
    }
    const std::size_t intervals = grid.size() - 1;

    const std::string par = j.value("parameterization", "constant");
    std::vector<FeatureSpec> features;
    if (par == "basis") {
      if (!j.contains("features") || !j["features"].is_array() || j["features"].empty())
        fail("control: basis parameterization requires a nonempty 'features' array");
      else
        for (std::size_t m = 0; m < j["features"].size(); ++m)
          features.push_back(
              parse_feature(j["features"][m], "control.features[" + std::to_string(m) + "]", dim));
    } else if (par != "constant" && par != "affine") {
      fail("control: unknown parameterization '" + par +
           "'; available: constant, affine, basis");
    }

    const auto make_field = [&]() {
      if (par == "affine")
        return ControlField::affine(Mat::Zero(dim, dim), Vec::Zero(dim), problem.control_bound);
      if (par == "basis")
        return ControlField::basis(features, Vec::Zero(static_cast<Eigen::Index>(features.size())),
                                   dim, problem.control_bound);
      return ControlField::constant(Vec::Zero(dim), problem.control_bound);
    };

    std::vector<ControlField> fields(intervals, make_field());
    if (j.contains("values")) {
      const json& vals = j["values"];
      if (!vals.is_array() || vals.size() != intervals) {
        fail("control.values must hold one parameter vector per interval (" +
             std::to_string(intervals) + ")");
      } else {
        for (std::size_t k = 0; k < intervals; ++k) {
          const auto raw = vals[k].get<std::vector<double>>();
          if (static_cast<int>(raw.size()) != fields[k].param_count()) {
            fail("control.values[" + std::to_string(k) + "] needs " +
                 std::to_string(fields[k].param_count()) + " entries");
            continue;
          }
          Vec theta(raw.size());
          for (std::size_t m = 0; m < raw.size(); ++m) theta[static_cast<Eigen::Index>(m)] = raw[m];
          fields[k] = fields[k].with_params(theta);
        }
      }
    }
    if (violations_.empty()) return ControlSignal(std::move(grid), std::move(fields));
    return ControlSignal::zero(dim, horizon);
  }

  void parse_tolerances(const json& j, Tolerances& tol) {
    check_keys(j, "tolerances",
               {"maximization", "stationarity", "first_order", "k_constancy", "hamiltonian_drift",
                "candidate_span", "check_times", "needle_taus", "needle_omegas"});
    tol.maximization = j.value("maximization", tol.maximization);
    tol.stationarity = j.value("stationarity", tol.stationarity);
    tol.first_order = j.value("first_order", tol.first_order);
    tol.k_constancy = j.value("k_constancy", tol.k_constancy);
    tol.hamiltonian_drift = j.value("hamiltonian_drift", tol.hamiltonian_drift);
    tol.candidate_span = j.value("candidate_span", tol.candidate_span);
    tol.check_times = j.value("check_times", tol.check_times);
    tol.needle_taus = j.value("needle_taus", tol.needle_taus);
    tol.needle_omegas = j.value("needle_omegas", tol.needle_omegas);
  }

  const json& root_;
  std::vector<std::string> violations_;
};

}  // namespace detail

inline Scenario parse_scenario_json(const json& root) {
  return detail::ScenarioParser(root).parse();
}

inline Scenario parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError({"cannot open scenario file: " + path});
  json root;
  try {
    in >> root;
  } catch (const json::parse_error& e) {
    throw ScenarioError({std::string("malformed JSON: ") + e.what()});
  }
  return parse_scenario_json(root);
}

}  // namespace mfpmp
