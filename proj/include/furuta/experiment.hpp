#pragma once

// Experiment pipeline behind the command-line tool: model -> controller ->
// stability analysis -> simulation, with every stage writing CSV artifacts.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "furuta/config.hpp"
#include "furuta/control.hpp"
#include "furuta/plant.hpp"
#include "furuta/sim.hpp"
#include "furuta/synthesis.hpp"

namespace furuta {

/// Process exit statuses of a run.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitSynthesisFailure = 2;
inline constexpr int kExitConfigError = 3;

enum class PlantKind { kToy, kCanonicalRip, kTable1, kFile };
enum class ControllerKind { kNone, kLqr, kStatic, kDynamic, kSynthesize };
enum class SimModel { kLinear, kNonlinear };

/// How far down the pipeline a run goes.
enum class Stage { kModel, kAnalysis, kSimulation };

struct ExperimentConfig {
  PlantKind plant = PlantKind::kToy;
  std::string plant_file;
  /// Controller and simulation period for continuous-time plants.
  double sample_time = 1e-3;
  std::optional<double> process_noise;
  std::optional<double> measurement_noise;

  ControllerKind controller = ControllerKind::kNone;
  LqrWeights lqr{reference::rip_state_weight(), reference::rip_input_weight()};
  Matrix static_gain;
  DynamicController dynamic;
  BoConfig bo;
  ObjectiveKind objective = ObjectiveKind::kAbscissa;
  Eigen::Index controller_order = 1;
  std::optional<SearchSpace> search_space;

  ReferenceSignal reference;
  std::vector<int> tracked_outputs;  // empty: resolved from the plant
  long horizon = 200;
  bool noise = true;
  SimModel sim_model = SimModel::kLinear;
  std::optional<Vector> initial_state;
  /// Static gain simulated alongside the main controller for comparison.
  std::optional<Matrix> compare_static_gain;

  std::uint64_t seed = 1;
  std::string output_dir = "out";

  static ExperimentConfig from_config(const Config& cfg);
  Config to_config() const;
};

namespace detail {

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "plant", "plant.file", "plant.sample_time", "plant.process_noise", "plant.measurement_noise",
      "controller", "controller.a_c", "controller.b_c", "controller.c_c", "controller.d_c",
      "controller.k", "controller.order", "lqr.q", "lqr.r", "objective",
      "bo.n_init", "bo.n_max", "bo.xi", "bo.restarts", "bo.probes_per_dim", "bo.length_scale",
      "bo.kernel", "bo.warp", "bo.clip", "bo.max_refine_sweeps", "bo.threads",
      "search.lower", "search.upper",
      "reference", "reference.amplitude", "reference.onset", "reference.period", "reference.phase",
      "sim.horizon", "sim.noise", "sim.model", "sim.tracked", "sim.initial_state",
      "compare.static_k", "seed", "output_dir"};
  return keys;
}

template <typename Enum>
Enum lookup(const std::map<std::string, Enum>& table, const std::string& value, const std::string& key) {
  const auto it = table.find(value);
  if (it != table.end()) return it->second;
  std::string options;
  for (const auto& [name, e] : table) options += (options.empty() ? "" : "|") + name;
  throw ConfigError("config '" + key + "': unknown value '" + value + "' (expected " + options + ")");
}

template <typename Enum>
std::string name_of(const std::map<std::string, Enum>& table, Enum value) {
  for (const auto& [name, e] : table) {
    if (e == value) return name;
  }
  return "?";
}

inline const std::map<std::string, PlantKind>& plant_names() {
  static const std::map<std::string, PlantKind> t = {{"toy", PlantKind::kToy},
                                                     {"canonical-rip", PlantKind::kCanonicalRip},
                                                     {"table1-symbolic", PlantKind::kTable1},
                                                     {"file", PlantKind::kFile}};
  return t;
}

inline const std::map<std::string, ControllerKind>& controller_names() {
  static const std::map<std::string, ControllerKind> t = {{"none", ControllerKind::kNone},
                                                          {"lqr", ControllerKind::kLqr},
                                                          {"static", ControllerKind::kStatic},
                                                          {"dynamic", ControllerKind::kDynamic},
                                                          {"synthesize", ControllerKind::kSynthesize}};
  return t;
}

inline const std::map<std::string, ReferenceSignal::Kind>& reference_names() {
  static const std::map<std::string, ReferenceSignal::Kind> t = {{"zero", ReferenceSignal::Kind::kZero},
                                                                 {"step", ReferenceSignal::Kind::kStep},
                                                                 {"sine", ReferenceSignal::Kind::kSine}};
  return t;
}

inline const std::map<std::string, SimModel>& sim_model_names() {
  static const std::map<std::string, SimModel> t = {{"linear", SimModel::kLinear},
                                                    {"nonlinear", SimModel::kNonlinear}};
  return t;
}

inline const std::map<std::string, KernelKind>& kernel_names() {
  static const std::map<std::string, KernelKind> t = {{"se", KernelKind::kSquaredExponential},
                                                      {"matern52", KernelKind::kMatern52}};
  return t;
}

inline const std::map<std::string, OutputWarp>& warp_names() {
  static const std::map<std::string, OutputWarp> t = {{"none", OutputWarp::kNone},
                                                      {"signed-log", OutputWarp::kSignedLog}};
  return t;
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string format_list(const Matrix& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) out += "; ";
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += (j ? ", " : "") + format_number(m(i, j));
  }
  return out;
}

inline std::string format_ints(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? ", " : "") + std::to_string(values[i]);
  return out;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_config(const Config& cfg) {
  cfg.require_known(detail::known_config_keys());
  ExperimentConfig e;
  e.plant = detail::lookup(detail::plant_names(), cfg.get_string("plant", "toy"), "plant");
  e.plant_file = cfg.get_string("plant.file", "");
  if (e.plant == PlantKind::kFile && e.plant_file.empty()) {
    throw ConfigError("config 'plant.file' is required for plant = file");
  }
  e.sample_time = cfg.get_double("plant.sample_time", e.sample_time);
  if (!(e.sample_time > 0.0)) throw ConfigError("config 'plant.sample_time' must be > 0");
  if (cfg.has("plant.process_noise")) e.process_noise = cfg.get_double("plant.process_noise", 0.0);
  if (cfg.has("plant.measurement_noise")) e.measurement_noise = cfg.get_double("plant.measurement_noise", 0.0);
  for (const auto& v : {e.process_noise, e.measurement_noise}) {
    if (v && !(*v >= 0.0)) throw ConfigError("config: noise variances must be >= 0");
  }

  e.controller = detail::lookup(detail::controller_names(), cfg.get_string("controller", "none"), "controller");
  if (cfg.has("lqr.q")) {
    const Matrix q = cfg.get_matrix("lqr.q");
    e.lqr.Q = q.rows() == 1 ? Matrix(Vector(q.row(0).transpose()).asDiagonal()) : q;
  }
  if (cfg.has("lqr.r")) {
    const Matrix r = cfg.get_matrix("lqr.r");
    e.lqr.R = r.rows() == 1 && r.cols() > 1 ? Matrix(Vector(r.row(0).transpose()).asDiagonal()) : r;
  }
  if (cfg.has("controller.k")) e.static_gain = cfg.get_matrix("controller.k");
  if (e.controller == ControllerKind::kStatic && e.static_gain.size() == 0) {
    throw ConfigError("config 'controller.k' is required for controller = static");
  }
  if (e.controller == ControllerKind::kDynamic) {
    for (const char* key : {"controller.a_c", "controller.b_c", "controller.c_c", "controller.d_c"}) {
      if (!cfg.has(key)) throw ConfigError(std::string("config '") + key + "' is required for controller = dynamic");
    }
    e.dynamic = {cfg.get_matrix("controller.a_c"), cfg.get_matrix("controller.b_c"),
                 cfg.get_matrix("controller.c_c"), cfg.get_matrix("controller.d_c")};
    try {
      e.dynamic.validate();
    } catch (const Error& err) {
      throw ConfigError(std::string("config: ") + err.what());
    }
  }
  e.controller_order = cfg.get_int("controller.order", 1);
  if (e.controller_order < 1) throw ConfigError("config 'controller.order' must be >= 1");
  e.objective = parse_objective_kind(cfg.get_string("objective", "abscissa"));

  e.bo.n_init = static_cast<int>(cfg.get_int("bo.n_init", e.bo.n_init));
  e.bo.n_max = static_cast<int>(cfg.get_int("bo.n_max", e.bo.n_max));
  e.bo.xi = cfg.get_double("bo.xi", e.bo.xi);
  e.bo.acquisition_restarts = static_cast<int>(cfg.get_int("bo.restarts", e.bo.acquisition_restarts));
  e.bo.probes_per_dim = static_cast<int>(cfg.get_int("bo.probes_per_dim", e.bo.probes_per_dim));
  e.bo.length_scale = cfg.get_double("bo.length_scale", e.bo.length_scale);
  e.bo.kernel.kind = detail::lookup(detail::kernel_names(), cfg.get_string("bo.kernel", "se"), "bo.kernel");
  e.bo.warp = detail::lookup(detail::warp_names(), cfg.get_string("bo.warp", "signed-log"), "bo.warp");
  e.bo.clip_standardized = cfg.get_double("bo.clip", e.bo.clip_standardized);
  e.bo.max_refine_sweeps = static_cast<int>(cfg.get_int("bo.max_refine_sweeps", e.bo.max_refine_sweeps));
  e.bo.threads = static_cast<int>(cfg.get_int("bo.threads", e.bo.threads));
  try {
    e.bo.validate();
  } catch (const Error& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
  if (cfg.has("search.lower") != cfg.has("search.upper")) {
    throw ConfigError("config: search.lower and search.upper must be given together");
  }
  if (cfg.has("search.lower")) {
    e.search_space = SearchSpace{cfg.get_vector("search.lower"), cfg.get_vector("search.upper")};
    try {
      e.search_space->validate();
    } catch (const Error& err) {
      throw ConfigError(std::string("config: ") + err.what());
    }
  }

  e.reference.kind = detail::lookup(detail::reference_names(), cfg.get_string("reference", "zero"), "reference");
  e.reference.amplitude = cfg.get_double("reference.amplitude", e.reference.kind == ReferenceSignal::Kind::kZero ? 0.0 : 10.0);
  e.reference.onset_step = cfg.get_int("reference.onset", 0);
  e.reference.period_steps = cfg.get_double("reference.period", 100.0);
  e.reference.phase = cfg.get_double("reference.phase", 0.0);
  try {
    e.reference.validate();
  } catch (const Error& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }

  e.horizon = cfg.get_int("sim.horizon", e.horizon);
  if (e.horizon < 1) throw ConfigError("config 'sim.horizon' must be >= 1");
  e.noise = cfg.get_bool("sim.noise", e.noise);
  e.sim_model = detail::lookup(detail::sim_model_names(), cfg.get_string("sim.model", "linear"), "sim.model");
  if (e.sim_model == SimModel::kNonlinear && e.plant != PlantKind::kTable1) {
    throw ConfigError("config: sim.model = nonlinear requires plant = table1-symbolic");
  }
  for (double t : cfg.get_list("sim.tracked")) {
    if (t < 0 || t != static_cast<int>(t)) throw ConfigError("config 'sim.tracked' must list output indices");
    e.tracked_outputs.push_back(static_cast<int>(t));
  }
  if (cfg.has("sim.initial_state")) e.initial_state = cfg.get_vector("sim.initial_state");
  if (cfg.has("compare.static_k")) e.compare_static_gain = cfg.get_matrix("compare.static_k");

  const long seed = cfg.get_int("seed", 1);
  if (seed < 0) throw ConfigError("config 'seed' must be >= 0");
  e.seed = static_cast<std::uint64_t>(seed);
  e.bo.rng_seed = e.seed;
  e.output_dir = cfg.get_string("output_dir", e.output_dir);
  return e;
}

inline Config ExperimentConfig::to_config() const {
  using detail::format_list;
  using detail::format_number;
  Config c;
  c.set("plant", detail::name_of(detail::plant_names(), plant));
  if (plant == PlantKind::kFile) c.set("plant.file", plant_file);
  c.set("plant.sample_time", format_number(sample_time));
  if (process_noise) c.set("plant.process_noise", format_number(*process_noise));
  if (measurement_noise) c.set("plant.measurement_noise", format_number(*measurement_noise));
  c.set("controller", detail::name_of(detail::controller_names(), controller));
  c.set("controller.order", std::to_string(controller_order));
  c.set("lqr.q", format_list(lqr.Q));
  c.set("lqr.r", format_list(lqr.R));
  if (static_gain.size() > 0) c.set("controller.k", format_list(static_gain));
  if (controller == ControllerKind::kDynamic) {
    c.set("controller.a_c", format_list(dynamic.A_c));
    c.set("controller.b_c", format_list(dynamic.B_c));
    c.set("controller.c_c", format_list(dynamic.C_c));
    c.set("controller.d_c", format_list(dynamic.D_c));
  }
  c.set("objective", to_string(objective));
  c.set("bo.n_init", std::to_string(bo.n_init));
  c.set("bo.n_max", std::to_string(bo.n_max));
  c.set("bo.xi", format_number(bo.xi));
  c.set("bo.restarts", std::to_string(bo.acquisition_restarts));
  c.set("bo.probes_per_dim", std::to_string(bo.probes_per_dim));
  c.set("bo.length_scale", format_number(bo.length_scale));
  c.set("bo.kernel", detail::name_of(detail::kernel_names(), bo.kernel.kind));
  c.set("bo.warp", detail::name_of(detail::warp_names(), bo.warp));
  c.set("bo.clip", format_number(bo.clip_standardized));
  c.set("bo.max_refine_sweeps", std::to_string(bo.max_refine_sweeps));
  c.set("bo.threads", std::to_string(bo.threads));
  if (search_space) {
    c.set("search.lower", format_list(search_space->lower.transpose()));
    c.set("search.upper", format_list(search_space->upper.transpose()));
  }
  c.set("reference", to_string(reference.kind));
  c.set("reference.amplitude", format_number(reference.amplitude));
  c.set("reference.onset", std::to_string(reference.onset_step));
  c.set("reference.period", format_number(reference.period_steps));
  c.set("reference.phase", format_number(reference.phase));
  c.set("sim.horizon", std::to_string(horizon));
  c.set("sim.noise", noise ? "true" : "false");
  c.set("sim.model", detail::name_of(detail::sim_model_names(), sim_model));
  if (!tracked_outputs.empty()) c.set("sim.tracked", detail::format_ints(tracked_outputs));
  if (initial_state) c.set("sim.initial_state", format_list(initial_state->transpose()));
  if (compare_static_gain) c.set("compare.static_k", format_list(*compare_static_gain));
  c.set("seed", std::to_string(seed));
  c.set("output_dir", output_dir);
  return c;
}

/// Names accepted by preset_config.
inline std::vector<std::string> preset_names() {
  return {"toy-step", "toy-sine", "rip-lqr", "rip-bo", "rip-track"};
}

/// Configuration entries of a named experiment.
inline Config preset_config(const std::string& name) {
  const auto toy_common = [] {
    Config c;
    c.set("plant", "toy");
    c.set("controller", "dynamic");
    c.set("controller.a_c", "0.4");
    c.set("controller.b_c", "1, -1.52");
    c.set("controller.c_c", "-0.5");
    c.set("controller.d_c", "0.3, 2.1");
    c.set("compare.static_k", "0.3, 4");
    c.set("sim.noise", "true");
    return c;
  };
  if (name == "toy-step") {
    Config c = toy_common();
    c.set("reference", "step");
    c.set("reference.amplitude", "10");
    c.set("reference.onset", "60");
    c.set("sim.horizon", "200");
    return c;
  }
  if (name == "toy-sine") {
    Config c = toy_common();
    c.set("reference", "sine");
    c.set("reference.amplitude", "10");
    c.set("reference.period", "100");
    c.set("sim.horizon", "300");
    return c;
  }
  Config c;
  c.set("plant", "canonical-rip");
  c.set("plant.sample_time", "0.001");
  c.set("sim.tracked", "0");
  if (name == "rip-lqr") {
    c.set("controller", "lqr");
    c.set("lqr.q", "1, 10, 100, 10, 1");
    c.set("lqr.r", "10");
    c.set("reference", "zero");
    c.set("sim.initial_state", "0, 0, 0.05, 0, 0");
    c.set("sim.horizon", "5000");
    return c;
  }
  if (name == "rip-bo") {
    c.set("controller", "synthesize");
    c.set("bo.n_max", "150");
    c.set("seed", "1");
    c.set("reference", "zero");
    c.set("sim.initial_state", "0, 0, 0.05, 0, 0");
    c.set("sim.horizon", "5000");
    return c;
  }
  if (name == "rip-track") {
    c.set("controller", "dynamic");
    c.set("controller.a_c", "-100");
    c.set("controller.b_c", "0, 0, 0, 0, 0");
    c.set("controller.c_c", "-0.5");
    c.set("controller.d_c", "-20.96, -39.76, 72.74, 92.61, -0.58");
    c.set("reference", "step");
    c.set("reference.amplitude", "0.5");
    c.set("reference.onset", "1000");
    c.set("sim.horizon", "40000");
    return c;
  }
  std::string names;
  for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
  throw ConfigError("unknown preset '" + name + "' (available: " + names + ")");
}

namespace detail {

/// Plant model of a `plant = file` config: keys a, b, c, d (matrices), optional
/// sample_time (discrete when present), process_noise and measurement_noise
/// (scalar variances or full matrices; default 0).
inline StateSpace load_plant_file(const std::string& path) {
  const Config f = Config::load(path);
  f.require_known({"a", "b", "c", "d", "sample_time", "process_noise", "measurement_noise"});
  for (const char* key : {"a", "b", "c"}) {
    if (!f.has(key)) throw ConfigError("plant file '" + path + "': missing '" + key + "'");
  }
  StateSpace ss;
  ss.A = f.get_matrix("a");
  ss.B = f.get_matrix("b");
  ss.C = f.get_matrix("c");
  ss.D = f.has("d") ? f.get_matrix("d") : Matrix::Zero(ss.C.rows(), ss.B.cols());
  if (f.has("sample_time")) ss.domain = TimeDomain::discrete(f.get_double("sample_time", 1.0));
  auto noise = [&](const char* key, Eigen::Index n) -> Matrix {
    if (!f.has(key)) return Matrix::Zero(n, n);
    const Matrix m = f.get_matrix(key);
    return m.size() == 1 ? Matrix(m(0, 0) * Matrix::Identity(n, n)) : m;
  };
  ss.process_noise = noise("process_noise", ss.A.rows());
  ss.measurement_noise = noise("measurement_noise", ss.C.rows());
  try {
    ss.validate();
  } catch (const Error& err) {
    throw ConfigError("plant file '" + path + "': " + err.what());
  }
  return ss;
}

inline StateSpace build_model(const ExperimentConfig& e) {
  StateSpace ss;
  switch (e.plant) {
    case PlantKind::kToy: ss = toy_plant(); break;
    case PlantKind::kCanonicalRip: ss = canonical_rip_model(); break;
    case PlantKind::kTable1: ss = linearize(PendulumParams::table1()); break;
    case PlantKind::kFile: ss = load_plant_file(e.plant_file); break;
  }
  if (e.process_noise) ss.process_noise = *e.process_noise * Matrix::Identity(ss.nx(), ss.nx());
  if (e.measurement_noise) ss.measurement_noise = *e.measurement_noise * Matrix::Identity(ss.ny(), ss.ny());
  return ss;
}

/// Tracked outputs: as configured, else all outputs when their count equals
/// the input count, else the first nu outputs.
inline std::vector<int> resolve_tracked_outputs(const ExperimentConfig& e, const StateSpace& ss) {
  if (!e.tracked_outputs.empty()) return e.tracked_outputs;
  std::vector<int> out;
  for (Eigen::Index i = 0; i < std::min(ss.ny(), ss.nu()); ++i) out.push_back(static_cast<int>(i));
  return out;
}

class CsvFile {
 public:
  explicit CsvFile(const std::filesystem::path& path) : out_(path) {
    if (!out_) throw Error("cannot write '" + path.string() + "'");
    out_ << std::setprecision(17);
  }
  std::ofstream& stream() { return out_; }

 private:
  std::ofstream out_;
};

/// Wide matrix dump: header `matrix,row,c0..`, one line per matrix row.
inline void write_matrices(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, Matrix>>& blocks) {
  Eigen::Index width = 0;
  for (const auto& [name, m] : blocks) width = std::max(width, m.cols());
  CsvFile f(path);
  auto& os = f.stream();
  os << "matrix,row";
  for (Eigen::Index j = 0; j < width; ++j) os << ",c" << j;
  os << '\n';
  for (const auto& [name, m] : blocks) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      os << name << ',' << i;
      for (Eigen::Index j = 0; j < width; ++j) {
        os << ',';
        if (j < m.cols()) os << m(i, j);
      }
      os << '\n';
    }
  }
}

inline void write_stability(const std::filesystem::path& path, const StabilityReport& report) {
  CsvFile f(path);
  auto& os = f.stream();
  os << "quantity,index,real,imag\n";
  for (std::size_t i = 0; i < report.eigenvalues.size(); ++i) {
    os << "eigenvalue," << i << ',' << report.eigenvalues[i].real() << ',' << report.eigenvalues[i].imag() << '\n';
  }
  os << "spectral_abscissa,," << report.spectral_abscissa << ",\n";
  os << "spectral_radius,," << report.spectral_radius << ",\n";
  os << "stable,," << (report.stable ? 1 : 0) << ",\n";
}

inline void write_history(const std::filesystem::path& dir, const BoResult& result) {
  const auto dim = result.history.empty() ? 0 : result.history.front().point.size();
  for (const bool dat : {false, true}) {
    CsvFile f(dir / (dat ? "history.dat" : "history.csv"));
    auto& os = f.stream();
    const char sep = dat ? ' ' : ',';
    os << (dat ? "# " : "") << "iteration";
    for (Eigen::Index j = 0; j < dim; ++j) os << sep << "theta" << j;
    os << sep << "objective" << sep << "best_so_far\n";
    double best = 0.0;
    for (std::size_t i = 0; i < result.history.size(); ++i) {
      const auto& ev = result.history[i];
      best = i == 0 ? ev.value : std::min(best, ev.value);
      os << i + 1;
      for (Eigen::Index j = 0; j < dim; ++j) os << sep << ev.point[j];
      os << sep << ev.value << sep << best << '\n';
    }
  }
}

inline void write_traces(const std::filesystem::path& dir, const std::string& stem, const SimResult& res) {
  {
    CsvFile f(dir / (stem + ".csv"));
    write_trace_csv(f.stream(), res);
  }
  CsvFile f(dir / (stem + ".dat"));
  write_trace_dat(f.stream(), res);
}

inline void write_config(const std::filesystem::path& path, const Config& cfg) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  os << "# resolved configuration\n";
  for (const auto& [k, v] : cfg.entries()) os << k << " = " << v << '\n';
}

}  // namespace detail

/// Controller produced by the controller stage.
struct ControllerDesign {
  ControllerKind kind = ControllerKind::kNone;
  std::optional<Matrix> static_gain;
  std::optional<DynamicController> dynamic;
  std::optional<BoResult> synthesis;
};

struct RunReport {
  int exit_code = kExitOk;
  std::string message;
  std::optional<StabilityReport> stability;
  std::optional<Metrics> metrics;
};

namespace detail {

inline ControllerDesign design_controller(const ExperimentConfig& e, const StateSpace& ss) {
  ControllerDesign d;
  d.kind = e.controller;
  switch (e.controller) {
    case ControllerKind::kNone:
      break;
    case ControllerKind::kLqr:
      if (ss.domain.is_discrete()) throw ConfigError("controller = lqr requires a continuous-time plant");
      try {
        e.lqr.validate(ss.nx(), ss.nu());
      } catch (const Error& err) {
        throw ConfigError(std::string("config: ") + err.what());
      }
      d.static_gain = lqr_gain(ss.A, ss.B, e.lqr.Q, e.lqr.R);
      break;
    case ControllerKind::kStatic:
      if (e.static_gain.rows() != ss.nu() || e.static_gain.cols() != ss.nx()) {
        throw ConfigError("config 'controller.k' must be nu x nx");
      }
      d.static_gain = e.static_gain;
      break;
    case ControllerKind::kDynamic:
      if (e.dynamic.nx() != ss.nx() || e.dynamic.nu() != ss.nu()) {
        throw ConfigError("config: dynamic controller does not match the plant dimensions");
      }
      d.dynamic = e.dynamic;
      break;
    case ControllerKind::kSynthesize: {
      const ControllerShape shape{ss.nx(), ss.nu(), e.controller_order};
      const SearchSpace space = e.search_space.value_or(default_search_space(shape, ss.domain));
      if (space.dim() != shape.parameter_count()) {
        throw ConfigError("config: search space must have " + std::to_string(shape.parameter_count()) +
                          " entries");
      }
      d.synthesis = synthesize_controller(ss, e.bo, space, e.objective, e.controller_order);
      d.dynamic = decode_controller(d.synthesis->best_point, shape);
      break;
    }
  }
  return d;
}

inline Matrix analysis_matrix(const StateSpace& ss, const ControllerDesign& d) {
  if (d.dynamic) return augmented_matrix(ss, *d.dynamic);
  if (d.static_gain) return closed_loop_matrix(ss, *d.static_gain);
  return ss.A;
}

inline SimResult simulate_static_law(const ExperimentConfig& e, const StateSpace& ss_d, const Matrix& k,
                                     const std::vector<int>& tracked) {
  SimOptions opt;
  opt.tracked_outputs = tracked;
  opt.initial_state = e.initial_state;
  opt.noise = e.noise;
  const Matrix f = static_prefilter(ss_d, k, tracked);
  return simulate_static(ss_d, k, f, e.reference, e.horizon, e.seed, opt);
}

inline SimResult simulate_design(const ExperimentConfig& e, const StateSpace& ss, const ControllerDesign& d,
                                 const std::vector<int>& tracked) {
  const bool continuous = !ss.domain.is_discrete();
  const StateSpace ss_d = continuous ? c2d_zoh(ss, e.sample_time) : ss;

  if (e.sim_model == SimModel::kNonlinear) {
    const DynamicController ctrl = d.dynamic ? *d.dynamic : DynamicController::from_gain(*d.static_gain);
    const Matrix f = dynamic_prefilter(ss_d, discretize_controller(ctrl, e.sample_time), tracked);
    NonlinearSimOptions opt;
    opt.tracked_outputs = tracked;
    opt.output_matrix = ss.C;
    if (e.initial_state) {
      if (e.initial_state->size() != kPendulumStates) throw ConfigError("config 'sim.initial_state' must have 5 entries");
      opt.initial_state = PendulumState(*e.initial_state);
    }
    if (e.noise) opt.process_noise = ss_d.process_noise;
    return simulate_nonlinear(PendulumParams::table1(), ctrl, f, e.reference, e.sample_time, e.horizon, e.seed,
                              opt);
  }
  if (e.initial_state && e.initial_state->size() != ss.nx()) {
    throw ConfigError("config 'sim.initial_state' must have nx entries");
  }
  if (d.dynamic) {
    const DynamicController ctrl = continuous ? discretize_controller(*d.dynamic, e.sample_time) : *d.dynamic;
    SimOptions opt;
    opt.tracked_outputs = tracked;
    opt.initial_state = e.initial_state;
    opt.noise = e.noise;
    const Matrix f = dynamic_prefilter(ss_d, ctrl, tracked);
    return simulate_dynamic(ss_d, ctrl, f, e.reference, e.horizon, e.seed, opt);
  }
  return simulate_static_law(e, ss_d, *d.static_gain, tracked);
}

inline void write_metrics(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, std::pair<Metrics, bool>>>& rows) {
  CsvFile f(path);
  auto& os = f.stream();
  os << "controller,peak_control,settling_step,settled,tracking_rmse,steady_state_error,band,diverged\n";
  for (const auto& [name, entry] : rows) {
    const auto& [m, diverged] = entry;
    os << name << ',' << m.peak_control << ',' << m.settling_step << ',' << (m.settled ? 1 : 0) << ','
       << m.tracking_rmse << ',' << m.steady_state_error << ',' << m.band << ',' << (diverged ? 1 : 0) << '\n';
  }
}

}  // namespace detail

/// Executes the pipeline up to `stage`, writing artifacts into e.output_dir.
/// Library errors propagate; run_guarded maps them to exit codes.
inline RunReport run_experiment(const ExperimentConfig& e, Stage stage) {
  namespace fs = std::filesystem;
  const fs::path dir(e.output_dir);
  fs::create_directories(dir);
  detail::write_config(dir / "manifest", e.to_config());

  RunReport report;
  const StateSpace ss = detail::build_model(e);
  ss.validate();
  detail::write_matrices(dir / "model.csv", {{"A", ss.A}, {"B", ss.B}, {"C", ss.C}, {"D", ss.D}});

  if (stage == Stage::kModel || e.controller == ControllerKind::kNone) {
    report.stability = stability_report(ss.A, ss.domain);
    detail::write_stability(dir / "stability.csv", *report.stability);
    if (stage == Stage::kModel) return report;
  }

  const ControllerDesign design = detail::design_controller(e, ss);
  if (design.synthesis) detail::write_history(dir, *design.synthesis);
  if (design.dynamic) {
    detail::write_matrices(dir / "controller.csv", {{"A_c", design.dynamic->A_c},
                                                    {"B_c", design.dynamic->B_c},
                                                    {"C_c", design.dynamic->C_c},
                                                    {"D_c", design.dynamic->D_c}});
  } else if (design.static_gain) {
    detail::write_matrices(dir / "controller.csv", {{"K", *design.static_gain}});
  }
  if (design.kind != ControllerKind::kNone) {
    report.stability = stability_report(detail::analysis_matrix(ss, design), ss.domain);
    detail::write_stability(dir / "stability.csv", *report.stability);
  }
  if (design.synthesis && !report.stability->stable) {
    report.exit_code = kExitSynthesisFailure;
    report.message = "synthesis did not find a stabilizing controller (best objective " +
                     detail::format_number(design.synthesis->best_value) + ")";
    return report;
  }
  if (stage == Stage::kAnalysis) return report;

  if (design.kind == ControllerKind::kNone) {
    throw ConfigError("simulation needs a controller (set 'controller')");
  }
  const std::vector<int> tracked = detail::resolve_tracked_outputs(e, ss);
  const SimResult main = detail::simulate_design(e, ss, design, tracked);
  detail::write_traces(dir, "trace", main);
  report.metrics = compute_metrics(main);
  std::vector<std::pair<std::string, std::pair<Metrics, bool>>> rows = {
      {detail::name_of(detail::controller_names(), design.kind), {*report.metrics, main.diverged}}};

  if (e.compare_static_gain) {
    if (e.sim_model == SimModel::kNonlinear) throw ConfigError("compare.static_k needs sim.model = linear");
    const StateSpace ss_d = ss.domain.is_discrete() ? ss : c2d_zoh(ss, e.sample_time);
    if (e.compare_static_gain->rows() != ss.nu() || e.compare_static_gain->cols() != ss.nx()) {
      throw ConfigError("config 'compare.static_k' must be nu x nx");
    }
    const SimResult cmp = detail::simulate_static_law(e, ss_d, *e.compare_static_gain, tracked);
    detail::write_traces(dir, "trace_static", cmp);
    rows.push_back({"compare-static", {compute_metrics(cmp), cmp.diverged}});
  }
  detail::write_metrics(dir / "metrics.csv", rows);
  return report;
}

/// run_experiment with errors mapped to exit codes and one-line diagnostics.
inline RunReport run_guarded(const ExperimentConfig& e, Stage stage, std::ostream& err = std::cerr) {
  RunReport report;
  try {
    report = run_experiment(e, stage);
  } catch (const ConfigError& ex) {
    report.exit_code = kExitConfigError;
    report.message = std::string("config error: ") + ex.what();
  } catch (const SynthesisError& ex) {
    report.exit_code = kExitSynthesisFailure;
    report.message = std::string("synthesis failed: ") + ex.what();
  } catch (const std::exception& ex) {
    report.exit_code = kExitFailure;
    report.message = std::string("error: ") + ex.what();
  }
  if (report.exit_code != kExitOk) err << report.message << '\n';
  return report;
}

}  // namespace furuta
