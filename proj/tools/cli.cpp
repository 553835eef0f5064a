#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>

#include "tvcov/backtest.hpp"
#include "tvcov/engine.hpp"
#include "tvcov/errors.hpp"
#include "tvcov/numerics.hpp"
#include "tvcov/parallel.hpp"
#include "tvcov/simulation.hpp"

namespace tvcov::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// Typed access to one JSON object; every key must be consumed.
class Fields {
public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ParameterError(where("") + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <typename T>
  void read(const std::string& key, T& dst) {
    used_.insert(key);
    if (!has(key)) return;
    dst = convert<T>(j_.at(key), where(key));
  }

  template <typename T>
  void read(const std::string& key, std::optional<T>& dst) {
    used_.insert(key);
    if (!has(key)) return;
    dst = convert<T>(j_.at(key), where(key));
  }

  void mark(const std::string& key) { used_.insert(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string where(const std::string& key) const { return key.empty() ? path_ : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ParameterError(where(it.key()) + ": unknown field");
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ParameterError(where + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ParameterError(where + ": expected an integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ParameterError(where + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ParameterError(where + ": expected a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) throw ParameterError(where + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

json load_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParameterError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write file");
  out << text;
}

json vector_json(const std::vector<double>& v) { return json(v); }

// ---- simulation config ----

SimulationConfig simulation_from_json(const json& j, const std::string& path) {
  SimulationConfig cfg;
  Fields f(j, path);
  f.read("N", cfg.N);
  f.read("T", cfg.T);
  f.read("R", cfg.R);
  f.read("replications", cfg.replications);
  std::string regime = to_string(cfg.regime);
  f.read("regime", regime);
  try {
    cfg.regime = regime_from_string(regime);
  } catch (const ParameterError& e) {
    throw ParameterError(f.where("regime") + ": expected 'smooth' or 'structural-break', got '" + regime + "'");
  }
  f.read("seed", cfg.seed);
  std::optional<std::vector<double>> mean;
  f.read("char_mean", mean);
  if (mean) {
    if (mean->size() != 2) throw ParameterError(f.where("char_mean") + ": expected two values");
    cfg.char_mean = Eigen::Vector2d((*mean)[0], (*mean)[1]);
  }
  f.read("char_corr", cfg.char_corr);
  if (f.has("char_cov")) {
    const json& cc = f.raw("char_cov");
    if (!cc.is_array() || cc.size() != 2) throw ParameterError(f.where("char_cov") + ": expected two matrices");
    for (std::size_t l = 0; l < 2; ++l) {
      try {
        cfg.char_cov[l] = matrix_from_json(cc[l]);
      } catch (const std::exception& e) {
        throw ParameterError(f.where("char_cov") + "[" + std::to_string(l) + "]: " + e.what());
      }
    }
  } else {
    f.mark("char_cov");
  }
  f.read("h_grid", cfg.h_grid);
  f.read("C_grid", cfg.C_grid);
  f.read("J", cfg.J);
  f.read("eta", cfg.eta);
  f.read("intercept", cfg.intercept);
  f.read("ridge", cfg.ridge);
  f.read("anchors", cfg.anchors);
  f.read("anchor_h", cfg.anchor_h);
  f.read("break_cos_horizon", cfg.break_cos_horizon);
  f.finish();
  return cfg;
}

json simulation_to_json(const SimulationConfig& cfg) {
  json j;
  j["N"] = cfg.N;
  j["T"] = cfg.T;
  j["R"] = cfg.R;
  j["replications"] = cfg.replications;
  j["regime"] = to_string(cfg.regime);
  j["seed"] = cfg.seed;
  j["char_mean"] = {cfg.char_mean(0), cfg.char_mean(1)};
  j["char_corr"] = cfg.char_corr;
  if (cfg.char_cov[0].size() != 0) j["char_cov"] = {matrix_to_json(cfg.char_cov[0]), matrix_to_json(cfg.char_cov[1])};
  j["h_grid"] = vector_json(cfg.h_grid);
  j["C_grid"] = vector_json(cfg.C_grid);
  j["J"] = cfg.J;
  j["eta"] = cfg.eta;
  j["intercept"] = cfg.intercept;
  if (cfg.ridge) j["ridge"] = *cfg.ridge;
  j["anchors"] = cfg.anchors;
  j["anchor_h"] = cfg.anchor_h;
  j["break_cos_horizon"] = cfg.break_cos_horizon;
  return j;
}

void wrap_validate(const std::function<void()>& fn, const std::string& path) {
  try {
    fn();
  } catch (const ParameterError& e) {
    throw ParameterError(path + "." + e.what());
  }
}

// ---- estimate config ----

struct EstimateRun {
  EstimatorConfig est;
  std::string anchors = "interior";  // "all", "interior" or explicit list
  std::vector<int> anchor_list;
};

EstimateRun estimate_from_json(const json& j, const std::string& path) {
  EstimateRun run;
  Fields f(j, path);
  std::string method = to_string(run.est.method);
  f.read("method", method);
  try {
    run.est.method = method_from_string(method);
  } catch (const ParameterError&) {
    throw ParameterError(f.where("method") + ": expected 'local-pca' or 'local-ppca', got '" + method + "'");
  }
  f.read("h", run.est.h);
  f.read("C_NT", run.est.C);
  f.read("R", run.est.R);
  f.read("J", run.est.J);
  f.read("eta", run.est.eta);
  f.read("intercept", run.est.intercept);
  f.read("ridge", run.est.ridge);
  if (f.has("anchors")) {
    const json& a = f.raw("anchors");
    if (a.is_string()) {
      run.anchors = a.get<std::string>();
      if (run.anchors != "all" && run.anchors != "interior") {
        throw ParameterError(f.where("anchors") + ": expected 'all', 'interior' or a list of integers");
      }
    } else {
      run.anchors = "list";
      run.anchor_list = Fields::convert<std::vector<int>>(a, f.where("anchors"));
    }
  } else {
    f.mark("anchors");
  }
  f.finish();
  return run;
}

json estimate_to_json(const EstimateRun& run) {
  json j = to_json(run.est);
  if (run.anchors == "list") {
    j["anchors"] = run.anchor_list;
  } else {
    j["anchors"] = run.anchors;
  }
  return j;
}

std::vector<int> parse_anchor_flag(const std::string& s, std::string& mode) {
  if (s == "all" || s == "interior") {
    mode = s;
    return {};
  }
  mode = "list";
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    try {
      if (colon != std::string::npos) {
        const int a = std::stoi(item.substr(0, colon));
        const int b = std::stoi(item.substr(colon + 1));
        for (int r = a; r <= b; ++r) out.push_back(r);
      } else {
        out.push_back(std::stoi(item));
      }
    } catch (const std::logic_error&) {
      throw ParameterError("--anchors: cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw ParameterError("--anchors: empty anchor list");
  return out;
}

// ---- backtest config ----

struct BacktestRun {
  BacktestConfig base;
  std::vector<std::string> estimators{"sample", "local-pca"};
  std::vector<double> tune_h;
  std::vector<double> tune_C;
  std::string period_label;
};

BacktestRun backtest_from_json(const json& j, const std::string& path) {
  BacktestRun run;
  Fields f(j, path);
  f.read("initial_training", run.base.initial_training);
  f.read("holding_length", run.base.holding_length);
  f.read("R", run.base.R);
  f.read("h", run.base.h);
  f.read("C_NT", run.base.C);
  f.read("J", run.base.J);
  f.read("eta", run.base.eta);
  f.read("intercept", run.base.intercept);
  f.read("ridge", run.base.ridge);
  f.read("annualization", run.base.annualization);
  f.read("drift", run.base.drift);
  f.read("estimators", run.estimators);
  for (std::size_t i = 0; i < run.estimators.size(); ++i) {
    try {
      estimator_from_string(run.estimators[i]);
    } catch (const ParameterError& e) {
      throw ParameterError(f.where("estimators") + "[" + std::to_string(i) + "]: " + e.what());
    }
  }
  if (f.has("tune")) {
    Fields t(f.raw("tune"), f.where("tune"));
    t.read("h_grid", run.tune_h);
    t.read("C_grid", run.tune_C);
    t.finish();
    if (run.tune_h.empty() || run.tune_C.empty()) throw ParameterError(f.where("tune") + ": both grids must be nonempty");
  } else {
    f.mark("tune");
  }
  f.read("period_label", run.period_label);
  f.finish();
  return run;
}

json backtest_to_json(const BacktestRun& run) {
  json j;
  j["initial_training"] = run.base.initial_training;
  j["holding_length"] = run.base.holding_length;
  j["R"] = run.base.R;
  j["h"] = run.base.h;
  j["C_NT"] = run.base.C;
  j["J"] = run.base.J;
  j["eta"] = run.base.eta;
  j["intercept"] = run.base.intercept;
  if (run.base.ridge) j["ridge"] = *run.base.ridge;
  j["annualization"] = run.base.annualization;
  j["drift"] = run.base.drift;
  j["estimators"] = run.estimators;
  if (!run.tune_h.empty()) j["tune"] = {{"h_grid", run.tune_h}, {"C_grid", run.tune_C}};
  if (!run.period_label.empty()) j["period_label"] = run.period_label;
  return j;
}

// ---- manifest ----

struct Manifest {
  std::string command;
  json config;
  json inputs = json::object();
  std::vector<std::string> outputs;
};

void add_input(Manifest& m, const std::string& role, const fs::path& path) {
  const fs::path abs = fs::weakly_canonical(fs::absolute(path));
  m.inputs[role] = {{"path", abs.string()}, {"fnv1a", fnv1a_file(path)}};
}

void write_manifest(const fs::path& out_dir, const Manifest& m) {
  json j;
  j["tool"] = "tvcov";
  j["version"] = kVersion;
  j["command"] = m.command;
  j["config"] = m.config;
  j["inputs"] = m.inputs;
  json outs = json::object();
  for (const auto& name : m.outputs) outs[name] = fnv1a_file(out_dir / name);
  j["outputs"] = outs;
  write_text(out_dir / "manifest.json", j.dump(2) + "\n");
}

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(dir.string() + ": cannot create output directory: " + ec.message());
}

struct Common {
  std::string config_path;
  std::string out_dir;
  unsigned threads = 0;
  bool verbose = false;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--config", c.config_path, "JSON config file");
  auto* o = cmd->add_option("--out", c.out_dir, "Output directory");
  if (needs_out) o->required();
  cmd->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
  cmd->add_flag("-v,--verbose", c.verbose, "Progress on stderr");
}

json config_or_empty(const Common& c) { return c.config_path.empty() ? json::object() : load_json(c.config_path); }

// ---- commands ----

struct SimFlags {
  std::optional<int> N, T, replications, replication;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> regime;
};

void apply_sim_flags(SimulationConfig& cfg, const SimFlags& fl) {
  if (fl.N) cfg.N = *fl.N;
  if (fl.T) cfg.T = *fl.T;
  if (fl.replications) cfg.replications = *fl.replications;
  if (fl.seed) cfg.seed = *fl.seed;
  if (fl.regime) {
    try {
      cfg.regime = regime_from_string(*fl.regime);
    } catch (const ParameterError&) {
      throw ParameterError("--regime: expected 'smooth' or 'structural-break', got '" + *fl.regime + "'");
    }
  }
}

int do_simulate(const SimulationConfig& cfg, const fs::path& out_dir, unsigned threads, bool verbose,
                std::ostream& out, std::ostream& err) {
  wrap_validate([&] { cfg.validate(); }, "config");
  prepare_out_dir(out_dir);
  if (verbose) err << "simulate: " << cfg.replications << " replications, N=" << cfg.N << ", T=" << cfg.T << "\n";
  const MonteCarloResult res = run_monte_carlo(cfg, threads);
  Manifest m;
  m.command = "simulate";
  m.config = simulation_to_json(cfg);
  write_monte_carlo_csv((out_dir / "mc_results.csv").string(), res);
  write_monte_carlo_summary_csv((out_dir / "mc_summary.csv").string(), res);
  m.outputs = {"mc_results.csv", "mc_summary.csv"};
  json status = {{"completed", res.completed}, {"failed", res.failed}, {"failures", res.failure_messages}};
  write_text(out_dir / "mc_status.json", status.dump(2) + "\n");
  m.outputs.push_back("mc_status.json");
  write_manifest(out_dir, m);
  out << "simulate: " << res.completed << " replications completed, " << res.failed << " failed -> "
      << out_dir.string() << "\n";
  for (const auto& msg : res.failure_messages) err << "warning: " << msg << "\n";
  if (res.completed == 0) throw NumericError("simulate: every replication failed");
  return kOk;
}

int do_generate(const SimulationConfig& cfg, int replication, const fs::path& out_dir, std::ostream& out) {
  wrap_validate([&] { cfg.validate(); }, "config");
  if (replication < 0) throw ParameterError("--replication: must be >= 0");
  prepare_out_dir(out_dir);
  const SimulatedDataset ds = simulate_dataset(cfg, replication);
  save_panel(out_dir / "panel.csv", ds.panel);
  std::vector<std::string> outputs{"panel.csv"};
  for (int l = 0; l < ds.chars.d(); ++l) {
    const std::string name = ds.chars.names[static_cast<std::size_t>(l)] + ".csv";
    write_matrix_csv(out_dir / name, ds.chars.values[static_cast<std::size_t>(l)], ds.chars.entity_ids,
                     ds.chars.period_ids);
    outputs.push_back(name);
  }
  write_matrix_csv(out_dir / "factors.csv", ds.factors, {"f1", "f2"}, ds.panel.period_ids);
  outputs.push_back("factors.csv");
  Manifest m;
  m.command = "generate";
  m.config = simulation_to_json(cfg);
  m.config["replication"] = replication;
  m.outputs = outputs;
  write_manifest(out_dir, m);
  out << "generate: N=" << cfg.N << ", T=" << cfg.T << " -> " << out_dir.string() << "\n";
  return kOk;
}

int do_tune(const SimulationConfig& cfg, int replication, const fs::path& out_dir, unsigned threads,
            std::ostream& out) {
  wrap_validate([&] { cfg.validate(); }, "config");
  if (replication < 0) throw ParameterError("--replication: must be >= 0");
  prepare_out_dir(out_dir);
  const SimulatedDataset ds = simulate_dataset(cfg, replication);
  const std::vector<int> anchors = cfg.evaluation_anchors();
  std::vector<Eigen::MatrixXd> truth_inv;
  for (int r : anchors) truth_inv.push_back(ds.truth.sigma_y_inv(r));
  std::ofstream csv(out_dir / "tune.csv", std::ios::binary);
  if (!csv) throw DataError((out_dir / "tune.csv").string() + ": cannot write file");
  csv << "anchor,method,h_star,C_star,inv_cov_error,ok,message\n";
  for (Method method : {Method::local_pca, Method::local_ppca}) {
    EstimatorConfig base;
    base.method = method;
    base.R = cfg.R;
    base.J = cfg.J;
    base.eta = cfg.eta;
    base.intercept = cfg.intercept;
    base.ridge = cfg.ridge;
    const auto res = tune_oracle(ds.panel, &ds.chars, anchors, truth_inv, cfg.h_grid, cfg.C_grid, base, threads);
    for (const auto& r : res) {
      std::string msg = r.message;
      for (char& c : msg)
        if (c == ',' || c == '\n') c = ';';
      csv << r.anchor << ',' << to_string(method) << ',' << format_double(r.h) << ',' << format_double(r.C) << ','
          << format_double(r.error) << ',' << (r.ok ? 1 : 0) << ',' << msg << '\n';
    }
  }
  csv.close();
  Manifest m;
  m.command = "tune";
  m.config = simulation_to_json(cfg);
  m.config["replication"] = replication;
  m.outputs = {"tune.csv"};
  write_manifest(out_dir, m);
  out << "tune: " << anchors.size() << " anchors -> " << out_dir.string() << "\n";
  return kOk;
}

struct EstimateInputs {
  std::string panel;
  std::vector<std::string> chars;
  std::string layout = "rows";
};

Layout layout_from(const std::string& s) {
  if (s == "rows") return Layout::entities_as_rows;
  if (s == "columns") return Layout::entities_as_columns;
  throw ParameterError("--layout: expected 'rows' or 'columns', got '" + s + "'");
}

int exit_code_of(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const ParameterError&) {
    return kUsage;
  } catch (const DataError&) {
    return kData;
  } catch (const NumericError&) {
    return kNumeric;
  } catch (...) {
    return kInternal;
  }
}

int do_estimate(const EstimateRun& run, const EstimateInputs& in, const fs::path& out_dir, unsigned threads,
                bool verbose, std::ostream& out, std::ostream& err) {
  wrap_validate([&] { run.est.validate(); }, "config");
  if (run.est.method == Method::local_ppca && in.chars.empty()) {
    throw ParameterError("method local-ppca requires characteristics (--chars)");
  }
  if (in.panel.empty()) throw ParameterError("--panel is required");
  const Layout layout = layout_from(in.layout);
  const PanelData panel = load_panel(in.panel, layout);
  std::optional<CharacteristicsPanel> chars;
  std::vector<fs::path> char_paths(in.chars.begin(), in.chars.end());
  if (!in.chars.empty()) chars = load_characteristics(char_paths, panel, layout);
  if (run.est.method == Method::local_pca) chars.reset();

  std::vector<int> anchors;
  if (run.anchors == "all") {
    for (int r = 1; r <= panel.T(); ++r) anchors.push_back(r);
  } else if (run.anchors == "interior") {
    const auto [lo, hi] = interior_region(panel.T(), run.est.h);
    for (int r = std::max(lo, 1); r <= hi; ++r) anchors.push_back(r);
  } else {
    anchors = run.anchor_list;
  }
  for (int r : anchors) {
    if (r < 1 || r > panel.T()) {
      throw ParameterError("anchor " + std::to_string(r) + " outside 1.." + std::to_string(panel.T()));
    }
  }
  prepare_out_dir(out_dir);
  if (verbose) err << "estimate: " << anchors.size() << " anchors\n";

  std::vector<std::optional<CovarianceEstimate>> slots(anchors.size());
  std::vector<std::exception_ptr> errors(anchors.size());
  std::vector<std::string> messages(anchors.size());
  parallel_for(anchors.size(), threads, [&](std::size_t i) {
    try {
      slots[i] = estimate_at(panel, chars ? &*chars : nullptr, anchors[i], run.est);
    } catch (const std::exception& e) {
      errors[i] = std::current_exception();
      messages[i] = e.what();
    }
  });

  Manifest m;
  m.command = "estimate";
  m.config = estimate_to_json(run);
  m.config["layout"] = in.layout;
  add_input(m, "panel", in.panel);
  for (std::size_t l = 0; l < in.chars.size(); ++l) add_input(m, "chars" + std::to_string(l), in.chars[l]);

  std::ostringstream summary;
  summary << "anchor,period,boundary_flag,applied_C,zero_fraction,jitter,status\n";
  int code = kOk;
  char base[32];
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const int r = anchors[i];
    const std::string& period = panel.period_ids[static_cast<std::size_t>(r - 1)];
    if (!slots[i]) {
      err << "error: anchor " << r << " (" << period << "): " << messages[i] << "\n";
      if (code == kOk) code = exit_code_of(errors[i]);
      summary << r << ',' << period << ",,,,,failed\n";
      continue;
    }
    const CovarianceEstimate& est = *slots[i];
    std::snprintf(base, sizeof(base), "anchor_%04d", r);
    json j = to_json(est);
    j["period"] = period;
    write_text(out_dir / (std::string(base) + ".json"), j.dump(2) + "\n");
    write_matrix_csv(out_dir / (std::string(base) + "_sigma_y.csv"), est.sigma_y, panel.entity_ids, panel.entity_ids);
    write_matrix_csv(out_dir / (std::string(base) + "_sigma_y_inv.csv"), est.sigma_y_inv, panel.entity_ids,
                     panel.entity_ids);
    write_matrix_csv(out_dir / (std::string(base) + "_loadings.csv"), est.loadings, panel.entity_ids);
    for (const char* suffix : {".json", "_sigma_y.csv", "_sigma_y_inv.csv", "_loadings.csv"}) {
      m.outputs.push_back(std::string(base) + suffix);
    }
    summary << r << ',' << period << ',' << to_string(est.boundary_flag) << ',' << format_double(est.applied_C) << ','
            << format_double(est.zero_fraction) << ',' << format_double(est.jitter) << ",ok\n";
  }
  write_text(out_dir / "estimates.csv", summary.str());
  m.outputs.push_back("estimates.csv");
  const RateDiagnostics rd =
      run.est.method == Method::local_ppca
          ? rate_diagnostics(panel.N(), panel.T(), run.est.h, run.est.J, run.est.eta)
          : rate_diagnostics(panel.N(), panel.T(), run.est.h);
  write_text(out_dir / "rates.json", to_json(rd).dump(2) + "\n");
  m.outputs.push_back("rates.json");
  write_manifest(out_dir, m);
  out << "estimate: " << anchors.size() << " anchors -> " << out_dir.string() << "\n";
  return code;
}

struct BacktestInputs {
  std::string panel;
  std::vector<std::string> chars;
  std::string factors;
  std::string layout = "rows";
};

int do_backtest(const BacktestRun& run, const BacktestInputs& in, const fs::path& out_dir, unsigned threads,
                bool verbose, std::ostream& out, std::ostream& err) {
  wrap_validate([&] { run.base.validate(); }, "config");
  if (run.estimators.empty()) throw ParameterError("config.estimators: at least one estimator is required");
  if (in.panel.empty()) throw ParameterError("--panel is required");
  const Layout layout = layout_from(in.layout);
  const PanelData panel = load_panel(in.panel, layout);
  std::optional<CharacteristicsPanel> chars;
  if (!in.chars.empty()) {
    chars = load_characteristics(std::vector<fs::path>(in.chars.begin(), in.chars.end()), panel, layout);
  }
  std::optional<FactorSeries> factors;
  if (!in.factors.empty()) factors = load_factors(in.factors, panel);

  std::vector<BacktestConfig> cfgs;
  for (const auto& name : run.estimators) {
    BacktestConfig c = run.base;
    c.estimator = estimator_from_string(name);
    if ((c.estimator == EstimatorKind::static_ppca || c.estimator == EstimatorKind::local_ppca) && !chars) {
      throw ParameterError("estimator " + name + " requires characteristics (--chars)");
    }
    if (c.estimator == EstimatorKind::observed_factor && !factors) {
      throw ParameterError("estimator observed-factor requires --factors");
    }
    cfgs.push_back(c);
  }
  const Schedule sched = build_schedule(panel.T(), run.base);
  for (const auto& w : sched.warnings) err << "warning: " << w << "\n";
  prepare_out_dir(out_dir);
  if (verbose) err << "backtest: " << sched.windows.size() << " rebalances, " << cfgs.size() << " estimators\n";

  const CharacteristicsPanel* cp = chars ? &*chars : nullptr;
  const FactorSeries* fp = factors ? &*factors : nullptr;
  std::vector<BacktestResult> results(cfgs.size());
  std::vector<std::optional<BacktestConfig>> tuned(cfgs.size());
  std::vector<std::exception_ptr> errors(cfgs.size());
  const bool tune = !run.tune_h.empty();
  parallel_for(cfgs.size(), tune ? 1u : threads, [&](std::size_t k) {
    try {
      const bool time_varying =
          cfgs[k].estimator == EstimatorKind::local_pca || cfgs[k].estimator == EstimatorKind::local_ppca;
      if (tune && time_varying) {
        BacktestTuning t = tune_backtest(panel, cp, fp, cfgs[k], run.tune_h, run.tune_C, threads);
        tuned[k] = t.best;
        results[k] = std::move(t.result);
      } else {
        results[k] = run_backtest(panel, cp, fp, cfgs[k]);
      }
    } catch (...) {
      errors[k] = std::current_exception();
    }
  });
  for (std::size_t k = 0; k < cfgs.size(); ++k) {
    if (errors[k]) {
      try {
        std::rethrow_exception(errors[k]);
      } catch (const Error& e) {
        err << "error: estimator " << run.estimators[k] << ": " << e.what() << "\n";
      }
      return exit_code_of(errors[k]);
    }
  }

  std::vector<std::string> labels;
  std::map<std::string, int> seen;
  for (const auto& name : run.estimators) {
    const int n = ++seen[name];
    labels.push_back(n == 1 ? name : name + "_" + std::to_string(n));
  }
  std::string period_label = run.period_label;
  if (period_label.empty() && !sched.windows.empty()) {
    period_label = panel.period_ids[static_cast<std::size_t>(sched.windows.front().hold_start - 1)] + "-" +
                   panel.period_ids[static_cast<std::size_t>(sched.windows.back().hold_end - 1)];
  }

  Manifest m;
  m.command = "backtest";
  m.config = backtest_to_json(run);
  m.config["layout"] = in.layout;
  add_input(m, "panel", in.panel);
  for (std::size_t l = 0; l < in.chars.size(); ++l) add_input(m, "chars" + std::to_string(l), in.chars[l]);
  if (!in.factors.empty()) add_input(m, "factors", in.factors);

  write_backtest_summary_csv((out_dir / "backtest_summary.csv").string(), results, labels, period_label);
  write_backtest_returns_csv((out_dir / "backtest_returns.csv").string(), results, labels, panel);
  m.outputs = {"backtest_summary.csv", "backtest_returns.csv"};
  for (std::size_t k = 0; k < results.size(); ++k) {
    const std::string name = "weights_" + labels[k] + ".csv";
    write_backtest_weights_csv((out_dir / name).string(), results[k], panel);
    m.outputs.push_back(name);
  }
  if (tune) {
    json t = json::object();
    for (std::size_t k = 0; k < results.size(); ++k) {
      if (tuned[k]) t[labels[k]] = {{"h", tuned[k]->h}, {"C_NT", tuned[k]->C}};
    }
    write_text(out_dir / "backtest_tuning.json", t.dump(2) + "\n");
    m.outputs.push_back("backtest_tuning.json");
  }
  write_manifest(out_dir, m);
  for (std::size_t k = 0; k < results.size(); ++k) {
    out << labels[k] << ": ex-post std " << format_double(results[k].ex_post_std_annualized_pct) << "%\n";
  }
  return kOk;
}

std::vector<std::string> manifest_input_paths(const json& inputs, const std::string& prefix) {
  std::vector<std::string> out;
  for (int l = 0;; ++l) {
    const std::string key = prefix + std::to_string(l);
    if (!inputs.contains(key)) break;
    out.push_back(inputs.at(key).at("path").get<std::string>());
  }
  return out;
}

int do_replay(const std::string& manifest_path, const fs::path& out_dir, unsigned threads, bool verbose,
              std::ostream& out, std::ostream& err) {
  const json man = load_json(manifest_path);
  Fields f(man, "manifest");
  std::string command, tool, version;
  f.read("tool", tool);
  f.read("version", version);
  f.read("command", command);
  if (!f.has("config")) throw ParameterError("manifest.config: missing");
  json config = f.raw("config");
  const json inputs = f.has("inputs") ? f.raw("inputs") : json::object();
  const json expected = f.has("outputs") ? f.raw("outputs") : json::object();
  f.finish();

  for (auto it = inputs.begin(); it != inputs.end(); ++it) {
    const std::string path = it.value().at("path").get<std::string>();
    const std::string hash = it.value().at("fnv1a").get<std::string>();
    if (fnv1a_file(path) != hash) throw DataError(path + ": input content differs from the manifest hash");
  }

  int code = kOk;
  if (command == "simulate") {
    code = do_simulate(simulation_from_json(config, "manifest.config"), out_dir, threads, verbose, out, err);
  } else if (command == "generate" || command == "tune") {
    int rep = 0;
    if (config.contains("replication")) {
      rep = Fields::convert<int>(config.at("replication"), "manifest.config.replication");
      config.erase("replication");
    }
    const SimulationConfig cfg = simulation_from_json(config, "manifest.config");
    code = command == "generate" ? do_generate(cfg, rep, out_dir, out) : do_tune(cfg, rep, out_dir, threads, out);
  } else if (command == "estimate" || command == "backtest") {
    std::string layout = "rows";
    if (config.contains("layout")) {
      layout = Fields::convert<std::string>(config.at("layout"), "manifest.config.layout");
      config.erase("layout");
    }
    if (command == "estimate") {
      EstimateInputs in{inputs.at("panel").at("path").get<std::string>(), manifest_input_paths(inputs, "chars"), layout};
      code = do_estimate(estimate_from_json(config, "manifest.config"), in, out_dir, threads, verbose, out, err);
    } else {
      BacktestInputs in{inputs.at("panel").at("path").get<std::string>(), manifest_input_paths(inputs, "chars"),
                        inputs.contains("factors") ? inputs.at("factors").at("path").get<std::string>() : "", layout};
      code = do_backtest(backtest_from_json(config, "manifest.config"), in, out_dir, threads, verbose, out, err);
    }
  } else {
    throw ParameterError("manifest.command: unknown command '" + command + "'");
  }

  int mismatches = 0;
  for (auto it = expected.begin(); it != expected.end(); ++it) {
    const fs::path p = out_dir / it.key();
    const std::string got = fs::exists(p) ? fnv1a_file(p) : "missing";
    if (got != it.value().get<std::string>()) {
      ++mismatches;
      err << "replay: " << it.key() << " differs from the manifest\n";
    }
  }
  out << "replay: " << expected.size() - static_cast<std::size_t>(mismatches) << "/" << expected.size()
      << " outputs reproduced\n";
  if (code != kOk) return code;
  return mismatches == 0 ? kOk : kData;
}

int run_app(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Time-varying high-dimensional covariance estimation", "tvcov"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  app.set_help_flag("--help", "Print this help message and exit");

  Common sim_c, gen_c, tune_c, est_c, bt_c, rep_c;
  SimFlags sim_f, gen_f, tune_f;

  auto add_sim_flags = [](CLI::App* cmd, SimFlags& f) {
    cmd->add_option("--N", f.N, "Cross-section size");
    cmd->add_option("--T", f.T, "Sample length");
    cmd->add_option("--seed", f.seed, "Base seed");
    cmd->add_option("--regime", f.regime, "smooth or structural-break");
  };

  auto* sim = app.add_subcommand("simulate", "Monte Carlo comparison of local PCA and local PPCA");
  add_common(sim, sim_c);
  add_sim_flags(sim, sim_f);
  sim->add_option("--replications", sim_f.replications, "Number of replications");

  auto* gen = app.add_subcommand("generate", "Write one simulated dataset as CSV");
  add_common(gen, gen_c);
  add_sim_flags(gen, gen_f);
  gen->add_option("--replication", gen_f.replication, "Replication index (default 0)");

  auto* tun = app.add_subcommand("tune", "Oracle (h, C_NT) per anchor on one simulated dataset");
  add_common(tun, tune_c);
  add_sim_flags(tun, tune_f);
  tun->add_option("--replication", tune_f.replication, "Replication index (default 0)");

  EstimateInputs est_in;
  std::optional<std::string> est_method, est_anchors;
  std::optional<double> est_h, est_cnt, est_eta;
  std::optional<int> est_R, est_J;
  auto* est = app.add_subcommand("estimate", "Covariance estimates at chosen anchors");
  add_common(est, est_c);
  est->add_option("--panel", est_in.panel, "Panel CSV")->required();
  est->add_option("--chars", est_in.chars, "Characteristic CSVs (one per characteristic)");
  est->add_option("--layout", est_in.layout, "rows (entities as rows) or columns");
  est->add_option("--method", est_method, "local-pca or local-ppca");
  est->add_option("--anchors", est_anchors, "all, interior, or a list such as 10,20:25");
  est->add_option("--h", est_h, "Bandwidth");
  est->add_option("--cnt", est_cnt, "Threshold constant C_NT");
  est->add_option("--R", est_R, "Number of factors");
  est->add_option("--J", est_J, "Sieve degree");
  est->add_option("--eta", est_eta, "Sieve smoothness exponent");

  BacktestInputs bt_in;
  std::vector<std::string> bt_estimators;
  std::optional<int> bt_training, bt_holding, bt_R, bt_J, bt_ann;
  std::optional<double> bt_h, bt_cnt;
  bool bt_drift = false;
  auto* bt = app.add_subcommand("backtest", "Global minimum-variance backtest");
  add_common(bt, bt_c);
  bt->add_option("--panel", bt_in.panel, "Return panel CSV")->required();
  bt->add_option("--chars", bt_in.chars, "Characteristic CSVs");
  bt->add_option("--factors", bt_in.factors, "Observed factor CSV (factors as rows)");
  bt->add_option("--layout", bt_in.layout, "rows (entities as rows) or columns");
  bt->add_option("--estimator", bt_estimators, "Estimator (repeatable)");
  bt->add_option("--training", bt_training, "Initial training periods");
  bt->add_option("--holding", bt_holding, "Holding periods");
  bt->add_option("--R", bt_R, "Number of factors");
  bt->add_option("--h", bt_h, "Bandwidth");
  bt->add_option("--cnt", bt_cnt, "Threshold constant C_NT");
  bt->add_option("--J", bt_J, "Sieve degree");
  bt->add_option("--annualization", bt_ann, "Periods per year");
  bt->add_flag("--drift", bt_drift, "Let weights drift inside holding windows");

  std::string manifest_path;
  auto* rep = app.add_subcommand("replay", "Rerun a command from its manifest and compare outputs");
  rep->add_option("--manifest", manifest_path, "manifest.json")->required();
  rep->add_option("--out", rep_c.out_dir, "Output directory")->required();
  rep->add_option("--threads", rep_c.threads, "Worker threads (0 = all cores)");
  rep->add_flag("-v,--verbose", rep_c.verbose, "Progress on stderr");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  auto sim_config = [](const Common& c, const SimFlags& f) {
    SimulationConfig cfg = simulation_from_json(config_or_empty(c), "config");
    apply_sim_flags(cfg, f);
    return cfg;
  };

  if (*sim) return do_simulate(sim_config(sim_c, sim_f), sim_c.out_dir, sim_c.threads, sim_c.verbose, out, err);
  if (*gen) return do_generate(sim_config(gen_c, gen_f), gen_f.replication.value_or(0), gen_c.out_dir, out);
  if (*tun) return do_tune(sim_config(tune_c, tune_f), tune_f.replication.value_or(0), tune_c.out_dir, tune_c.threads, out);
  if (*est) {
    EstimateRun run = estimate_from_json(config_or_empty(est_c), "config");
    if (est_method) {
      try {
        run.est.method = method_from_string(*est_method);
      } catch (const ParameterError&) {
        throw ParameterError("--method: expected 'local-pca' or 'local-ppca', got '" + *est_method + "'");
      }
    }
    if (est_anchors) run.anchor_list = parse_anchor_flag(*est_anchors, run.anchors);
    if (est_h) run.est.h = *est_h;
    if (est_cnt) run.est.C = *est_cnt;
    if (est_R) run.est.R = *est_R;
    if (est_J) run.est.J = *est_J;
    if (est_eta) run.est.eta = *est_eta;
    return do_estimate(run, est_in, est_c.out_dir, est_c.threads, est_c.verbose, out, err);
  }
  if (*bt) {
    BacktestRun run = backtest_from_json(config_or_empty(bt_c), "config");
    if (!bt_estimators.empty()) {
      for (const auto& e : bt_estimators) estimator_from_string(e);
      run.estimators = bt_estimators;
    }
    if (bt_training) run.base.initial_training = *bt_training;
    if (bt_holding) run.base.holding_length = *bt_holding;
    if (bt_R) run.base.R = *bt_R;
    if (bt_h) run.base.h = *bt_h;
    if (bt_cnt) run.base.C = *bt_cnt;
    if (bt_J) run.base.J = *bt_J;
    if (bt_ann) run.base.annualization = *bt_ann;
    if (bt_drift) run.base.drift = true;
    return do_backtest(run, bt_in, bt_c.out_dir, bt_c.threads, bt_c.verbose, out, err);
  }
  if (*rep) return do_replay(manifest_path, rep_c.out_dir, rep_c.threads, rep_c.verbose, out, err);
  return kUsage;
}

}  // namespace

std::string fnv1a_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open file");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return run_app(args, out, err);
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    err << "numerical error: " << e.what();
    if (e.lambda_min()) err << " (lambda_min=" << format_double(*e.lambda_min()) << ")";
    err << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace tvcov::cli
