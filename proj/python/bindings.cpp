#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "tvcov/backtest.hpp"
#include "tvcov/engine.hpp"
#include "tvcov/errors.hpp"
#include "tvcov/kernel.hpp"
#include "tvcov/numerics.hpp"
#include "tvcov/poet.hpp"
#include "tvcov/simulation.hpp"

namespace py = pybind11;
using namespace tvcov;

namespace {

PanelData make_panel(const Eigen::MatrixXd& Y) {
  PanelData p;
  p.values = Y;
  p.entity_ids = numbered_labels("e", static_cast<int>(Y.rows()));
  p.period_ids = numbered_labels("t", static_cast<int>(Y.cols()));
  p.validate();
  return p;
}

std::optional<CharacteristicsPanel> make_chars(const PanelData& panel, const std::vector<Eigen::MatrixXd>& chars) {
  if (chars.empty()) return std::nullopt;
  CharacteristicsPanel c;
  c.values = chars;
  c.names = numbered_labels("x", static_cast<int>(chars.size()));
  c.entity_ids = panel.entity_ids;
  c.period_ids = panel.period_ids;
  c.validate_against(panel);
  return c;
}

py::dict estimate_dict(const CovarianceEstimate& ce) {
  py::dict d;
  d["anchor"] = ce.anchor;
  d["sigma_y"] = ce.sigma_y;
  d["sigma_y_inv"] = ce.sigma_y_inv;
  d["loadings"] = ce.loadings;
  d["factor_cov"] = ce.factor_cov;
  d["sigma_u"] = ce.sigma_u;
  d["boundary_flag"] = to_string(ce.boundary_flag);
  d["applied_C"] = ce.applied_C;
  d["jitter"] = ce.jitter;
  d["zero_fraction"] = ce.zero_fraction;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Time-varying high-dimensional covariance estimation";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.def("epanechnikov", &epanechnikov, py::arg("u"));
  m.def(
      "boundary_weights",
      [](int T, int r, double h) {
        const KernelWeights w = boundary_weights(T, r, h);
        return py::make_tuple(w.weights, to_string(w.boundary_flag));
      },
      py::arg("T"), py::arg("r"), py::arg("h"), "Kernel weights at anchor r and the boundary branch used.");
  m.def("interior_region", &interior_region, py::arg("T"), py::arg("h"));
  m.def("rate_delta", &rate_delta, py::arg("N"), py::arg("T"), py::arg("h"));
  m.def("rate_omega", &rate_omega, py::arg("N"), py::arg("T"), py::arg("h"), py::arg("J"), py::arg("eta"));
  m.def("soft_threshold", &soft_threshold, py::arg("z"), py::arg("tau"));

  m.def(
      "estimate",
      [](const Eigen::MatrixXd& Y, int anchor, const std::string& method, double h, double C, int R, int J, double eta,
         const std::vector<Eigen::MatrixXd>& chars) {
        const PanelData panel = make_panel(Y);
        const auto c = make_chars(panel, chars);
        EstimatorConfig cfg;
        cfg.method = method_from_string(method);
        cfg.h = h;
        cfg.C = C;
        cfg.R = R;
        cfg.J = J;
        cfg.eta = eta;
        CovarianceEstimate ce;
        {
          py::gil_scoped_release release;
          ce = estimate_at(panel, c ? &*c : nullptr, anchor, cfg);
        }
        return estimate_dict(ce);
      },
      py::arg("panel"), py::arg("anchor"), py::arg("method") = "local-pca", py::arg("h") = 0.1, py::arg("C") = 0.5,
      py::arg("R") = 2, py::arg("J") = 4, py::arg("eta") = 2.0, py::arg("chars") = std::vector<Eigen::MatrixXd>{},
      "Covariance and precision estimate of an N x T panel at a 1-based anchor.");

  m.def(
      "simulate",
      [](int N, int T, std::uint64_t seed, const std::string& regime, int replication) {
        SimulationConfig cfg;
        cfg.N = N;
        cfg.T = T;
        cfg.seed = seed;
        cfg.regime = regime_from_string(regime);
        cfg.validate();
        const SimulatedDataset ds = simulate_dataset(cfg, replication);
        py::dict d;
        d["panel"] = ds.panel.values;
        d["chars"] = ds.chars.values;
        d["char_names"] = ds.chars.names;
        d["factors"] = ds.factors;
        std::vector<Eigen::MatrixXd> sigma_y_inv;
        for (int t = 1; t <= T; ++t) sigma_y_inv.push_back(ds.truth.sigma_y_inv(t));
        d["sigma_y_inv"] = sigma_y_inv;
        return d;
      },
      py::arg("N") = 100, py::arg("T") = 151, py::arg("seed") = 1, py::arg("regime") = "smooth",
      py::arg("replication") = 0, "One simulated dataset with its true precision matrices.");

  m.def(
      "monte_carlo",
      [](int N, int T, int replications, std::uint64_t seed, const std::string& regime, std::vector<double> h_grid,
         std::vector<double> C_grid, std::vector<int> anchors, unsigned threads) {
        SimulationConfig cfg;
        cfg.N = N;
        cfg.T = T;
        cfg.replications = replications;
        cfg.seed = seed;
        cfg.regime = regime_from_string(regime);
        if (!h_grid.empty()) cfg.h_grid = h_grid;
        if (!C_grid.empty()) cfg.C_grid = C_grid;
        cfg.anchors = anchors;
        cfg.validate();
        MonteCarloResult res;
        {
          py::gil_scoped_release release;
          res = run_monte_carlo(cfg, threads);
        }
        std::vector<int> a;
        std::vector<double> pca, ppca, ratio;
        for (const auto& row : res.summary) {
          a.push_back(row.anchor);
          pca.push_back(row.pca_inv_error);
          ppca.push_back(row.ppca_inv_error);
          ratio.push_back(row.ratio);
        }
        py::dict d;
        d["anchor"] = a;
        d["pca_inv_error"] = pca;
        d["ppca_inv_error"] = ppca;
        d["ratio"] = ratio;
        d["completed"] = res.completed;
        d["failed"] = res.failed;
        return d;
      },
      py::arg("N") = 100, py::arg("T") = 151, py::arg("replications") = 100, py::arg("seed") = 1,
      py::arg("regime") = "smooth", py::arg("h_grid") = std::vector<double>{},
      py::arg("C_grid") = std::vector<double>{}, py::arg("anchors") = std::vector<int>{}, py::arg("threads") = 0u,
      "Per-anchor mean inverse-covariance errors of local PCA and local PPCA under oracle tuning.");

  m.def("gmv_weights", &gmv_weights, py::arg("sigma_inv"));
  m.def(
      "backtest",
      [](const Eigen::MatrixXd& Y, const std::string& estimator, int training, int holding, double h, double C, int R,
         const std::vector<Eigen::MatrixXd>& chars) {
        const PanelData panel = make_panel(Y);
        const auto c = make_chars(panel, chars);
        BacktestConfig cfg;
        cfg.estimator = estimator_from_string(estimator);
        cfg.initial_training = training;
        cfg.holding_length = holding;
        cfg.h = h;
        cfg.C = C;
        cfg.R = R;
        BacktestResult res;
        {
          py::gil_scoped_release release;
          res = run_backtest(panel, c ? &*c : nullptr, nullptr, cfg);
        }
        py::dict d;
        d["ex_post_std_annualized_pct"] = res.ex_post_std_annualized_pct;
        d["portfolio_returns"] = res.portfolio_returns;
        d["periods"] = res.periods;
        d["weights"] = res.weights;
        return d;
      },
      py::arg("panel"), py::arg("estimator") = "sample", py::arg("training") = 102, py::arg("holding") = 26,
      py::arg("h") = 0.1, py::arg("C") = 0.5, py::arg("R") = 2, py::arg("chars") = std::vector<Eigen::MatrixXd>{},
      "GMV backtest on an N x T return panel with a recursive training window.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line in-process; returns (exit code, stdout, stderr).");
}
