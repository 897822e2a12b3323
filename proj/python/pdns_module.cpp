#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pdns/cli_harness.hpp"
#include "pdns/config.hpp"
#include "pdns/io.hpp"
#include "pdns/metrics.hpp"
#include "pdns/oracles_baselines.hpp"

namespace py = pybind11;
using namespace pdns;

namespace {

Matrix to_matrix(const std::vector<Vec>& rows) {
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols)
      throw std::invalid_argument("ragged point cloud");
    std::copy(rows[i].begin(), rows[i].end(), m.row(i));
  }
  return m;
}

Json parse_json(const std::string& text) {
  return Json::parse(text, nullptr, true, /*allow comments*/ true);
}

py::dict train_from_json(const std::string& config_text) {
  const RunConfig cfg = parse_run_config(parse_json(config_text));
  RunReport report;
  if (cfg.is_discrete())
    run_pdns(*cfg.discrete, cfg.train, report);
  else
    run_pdns(*cfg.continuous, cfg.train, report);
  py::dict out;
  out["aborted"] = report.aborted;
  out["abort_reason"] = report.abort_reason;
  out["global_ess"] = report.global_ess;
  out["logz"] = report.logz;
  out["logz_se"] = report.logz_se;
  py::list stages;
  for (const StageLog& log : report.stages) {
    py::dict s;
    s["k"] = log.k;
    s["lambda"] = log.lambda;
    s["eta"] = log.eta;
    s["ess_local"] = log.ess_local;
    s["ess_global"] = log.ess_global;
    s["kl_estimate"] = log.kl;
    stages.append(s);
  }
  out["stages"] = stages;
  return out;
}

}  // namespace

PYBIND11_MODULE(_pdns, m) {
  m.doc() = "Proximal diffusion neural sampler core bindings";

  m.def("time_features", &time_features, py::arg("t"), py::arg("count"),
        py::arg("horizon") = 1.0, py::arg("span") = 256.0);

  m.def(
      "potential",
      [](const std::string& target_json, const Vec& x) {
        const Json block = parse_json(target_json);
        if (target_block_is_discrete(block)) {
          const DiscreteTarget t = parse_discrete_target(block);
          std::vector<int> xi(x.size());
          for (std::size_t i = 0; i < x.size(); ++i)
            xi[i] = static_cast<int>(x[i]);
          return potential(t, xi);
        }
        return potential(parse_continuous_target(block), x);
      },
      py::arg("target_json"), py::arg("x"),
      "Energy V(x) for a target block given as a json string");

  m.def(
      "log_target",
      [](const std::string& target_json, const Vec& x) {
        const Json block = parse_json(target_json);
        if (target_block_is_discrete(block)) {
          const DiscreteTarget t = parse_discrete_target(block);
          std::vector<int> xi(x.size());
          for (std::size_t i = 0; i < x.size(); ++i)
            xi[i] = static_cast<int>(x[i]);
          return log_target(t, xi);
        }
        return log_target(parse_continuous_target(block), x);
      },
      py::arg("target_json"), py::arg("x"));

  m.def(
      "potential_grad",
      [](const std::string& target_json, const Vec& x) {
        return potential_grad(parse_continuous_target(parse_json(target_json)), x);
      },
      py::arg("target_json"), py::arg("x"));

  m.def(
      "enumerate_exact",
      [](const std::string& target_json) {
        const Enumeration e =
            enumerate_exact(parse_discrete_target(parse_json(target_json)));
        return py::make_tuple(e.states, e.probs, e.log_z);
      },
      py::arg("target_json"),
      "Returns (states, probabilities, log_z) for a small discrete target");

  m.def(
      "exact_interpolant_probs",
      [](const std::string& target_json, double lambda) {
        const Enumeration e = exact_interpolant(
            parse_discrete_target(parse_json(target_json)), lambda);
        return py::make_tuple(e.states, e.probs, e.log_z);
      },
      py::arg("target_json"), py::arg("lambda_"));

  m.def(
      "maxcut_brute",
      [](const std::string& target_json) {
        const MaxCutResult r =
            maxcut_brute(parse_discrete_target(parse_json(target_json)));
        return py::make_tuple(r.best_value, r.assignment);
      },
      py::arg("target_json"));

  m.def(
      "mh_chain",
      [](const std::string& target_json, std::size_t samples,
         std::size_t burn_in, std::size_t thinning, std::size_t chains,
         std::uint64_t seed) {
        ChainConfig cfg;
        cfg.samples = samples;
        cfg.burn_in = burn_in;
        cfg.thinning = thinning;
        cfg.chains = chains;
        cfg.seed = seed;
        return mh_chain(parse_discrete_target(parse_json(target_json)), cfg);
      },
      py::arg("target_json"), py::arg("samples") = 1000,
      py::arg("burn_in") = 1000, py::arg("thinning") = 10,
      py::arg("chains") = 1, py::arg("seed") = 0);

  m.def(
      "sw_chain",
      [](const std::string& target_json, std::size_t samples,
         std::size_t burn_in, std::size_t thinning, std::size_t chains,
         std::uint64_t seed) {
        ChainConfig cfg;
        cfg.samples = samples;
        cfg.burn_in = burn_in;
        cfg.thinning = thinning;
        cfg.chains = chains;
        cfg.seed = seed;
        return sw_chain(parse_discrete_target(parse_json(target_json)), cfg);
      },
      py::arg("target_json"), py::arg("samples") = 1000,
      py::arg("burn_in") = 1000, py::arg("thinning") = 10,
      py::arg("chains") = 1, py::arg("seed") = 0);

  m.def(
      "mmd",
      [](const std::vector<Vec>& x, const std::vector<Vec>& y) {
        return mmd(to_matrix(x), to_matrix(y));
      },
      py::arg("x"), py::arg("y"));

  m.def(
      "sinkhorn",
      [](const std::vector<Vec>& x, const std::vector<Vec>& y, double epsilon) {
        const SinkhornResult r = sinkhorn(to_matrix(x), to_matrix(y), epsilon);
        py::dict out;
        out["cost"] = r.cost;
        out["converged"] = r.converged;
        out["marginal_violation"] = r.marginal_violation;
        out["iterations"] = r.iterations;
        return out;
      },
      py::arg("x"), py::arg("y"), py::arg("epsilon") = 1e-3);

  m.def(
      "w2_1d",
      [](const Vec& a, const Vec& b) { return w2_1d(a, b); },
      py::arg("a"), py::arg("b"));

  m.def(
      "magnetization",
      [](const std::vector<std::vector<int>>& samples, std::size_t alphabet) {
        return magnetization(samples, alphabet);
      },
      py::arg("samples"), py::arg("alphabet") = 2);

  m.def(
      "two_point_corr",
      [](const std::vector<std::vector<int>>& samples, std::size_t side,
         std::size_t offset, std::size_t alphabet) {
        return two_point_corr(samples, side, offset, alphabet);
      },
      py::arg("samples"), py::arg("side"), py::arg("offset"),
      py::arg("alphabet") = 2);

  m.def(
      "normalize_and_ess",
      [](const Vec& log_weights) {
        const NormalizeResult r = normalize_and_ess(log_weights);
        return py::make_tuple(r.weights, r.ess);
      },
      py::arg("log_weights"));

  m.def("kl_estimate",
        [](const Vec& weights) { return kl_estimate(weights); },
        py::arg("normalized_weights"));

  m.def("adaptive_eta",
        [](const Vec& base, double epsilon) { return adaptive_eta(base, epsilon); },
        py::arg("base_log_weights"), py::arg("epsilon"));

  m.def("train", &train_from_json, py::arg("config_json"),
        "Runs the full staged training loop from a config document; returns "
        "the run report as a dict");

  m.def("validate_config", [](const std::string& config_text) {
    parse_run_config(parse_json(config_text));
    return true;
  });
}
