#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "csmc/baselines.hpp"
#include "csmc/csmc_sampler.hpp"
#include "csmc/diagnostics.hpp"
#include "csmc/exact_engine.hpp"
#include "csmc/experiment.hpp"
#include "csmc/reverse_sampler.hpp"

namespace py = pybind11;
using namespace csmc;

namespace {

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::dict report_dict(const VerifyReport& r) {
  py::dict d;
  d["num_states"] = r.num_states;
  d["reversibility_residual"] = r.reversibility_residual;
  d["stationarity_residual"] = r.stationarity_residual;
  d["limit_tv"] = r.limit_tv;
  d["zero_reward_limit_tv"] = r.zero_reward_limit_tv;
  d["passed"] = r.passed;
  return d;
}

// Calls back into Python under the GIL, from any thread.
std::shared_ptr<RewardFn> python_reward(py::function fn, std::string name) {
  auto holder = std::make_shared<py::function>(std::move(fn));
  return std::make_shared<FunctionReward>(
      [holder](const Sequence& x) {
        py::gil_scoped_acquire gil;
        return (*holder)(x).cast<double>();
      },
      std::move(name));
}

using release = py::call_guard<py::gil_scoped_release>;

}  // namespace

PYBIND11_MODULE(_csmc, m) {
  m.doc() = "Clean-sample Metropolis-Hastings for discrete diffusion models";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<RewardTransportError>(m, "RewardTransportError", PyExc_RuntimeError);
  static py::handle config_error = py::exception<ConfigError>(m, "ConfigError", PyExc_ValueError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::object err = config_error(e.what());
      err.attr("line") = e.line();
      PyErr_SetObject(config_error.ptr(), err.ptr());
    }
  });

  py::class_<Rng>(m, "Rng")
      .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed"), py::arg("stream") = 0)
      .def("uniform", py::overload_cast<>(&Rng::uniform))
      .def("below", &Rng::below);

  py::enum_<NoiseKind>(m, "NoiseKind").value("Masked", NoiseKind::Masked).value("Uniform", NoiseKind::Uniform);

  py::class_<TransitionModel, std::shared_ptr<TransitionModel>>(m, "TransitionModel")
      .def(py::init([](NoiseKind kind, int vocab_size, int num_steps) {
             return std::make_shared<TransitionModel>(kind, build_linear_schedule(num_steps),
                                                      Vocabulary(vocab_size, kind == NoiseKind::Masked));
           }),
           py::arg("kind"), py::arg("vocab_size"), py::arg("num_steps"))
      .def_property_readonly("kind", &TransitionModel::kind)
      .def_property_readonly("num_steps", &TransitionModel::num_steps)
      .def_property_readonly("alphabet_size", &TransitionModel::alphabet_size)
      .def("alpha_bar", [](const TransitionModel& tm, int t) { return tm.schedule().alpha_bar(t); })
      .def("transition_matrix", &TransitionModel::transition_matrix)
      .def("cumulative_matrix", &TransitionModel::cumulative_matrix)
      .def("marginal", [](const TransitionModel& tm, Token x0, int t) { return tm.marginal(x0, t).probs(); })
      .def("posterior", [](const TransitionModel& tm, Token xt, Token x0, int t) { return tm.posterior(xt, x0, t).probs(); })
      .def("corrupt", &TransitionModel::corrupt);

  py::class_<DataDistribution, std::shared_ptr<DataDistribution>>(m, "DataDistribution")
      .def(py::init<std::vector<Sequence>, std::vector<double>>(), py::arg("support"), py::arg("probs"))
      .def_static("from_samples", &DataDistribution::from_samples)
      .def_static("load", &DataDistribution::load)
      .def("save", &DataDistribution::save)
      .def_property_readonly("support", &DataDistribution::support)
      .def_property_readonly("probs", &DataDistribution::probs)
      .def_property_readonly("length", &DataDistribution::length)
      .def("prob", &DataDistribution::prob);

  py::class_<Denoiser, std::shared_ptr<Denoiser>>(m, "Denoiser")
      .def("sample_x0", &Denoiser::sample_x0, release())
      .def("x0_distribution",
           [](const Denoiser& d, const Sequence& xt, int t) {
             auto dist = d.x0_distribution(xt, t);
             return std::make_pair(dist.sequences, dist.probs);
           })
      .def_property_readonly("exact", &Denoiser::exact);
  py::class_<OracleDenoiser, Denoiser, std::shared_ptr<OracleDenoiser>>(m, "OracleDenoiser")
      .def(py::init<std::shared_ptr<const TransitionModel>, std::shared_ptr<const DataDistribution>>(), py::arg("model"),
           py::arg("data"));
  py::class_<FactorizedDenoiser, Denoiser, std::shared_ptr<FactorizedDenoiser>>(m, "FactorizedDenoiser")
      .def(py::init<std::shared_ptr<const OracleDenoiser>>(), py::arg("oracle"));

  py::class_<RewardFn, std::shared_ptr<RewardFn>>(m, "RewardFn")
      .def("__call__", [](const RewardFn& r, const Sequence& x) { return r(x); })
      .def_property_readonly("name", &RewardFn::name);
  py::class_<TokenCountReward, RewardFn, std::shared_ptr<TokenCountReward>>(m, "TokenCountReward")
      .def(py::init<Token>(), py::arg("target"));
  py::class_<GatedBracketReward, RewardFn, std::shared_ptr<GatedBracketReward>>(m, "GatedBracketReward")
      .def(py::init<Token, Token>(), py::arg("open"), py::arg("close"));
  py::class_<PatternReward, RewardFn, std::shared_ptr<PatternReward>>(m, "PatternReward")
      .def(py::init<Sequence>(), py::arg("pattern"));
  py::class_<ConstantReward, RewardFn, std::shared_ptr<ConstantReward>>(m, "ConstantReward")
      .def(py::init<double>(), py::arg("value") = 0.0);
  m.def("function_reward", &python_reward, py::arg("fn"), py::arg("name") = "function",
        "Wraps a Python callable taking a list of tokens.");

  m.def("generate", &generate, release(), py::arg("denoiser"), py::arg("length"), py::arg("rng"));
  m.def("partial_reverse", &partial_reverse, release(), py::arg("denoiser"), py::arg("xt"), py::arg("t"),
        py::arg("steps"), py::arg("rng"));
  m.def("reverse_grid", &reverse_grid);

  py::class_<CsmcConfig>(m, "CsmcConfig")
      .def(py::init<>())
      .def_readwrite("beta", &CsmcConfig::beta)
      .def_readwrite("t_lo", &CsmcConfig::t_lo)
      .def_readwrite("t_hi", &CsmcConfig::t_hi)
      .def_readwrite("reverse_steps", &CsmcConfig::reverse_steps)
      .def_readwrite("iterations", &CsmcConfig::iterations)
      .def_readwrite("burn_in_fraction", &CsmcConfig::burn_in_fraction)
      .def_readwrite("num_samples", &CsmcConfig::num_samples)
      .def_readwrite("batch", &CsmcConfig::batch)
      .def_readwrite("seed", &CsmcConfig::seed)
      .def_readwrite("threads", &CsmcConfig::threads)
      .def("validate", &CsmcConfig::validate);

  py::class_<Acceptance>(m, "Acceptance")
      .def_readonly("log_alpha", &Acceptance::log_alpha)
      .def_readonly("probability", &Acceptance::probability)
      .def_property_readonly("alpha", &Acceptance::alpha);
  m.def("acceptance", &acceptance, py::arg("r_new"), py::arg("r_old"), py::arg("beta"));

  py::class_<ChainResult>(m, "ChainResult")
      .def_readonly("states", &ChainResult::states)
      .def_readonly("rewards", &ChainResult::rewards)
      .def_property_readonly("accepted",
                             [](const ChainResult& c) {
                               std::vector<bool> out;
                               for (const auto& p : c.proposals) out.push_back(p.accepted);
                               return out;
                             })
      .def_property_readonly("proposal_times", [](const ChainResult& c) {
        std::vector<int> out;
        for (const auto& p : c.proposals) out.push_back(p.t);
        return out;
      });
  m.def("run_chain", &run_chain, release(), py::arg("config"), py::arg("denoiser"), py::arg("reward"),
        py::arg("length"), py::arg("rng"));
  m.def(
      "run_batched",
      [](const CsmcConfig& c, const Denoiser& d, const RewardFn& r, int length) {
        auto res = run_batched(c, d, r, length);
        return std::make_pair(std::move(res.chains), std::move(res.samples));
      },
      release(), py::arg("config"), py::arg("denoiser"), py::arg("reward"), py::arg("length"));
  m.def("draw_samples", &draw_samples, py::arg("chain"), py::arg("count"), py::arg("burn_in_fraction"));

  py::enum_<ResampleRule>(m, "ResampleRule")
      .value("Exponential", ResampleRule::Exponential)
      .value("Proportional", ResampleRule::Proportional);
  py::class_<BaselineConfig>(m, "BaselineConfig")
      .def(py::init<>())
      .def_readwrite("n", &BaselineConfig::n)
      .def_readwrite("beta", &BaselineConfig::beta)
      .def_readwrite("rule", &BaselineConfig::rule);
  m.def(
      "best_of_n",
      [](const BaselineConfig& c, const Denoiser& d, const RewardFn& r, int length, Rng& rng) {
        auto res = best_of_n(c, d, r, length, rng);
        return std::make_pair(res.best, res.best_reward);
      },
      release());
  m.def(
      "smc",
      [](const BaselineConfig& c, const Denoiser& d, const RewardFn& r, int length, Rng& rng) {
        auto res = smc(c, d, r, length, rng);
        return std::make_pair(res.particles, res.rewards);
      },
      release());
  m.def(
      "svdd",
      [](const BaselineConfig& c, const Denoiser& d, const RewardFn& r, int length, Rng& rng) {
        auto res = svdd(c, d, r, length, rng);
        return std::make_pair(res.sample, res.reward);
      },
      release());

  py::class_<EnumeratedSpace>(m, "EnumeratedSpace")
      .def(py::init<int, int>(), py::arg("alphabet"), py::arg("length"))
      .def("__len__", &EnumeratedSpace::size)
      .def("at", &EnumeratedSpace::at)
      .def("index_of", &EnumeratedSpace::index_of)
      .def("sequences", &EnumeratedSpace::sequences);
  m.def("distribution_on", &distribution_on);
  m.def("reward_vector", &reward_vector);
  m.def("exact_target", &exact_target, py::arg("p0"), py::arg("rewards"), py::arg("beta"));
  m.def("exact_proposal_kernel", &exact_proposal_kernel, release(), py::arg("space"), py::arg("denoiser"),
        py::arg("config"));
  m.def("exact_mh_kernel", &exact_mh_kernel, py::arg("proposal"), py::arg("rewards"), py::arg("beta"));
  m.def("stationarity_residual", &stationarity_residual);
  m.def("reversibility_residual", &reversibility_residual);
  m.def("tv_distance", py::overload_cast<const Eigen::VectorXd&, const Eigen::VectorXd&>(&tv_distance));
  m.def("limiting_distribution", &limiting_distribution, py::arg("transition"), py::arg("start"),
        py::arg("max_squarings") = 64);
  m.def("empirical_distribution", &empirical_distribution);

  m.def("autocorrelation", [](const std::vector<double>& xs, std::size_t max_lag) { return autocorrelation(xs, max_lag); });
  m.def("diversity", &diversity);

  m.def(
      "run",
      [](const std::filesystem::path& config_path, std::optional<std::filesystem::path> out_dir,
         std::optional<std::uint64_t> seed) {
        auto config = load_config(config_path);
        if (seed) config.seed = *seed;
        const auto root = out_dir.value_or(config.output_dir);
        const auto fixture = build_fixture(config);
        py::list metrics;
        for (const auto& spec : config.methods) {
          MethodOutcome outcome;
          {
            py::gil_scoped_release nogil;
            outcome = run_method(fixture, spec, config.num_samples, config.seed);
          }
          const auto dir = config.methods.size() == 1 ? root : root / spec.label;
          metrics.append(to_python(write_run_outputs(config, fixture, spec, outcome, config.seed, dir)));
        }
        return metrics;
      },
      py::arg("config"), py::arg("out_dir") = py::none(), py::arg("seed") = py::none(),
      "Runs every method in a config file and writes the usual outputs. Returns the metrics of each method.");
  m.def(
      "verify",
      [](const std::filesystem::path& config_path, std::optional<std::filesystem::path> export_dir) {
        const auto config = load_config(config_path);
        VerifyReport report;
        {
          py::gil_scoped_release nogil;
          report = verify_fixture(config, export_dir);
        }
        return report_dict(report);
      },
      py::arg("config"), py::arg("export_dir") = py::none());
}
