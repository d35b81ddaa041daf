// laplace-audit: measure how far a log-concave target sits from its Laplace
// approximation. Subcommands: fit, diagnose, bounds, reference-kl, experiment,
// plot, demo-mixture.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "laplace_audit/bounds.hpp"
#include "laplace_audit/diagnostics.hpp"
#include "laplace_audit/experiments.hpp"
#include "laplace_audit/laplace.hpp"
#include "laplace_audit/reference.hpp"
#include "laplace_audit/targets.hpp"
#include "laplace_audit/taylor.hpp"

namespace la = laplace_audit;
using json = nlohmann::json;

namespace {

struct ModelBundle {
  std::unique_ptr<la::TargetDensity> target;
  Eigen::VectorXd init;
  std::optional<la::LogisticDataset> dataset;
  std::string name;
};

std::map<std::string, std::string> parse_kv(const std::string& s) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("model", "expected key=value, got '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return kv;
}

// Model specs:
//   logistic:n=100,p=10,seed=7            synthetic data, init at theta0
//   logistic:file=data.csv,prior_sd=0.3   CSV data (header y,x1..xp), init at 0
//   gaussian:p=5                          standard normal fixture
//   quartic:eps=0.001                     1-D quartic perturbation
//   mixture:sigma=100                     1-D thin+wide Gaussian mixture
ModelBundle make_model(const std::string& spec) {
  auto colon = spec.find(':');
  std::string name = spec.substr(0, colon);
  std::map<std::string, std::string> kv =
      colon == std::string::npos ? std::map<std::string, std::string>{} : parse_kv(spec.substr(colon + 1));

  ModelBundle m;
  m.name = name;
  if (name == "logistic") {
    la::LogisticDataset data;
    bool synthetic = kv.count("file") == 0;
    if (synthetic) {
      long n = std::stol(kv.at("n"));
      int p = std::stoi(kv.at("p"));
      std::uint64_t seed = kv.count("seed") ? std::stoull(kv.at("seed")) : 1;
      data = la::generate_logistic_data(n, p, seed);
    } else {
      double prior_sd = kv.count("prior_sd") ? std::stod(kv.at("prior_sd")) : 1.0;
      data = la::load_dataset_csv(kv.at("file"), prior_sd);
    }
    m.dataset = data;
    m.init = synthetic ? la::logistic_theta0(data.p()) : Eigen::VectorXd::Zero(data.p());
    m.target = std::make_unique<la::LogisticTarget>(std::move(data));
  } else if (name == "gaussian") {
    int p = std::stoi(kv.at("p"));
    m.init = Eigen::VectorXd::Zero(p);
    m.target = std::make_unique<la::GaussianTarget>(Eigen::VectorXd::Zero(p),
                                                    Eigen::MatrixXd::Identity(p, p));
  } else if (name == "quartic") {
    m.init = Eigen::VectorXd::Zero(1);
    m.target = std::make_unique<la::Quartic1DTarget>(std::stod(kv.at("eps")));
  } else if (name == "mixture") {
    m.init = Eigen::VectorXd::Zero(1);
    m.target = std::make_unique<la::Mixture1DTarget>(std::stod(kv.at("sigma")));
  } else {
    throw CLI::ValidationError("model", "unknown model '" + name + "'");
  }
  return m;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["layout"] = "row-major";
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (long i = 0; i < m.rows(); ++i)
    for (long c = 0; c < m.cols(); ++c) data.push_back(m(i, c));
  j["data"] = data;
  return j;
}

json estimate_json(const la::KlEstimate& e) {
  json j;
  j["estimator"] = la::to_string(e.estimator);
  j["value"] = e.value;
  j["std_error"] = e.std_error;
  j["n_samples"] = e.n_samples;
  if (!e.note.empty()) j["note"] = e.note;
  return j;
}

void print_estimate(const la::KlEstimate& e) {
  std::printf("%-18s %14.6e  +- %12.4e  (s = %ld)%s%s\n", la::to_string(e.estimator).c_str(),
              e.value, e.std_error, e.n_samples, e.note.empty() ? "" : "  ",
              e.note.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Laplace-approximation KL diagnostics"};
  app.require_subcommand(1);

  std::string model_spec, out_path, json_path, config_path, in_path, kind_str, chain_csv;
  long samples = 50000;
  std::uint64_t seed = 1;
  double tol = 1e-9;
  int max_iter = 100;
  std::string var_elbo_arg;
  bool with_taylor = false;
  double delta3_arg = -1.0;
  long chain_samples = 60000, warmup = 10000;
  double sigma = 100.0;
  bool full_grid = false;
  la::PlotOptions plot_opt;

  auto* fit = app.add_subcommand("fit", "MAP + Laplace approximation to JSON");
  fit->add_option("--model", model_spec, "model spec")->required();
  fit->add_option("--out", out_path, "output JSON path")->required();
  fit->add_option("--tol", tol, "relative gradient tolerance");
  fit->add_option("--max-iter", max_iter, "Newton iteration cap");

  auto* diagnose = app.add_subcommand("diagnose", "sampling KL approximations");
  diagnose->add_option("--model", model_spec)->required();
  diagnose->add_option("--samples", samples, "Monte Carlo draws");
  diagnose->add_option("--seed", seed);
  diagnose->add_option("--var-elbo", var_elbo_arg, "Se,Sr for the nested varELBO estimator");
  diagnose->add_flag("--taylor", with_taylor, "add the Taylor closed forms");
  diagnose->add_option("--json", json_path, "also write JSON");

  auto* bounds = app.add_subcommand("bounds", "rigorous non-sampling bounds");
  bounds->add_option("--model", model_spec)->required();
  bounds->add_option("--delta3", delta3_arg, "Delta3 override for non-logistic models");
  bounds->add_option("--samples", samples);
  bounds->add_option("--seed", seed);

  auto* refkl = app.add_subcommand("reference-kl", "ground-truth KL via NUTS + direct route");
  refkl->add_option("--model", model_spec)->required();
  refkl->add_option("--chain-samples", chain_samples);
  refkl->add_option("--warmup", warmup);
  refkl->add_option("--seed", seed);
  refkl->add_option("--samples", samples, "g-side Monte Carlo draws");
  refkl->add_option("--json", json_path);
  refkl->add_option("--chain-csv", chain_csv, "export the chain as CSV");

  auto* experiment = app.add_subcommand("experiment", "run the logistic sweep");
  experiment->add_option("--config", config_path, "flat key=value config file");
  experiment->add_option("--out", out_path, "results CSV (overrides config)");
  experiment->add_flag("--full", full_grid, "full-scale grid instead of the desk grid");

  auto* plot_cmd = app.add_subcommand("plot", "render a sweep view as SVG");
  plot_cmd->add_option("--in", in_path, "results CSV")->required();
  plot_cmd->add_option("--kind", kind_str, "kl_vs_n | ratio_vs_n | ratio_vs_kl")->required();
  plot_cmd->add_option("--out", out_path, "output SVG path")->required();
  plot_cmd->add_option("--estimator", plot_opt.estimator, "ratio numerator");
  plot_cmd->add_option("--reference", plot_opt.reference, "KL reference estimator");

  auto* demo = app.add_subcommand("demo-mixture", "log-concavity counterexample");
  demo->add_option("--sigma", sigma, "wide-component standard deviation");
  demo->add_option("--samples", samples);
  demo->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) {
      ModelBundle m = make_model(model_spec);
      Eigen::VectorXd mu = la::find_map(*m.target, m.init, tol, max_iter);
      la::LaplaceApprox lap = la::build_laplace(*m.target, mu);
      lap.tol = tol;
      json j;
      j["model"] = model_spec;
      j["p"] = lap.dim();
      j["mu"] = std::vector<double>(lap.mu.data(), lap.mu.data() + lap.mu.size());
      j["precision"] = matrix_json(lap.precision);
      j["factor"] = matrix_json(lap.factor);
      j["log_det_sigma"] = lap.log_det_sigma;
      j["log_z_g"] = lap.log_z_g;
      j["grad_norm"] = lap.grad_norm;
      j["tol"] = lap.tol;
      j["jittered"] = lap.jittered;
      std::ofstream out(out_path);
      out << j.dump(2) << "\n";
      std::printf("wrote %s (p=%d, |grad|=%.3e)\n", out_path.c_str(), lap.dim(), lap.grad_norm);
    } else if (*diagnose) {
      ModelBundle m = make_model(model_spec);
      la::StandardizedTarget st = la::fit_standardized(*m.target, m.init);
      json j;
      j["model"] = model_spec;
      j["estimates"] = json::array();
      auto emit = [&](const la::KlEstimate& e) {
        print_estimate(e);
        j["estimates"].push_back(estimate_json(e));
      };
      emit(la::estimate_klvar(st, samples, la::RngStream(seed, 1)));
      emit(la::estimate_lsi(st, samples, la::RngStream(seed, 2)));
      emit(la::klvar_plus_lsi(st, samples, la::RngStream(seed, 3)));
      if (!var_elbo_arg.empty()) {
        auto comma = var_elbo_arg.find(',');
        if (comma == std::string::npos)
          throw CLI::ValidationError("--var-elbo", "expected Se,Sr");
        long se_dirs = std::stol(var_elbo_arg.substr(0, comma));
        long sr = std::stol(var_elbo_arg.substr(comma + 1));
        emit(la::estimate_var_elbo(st, se_dirs, sr, la::RngStream(seed, 4)));
        emit(la::varelbo_plus_lsi(st, se_dirs, sr, la::RngStream(seed, 5)));
      }
      if (with_taylor) {
        auto method = m.target->analytic_higher_derivs() ? la::TensorMethod::analytic
                                                         : la::TensorMethod::finite_diff;
        auto [t3, t4] = la::compute_tensors(st, method);
        la::TaylorSums sums = la::compute_taylor_sums(t3, t4);
        double kl3 = 0.5 * la::taylor_klvar_third_order(sums);
        double kl4 = 0.5 * la::taylor_klvar(sums);
        double lsi4 = la::taylor_lsi(sums, st.dim());
        std::printf("%-18s %14.6e  (closed form, third order)\n", "taylor3", kl3);
        std::printf("%-18s %14.6e  (closed form)\n", "taylor4", kl4);
        std::printf("%-18s %14.6e  (closed form)\n", "taylor_lsi", lsi4);
        j["taylor"] = {{"klvar_third_order", kl3}, {"klvar", kl4}, {"lsi", lsi4}};
      }
      if (!json_path.empty()) {
        std::ofstream out(json_path);
        out << j.dump(2) << "\n";
      }
    } else if (*bounds) {
      ModelBundle m = make_model(model_spec);
      la::StandardizedTarget st = la::fit_standardized(*m.target, m.init);
      double d3;
      if (m.dataset) {
        d3 = la::delta3_upper_logistic(*m.dataset, st.laplace());
      } else if (delta3_arg >= 0.0) {
        d3 = delta3_arg;
      } else {
        throw CLI::ValidationError("--delta3",
                                   "required for non-logistic models (no built-in bound)");
      }
      la::CurvatureBound cb = la::psi_min_second(st.dim(), d3);
      std::printf("Delta3 bound      %14.6e\n", d3);
      std::printf("psi''_min         %14.6e  (branch %s)\n", cb.psi_min_second,
                  la::to_string(cb.branch).c_str());
      la::KlEstimate kl = la::klvar_plus_lsi(st, samples, la::RngStream(seed, 7));
      print_estimate(kl);
      if (cb.psi_min_second > 0.0) {
        la::KlEstimate rad = la::radial_kl_bound(st, cb, samples, la::RngStream(seed, 8));
        print_estimate(rad);
      } else {
        std::printf("radial bound      vacuous (psi''_min <= 0)\n");
      }
      std::printf("Pinsker d_TV      %14.6e\n", la::pinsker_tv_bound(kl.value));
      std::printf("coverage (KL = %.3e):\n", kl.value);
      std::printf("  %8s  %12s  %12s\n", "p_g", "p_f low", "p_f high");
      for (double pg : {0.5, 0.9, 0.95, 0.99}) {
        auto [lo, hi] = la::coverage_bounds(pg, kl.value);
        std::printf("  %8.2f  %12.6f  %12.6f\n", pg, lo, hi);
      }
    } else if (*refkl) {
      ModelBundle m = make_model(model_spec);
      la::StandardizedTarget st = la::fit_standardized(*m.target, m.init);
      la::Chain chain = la::nuts_sample(st, m.init, chain_samples, warmup, seed);
      la::GateReport gate = la::autocorr_gate(chain.phi_values);
      std::printf("chain: %ld samples, step %.4f, accept %.3f, divergences %d\n", chain.size(),
                  chain.step_size, chain.mean_accept_stat, chain.n_divergences);
      std::printf("gate: %s (max autocorr %.4f at lag %d, threshold %.2f)\n",
                  gate.passed ? "pass" : "FAIL", gate.max_autocorr, gate.argmax_lag,
                  gate.threshold);
      la::KlEstimate via_chain = la::kl_via_chain(st, chain, samples, la::RngStream(seed, 11));
      la::KlEstimate direct = la::kl_direct(st, samples, la::RngStream(seed, 12));
      print_estimate(via_chain);
      print_estimate(direct);
      if (!chain_csv.empty()) {
        std::ofstream out(chain_csv);
        for (int jcol = 1; jcol <= st.dim(); ++jcol) out << "theta" << jcol << ",";
        out << "phi\n";
        out.precision(17);
        for (long i = 0; i < chain.size(); ++i) {
          for (int c = 0; c < st.dim(); ++c) out << chain.samples(i, c) << ",";
          out << chain.phi_values[i] << "\n";
        }
        std::printf("wrote %s\n", chain_csv.c_str());
      }
      if (!json_path.empty()) {
        json j;
        j["model"] = model_spec;
        j["chain"] = {{"samples", chain.size()},
                      {"warmup", chain.warmup},
                      {"step_size", chain.step_size},
                      {"divergences", chain.n_divergences},
                      {"mean_accept", chain.mean_accept_stat},
                      {"gate_passed", gate.passed},
                      {"max_autocorr", gate.max_autocorr}};
        j["kl_via_chain"] = estimate_json(via_chain);
        j["kl_direct"] = estimate_json(direct);
        std::ofstream out(json_path);
        out << j.dump(2) << "\n";
      }
    } else if (*experiment) {
      la::ExperimentConfig cfg;
      if (!config_path.empty())
        cfg = la::parse_config(config_path);
      else if (full_grid)
        cfg = la::full_scale_config();
      if (!out_path.empty()) cfg.out = out_path;
      la::SweepSummary s = la::run_sweep(cfg);
      std::printf("sweep done: %ld rows written, %ld skipped -> %s\n", s.rows_written,
                  s.rows_skipped, cfg.out.c_str());
    } else if (*plot_cmd) {
      la::plot_file(in_path, la::parse_plot_kind(kind_str), out_path, plot_opt);
      std::printf("wrote %s\n", out_path.c_str());
    } else if (*demo) {
      la::MixtureDemoReport rep = la::demo_mixture(sigma, samples, seed);
      std::printf("mixture sigma_wide = %g\n", rep.sigma_wide);
      std::printf("  1/2 KL-variance estimate : %.6e +- %.2e\n", rep.klvar_half, rep.klvar_se);
      std::printf("  quadrature KL(g,f)       : %.6e\n", rep.quadrature_kl);
      std::printf("  ratio KL / (KLvar/2)     : %.2f\n", rep.quadrature_kl / rep.klvar_half);
      std::printf("  %s\n", rep.warning.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
