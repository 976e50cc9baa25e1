// Command-line front end: simulate data, cluster, fit, test, build bands and
// run Monte Carlo scenarios.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fsbm/functional.hpp"
#include "fsbm/harness.hpp"
#include "fsbm/inference.hpp"
#include "fsbm/io.hpp"
#include "fsbm/spectral.hpp"
#include "fsbm/variational.hpp"

namespace {

using namespace fsbm;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitConvergence = 2;
constexpr int kExitNumerical = 3;

std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::stringstream is(item);
    T value{};
    if (!(is >> value) || !(is >> std::ws).eof()) {
      throw InputError(std::string("bad value '") + item + "' in " + what);
    }
    out.push_back(value);
  }
  if (out.empty()) throw InputError(std::string("empty list for ") + what);
  return out;
}

// Turns a JSON config into flag tokens. Top-level scalars apply to every
// command; an object keyed by the command name applies to that command only.
std::vector<std::string> config_tokens(const nlohmann::json& config, const std::string& command) {
  std::vector<std::string> tokens;
  auto add = [&tokens](const std::string& key, const nlohmann::json& value) {
    if (value.is_boolean()) {
      if (value.get<bool>()) tokens.push_back("--" + key);
      return;
    }
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_array()) {
      for (const auto& v : value) {
        if (!text.empty()) text += ',';
        text += v.is_string() ? v.get<std::string>() : v.dump();
      }
    } else {
      text = value.dump();
    }
    tokens.push_back("--" + key);
    tokens.push_back(text);
  };
  for (auto it = config.begin(); it != config.end(); ++it) {
    if (!it.value().is_object()) add(it.key(), it.value());
  }
  if (config.contains(command) && config.at(command).is_object()) {
    for (auto it = config.at(command).begin(); it != config.at(command).end(); ++it) add(it.key(), it.value());
  }
  return tokens;
}

struct SimulateArgs {
  Index n = 100;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  double tau = 1.0;
  double alpha0 = 0.1;
  Index grid_size = 50;
};

int cmd_simulate(const SimulateArgs& a) {
  if (a.n < 2) throw InputError("--n must be at least 2");
  ensure_directory(a.out_dir);
  GenerationConfig cfg;
  cfg.n = a.n;
  cfg.grid_size = a.grid_size;
  cfg.alpha0 = a.alpha0;
  const double tau = a.tau;
  cfg.beta0 = [tau](double t) { return quadratic_slope(t, tau); };
  cfg.block = default_block(a.n);
  cfg.seed = a.seed;
  const SimulatedData data = simulate_dataset(cfg);

  write_adjacency(join_path(a.out_dir, "adjacency.csv"), data.A);
  write_covariates(join_path(a.out_dir, "covariates.csv"), data.X);
  write_labels(join_path(a.out_dir, "labels.csv"), data.labels);
  TruthRecord truth;
  truth.n = a.n;
  truth.seed = a.seed;
  truth.tau = a.tau;
  truth.grid = data.X.grid();
  truth.theta.alpha = Vector::Constant(1, data.alpha0);
  truth.theta.beta = data.beta0.transpose();
  truth.theta.B = data.block;
  truth.rho = data.block.rho;
  write_json(join_path(a.out_dir, "truth.json"), truth_to_json(truth));
  std::cout << "wrote " << a.n << " nodes to " << a.out_dir << "\n";
  return kExitOk;
}

struct SpectralArgs {
  std::string adjacency;
  int k = 1;
  std::string method = "kmeans";
  int restarts = 20;
  std::uint64_t seed = 0;
  std::string out = "labels.csv";
};

int cmd_spectral(const SpectralArgs& a) {
  const AdjacencyMatrix A = read_adjacency(a.adjacency);
  const SpectralEmbedding E = embed(A, a.k);
  ClusterResult result;
  if (a.method == "kmeans") {
    result = approx_kmeans(E, a.k, a.restarts, derive_seed(a.seed, 10));
  } else if (a.method == "kcenter") {
    result = kcenter_cluster(E, a.k);
  } else {
    throw InputError("--method must be kmeans or kcenter");
  }
  write_labels(a.out, result.labels);
  if (result.degenerate) std::cerr << "warning: embedding has fewer distinct rows than communities\n";
  return kExitOk;
}

struct FitArgs {
  std::string adjacency;
  std::string covariates;
  int k = 1;
  std::string lambda = "1e-4";
  int m = 2;
  std::string init_labels;
  std::uint64_t seed = 0;
  int threads = 1;
  int folds = 5;
  int restarts = 20;
  double smoothing = 0.05;
  int max_iter = 200;
  double tol = 1e-6;
  std::string out = "fit.json";
  std::string labels_out;
};

int cmd_fit(const FitArgs& a) {
  const AdjacencyMatrix A = read_adjacency(a.adjacency);
  const FunctionalSample X = read_covariates(a.covariates);
  if (X.size() != A.size()) throw InputError("adjacency and covariates disagree in node count");
  if (a.k < 1) throw InputError("--k must be at least 1");

  FitOptions options;
  options.max_outer = a.max_iter;
  options.outer_tolerance = a.tol;

  CommunityLabels init;
  if (!a.init_labels.empty()) {
    init = read_labels(a.init_labels, a.k + 1);
    if (init.size() != A.size()) throw InputError("initial labels disagree in node count");
  } else {
    init = approx_kmeans(embed(A, a.k), a.k, a.restarts, derive_seed(a.seed, 10)).labels;
  }

  std::optional<LambdaPath> path;
  double lambda = 0.0;
  if (a.lambda == "cv") {
    CvOptions cv;
    cv.folds = a.folds;
    cv.seed = derive_seed(a.seed, 11);
    cv.smoothing = a.smoothing;
    cv.kmeans_restarts = a.restarts;
    cv.threads = a.threads;
    cv.fit = options;
    path = cross_validate_lambda(A, X, a.k, default_lambda_grid(), a.m, cv);
    lambda = path->chosen;
    if (path->skipped_folds > 0) {
      std::cerr << "warning: " << path->skipped_folds << " of " << path->folds
                << " folds skipped (empty community)\n";
    }
  } else {
    lambda = parse_list<double>(a.lambda, "--lambda").front();
    if (!(lambda >= 0.0)) throw InputError("--lambda must be nonnegative or 'cv'");
  }

  const SobolevDesign design = build_design(X, a.m);
  FitRecord record;
  record.result = fit(A, design, a.k, lambda, initial_responsibilities(init, a.smoothing), options);
  record.result.lambda_path = path;
  record.m = a.m;
  record.seed = a.seed;
  record.grid = X.grid();
  record.adjacency_path = a.adjacency;
  record.covariates_path = a.covariates;
  write_json(a.out, fit_to_json(record));
  if (!a.labels_out.empty()) write_labels(a.labels_out, record.result.labels);

  const FitResult& r = record.result;
  std::cout << "lambda " << format_double(lambda) << ", " << r.iterations << " iterations, objective "
            << format_double(r.state.objective_trace.empty() ? 0.0 : r.state.objective_trace.back())
            << "\n";
  if (!r.converged || !r.eta_converged) {
    std::cerr << "warning: fit did not converge within the iteration limits\n";
    return kExitConvergence;
  }
  return kExitOk;
}

struct Loaded {
  FitRecord record;
  AdjacencyMatrix A;
  FunctionalSample X;
  SobolevDesign design;
};

Loaded load_fit(const std::string& fit_path, const std::string& adjacency,
                const std::string& covariates) {
  Loaded l;
  l.record = fit_from_json(read_json(fit_path));
  const std::string a_path = adjacency.empty() ? l.record.adjacency_path : adjacency;
  const std::string x_path = covariates.empty() ? l.record.covariates_path : covariates;
  if (a_path.empty() || x_path.empty()) {
    throw InputError("fit file does not record its inputs; pass --adjacency and --covariates");
  }
  l.A = read_adjacency(a_path);
  l.X = read_covariates(x_path);
  if (l.A.size() != l.record.result.state.q.rows() || l.X.size() != l.A.size()) {
    throw InputError("data files do not match the fit");
  }
  if (l.X.grid_size() != l.record.grid.size() ||
      (l.X.grid() - l.record.grid).cwiseAbs().maxCoeff() > 1e-12) {
    throw InputError("covariate grid differs from the grid recorded in the fit");
  }
  l.design = build_design(l.X, l.record.m);
  return l;
}

struct TestArgs {
  std::string fit;
  std::string null_path;
  bool composite = false;
  int degree = 1;
  double alpha = 0.05;
  std::string labels = "spectral";
  std::string adjacency;
  std::string covariates;
  int basis = 64;
  std::uint64_t seed = 0;
  std::string out = "test.json";
};

int cmd_test(const TestArgs& a) {
  if (a.composite == !a.null_path.empty()) {
    throw InputError("give exactly one of --null <truth.json> or --composite");
  }
  const Loaded l = load_fit(a.fit, a.adjacency, a.covariates);
  const FitResult& fitted = l.record.result;
  const int K = static_cast<int>(fitted.state.coeffs.communities());
  const EigenSystem es =
      solve_eigensystem(estimate_cov_kernel(l.X, fitted.state.coeffs, l.design), l.record.m,
                        fitted.state.lambda, l.A.size(), a.basis);

  CommunityLabels zhat;
  if (a.labels == "spectral") {
    zhat = kcenter_cluster(embed(l.A, K), K).labels;
  } else if (a.labels == "fit") {
    zhat = fitted.labels;
  } else {
    throw InputError("--labels must be spectral or fit");
  }

  PlrtResult result;
  if (a.composite) {
    result = plrt_composite(l.A, l.X, a.degree, fitted, l.design, zhat, es);
  } else {
    const TruthRecord truth = truth_from_json(read_json(a.null_path));
    if (truth.theta.alpha.size() != K) throw InputError("null parameters have the wrong K");
    if (truth.grid.size() != l.X.grid_size() ||
        (truth.grid - l.X.grid()).cwiseAbs().maxCoeff() > 1e-12) {
      throw InputError("null slope must be tabulated on the covariate grid");
    }
    result = plrt_simple(l.A, l.X, truth.theta, fitted, l.design, zhat, es);
  }
  write_json(a.out, plrt_to_json(result));
  std::cout << result.variant << " PLRT: statistic " << format_double(result.statistic) << ", df "
            << format_double(result.df) << ", p-value " << format_double(result.p_value) << " -> "
            << (result.p_value < a.alpha ? "reject" : "do not reject") << " H0 at level "
            << format_double(a.alpha) << "\n";
  if (result.floored) std::cerr << "warning: negative statistic floored at zero\n";
  return kExitOk;
}

struct CiArgs {
  std::string fit;
  Index grid = 100;
  double level = 0.95;
  std::string method = "laplace";
  std::string adjacency;
  std::string covariates;
  int basis = 64;
  std::uint64_t seed = 0;
  std::string out = "beta_ci.csv";
};

int cmd_ci(const CiArgs& a) {
  if (!(a.level > 0.0 && a.level < 1.0)) throw InputError("--level must lie in (0,1)");
  if (a.grid < 2) throw InputError("--grid needs at least two points");
  const CiMethod method = parse_ci_method(a.method);
  const Loaded l = load_fit(a.fit, a.adjacency, a.covariates);
  const FitResult& fitted = l.record.result;
  std::optional<EigenSystem> es;
  if (method == CiMethod::asymptotic) {
    es = solve_eigensystem(estimate_cov_kernel(l.X, fitted.state.coeffs, l.design), l.record.m,
                           fitted.state.lambda, l.A.size(), a.basis);
  }
  const auto bands = pointwise_ci(fitted, l.design, es ? &*es : nullptr, uniform_grid<double>(a.grid),
                                  a.level, method);
  write_beta_ci(a.out, bands);
  return kExitOk;
}

struct ReplicateArgs {
  std::string scenario = "custom";
  std::string n_list;
  std::string tau_list;
  std::string lambda;
  int reps = 0;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = ".";
  std::string scenario_file;
};

int cmd_replicate(const ReplicateArgs& a) {
  Scenario s = scenario_preset(a.scenario);
  if (!a.scenario_file.empty()) s = scenario_from_json(read_json(a.scenario_file), s);
  if (!a.n_list.empty()) s.n_list = parse_list<Index>(a.n_list, "--n");
  if (!a.tau_list.empty()) s.tau_list = parse_list<double>(a.tau_list, "--tau");
  if (!a.lambda.empty()) {
    if (a.lambda == "cv") {
      s.lambda.reset();
    } else {
      s.lambda = parse_list<double>(a.lambda, "--lambda").front();
    }
  }
  if (a.reps > 0) s.reps = a.reps;
  s.seed = a.seed;
  s = scenario_from_json(nlohmann::json::object(), s);  // validation

  ensure_directory(a.out_dir);
  const auto records = run_scenario(s, a.threads);
  write_records_csv(join_path(a.out_dir, "records.csv"), s, records);
  const auto rows = summarize(s, records);
  write_summary_csv(join_path(a.out_dir, "summary.csv"), s, rows);
  int failures = 0;
  for (const auto& r : rows) failures += r.failures;
  std::cout << records.size() << " replications, " << failures << " failed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Community detection with functional node covariates"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;
  int threads_global = 1;

  auto add_common = [&](CLI::App* sub, std::uint64_t& seed) {
    sub->add_option("--config", config_path, "JSON file with flag defaults");
    sub->add_option("--seed", seed, "Random seed");
  };

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Draw a synthetic network with curves");
  add_common(simulate, sim.seed);
  simulate->add_option("--n", sim.n, "Number of nodes")->required();
  simulate->add_option("--out-dir", sim.out_dir, "Output directory");
  simulate->add_option("--tau", sim.tau, "Slope scale");
  simulate->add_option("--alpha0", sim.alpha0, "Intercept");
  simulate->add_option("--grid-size", sim.grid_size, "Covariate grid points");
  simulate->add_option("--threads", threads_global, "Worker cap (unused)");

  SpectralArgs spec;
  auto* spectral = app.add_subcommand("spectral", "Adjacency spectral clustering");
  add_common(spectral, spec.seed);
  spectral->add_option("--adjacency", spec.adjacency)->required();
  spectral->add_option("--k", spec.k, "Number of non-reference communities")->required();
  spectral->add_option("--method", spec.method, "kmeans or kcenter");
  spectral->add_option("--restarts", spec.restarts);
  spectral->add_option("--out", spec.out);
  spectral->add_option("--threads", threads_global, "Worker cap (unused)");

  FitArgs fa;
  auto* fitcmd = app.add_subcommand("fit", "Variational fit");
  add_common(fitcmd, fa.seed);
  fitcmd->add_option("--adjacency", fa.adjacency)->required();
  fitcmd->add_option("--covariates", fa.covariates)->required();
  fitcmd->add_option("--k", fa.k, "Number of non-reference communities")->required();
  fitcmd->add_option("--lambda", fa.lambda, "Smoothing parameter or 'cv'");
  fitcmd->add_option("--m", fa.m, "Penalty order");
  fitcmd->add_option("--init-labels", fa.init_labels);
  fitcmd->add_option("--threads", fa.threads);
  fitcmd->add_option("--folds", fa.folds);
  fitcmd->add_option("--restarts", fa.restarts);
  fitcmd->add_option("--smoothing", fa.smoothing);
  fitcmd->add_option("--max-iter", fa.max_iter);
  fitcmd->add_option("--tol", fa.tol);
  fitcmd->add_option("--out", fa.out);
  fitcmd->add_option("--labels-out", fa.labels_out);

  TestArgs ta;
  auto* testcmd = app.add_subcommand("test", "Penalized likelihood ratio test");
  add_common(testcmd, ta.seed);
  testcmd->add_option("--fit", ta.fit)->required();
  testcmd->add_option("--null", ta.null_path, "truth.json with the null parameters");
  testcmd->add_flag("--composite", ta.composite);
  testcmd->add_option("--degree", ta.degree);
  testcmd->add_option("--alpha", ta.alpha, "Significance level");
  testcmd->add_option("--labels", ta.labels, "spectral or fit");
  testcmd->add_option("--adjacency", ta.adjacency);
  testcmd->add_option("--covariates", ta.covariates);
  testcmd->add_option("--basis", ta.basis);
  testcmd->add_option("--out", ta.out);
  testcmd->add_option("--threads", threads_global, "Worker cap (unused)");

  CiArgs ca;
  auto* cicmd = app.add_subcommand("ci", "Pointwise confidence bands for the slopes");
  add_common(cicmd, ca.seed);
  cicmd->add_option("--fit", ca.fit)->required();
  cicmd->add_option("--grid", ca.grid);
  cicmd->add_option("--level", ca.level);
  cicmd->add_option("--method", ca.method, "laplace or asymptotic");
  cicmd->add_option("--adjacency", ca.adjacency);
  cicmd->add_option("--covariates", ca.covariates);
  cicmd->add_option("--basis", ca.basis);
  cicmd->add_option("--out", ca.out);
  cicmd->add_option("--threads", threads_global, "Worker cap (unused)");

  ReplicateArgs ra;
  auto* replicate = app.add_subcommand("replicate", "Monte Carlo scenario");
  add_common(replicate, ra.seed);
  replicate->add_option("--scenario", ra.scenario, "table-cp, table-plrt, nmi-curve or custom");
  replicate->add_option("--scenario-file", ra.scenario_file, "JSON scenario overrides");
  replicate->add_option("--n", ra.n_list, "Comma-separated node counts");
  replicate->add_option("--tau", ra.tau_list, "Comma-separated slope scales");
  replicate->add_option("--lambda", ra.lambda, "Smoothing parameter or 'cv'");
  replicate->add_option("--reps", ra.reps);
  replicate->add_option("--threads", ra.threads);
  replicate->add_option("--out-dir", ra.out_dir);

  try {
    // Config tokens go right after the command name so explicit flags win.
    std::vector<std::string> args(argv + 1, argv + argc);
    auto cfg = std::find(args.begin(), args.end(), "--config");
    if (cfg != args.end() && cfg + 1 != args.end()) {
      const std::string path = *(cfg + 1);
      args.erase(cfg, cfg + 2);
      const auto cmd = std::find_if(args.begin(), args.end(),
                                    [](const std::string& s) { return !s.empty() && s[0] != '-'; });
      if (cmd != args.end()) {
        const auto tokens = config_tokens(read_json(path), *cmd);
        args.insert(cmd + 1, tokens.begin(), tokens.end());
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (*simulate) return cmd_simulate(sim);
    if (*spectral) return cmd_spectral(spec);
    if (*fitcmd) return cmd_fit(fa);
    if (*testcmd) return cmd_test(ta);
    if (*cicmd) return cmd_ci(ca);
    if (*replicate) return cmd_replicate(ra);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const UnsupportedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitInput;
}
