#include "fsbm/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include "fsbm/functional.hpp"
#include "fsbm/io.hpp"
#include "fsbm/spectral.hpp"

namespace fsbm {

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

struct MeanSe {
  double mean = kNaN;
  double se = kNaN;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  if (v.empty()) return out;
  double sum = 0.0;
  for (const double x : v) sum += x;
  out.mean = sum / v.size();
  double ss = 0.0;
  for (const double x : v) ss += (x - out.mean) * (x - out.mean);
  out.se = v.size() > 1 ? std::sqrt(ss / (v.size() - 1) / v.size()) : 0.0;
  return out;
}

std::string field(double v) { return std::isnan(v) ? "NA" : format_double(v); }

// Permutation p with new label a = old label p[a], taking estimated labels onto
// the truth.
std::vector<int> truth_permutation(const CommunityLabels& estimate, const CommunityLabels& truth) {
  const std::vector<int> sigma = best_alignment(estimate, truth);
  std::vector<int> perm(sigma.size());
  for (std::size_t e = 0; e < sigma.size(); ++e) perm[static_cast<std::size_t>(sigma[e])] = static_cast<int>(e);
  return perm;
}

}  // namespace

Scenario scenario_preset(const std::string& name) {
  Scenario s;
  s.name = name;
  if (name == "table-cp") {
    s.n_list = {100, 200, 300, 400};
    s.reps = 200;
    s.tau_list = {1.0};
  } else if (name == "table-plrt") {
    s.n_list = {100, 200, 300, 400};
    s.reps = 200;
    s.tau_list = {0.0, 0.4, 0.6, 0.8, 1.0};
    s.alpha0 = 0.0;
    s.test_labels = "fit";
  } else if (name == "nmi-curve") {
    s.n_list = {100, 200, 300, 400};
    s.reps = 100;
    s.tau_list = {1.0};
  } else if (name != "custom") {
    throw InputError("unknown scenario '" + name + "'");
  }
  return s;
}

Scenario scenario_from_json(const nlohmann::json& j, Scenario s) {
  try {
    if (j.contains("name")) s = scenario_preset(j.at("name").get<std::string>());
    if (j.contains("n_list")) s.n_list = j.at("n_list").get<std::vector<Index>>();
    if (j.contains("reps")) s.reps = j.at("reps").get<int>();
    if (j.contains("lambda")) {
      const auto& l = j.at("lambda");
      if (l.is_string() && l.get<std::string>() == "cv") {
        s.lambda.reset();
      } else {
        s.lambda = l.get<double>();
      }
    }
    if (j.contains("tau_list")) s.tau_list = j.at("tau_list").get<std::vector<double>>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("alpha0")) s.alpha0 = j.at("alpha0").get<double>();
    if (j.contains("grid_size")) s.grid_size = j.at("grid_size").get<Index>();
    if (j.contains("m")) s.m = j.at("m").get<int>();
    if (j.contains("degree")) s.degree = j.at("degree").get<int>();
    if (j.contains("test_labels")) s.test_labels = j.at("test_labels").get<std::string>();
    if (j.contains("test_level")) s.test_level = j.at("test_level").get<double>();
    if (j.contains("ci_points")) s.ci_points = j.at("ci_points").get<std::vector<double>>();
    if (j.contains("ci_level")) s.ci_level = j.at("ci_level").get<double>();
    if (j.contains("ci_method")) s.ci_method = parse_ci_method(j.at("ci_method").get<std::string>());
    if (j.contains("kmeans_restarts")) s.kmeans_restarts = j.at("kmeans_restarts").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed scenario: ") + e.what());
  }
  if (s.reps < 1) throw InputError("scenario needs reps >= 1");
  if (s.n_list.empty()) throw InputError("scenario needs a nonempty n_list");
  if (s.tau_list.empty()) throw InputError("scenario needs a nonempty tau_list");
  if (s.test_labels != "spectral" && s.test_labels != "fit") {
    throw InputError("test_labels must be spectral or fit");
  }
  return s;
}

ReplicationRecord run_replication(const Scenario& s, Index n, double tau, int rep) {
  const auto start = std::chrono::steady_clock::now();
  ReplicationRecord rec;
  rec.rep = rep;
  rec.n = n;
  rec.tau = tau;
  rec.seed = derive_seed(s.seed, static_cast<std::uint64_t>(rep));
  const int K = 1;
  try {
    GenerationConfig cfg;
    cfg.n = n;
    cfg.grid_size = s.grid_size;
    cfg.alpha0 = s.alpha0;
    cfg.beta0 = [tau](double t) { return quadratic_slope(t, tau); };
    cfg.block = default_block(n);
    cfg.seed = rec.seed;
    const SimulatedData data = simulate_dataset(cfg);

    const SpectralEmbedding embedding = embed(data.A, K);
    const ClusterResult spectral =
        approx_kmeans(embedding, K, s.kmeans_restarts, derive_seed(rec.seed, 10));
    if (s.measures_baselines()) rec.nmi_spectral = nmi(spectral.labels, data.labels);
    const Matrix q0 = initial_responsibilities(spectral.labels, s.smoothing);

    if (s.lambda) {
      rec.lambda = *s.lambda;
    } else {
      CvOptions cv;
      cv.seed = derive_seed(rec.seed, 11);
      cv.smoothing = s.smoothing;
      cv.kmeans_restarts = s.kmeans_restarts;
      cv.fit = s.fit;
      rec.lambda = cross_validate_lambda(data.A, data.X, K, default_lambda_grid(), s.m, cv).chosen;
    }

    const SobolevDesign design = build_design(data.X, s.m);
    const FitResult fitted = fit(data.A, design, K, rec.lambda, q0, s.fit);
    rec.converged = fitted.converged;
    rec.nmi_vfsbm = nmi(fitted.labels, data.labels);

    if (s.measures_baselines()) {
      FitOptions plain = s.fit;
      plain.use_covariates = false;
      rec.nmi_adjacency_only = nmi(fit(data.A, design, K, rec.lambda, q0, plain).labels, data.labels);
    }

    std::optional<EigenSystem> es;
    auto eigen = [&]() -> const EigenSystem& {
      if (!es) {
        es = solve_eigensystem(estimate_cov_kernel(data.X, fitted.state.coeffs, design), s.m,
                               rec.lambda, n);
      }
      return *es;
    };

    if (s.measures_ci()) {
      FitResult aligned = fitted;
      aligned.state = permute_state(fitted.state, truth_permutation(fitted.labels, data.labels));
      Vector points = Eigen::Map<const Vector>(s.ci_points.data(), static_cast<Index>(s.ci_points.size()));
      const EigenSystem* system = s.ci_method == CiMethod::asymptotic ? &eigen() : nullptr;
      const CiBand band = pointwise_ci(aligned, design, system, points, s.ci_level, s.ci_method).front();
      for (Index g = 0; g < points.size(); ++g) {
        const double truth = quadratic_slope(points(g), tau);
        rec.coverage_hits.push_back(band.lower(g) <= truth && truth <= band.upper(g) ? 1 : 0);
        rec.ci_width.push_back(band.upper(g) - band.lower(g));
      }
    }

    if (s.measures_test()) {
      const CommunityLabels zhat =
          s.test_labels == "fit" ? fitted.labels : kcenter_cluster(embedding, K).labels;
      const PlrtResult test = plrt_composite(data.A, data.X, s.degree, fitted, design, zhat, eigen(), s.fit);
      rec.tested = true;
      rec.plrt_statistic = test.statistic;
      rec.plrt_df = test.df;
      rec.plrt_scale = test.scale;
      rec.p_value = test.p_value;
      rec.plrt_reject = test.p_value < s.test_level;
    }
  } catch (const NumericalError& e) {
    rec.error_code = 3;
    rec.error = e.what();
  } catch (const std::exception& e) {
    rec.error_code = 1;
    rec.error = e.what();
  }
  rec.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<ReplicationRecord> run_scenario(const Scenario& s, int threads) {
  struct Job {
    Index n;
    double tau;
    int rep;
  };
  std::vector<Job> jobs;
  for (const Index n : s.n_list) {
    for (const double tau : s.tau_list) {
      for (int rep = 0; rep < s.reps; ++rep) jobs.push_back({n, tau, rep});
    }
  }
  std::vector<ReplicationRecord> records(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      records[i] = run_replication(s, jobs[i].n, jobs[i].tau, jobs[i].rep);
    }
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return records;
}

std::vector<SummaryRow> summarize(const Scenario& s, const std::vector<ReplicationRecord>& records) {
  std::vector<SummaryRow> rows;
  const std::size_t points = s.ci_points.size();
  for (const Index n : s.n_list) {
    for (const double tau : s.tau_list) {
      SummaryRow row;
      row.n = n;
      row.tau = tau;
      std::vector<double> lambdas, v_fit, v_spec, v_adj, rejects, scaled, dfs;
      std::vector<std::vector<double>> hits(points), widths(points);
      for (const ReplicationRecord& r : records) {
        if (r.n != n || r.tau != tau) continue;
        ++row.reps;
        if (r.error_code != 0) {
          ++row.failures;
          continue;
        }
        lambdas.push_back(r.lambda);
        if (r.nmi_vfsbm >= 0.0) v_fit.push_back(r.nmi_vfsbm);
        if (r.nmi_spectral >= 0.0) v_spec.push_back(r.nmi_spectral);
        if (r.nmi_adjacency_only >= 0.0) v_adj.push_back(r.nmi_adjacency_only);
        for (std::size_t g = 0; g < r.coverage_hits.size() && g < points; ++g) {
          hits[g].push_back(r.coverage_hits[g]);
          widths[g].push_back(r.ci_width[g]);
        }
        if (r.tested) {
          rejects.push_back(r.plrt_reject ? 1.0 : 0.0);
          scaled.push_back(r.plrt_scale * r.plrt_statistic);
          dfs.push_back(r.plrt_df);
        }
      }
      row.mean_lambda = mean_se(lambdas).mean;
      const MeanSe a = mean_se(v_fit), b = mean_se(v_spec), c = mean_se(v_adj);
      row.nmi_vfsbm = a.mean, row.nmi_vfsbm_se = a.se;
      row.nmi_spectral = b.mean, row.nmi_spectral_se = b.se;
      row.nmi_adjacency_only = c.mean, row.nmi_adjacency_only_se = c.se;
      for (std::size_t g = 0; g < points; ++g) {
        row.coverage.push_back(mean_se(hits[g]).mean);
        row.mean_width.push_back(mean_se(widths[g]).mean);
      }
      const MeanSe rj = mean_se(rejects);
      row.reject_rate = rj.mean, row.reject_se = rj.se;
      row.mean_scaled_statistic = mean_se(scaled).mean;
      row.mean_df = mean_se(dfs).mean;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_records_csv(const std::string& path, const Scenario& s,
                       const std::vector<ReplicationRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << "rep,seed,n,tau,lambda,error_code,converged,nmi_vfsbm,nmi_spectral,nmi_adjacency_only";
  for (const double t : s.ci_points) out << ",hit_" << format_double(t);
  for (const double t : s.ci_points) out << ",width_" << format_double(t);
  out << ",plrt_statistic,plrt_df,plrt_scale,p_value,plrt_reject,runtime_ms,error\n";
  for (const ReplicationRecord& r : records) {
    auto opt = [](double v) { return v < 0.0 ? std::string("NA") : format_double(v); };
    out << r.rep << ',' << r.seed << ',' << r.n << ',' << format_double(r.tau) << ','
        << format_double(r.lambda) << ',' << r.error_code << ',' << (r.converged ? 1 : 0) << ','
        << opt(r.nmi_vfsbm) << ',' << opt(r.nmi_spectral) << ',' << opt(r.nmi_adjacency_only);
    for (std::size_t g = 0; g < s.ci_points.size(); ++g) {
      out << ',' << (g < r.coverage_hits.size() ? std::to_string(r.coverage_hits[g]) : "NA");
    }
    for (std::size_t g = 0; g < s.ci_points.size(); ++g) {
      out << ',' << (g < r.ci_width.size() ? format_double(r.ci_width[g]) : "NA");
    }
    if (r.tested) {
      out << ',' << format_double(r.plrt_statistic) << ',' << format_double(r.plrt_df) << ','
          << format_double(r.plrt_scale) << ',' << format_double(r.p_value) << ','
          << (r.plrt_reject ? 1 : 0);
    } else {
      out << ",NA,NA,NA,NA,NA";
    }
    std::string error = r.error;
    for (char& ch : error) {
      if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
    }
    out << ',' << format_double(r.runtime_ms) << ',' << error << '\n';
  }
}

void write_summary_csv(const std::string& path, const Scenario& s,
                       const std::vector<SummaryRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << "scenario,n,tau,reps,failures,mean_lambda,nmi_vfsbm,nmi_vfsbm_se,nmi_spectral,"
         "nmi_spectral_se,nmi_adjacency_only,nmi_adjacency_only_se";
  for (const double t : s.ci_points) out << ",coverage_" << format_double(t);
  for (const double t : s.ci_points) out << ",mean_width_" << format_double(t);
  out << ",reject_rate,reject_se,mean_scaled_statistic,mean_df\n";
  for (const SummaryRow& r : rows) {
    out << s.name << ',' << r.n << ',' << format_double(r.tau) << ',' << r.reps << ','
        << r.failures << ',' << field(r.mean_lambda) << ',' << field(r.nmi_vfsbm) << ','
        << field(r.nmi_vfsbm_se) << ',' << field(r.nmi_spectral) << ','
        << field(r.nmi_spectral_se) << ',' << field(r.nmi_adjacency_only) << ','
        << field(r.nmi_adjacency_only_se);
    for (const double v : r.coverage) out << ',' << field(v);
    for (const double v : r.mean_width) out << ',' << field(v);
    out << ',' << field(r.reject_rate) << ',' << field(r.reject_se) << ','
        << field(r.mean_scaled_statistic) << ',' << field(r.mean_df) << '\n';
  }
}

}  // namespace fsbm
