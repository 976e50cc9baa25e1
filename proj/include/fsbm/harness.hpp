#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fsbm/inference.hpp"
#include "fsbm/types.hpp"
#include "json.hpp"

namespace fsbm {

/// A Monte Carlo experiment grid. Which measurements a replication takes
/// depends on the scenario name (custom takes all of them).
struct Scenario {
  std::string name = "custom";  // table-cp | table-plrt | nmi-curve | custom
  std::vector<Index> n_list{100};
  int reps = 1;
  std::optional<double> lambda = 1e-4;  // empty: cross-validation
  std::vector<double> tau_list{1.0};
  std::uint64_t seed = 0;
  double alpha0 = 0.1;
  Index grid_size = 50;
  int m = 2;
  int degree = 1;                       // composite null degree
  std::string test_labels = "spectral"; // labels entering the PLRT: spectral | fit
  double test_level = 0.05;
  std::vector<double> ci_points{0.07, 0.48, 0.93};
  double ci_level = 0.95;
  CiMethod ci_method = CiMethod::laplace;
  int kmeans_restarts = 20;
  double smoothing = 0.05;
  FitOptions fit;

  bool measures_ci() const { return name == "table-cp" || name == "custom"; }
  bool measures_test() const { return name == "table-plrt" || name == "custom"; }
  bool measures_baselines() const { return name == "nmi-curve" || name == "custom"; }
};

/// Default settings for a named scenario.
Scenario scenario_preset(const std::string& name);

/// Applies the keys present in `j` on top of `base`.
Scenario scenario_from_json(const nlohmann::json& j, Scenario base);

struct ReplicationRecord {
  int rep = 0;
  std::uint64_t seed = 0;
  Index n = 0;
  double tau = 0.0;
  double lambda = 0.0;
  int error_code = 0;  // 0 ok, 1 input/unsupported, 3 numerical
  std::string error;
  bool converged = false;
  double nmi_vfsbm = -1.0;  // negative: not measured
  double nmi_spectral = -1.0;
  double nmi_adjacency_only = -1.0;
  std::vector<int> coverage_hits;  // per ci point; empty when not measured
  std::vector<double> ci_width;
  bool tested = false;
  double plrt_statistic = 0.0;
  double plrt_df = 0.0;
  double plrt_scale = 0.0;
  double p_value = 1.0;
  bool plrt_reject = false;
  double runtime_ms = 0.0;
};

/// One replication; never throws, failures are recorded in the record.
ReplicationRecord run_replication(const Scenario& s, Index n, double tau, int rep);

/// All replications in canonical order (n, tau, rep), using up to `threads`
/// workers. The records do not depend on the worker count except runtime_ms.
std::vector<ReplicationRecord> run_scenario(const Scenario& s, int threads = 1);

struct SummaryRow {
  Index n = 0;
  double tau = 0.0;
  int reps = 0;
  int failures = 0;
  double mean_lambda = 0.0;
  // mean and standard error; NaN when not measured
  double nmi_vfsbm = 0.0, nmi_vfsbm_se = 0.0;
  double nmi_spectral = 0.0, nmi_spectral_se = 0.0;
  double nmi_adjacency_only = 0.0, nmi_adjacency_only_se = 0.0;
  std::vector<double> coverage;   // per ci point
  std::vector<double> mean_width;
  double reject_rate = 0.0, reject_se = 0.0;
  double mean_scaled_statistic = 0.0;
  double mean_df = 0.0;
};

std::vector<SummaryRow> summarize(const Scenario& s, const std::vector<ReplicationRecord>& records);

void write_records_csv(const std::string& path, const Scenario& s,
                       const std::vector<ReplicationRecord>& records);
void write_summary_csv(const std::string& path, const Scenario& s,
                       const std::vector<SummaryRow>& rows);

}  // namespace fsbm
