#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fsbm/functional.hpp"
#include "fsbm/inference.hpp"
#include "fsbm/network.hpp"
#include "fsbm/variational.hpp"
#include "json.hpp"

namespace fsbm {

/// Shortest-roundtrip-safe formatting used for every float we write (%.17g).
std::string format_double(double value);

/// Numeric CSV without a header. Errors name the file and line.
Matrix read_numeric_csv(const std::string& path);
void write_numeric_csv(const std::string& path, const Matrix& values);

AdjacencyMatrix read_adjacency(const std::string& path);
void write_adjacency(const std::string& path, const AdjacencyMatrix& A);

/// First row holds the grid, each further row one curve.
FunctionalSample read_covariates(const std::string& path);
void write_covariates(const std::string& path, const FunctionalSample& X);

/// "node,label" header, then one row per node. `classes` = 0 infers K+1 from the
/// largest label.
CommunityLabels read_labels(const std::string& path, int classes = 0);
void write_labels(const std::string& path, const CommunityLabels& labels);

/// Columns t, k, estimate, lower, upper, method.
void write_beta_ci(const std::string& path, const std::vector<CiBand>& bands);

/// JSON with every number printed through format_double.
void dump_json(const nlohmann::json& value, std::ostream& out, int indent = 2);
std::string dump_json(const nlohmann::json& value, int indent = 2);
void write_json(const std::string& path, const nlohmann::json& value);
nlohmann::json read_json(const std::string& path);

nlohmann::json to_json(const Vector& v);
nlohmann::json to_json(const Matrix& m);
Vector vector_from_json(const nlohmann::json& j);
Matrix matrix_from_json(const nlohmann::json& j);

/// Everything needed to reload a fit and rerun inference on it.
struct FitRecord {
  FitResult result;
  int m = 2;
  std::uint64_t seed = 0;
  Vector grid;
  std::string adjacency_path;
  std::string covariates_path;
};

nlohmann::json fit_to_json(const FitRecord& record);
FitRecord fit_from_json(const nlohmann::json& j);

/// Generating parameters of a simulated data set.
struct TruthRecord {
  Index n = 0;
  std::uint64_t seed = 0;
  double tau = 1.0;
  Vector grid;
  NullParameters theta;
  std::optional<double> rho;
};

nlohmann::json truth_to_json(const TruthRecord& truth);
TruthRecord truth_from_json(const nlohmann::json& j);

nlohmann::json plrt_to_json(const PlrtResult& result);

/// Creates `dir` (and parents) if needed; InputError naming the path otherwise.
void ensure_directory(const std::string& dir);

}  // namespace fsbm
