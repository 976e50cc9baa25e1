#include "fsbm/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fsbm {

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  return out;
}

std::string located(const std::string& path, std::size_t line, const std::string& what) {
  return path + ":" + std::to_string(line) + ": " + what;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool parse_double(const std::string& text, double& value) {
  const char* begin = text.c_str();
  while (*begin == ' ' || *begin == '\t') ++begin;
  if (*begin == '\0') return false;
  char* end = nullptr;
  value = std::strtod(begin, &end);
  while (*end == ' ' || *end == '\t') ++end;
  return *end == '\0' && std::isfinite(value);
}

// Lines with their 1-based numbers; blank lines are skipped, CR stripped.
std::vector<std::pair<std::size_t, std::string>> read_lines(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.emplace_back(number, line);
  }
  return lines;
}

Matrix parse_rows(const std::string& path,
                  const std::vector<std::pair<std::size_t, std::string>>& lines,
                  std::size_t first) {
  Index cols = -1;
  std::vector<std::vector<double>> rows;
  for (std::size_t r = first; r < lines.size(); ++r) {
    const auto& [number, text] = lines[r];
    const auto fields = split_fields(text);
    if (cols < 0) cols = static_cast<Index>(fields.size());
    if (static_cast<Index>(fields.size()) != cols) {
      throw InputError(located(path, number, "expected " + std::to_string(cols) + " fields, found " +
                                                 std::to_string(fields.size())));
    }
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (!parse_double(fields[c], row[c])) {
        throw InputError(located(path, number, "field " + std::to_string(c + 1) +
                                                   " is not a finite number: '" + fields[c] + "'"));
      }
    }
    rows.push_back(std::move(row));
  }
  Matrix out(static_cast<Index>(rows.size()), std::max<Index>(cols, 0));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Index c = 0; c < cols; ++c) out(static_cast<Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  }
  return out;
}

void write_rows(std::ostream& out, const Matrix& values) {
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(values(i, j));
    }
    out << '\n';
  }
}

void dump_value(const nlohmann::json& value, std::ostream& out, int indent, int depth) {
  const std::string pad = indent > 0 ? std::string(static_cast<std::size_t>(indent * (depth + 1)), ' ') : "";
  const std::string close = indent > 0 ? std::string(static_cast<std::size_t>(indent * depth), ' ') : "";
  const char* nl = indent > 0 ? "\n" : "";
  switch (value.type()) {
    case nlohmann::json::value_t::object: {
      if (value.empty()) {
        out << "{}";
        return;
      }
      out << '{' << nl;
      bool first = true;
      for (auto it = value.begin(); it != value.end(); ++it) {
        if (!first) out << ',' << nl;
        first = false;
        out << pad << nlohmann::json(it.key()).dump() << (indent > 0 ? ": " : ":");
        dump_value(it.value(), out, indent, depth + 1);
      }
      out << nl << close << '}';
      return;
    }
    case nlohmann::json::value_t::array: {
      if (value.empty()) {
        out << "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      const bool flat = std::all_of(value.begin(), value.end(),
                                    [](const nlohmann::json& v) { return v.is_primitive(); });
      out << '[';
      bool first = true;
      for (const auto& v : value) {
        if (!first) out << (flat ? ", " : ",");
        if (!flat) out << nl << pad;
        first = false;
        dump_value(v, out, indent, depth + 1);
      }
      if (!flat) out << nl << close;
      out << ']';
      return;
    }
    case nlohmann::json::value_t::number_float: {
      const double d = value.get<double>();
      out << (std::isfinite(d) ? format_double(d) : "null");
      return;
    }
    default:
      out << value.dump();
  }
}

nlohmann::json lambda_path_to_json(const LambdaPath& path) {
  nlohmann::json records = nlohmann::json::array();
  for (const CvRecord& r : path.records) {
    records.push_back({{"lambda", r.lambda},
                       {"mean_loglik", r.mean_loglik},
                       {"std_error", r.std_error},
                       {"folds_used", r.folds_used}});
  }
  return {{"chosen", path.chosen},
          {"folds", path.folds},
          {"skipped_folds", path.skipped_folds},
          {"records", records}};
}

LambdaPath lambda_path_from_json(const nlohmann::json& j) {
  LambdaPath path;
  path.chosen = j.at("chosen").get<double>();
  path.folds = j.at("folds").get<int>();
  path.skipped_folds = j.at("skipped_folds").get<int>();
  for (const auto& r : j.at("records")) {
    path.records.push_back({r.at("lambda").get<double>(), r.at("mean_loglik").get<double>(),
                            r.at("std_error").get<double>(), r.at("folds_used").get<int>()});
  }
  return path;
}

}  // namespace

std::string format_double(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

Matrix read_numeric_csv(const std::string& path) { return parse_rows(path, read_lines(path), 0); }

void write_numeric_csv(const std::string& path, const Matrix& values) {
  std::ofstream out = open_output(path);
  write_rows(out, values);
}

AdjacencyMatrix read_adjacency(const std::string& path) {
  const Matrix a = read_numeric_csv(path);
  try {
    return AdjacencyMatrix(a);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_adjacency(const std::string& path, const AdjacencyMatrix& A) {
  std::ofstream out = open_output(path);
  const Matrix& a = A.matrix();
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      if (j > 0) out << ',';
      out << (a(i, j) != 0.0 ? '1' : '0');
    }
    out << '\n';
  }
}

FunctionalSample read_covariates(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.size() < 2) throw InputError(path + ": need a grid row and at least one curve");
  const Matrix all = parse_rows(path, lines, 0);
  try {
    return FunctionalSample(all.row(0).transpose(), all.bottomRows(all.rows() - 1));
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_covariates(const std::string& path, const FunctionalSample& X) {
  std::ofstream out = open_output(path);
  write_rows(out, X.grid().transpose());
  write_rows(out, X.values());
}

CommunityLabels read_labels(const std::string& path, int classes) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw InputError(path + ": empty label file");
  std::size_t first = 0;
  double probe = 0.0;
  if (!parse_double(split_fields(lines[0].second).front(), probe)) first = 1;  // header
  const Matrix rows = parse_rows(path, lines, first);
  if (rows.cols() != 1 && rows.cols() != 2) {
    throw InputError(path + ": expected one label per line or columns node,label");
  }
  const bool indexed = rows.cols() == 2;
  std::vector<int> labels(static_cast<std::size_t>(rows.rows()), -1);
  int top = 0;
  for (Index r = 0; r < rows.rows(); ++r) {
    const std::size_t line = lines[first + static_cast<std::size_t>(r)].first;
    const double node = indexed ? rows(r, 0) : static_cast<double>(r);
    const double label = rows(r, rows.cols() - 1);
    if (node != std::floor(node) || node < 0 || node >= rows.rows()) {
      throw InputError(located(path, line, "node index out of range"));
    }
    if (label != std::floor(label) || label < 0) {
      throw InputError(located(path, line, "label must be a nonnegative integer"));
    }
    if (labels[static_cast<std::size_t>(node)] >= 0) {
      throw InputError(located(path, line, "duplicate node"));
    }
    labels[static_cast<std::size_t>(node)] = static_cast<int>(label);
    top = std::max(top, static_cast<int>(label));
  }
  return CommunityLabels(std::move(labels), classes > 0 ? classes : top + 1);
}

void write_labels(const std::string& path, const CommunityLabels& labels) {
  std::ofstream out = open_output(path);
  out << "node,label\n";
  for (Index i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
}

void write_beta_ci(const std::string& path, const std::vector<CiBand>& bands) {
  std::ofstream out = open_output(path);
  out << "t,k,estimate,lower,upper,method\n";
  for (const CiBand& band : bands) {
    for (Index g = 0; g < band.t.size(); ++g) {
      out << format_double(band.t(g)) << ',' << band.community << ','
          << format_double(band.estimate(g)) << ',' << format_double(band.lower(g)) << ','
          << format_double(band.upper(g)) << ',' << to_string(band.method) << '\n';
    }
  }
}

void dump_json(const nlohmann::json& value, std::ostream& out, int indent) {
  dump_value(value, out, indent, 0);
}

std::string dump_json(const nlohmann::json& value, int indent) {
  std::ostringstream out;
  dump_json(value, out, indent);
  return out.str();
}

void write_json(const std::string& path, const nlohmann::json& value) {
  std::ofstream out = open_output(path);
  dump_json(value, out);
  out << '\n';
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in = open_input(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path + ": malformed JSON (" + e.what() + ")");
  }
}

nlohmann::json to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

nlohmann::json to_json(const Matrix& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) out.push_back(to_json(Vector(m.row(i).transpose())));
  return out;
}

Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InputError("expected a JSON array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InputError("expected a JSON array of numbers");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InputError("expected a JSON array of rows");
  if (j.empty()) return Matrix(0, 0);
  const Index cols = static_cast<Index>(j[0].size());
  Matrix m(static_cast<Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vector row = vector_from_json(j[i]);
    if (row.size() != cols) throw InputError("ragged JSON matrix");
    m.row(static_cast<Index>(i)) = row.transpose();
  }
  return m;
}

nlohmann::json fit_to_json(const FitRecord& record) {
  const FitResult& r = record.result;
  const VariationalState& s = r.state;
  nlohmann::json labels = nlohmann::json::array();
  for (const int v : r.labels.values()) labels.push_back(v);
  nlohmann::json trace = nlohmann::json::array();
  for (const double v : s.objective_trace) trace.push_back(v);
  nlohmann::json j = {{"n", s.q.rows()},
                      {"K", s.coeffs.communities()},
                      {"m", record.m},
                      {"lambda", s.lambda},
                      {"alpha", to_json(s.coeffs.alpha)},
                      {"d", to_json(s.coeffs.d)},
                      {"c", to_json(s.coeffs.c)},
                      {"B", to_json(s.B.values)},
                      {"q", to_json(s.q)},
                      {"labels", labels},
                      {"objective_trace", trace},
                      {"iterations", r.iterations},
                      {"converged", r.converged},
                      {"eta_converged", r.eta_converged},
                      {"seed", record.seed},
                      {"grid", to_json(record.grid)},
                      {"adjacency", record.adjacency_path},
                      {"covariates", record.covariates_path}};
  if (r.lambda_path) j["lambda_path"] = lambda_path_to_json(*r.lambda_path);
  return j;
}

FitRecord fit_from_json(const nlohmann::json& j) {
  try {
    FitRecord record;
    FitResult& r = record.result;
    VariationalState& s = r.state;
    record.m = j.at("m").get<int>();
    record.seed = j.at("seed").get<std::uint64_t>();
    record.grid = vector_from_json(j.at("grid"));
    record.adjacency_path = j.value("adjacency", "");
    record.covariates_path = j.value("covariates", "");
    const Index n = j.at("n").get<Index>();
    const Index K = j.at("K").get<Index>();
    s.lambda = j.at("lambda").get<double>();
    s.coeffs.alpha = vector_from_json(j.at("alpha"));
    s.coeffs.d = matrix_from_json(j.at("d"));
    s.coeffs.c = matrix_from_json(j.at("c"));
    s.B.values = matrix_from_json(j.at("B"));
    s.q = matrix_from_json(j.at("q"));
    for (const auto& v : j.at("objective_trace")) s.objective_trace.push_back(v.get<double>());
    if (s.coeffs.alpha.size() != K || s.coeffs.d.rows() != K || s.coeffs.c.rows() != K ||
        s.coeffs.c.cols() != n || s.q.rows() != n || s.q.cols() != K + 1 ||
        s.B.values.rows() != K + 1 || s.B.values.cols() != K + 1) {
      throw InputError("fit file dimensions are inconsistent");
    }
    if (s.coeffs.d.cols() != record.m) s.coeffs.d.resize(K, record.m);
    r.labels = CommunityLabels(j.at("labels").get<std::vector<int>>(), static_cast<int>(K + 1));
    r.iterations = j.value("iterations", 0);
    r.converged = j.at("converged").get<bool>();
    r.eta_converged = j.value("eta_converged", true);
    if (j.contains("lambda_path")) r.lambda_path = lambda_path_from_json(j.at("lambda_path"));
    return record;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed fit file: ") + e.what());
  }
}

nlohmann::json truth_to_json(const TruthRecord& truth) {
  nlohmann::json j = {{"n", truth.n},
                      {"seed", truth.seed},
                      {"tau", truth.tau},
                      {"grid", to_json(truth.grid)},
                      {"alpha0", to_json(truth.theta.alpha)},
                      {"beta0", to_json(truth.theta.beta)},
                      {"B", to_json(truth.theta.B.values)}};
  if (truth.rho) j["rho_n"] = *truth.rho;
  return j;
}

TruthRecord truth_from_json(const nlohmann::json& j) {
  try {
    TruthRecord t;
    t.n = j.value("n", Index{0});
    t.seed = j.value("seed", std::uint64_t{0});
    t.tau = j.value("tau", 1.0);
    t.grid = vector_from_json(j.at("grid"));
    t.theta.alpha = vector_from_json(j.at("alpha0"));
    t.theta.beta = matrix_from_json(j.at("beta0"));
    t.theta.B.values = matrix_from_json(j.at("B"));
    if (j.contains("rho_n")) t.rho = j.at("rho_n").get<double>();
    validate_block_matrix(t.theta.B);
    if (t.theta.beta.rows() != t.theta.alpha.size() || t.theta.beta.cols() != t.grid.size() ||
        t.theta.B.communities() != t.theta.alpha.size() + 1) {
      throw InputError("truth file dimensions are inconsistent");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed truth file: ") + e.what());
  }
}

nlohmann::json plrt_to_json(const PlrtResult& r) {
  return {{"variant", r.variant}, {"statistic", r.statistic}, {"m1", r.m1},
          {"m2", r.m2},           {"h", r.h},                 {"zeta", r.zeta},
          {"df", r.df},           {"scale", r.scale},         {"p_value", r.p_value},
          {"floored", r.floored}, {"n_eigs_used", r.n_eigs_used}};
}

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw InputError("cannot create output directory '" + dir + "': " + ec.message());
  }
}

}  // namespace fsbm
