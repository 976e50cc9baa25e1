#include <cmath>
#include <limits>

#include "doctest.h"
#include "fsbm/functional.hpp"
#include "fsbm/io.hpp"
#include "fsbm/spectral.hpp"
#include "scratch.hpp"

using namespace fsbm;

TEST_SUITE("io") {

TEST_CASE("doubles round trip through text") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 1e-6}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("adjacency and covariates round trip") {
  ScratchDir dir("io");
  GenerationConfig cfg;
  cfg.n = 15;
  cfg.block = default_block(15);
  cfg.block.values = (cfg.block.values * 2).cwiseMin(0.9);
  const SimulatedData d = simulate_dataset(cfg);
  write_adjacency(dir.file("a.csv"), d.A);
  write_covariates(dir.file("x.csv"), d.X);
  write_labels(dir.file("z.csv"), d.labels);
  CHECK(read_adjacency(dir.file("a.csv")).matrix() == d.A.matrix());
  const FunctionalSample X = read_covariates(dir.file("x.csv"));
  CHECK(X.grid() == d.X.grid());
  CHECK(X.values() == d.X.values());
  CHECK(read_labels(dir.file("z.csv")).values() == d.labels.values());
}

TEST_CASE("malformed files report the path and line") {
  ScratchDir dir("io_bad");
  spit(dir.file("a.csv"), "0,1\n1,x\n");
  try {
    read_adjacency(dir.file("a.csv"));
    FAIL("expected an input error");
  } catch (const InputError& e) {
    const std::string what = e.what();
    CHECK(what.find("a.csv:2") != std::string::npos);
  }
  spit(dir.file("ragged.csv"), "0,1\n1\n");
  CHECK_THROWS_AS(read_adjacency(dir.file("ragged.csv")), InputError);
  spit(dir.file("asym.csv"), "0,1\n0,0\n");
  CHECK_THROWS_AS(read_adjacency(dir.file("asym.csv")), InputError);
  spit(dir.file("grid.csv"), "0,0.5,0.4\n1,2,3\n");
  CHECK_THROWS_AS(read_covariates(dir.file("grid.csv")), InputError);
  CHECK_THROWS_AS(read_adjacency(dir.file("missing.csv")), InputError);
}

TEST_CASE("labels with and without a header") {
  ScratchDir dir("io_labels");
  spit(dir.file("plain.csv"), "0\n1\n1\n2\n");
  const CommunityLabels plain = read_labels(dir.file("plain.csv"));
  CHECK(plain.values() == std::vector<int>{0, 1, 1, 2});
  CHECK(plain.num_communities() == 3);
  spit(dir.file("pairs.csv"), "node,label\n0,1\n1,0\n");
  CHECK(read_labels(dir.file("pairs.csv")).values() == std::vector<int>{1, 0});
  spit(dir.file("neg.csv"), "0\n-1\n");
  CHECK_THROWS_AS(read_labels(dir.file("neg.csv")), InputError);
}

TEST_CASE("json output sorts keys and prints full precision") {
  nlohmann::json j = {{"b", 0.1}, {"a", {1.0 / 3.0, 2.0}}, {"nan", std::numeric_limits<double>::quiet_NaN()}};
  const std::string text = dump_json(j);
  CHECK(text.find("\"a\"") < text.find("\"b\""));
  CHECK(text.find("0.33333333333333331") != std::string::npos);
  CHECK(text.find("null") != std::string::npos);
  const nlohmann::json back = nlohmann::json::parse(text);
  CHECK(back["b"].get<double>() == 0.1);
}

TEST_CASE("fit record round trip") {
  GenerationConfig cfg;
  cfg.n = 60;
  cfg.block = default_block(60);
  cfg.block.values *= 3;
  const SimulatedData d = simulate_dataset(cfg);
  const SobolevDesign design = build_design(d.X, 2);
  FitRecord rec;
  rec.result = fit(d.A, design, 1, 1e-3, initial_responsibilities(d.labels, 0.05));
  rec.grid = d.X.grid();
  rec.seed = 42;
  rec.adjacency_path = "a.csv";
  rec.covariates_path = "x.csv";
  const std::string text = dump_json(fit_to_json(rec));
  const FitRecord back = fit_from_json(nlohmann::json::parse(text));
  CHECK(back.result.state.coeffs.c == rec.result.state.coeffs.c);
  CHECK(back.result.state.coeffs.alpha == rec.result.state.coeffs.alpha);
  CHECK(back.result.state.B.values == rec.result.state.B.values);
  CHECK(back.result.state.q == rec.result.state.q);
  CHECK(back.result.state.objective_trace == rec.result.state.objective_trace);
  CHECK(back.result.labels.values() == rec.result.labels.values());
  CHECK(back.seed == 42);
  CHECK(dump_json(fit_to_json(back)) == text);
  for (const char* key : {"n", "K", "m", "lambda", "alpha", "d", "c", "B", "q", "labels",
                          "objective_trace", "converged", "seed", "grid"})
    CHECK(nlohmann::json::parse(text).contains(key));
}

TEST_CASE("band file layout") {
  ScratchDir dir("io_ci");
  CiBand b;
  b.t = Vector{{0.0, 0.5}};
  b.estimate = Vector{{1.0, 2.0}};
  b.sd = Vector{{0.1, 0.1}};
  b.lower = b.estimate.array() - 0.2;
  b.upper = b.estimate.array() + 0.2;
  write_beta_ci(dir.file("ci.csv"), {b});
  const std::string text = slurp(dir.file("ci.csv"));
  CHECK(text.rfind("t,k,estimate,lower,upper,method\n", 0) == 0);
  CHECK(text.find("\n0.5,1,2,") != std::string::npos);
  CHECK(text.find(",laplace\n") != std::string::npos);
}

}  // TEST_SUITE
