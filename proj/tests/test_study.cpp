#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <multidep/rng.hpp>
#include <multidep/study.hpp>

using namespace multidep;

namespace {

// pooled mean over every column of one block
double block_mean(const ObservationBlock& b) { return b.mean(); }

double block_var(const ObservationBlock& b) {
  double m = b.mean();
  return (b.array() - m).square().sum() / static_cast<double>(b.size() - 1);
}

// sample correlation pooled over the matching columns of two blocks
double pooled_corr(const ObservationBlock& a, const ObservationBlock& b) {
  double num = 0.0, da = 0.0, db = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    Eigen::ArrayXd x = a.col(c).array() - a.col(c).mean();
    Eigen::ArrayXd y = b.col(c).array() - b.col(c).mean();
    num += (x * y).sum();
    da += x.square().sum();
    db += y.square().sum();
  }
  return num / std::sqrt(da * db);
}

Scenario scenario(Scenario::Kind kind, int n, Eigen::Index N, double param = 0.0,
                  bool h0 = false) {
  Scenario sc;
  sc.kind = kind;
  sc.n = n;
  sc.N = N;
  sc.param = param;
  sc.h0 = h0;
  return sc;
}

}  // namespace

TEST_CASE("scenario names and ids") {
  for (Scenario::Kind k :
       {Scenario::Kind::bernoulli, Scenario::Kind::uniform, Scenario::Kind::normal,
        Scenario::Kind::student_t, Scenario::Kind::mixed, Scenario::Kind::tetrahedron,
        Scenario::Kind::srb1a, Scenario::Kind::srb2, Scenario::Kind::srb3,
        Scenario::Kind::mv_block, Scenario::Kind::coins})
    CHECK(scenario_kind_from_name(scenario_kind_name(k)) == k);
  CHECK_THROWS_AS(scenario_kind_from_name("lattice"), std::invalid_argument);

  CHECK(scenario_id(scenario(Scenario::Kind::tetrahedron, 3, 100, 0.5)) ==
        "tetrahedron(0.5).n3.N100");
  CHECK(scenario_id(scenario(Scenario::Kind::bernoulli, 2, 50, 0.0, true)) ==
        "bernoulli.n2.N50.h0");
  CHECK(scenario_id(scenario(Scenario::Kind::srb1a, 2, 30, 0.1)) == "srb1a(0.1).n2.N30");

  CHECK(scenario_assumption_violating(scenario(Scenario::Kind::student_t, 2, 50, 1.0)));
  CHECK_FALSE(scenario_assumption_violating(scenario(Scenario::Kind::student_t, 2, 50, 3.0)));
  CHECK_FALSE(scenario_assumption_violating(scenario(Scenario::Kind::normal, 2, 50)));
}

TEST_CASE("generators repeat bit-for-bit and validate their shapes") {
  for (Scenario sc : {scenario(Scenario::Kind::bernoulli, 3, 40),
                      scenario(Scenario::Kind::mixed, 6, 40),
                      scenario(Scenario::Kind::tetrahedron, 3, 40, 0.5),
                      scenario(Scenario::Kind::srb2, 2, 40),
                      scenario(Scenario::Kind::coins, 6, 40)}) {
    Dataset a = generate(sc, 123u);
    Dataset b = generate(sc, 123u);
    Dataset c = generate(sc, 124u);
    REQUIRE(a.n() == static_cast<std::size_t>(sc.n));
    REQUIRE(a.N() == sc.N);
    bool equal = true, differs = false;
    for (std::size_t i = 0; i < a.n(); ++i) {
      equal = equal && a.blocks[i] == b.blocks[i];
      differs = differs || a.blocks[i] != c.blocks[i];
    }
    CHECK(equal);
    CHECK(differs);
  }

  Dataset wide = generate(scenario(Scenario::Kind::srb1a, 2, 20, 0.1), 5u);
  CHECK(wide.blocks[0].cols() == 5);
  CHECK(wide.blocks[1].cols() == 5);

  CHECK_THROWS_AS(generate(scenario(Scenario::Kind::mixed, 4, 40), 1u), std::invalid_argument);
  CHECK_THROWS_AS(generate(scenario(Scenario::Kind::tetrahedron, 2, 40), 1u),
                  std::invalid_argument);
  CHECK_THROWS_AS(generate(scenario(Scenario::Kind::srb3, 3, 40), 1u), std::invalid_argument);
  CHECK_THROWS_AS(generate(scenario(Scenario::Kind::coins, 4, 40), 1u), std::invalid_argument);
  CHECK_THROWS_AS(generate(scenario(Scenario::Kind::normal, 2, 1), 1u), std::invalid_argument);
}

TEST_CASE("iid marginals match their populations") {
  const Eigen::Index N = 20000;
  // margins are three standard errors of the pooled estimates at this N
  struct Row {
    Scenario sc;
    double mean, mean_tol, var, var_tol;
  };
  const Row rows[] = {
      {scenario(Scenario::Kind::bernoulli, 2, N), 0.5, 0.011, 0.25, 0.01},
      {scenario(Scenario::Kind::uniform, 2, N), 0.5, 0.009, 1.0 / 12.0, 0.002},
      {scenario(Scenario::Kind::normal, 2, N), 0.0, 0.022, 1.0, 0.03},
      {scenario(Scenario::Kind::student_t, 2, N, 5.0), 0.0, 0.028, 5.0 / 3.0, 0.10},
  };
  for (const Row& row : rows) {
    Dataset d = generate(row.sc, 2024u);
    for (const auto& b : d.blocks) {
      CHECK(block_mean(b) == Catch::Approx(row.mean).margin(row.mean_tol));
      CHECK(block_var(b) == Catch::Approx(row.var).margin(row.var_tol));
    }
  }

  // heavy tails still produce finite draws
  Dataset cauchy = generate(scenario(Scenario::Kind::student_t, 2, 500, 1.0), 7u);
  CHECK(cauchy.blocks[0].array().isFinite().all());

  Dataset mixed = generate(scenario(Scenario::Kind::mixed, 6, N), 99u);
  const double means[6] = {1.0, 0.0, 0.5, 0.5, 1.0, 5.0};
  const double mean_tol[6] = {0.022, 0.022, 0.011, 0.009, 0.022, 0.034};
  const double vars[6] = {1.0, 1.0, 0.25, 1.0 / 12.0, 1.0, 2.5};
  const double var_tol[6] = {0.06, 0.03, 0.01, 0.002, 0.05, 0.08};
  for (int i = 0; i < 6; ++i) {
    CHECK(block_mean(mixed.blocks[static_cast<std::size_t>(i)]) ==
          Catch::Approx(means[i]).margin(mean_tol[i]));
    CHECK(block_var(mixed.blocks[static_cast<std::size_t>(i)]) ==
          Catch::Approx(vars[i]).margin(var_tol[i]));
  }
}

TEST_CASE("structured marginals match their populations") {
  // tetrahedron coordinate: a fair coin plus r times an independent normal
  const double r = 0.25;
  Dataset tet = generate(scenario(Scenario::Kind::tetrahedron, 3, 20000, r), 31u);
  for (const auto& b : tet.blocks) {
    CHECK(block_mean(b) == Catch::Approx(0.5).margin(0.015));
    CHECK(block_var(b) == Catch::Approx(0.25 + r * r).margin(0.01));
  }

  // the log of a squared standard normal has mean -gamma - log 2 and
  // variance pi^2 / 2
  Dataset srb3 = generate(scenario(Scenario::Kind::srb3, 2, 4000), 32u);
  CHECK(block_mean(srb3.blocks[1]) == Catch::Approx(-1.2703628).margin(0.05));
  CHECK(block_var(srb3.blocks[1]) == Catch::Approx(4.9348022).margin(0.30));

  // a product of independent standard normals is centered with unit variance
  Dataset srb2 = generate(scenario(Scenario::Kind::srb2, 2, 4000), 33u);
  CHECK(block_mean(srb2.blocks[1]) == Catch::Approx(0.0).margin(0.05));
  CHECK(block_var(srb2.blocks[1]) == Catch::Approx(1.0).margin(0.14));
  // uncorrelated with the first block even though dependent on it
  CHECK(pooled_corr(srb2.blocks[0], srb2.blocks[1]) == Catch::Approx(0.0).margin(0.05));

  Dataset srb1a = generate(scenario(Scenario::Kind::srb1a, 2, 4000, 0.5), 34u);
  CHECK(pooled_corr(srb1a.blocks[0], srb1a.blocks[1]) == Catch::Approx(0.5).margin(0.02));
  Dataset srb1a_h0 = generate(scenario(Scenario::Kind::srb1a, 2, 4000, 0.5, true), 35u);
  CHECK(pooled_corr(srb1a_h0.blocks[0], srb1a_h0.blocks[1]) == Catch::Approx(0.0).margin(0.025));

  Dataset mv = generate(scenario(Scenario::Kind::mv_block, 2, 4000, 0.3), 36u);
  CHECK(pooled_corr(mv.blocks[0], mv.blocks[1]) == Catch::Approx(0.3).margin(0.05));
}

TEST_CASE("tetrahedron and coin supports") {
  Dataset tet = generate(scenario(Scenario::Kind::tetrahedron, 3, 8000, 0.0), 41u);
  std::set<std::string> seen;
  int corners[4] = {0, 0, 0, 0};
  for (Eigen::Index j = 0; j < tet.N(); ++j) {
    int x = static_cast<int>(tet.blocks[0](j, 0));
    int y = static_cast<int>(tet.blocks[1](j, 0));
    int z = static_cast<int>(tet.blocks[2](j, 0));
    // exactly one coordinate set, or all three
    REQUIRE(x + y + z != 0);
    REQUIRE(x + y + z != 2);
    seen.insert(std::to_string(x) + std::to_string(y) + std::to_string(z));
    if (x + y + z == 3)
      ++corners[3];
    else
      ++corners[x == 1 ? 0 : (y == 1 ? 1 : 2)];
  }
  CHECK(seen.size() == 4);
  for (int c : corners)
    CHECK(static_cast<double>(c) / static_cast<double>(tet.N()) ==
          Catch::Approx(0.25).margin(0.015));

  // coordinates are pairwise independent: both ones exactly on the top corner
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      double both = (tet.blocks[static_cast<std::size_t>(a)].array() *
                     tet.blocks[static_cast<std::size_t>(b)].array())
                        .mean();
      CHECK(both == Catch::Approx(0.25).margin(0.015));
    }

  // each coin triple carries even parity; the independent version does not
  Dataset coins = generate(scenario(Scenario::Kind::coins, 6, 4000), 42u);
  bool all_even = true;
  for (Eigen::Index j = 0; j < coins.N(); ++j)
    for (int g = 0; g < 2; ++g) {
      int parity = static_cast<int>(coins.blocks[static_cast<std::size_t>(3 * g)](j, 0)) ^
                   static_cast<int>(coins.blocks[static_cast<std::size_t>(3 * g + 1)](j, 0)) ^
                   static_cast<int>(coins.blocks[static_cast<std::size_t>(3 * g + 2)](j, 0));
      all_even = all_even && parity == 0;
    }
  CHECK(all_even);

  Dataset fair = generate(scenario(Scenario::Kind::coins, 3, 4000, 0.0, true), 43u);
  int odd = 0;
  for (Eigen::Index j = 0; j < fair.N(); ++j)
    odd += static_cast<int>(fair.blocks[0](j, 0)) ^ static_cast<int>(fair.blocks[1](j, 0)) ^
           static_cast<int>(fair.blocks[2](j, 0));
  CHECK(static_cast<double>(odd) / static_cast<double>(fair.N()) ==
        Catch::Approx(0.5).margin(0.024));
}

TEST_CASE("pairwise tests miss the tetrahedron, the joint test catches it") {
  const Eigen::Index N = 100;
  const int reps = 150;
  TestSpec joint;  // single subset over all three variables
  TestSpec pairwise;
  pairwise.kind.family = StatisticKind::Family::m_multivariance;
  pairwise.kind.m = 2;

  int joint_rej = 0, pair_rej = 0;
  Scenario sc = scenario(Scenario::Kind::tetrahedron, 3, N, 0.0);
  for (int rep = 0; rep < reps; ++rep) {
    auto rng = make_rng(510, static_cast<std::uint64_t>(rep));
    Dataset data = generate(sc, rng);
    if (run_test(data, joint).p <= 0.05) ++joint_rej;
    if (run_test(data, pairwise).p <= 0.05) ++pair_rej;
  }
  CHECK(static_cast<double>(joint_rej) / reps >= 0.85);
  CHECK(static_cast<double>(pair_rej) / reps <= 0.15);
}

TEST_CASE("comparison protocol rules") {
  double err = -1.0;
  // both estimates out of the tail: the sample is skipped
  CHECK_FALSE(protocol_squared_error(0.30, 0.25, err));
  // below the benchmark resolution the error counts as zero
  CHECK(protocol_squared_error(0.0005, 0.0009, err));
  CHECK(err == 0.0);
  // plain squared relative deviation in between
  CHECK(protocol_squared_error(0.12, 0.10, err));
  CHECK(err == Catch::Approx(0.04));
  CHECK(protocol_squared_error(0.30, 0.15, err));
  CHECK(err == 1.0);
  // capped at one however far off the estimate is
  CHECK(protocol_squared_error(1.0, 0.01, err));
  CHECK(err == 1.0);
  // comparing a method against itself leaves no error
  for (double p : {0.0005, 0.01, 0.05, 0.2, 0.5}) {
    if (protocol_squared_error(p, p, err)) CHECK(err == 0.0);
    CHECK_FALSE(protocol_violation(p, p));
  }

  CHECK(protocol_margin(0.5) == 0.05);
  CHECK(protocol_margin(0.04) == Catch::Approx(0.02));

  // a violation means claiming more significance than the benchmark supports
  CHECK(protocol_violation(0.01, 0.20));
  CHECK_FALSE(protocol_violation(0.16, 0.20));
  CHECK_FALSE(protocol_violation(0.30, 0.20));
  CHECK(protocol_violation(0.009, 0.04));
  CHECK_FALSE(protocol_violation(0.03, 0.04));
}

TEST_CASE("method labels encode the full specification") {
  TestSpec spec;
  CHECK(method_label(spec) == "pearson.fin.u");
  spec.method = TestMethod::classical;
  spec.estimator.horizon = MomentHorizon::limit;
  spec.estimator.bias = BiasMode::biased;
  spec.kind.normalized = false;
  CHECK(method_label(spec) == "classical.limit.b.raw");
  spec.kind.normalized = true;
  spec.kind.family = StatisticKind::Family::m_multivariance;
  spec.kind.m = 2;
  CHECK(method_label(spec) == "classical.m2.limit.b");
  spec.method = TestMethod::eigenvalue;
  CHECK(method_label(spec) == "eigenvalue.m2");
  spec.method = TestMethod::permutation;
  spec.kind.family = StatisticKind::Family::total;
  CHECK(method_label(spec) == "permutation.total");
}

TEST_CASE("a study run repeats bit-for-bit and reports every cell") {
  StudyConfig cfg;
  cfg.scenarios = {scenario(Scenario::Kind::bernoulli, 2, 30),
                   scenario(Scenario::Kind::uniform, 2, 30)};
  TestSpec pearson;
  TestSpec classical;
  classical.method = TestMethod::classical;
  TestSpec total;
  total.kind.family = StatisticKind::Family::total;
  cfg.methods = {pearson, classical, total};
  cfg.replicates = 40;
  cfg.benchmark_samples = 200;
  cfg.seed = 99;

  std::vector<StudyCell> cells = run_study(cfg);
  // three method cells plus two benchmark kinds per scenario
  REQUIRE(cells.size() == 2 * (3 + 2));
  for (const StudyCell& c : cells) {
    CHECK(c.rel_mse >= 0.0);
    CHECK(c.rel_mse <= 1.0);
    CHECK(c.violation_rate >= 0.0);
    CHECK(c.violation_rate <= 1.0);
    CHECK(c.rejection_rate >= 0.0);
    CHECK(c.rejection_rate <= 1.0);
  }
  CHECK(cells[0].scenario == "bernoulli.n2.N30");
  CHECK(cells[0].method == "pearson.fin.u");
  CHECK(cells[3].method == "benchmark");
  CHECK(cells[4].method == "benchmark.total");

  CHECK(study_csv(cells) == study_csv(run_study(cfg)));

  StudyConfig empty = cfg;
  empty.methods.clear();
  CHECK_THROWS_AS(run_study(empty), std::invalid_argument);
  StudyConfig zero = cfg;
  zero.replicates = 0;
  CHECK_THROWS_AS(run_study(zero), std::invalid_argument);
}

TEST_CASE("study csv uses the long format") {
  StudyCell cell;
  cell.scenario = "normal.n2.N50";
  cell.method = "pearson.fin.u";
  cell.rel_mse = 0.125;
  cell.rel_mse_samples = 17;
  cell.violation_rate = 0.05;
  cell.liberal = false;
  cell.rejection_rate = 0.0625;
  std::string csv = study_csv({cell});

  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "scenario,method,metric,value");
  int rows = 0;
  bool saw_mse = false;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(line.rfind("normal.n2.N50,pearson.fin.u,", 0) == 0);
    if (line == "normal.n2.N50,pearson.fin.u,rel_mse,0.125") saw_mse = true;
  }
  CHECK(rows == 5);
  CHECK(saw_mse);
}

TEST_CASE("the classical bound is not flagged liberal under independence") {
  StudyConfig cfg;
  cfg.scenarios = {scenario(Scenario::Kind::bernoulli, 2, 100, 0.0, true)};
  TestSpec classical;
  classical.method = TestMethod::classical;
  cfg.methods = {classical};
  cfg.replicates = 500;
  cfg.benchmark_samples = 2000;
  cfg.seed = 4242;

  std::vector<StudyCell> cells = run_study(cfg);
  REQUIRE(cells.size() == 2);
  const StudyCell& c = cells[0];
  CHECK(c.method == "classical.fin.u");
  CHECK_FALSE(c.liberal);
  CHECK(c.violation_rate < kLiberalShare);
  CHECK(c.rejection_rate <= 0.075);
  // the benchmark test itself sits at the nominal level
  CHECK(cells[1].method == "benchmark");
  CHECK(cells[1].rejection_rate == Catch::Approx(0.05).margin(0.03));
}

TEST_CASE("study power ordering on the noisy tetrahedron") {
  TestSpec pearson;
  TestSpec variance;
  variance.method = TestMethod::variance;
  TestSpec classical;
  classical.method = TestMethod::classical;

  StudyConfig cfg;
  cfg.methods = {pearson, variance, classical};
  cfg.replicates = 300;
  cfg.benchmark_samples = 1000;
  cfg.seed = 777;
  for (Eigen::Index N : {20, 60, 100})
    cfg.scenarios.push_back(scenario(Scenario::Kind::tetrahedron, 3, N, 0.5));

  std::vector<StudyCell> cells = run_study(cfg);
  REQUIRE(cells.size() == 3 * 4);
  double prev_pearson = 0.0;
  for (int s = 0; s < 3; ++s) {
    const StudyCell& pe = cells[static_cast<std::size_t>(4 * s)];
    const StudyCell& va = cells[static_cast<std::size_t>(4 * s + 1)];
    const StudyCell& cl = cells[static_cast<std::size_t>(4 * s + 2)];
    REQUIRE(pe.method == "pearson.fin.u");
    REQUIRE(va.method == "variance.fin.u");
    REQUIRE(cl.method == "classical.fin.u");
    // the sharper the tail estimate, the more power it keeps
    CHECK(pe.rejection_rate >= va.rejection_rate);
    CHECK(va.rejection_rate >= cl.rejection_rate);
    // power grows with the sample
    CHECK(pe.rejection_rate >= prev_pearson - 0.02);
    prev_pearson = pe.rejection_rate;
  }
  // at N = 100 the gap is decisive
  CHECK(cells[8].rejection_rate > cells[10].rejection_rate + 0.1);
}
