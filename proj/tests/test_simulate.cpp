#include <doctest.h>

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "ps2/error.hpp"
#include "ps2/simulate.hpp"
#include "test_util.hpp"

using namespace ps2;

namespace {

DgpSpec small(int dgp, std::uint64_t seed = 1) {
  DgpSpec s;
  s.dgp = dgp;
  s.n = 50;
  s.t = 500;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("sparsity levels") {
  CHECK(sparsity_level(200) == 20);
  CHECK(sparsity_level(500) == 31);
  CHECK(weak_support(200, 1) == 14);
  CHECK(weak_support(200, 2) == 8);
  CHECK(weak_support(200, 3) == 5);
  CHECK(weak_support(10000, 1) == 100);
  CHECK(true_sparsity(small(1)) == sparsity_level(50));
  DgpSpec s = small(2);
  CHECK(true_sparsity(s) == sparsity_level(50));
  s.n = 10000;
  CHECK(true_sparsity(s) == 141);
}

TEST_CASE("Gram-Schmidt keeps nested supports") {
  std::mt19937_64 rng(4);
  Eigen::MatrixXd m = testutil::gaussian(30, 3, rng);
  m.block(20, 0, 10, 1).setZero();
  m.block(10, 1, 20, 1).setZero();
  m.block(5, 2, 25, 1).setZero();
  const Eigen::MatrixXd on = gram_schmidt(m, LoadingScale::orthonormal);
  CHECK(testutil::max_abs_diff(on.transpose() * on, Eigen::MatrixXd::Identity(3, 3)) < 1e-12);
  const Eigen::MatrixXd og = gram_schmidt(m, LoadingScale::orthogonal);
  const Eigen::MatrixXd g = og.transpose() * og;
  CHECK(testutil::max_abs_diff(g, Eigen::MatrixXd(g.diagonal().asDiagonal())) < 1e-10);
  for (const auto* q : {&on, &og}) {
    CHECK((*q).block(20, 0, 10, 1).isZero(0.0));
    CHECK((*q).block(10, 1, 20, 1).isZero(0.0));
    CHECK((*q).block(5, 2, 25, 1).isZero(0.0));
  }
}

TEST_CASE("realizations have the documented shape and population") {
  for (int dgp = 1; dgp <= 4; ++dgp) {
    CAPTURE(dgp);
    const DgpRealization d = make_dgp(small(dgp));
    CHECK(d.returns.periods() == 500);
    CHECK(d.returns.assets() == 50);
    CHECK(d.factors.has_value() == has_strong_factors(dgp));
    CHECK(d.true_support.size() == static_cast<std::size_t>(true_sparsity(small(dgp))));
    if (has_strong_factors(dgp)) {
      CHECK(d.factors->factors() == 3);
      CHECK(d.true_weights.size() == 53);
      CHECK(population_aug_theta(d.population) == doctest::Approx(1.0).epsilon(1e-10));
    } else {
      CHECK(d.true_weights.size() == 50);
      CHECK(population_theta(d.population) == doctest::Approx(1.0).epsilon(1e-10));
      CHECK(d.true_weights.dot(d.population.mu) == doctest::Approx(kSimRhoBar).epsilon(1e-10));
    }
    // weights vanish off the true support
    const Index s = static_cast<Index>(d.true_support.size());
    CHECK(d.true_weights.segment(s, 50 - s).isZero(1e-12));
    CHECK(d.true_weights.head(s).cwiseAbs().minCoeff() > 0.0);
  }
}

TEST_CASE("realizations are seeded") {
  CHECK(make_dgp(small(3, 5)).returns.values() == make_dgp(small(3, 5)).returns.values());
  CHECK(make_dgp(small(3, 5)).returns.values() != make_dgp(small(3, 6)).returns.values());
}

TEST_CASE("orthonormal loadings have unit-norm columns") {
  DgpSpec s = small(3);
  s.loading_scale = LoadingScale::orthonormal;
  const DgpRealization d = make_dgp(s);
  const Eigen::MatrixXd& a = d.population.factors->loadings;
  CHECK(testutil::max_abs_diff(a.transpose() * a, Eigen::MatrixXd::Identity(3, 3)) < 1e-10);
}

TEST_CASE("spec validation") {
  DgpSpec s = small(1);
  s.dgp = 5;
  CHECK_THROWS_AS(make_dgp(s), Error);
  s = small(3);
  s.theta_x0 = 1.5;
  CHECK_THROWS_AS(make_dgp(s), Error);
}

TEST_CASE("screening metrics") {
  const ScreeningMetrics m = screening_metrics({0, 1, 7, 9}, {0, 1, 2}, 3);
  CHECK(m.nonzeros == 4);
  CHECK(m.fdp == doctest::Approx(0.5));
  CHECK(m.pwr == doctest::Approx(2.0 / 3.0));
  const ScreeningMetrics e = screening_metrics({}, {0, 1, 2}, 3);
  CHECK(e.fdp == 0.0);
  CHECK(e.pwr == 0.0);
}

TEST_CASE("method names round trip") {
  for (auto m : {SimMethod::ps2, SimMethod::fps2, SimMethod::ps2_on_factored_data, SimMethod::maxser,
                 SimMethod::oracle_fps2}) {
    CHECK(parse_sim_method(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_sim_method("nope"), Error);
}

TEST_CASE("method and design mismatches are configuration errors") {
  CHECK_THROWS_AS(run_replication(small(3), SimMethod::ps2, {}), Error);
  CHECK_THROWS_AS(run_replication(small(1), SimMethod::fps2, {}), Error);
}

TEST_CASE("oracle and estimated methods on small designs") {
  const RepResult oracle = run_replication(small(3, 2), SimMethod::oracle_fps2, {});
  REQUIRE(oracle.valid);
  CHECK(oracle.screening.pwr == 1.0);
  CHECK(oracle.screening.fdp == 0.0);
  const RepResult fps2 = run_replication(small(3, 2), SimMethod::fps2, {});
  REQUIRE(fps2.valid);
  CHECK(fps2.screening.pwr >= 0.8);
  CHECK(fps2.estimation.sr > 0.5);
  const RepResult ps2 = run_replication(small(1, 2), SimMethod::ps2, {});
  REQUIRE(ps2.valid);
  CHECK(ps2.screening.pwr >= 0.8);
}

TEST_CASE("experiments aggregate, normalize and serialize") {
  ExperimentConfig cfg;
  cfg.threads = 2;
  const SimReport a = run_experiment(small(1), SimMethod::ps2, 3, 10, cfg);
  REQUIRE(a.per_rep.size() == 3);
  CHECK(a.per_rep[2].seed == 12);
  CHECK(a.valid_reps == 3);
  double mean = 0.0;
  for (const auto& r : a.per_rep) mean += r.screening.pwr / 3.0;
  CHECK(a.pwr.mean == doctest::Approx(mean));
  cfg.threads = 1;
  const SimReport b = run_experiment(small(1), SimMethod::ps2, 3, 10, cfg);
  CHECK(sim_report_json(a) == sim_report_json(b));
  const SimReport n = normalize_mse(a, a);
  CHECK(n.mse.mean == doctest::Approx(1.0));
  const auto j = nlohmann::json::parse(sim_report_json(a));
  CHECK(j.at("valid_reps") == 3);
  CHECK(j.at("failures").empty());
  std::ostringstream csv;
  write_sim_csv(csv, a);
  const std::string text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  const std::string table = format_sim_table({a});
  CHECK(table.find("Nonzeros") != std::string::npos);
  CHECK(table.find("Power") != std::string::npos);
}

TEST_CASE("strong factor demo is deterministic") {
  const double a = strong_factor_demo(0.1, 100, 300, 3);
  CHECK(a == strong_factor_demo(0.1, 100, 300, 3));
  CHECK(a >= 0.0);
  CHECK(a <= 1.0);
}
