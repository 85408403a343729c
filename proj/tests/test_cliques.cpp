#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <set>

#include "csim/cliques.hpp"
#include "csim/common.hpp"
#include "testutil.hpp"

using namespace csim;

namespace {

// Block similarity: two clusters with high internal and low cross affinity.
SimilarityMatrix two_cluster_similarity() {
  const int n = 12;
  Eigen::MatrixXd s(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const bool same = (i < 6) == (j < 6);
      s(i, j) = same ? ((i < 6) ? 0.9 : 0.85) : -0.5;
    }
    s(i, i) = 1.0;
  }
  return testutil::make_similarity(s);
}

double min_pairwise(const Eigen::MatrixXd& s, const std::vector<int>& members) {
  double mn = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < members.size(); ++a) {
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      mn = std::min(mn, s(members[a], members[b]));
    }
  }
  return mn;
}

}  // namespace

TEST_CASE("threshold quantile interpolates the off-diagonal entries") {
  Eigen::MatrixXd s(3, 3);
  s << 1.0, 0.1, 0.9, 0.1, 1.0, 0.5, 0.9, 0.5, 1.0;
  const SimilarityMatrix sim = testutil::make_similarity(s);
  // Off-diagonal values sorted: [0.1, 0.5, 0.9].
  CHECK(mutual_similarity_threshold(sim, 0.5) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // Position 0.95 * 2 = 1.9 interpolates between 0.5 and 0.9.
  CHECK(mutual_similarity_threshold(sim, 0.95) ==
        doctest::Approx(0.1 * 0.5 + 0.9 * 0.9).epsilon(1e-12));
  CHECK_THROWS_AS(mutual_similarity_threshold(sim, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(mutual_similarity_threshold(sim, 1.0),
                  std::invalid_argument);
}

TEST_CASE("cliques over two well-separated clusters are pure and cover") {
  const SimilarityMatrix s = two_cluster_similarity();
  CliqueParams params;
  params.seed_neighbors = 11;
  params.min_mutual_sim_quantile = 0.5;  // tau lands on the cross-cluster -0.5
  const CliqueAssignment cl = build_cliques(s, params);
  REQUIRE(cl.clique_count() == 2);
  std::set<std::vector<int>> got(cl.members.begin(), cl.members.end());
  CHECK(got.count({0, 1, 2, 3, 4, 5}) == 1);
  CHECK(got.count({6, 7, 8, 9, 10, 11}) == 1);
  CHECK(cl.covered_samples() == 12);
}

TEST_CASE("a single sample yields one singleton clique") {
  Eigen::MatrixXd s(1, 1);
  s << 1.0;
  const CliqueAssignment cl =
      build_cliques_with_threshold(testutil::make_similarity(s), 5, 0.5);
  REQUIRE(cl.clique_count() == 1);
  CHECK(cl.members[0] == std::vector<int>{0});
  // The quantile path has no off-diagonal entries to take a quantile of.
  CliqueParams params;
  CHECK_THROWS_AS(build_cliques(testutil::make_similarity(s), params),
                  std::invalid_argument);
}

TEST_CASE("a threshold above every off-diagonal entry yields singletons") {
  const SimilarityMatrix s = two_cluster_similarity();
  const CliqueAssignment cl = build_cliques_with_threshold(s, 11, 0.95);
  CHECK(cl.clique_count() == 12);
  for (const auto& m : cl.members) {
    CHECK(m.size() == 1);
  }
}

TEST_CASE("every grown clique satisfies the complete-linkage threshold") {
  Eigen::MatrixXd vals = testutil::random_symmetric(25, 163);
  vals.diagonal().setConstant(vals.maxCoeff() + 1.0);
  const SimilarityMatrix s = testutil::make_similarity(vals);
  const double tau = mutual_similarity_threshold(s, 0.7);
  const CliqueAssignment cl = build_cliques_with_threshold(s, 10, tau);
  CHECK(cl.clique_count() >= 1);
  bool any_multi = false;
  for (const auto& m : cl.members) {
    if (m.size() > 1) {
      any_multi = true;
      CHECK(min_pairwise(s.values, m) > tau);
    }
  }
  CHECK(any_multi);
}

TEST_CASE("duplicate member sets are emitted once") {
  // A tight triangle: every seed grows the same clique.
  Eigen::MatrixXd s(3, 3);
  s << 1.0, 0.9, 0.9, 0.9, 1.0, 0.9, 0.9, 0.9, 1.0;
  const CliqueAssignment cl =
      build_cliques_with_threshold(testutil::make_similarity(s), 2, 0.5);
  REQUIRE(cl.clique_count() == 1);
  CHECK(cl.members[0] == std::vector<int>{0, 1, 2});
}

TEST_CASE("merging always fuses identical cliques") {
  Eigen::MatrixXd s(3, 3);
  s << 1.0, 0.9, 0.0, 0.9, 1.0, 0.0, 0.0, 0.0, 1.0;
  CliqueAssignment cl;
  cl.n_samples = 3;
  cl.members = {{0, 1}, {0, 1}, {2}};
  const CliqueAssignment merged =
      merge_cliques(cl, testutil::make_similarity(s), 0.5);
  // The duplicates fuse; {0,1} and {2} stay apart because the merged mean
  // similarity 0.3 falls below half of min(0.9, 1.0).
  REQUIRE(merged.clique_count() == 2);
  std::set<std::vector<int>> got(merged.members.begin(), merged.members.end());
  CHECK(got.count({0, 1}) == 1);
  CHECK(got.count({2}) == 1);
}

TEST_CASE("merging a tight cluster of singletons runs to one clique") {
  const int n = 4;
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(n, n, 0.9);
  s.diagonal().setConstant(1.0);
  CliqueAssignment cl;
  cl.n_samples = n;
  for (int i = 0; i < n; ++i) {
    cl.members.push_back({i});
  }
  const CliqueAssignment merged =
      merge_cliques(cl, testutil::make_similarity(s), 0.5);
  REQUIRE(merged.clique_count() == 1);
  CHECK(merged.members[0] == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("the stop rule blocks merges that halve the intra similarity") {
  // Two pairs with strong internal affinity and weakly positive cross links:
  // the merged intra mean (2*0.9 + 4*0.2)/6 = 0.433 falls below 0.5 * 0.9.
  Eigen::MatrixXd s(4, 4);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const bool same_pair = (i / 2) == (j / 2);
      s(i, j) = same_pair ? 0.9 : 0.2;
    }
    s(i, i) = 1.0;
  }
  CliqueAssignment cl;
  cl.n_samples = 4;
  cl.members = {{0, 1}, {2, 3}};
  const CliqueAssignment merged =
      merge_cliques(cl, testutil::make_similarity(s), 0.5);
  CHECK(merged.clique_count() == 2);
}

TEST_CASE("merging never shrinks the smallest clique and reduces K") {
  const SimilarityMatrix s =
      testutil::make_similarity(testutil::random_psd(20, 167) * 0.5 +
                                Eigen::MatrixXd::Constant(20, 20, 0.4));
  const CliqueAssignment built = build_cliques_with_threshold(s, 8, 0.3);
  std::size_t min_before = SIZE_MAX;
  for (const auto& m : built.members) {
    min_before = std::min(min_before, m.size());
  }
  const CliqueAssignment merged = merge_cliques(built, s, 0.5);
  std::size_t min_after = SIZE_MAX;
  for (const auto& m : merged.members) {
    min_after = std::min(min_after, m.size());
  }
  CHECK(merged.clique_count() <= built.clique_count());
  CHECK(min_after >= min_before);
}

TEST_CASE("intra and cross clique similarities are plain means") {
  Eigen::MatrixXd s(3, 3);
  s << 1.0, 0.8, 0.2, 0.8, 1.0, 0.4, 0.2, 0.4, 1.0;
  CliqueAssignment cl;
  cl.n_samples = 3;
  cl.members = {{0, 1}, {2}};
  CHECK(intra_clique_similarity({0, 1}, s) ==
        doctest::Approx(0.8).epsilon(1e-15));
  CHECK(intra_clique_similarity({2}, s) == 1.0);  // singleton: the diagonal
  const Eigen::MatrixXd sp =
      clique_similarity(cl, testutil::make_similarity(s));
  REQUIRE(sp.rows() == 2);
  CHECK(sp(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(sp(1, 1) == 1.0);
  CHECK(sp(0, 1) == doctest::Approx(0.5 * (0.2 + 0.4)).epsilon(1e-15));
  CHECK(sp(1, 0) == sp(0, 1));
}

TEST_CASE("condition_psd clamps negative eigenvalues") {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
  d.diagonal() << 1.0, -1.0;
  const Eigen::MatrixXd fixed = condition_psd(d);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(2, 2);
  expected(0, 0) = 1.0;
  CHECK((fixed - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("condition_psd is idempotent and yields a PSD matrix") {
  const Eigen::MatrixXd a = testutil::random_symmetric(7, 173);
  const Eigen::MatrixXd once = condition_psd(a);
  const Eigen::MatrixXd twice = condition_psd(once);
  CHECK((once - twice).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(once,
                                                     Eigen::EigenvaluesOnly);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-9);
}

TEST_CASE("condition_psd rejects asymmetric input") {
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 0.3, 0.1, 1.0;
  CHECK_THROWS_WITH_AS(condition_psd(bad), doctest::Contains("asymmetric"),
                       std::invalid_argument);
}

TEST_CASE("clique parameter validation") {
  CliqueParams params;
  CHECK_NOTHROW(params.validate());
  params.seed_neighbors = 0;
  CHECK_THROWS_AS(params.validate(), std::invalid_argument);
  params.seed_neighbors = 10;
  params.min_mutual_sim_quantile = 1.0;
  CHECK_THROWS_AS(params.validate(), std::invalid_argument);
  params.min_mutual_sim_quantile = 0.95;
  params.merge_stop_ratio = 0.4;
  CHECK_THROWS_AS(params.validate(), std::invalid_argument);
}
