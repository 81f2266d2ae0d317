#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mnode/error.hpp"
#include "mnode/knn_graph.hpp"
#include "mnode/rng.hpp"
#include "support/graph_oracle.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include "json.hpp"
#include <numeric>

using namespace mnode;

namespace {

Mat line_points() {
  Mat x(3, 1);
  x << 0, 1, 3;
  return x;
}

Mat random_points(Rng& rng, Index n, Index d) {
  Mat x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = rng.normal();
  return x;
}

GraphConfig raw_config(int k) {
  GraphConfig c;
  c.k = k;
  c.normalize = false;
  return c;
}

}  // namespace

TEST_CASE("knn_search") {
  SUBCASE("points on a line") {
    const auto nb = knn_search(line_points(), 2);
    REQUIRE(nb[0].size() == 2);
    CHECK(nb[0][0].index == 1);
    CHECK(nb[0][0].distance == 1.0);
    CHECK(nb[0][1].index == 2);
    CHECK(nb[0][1].distance == 3.0);
  }
  SUBCASE("k is clamped to n - 1") {
    const auto nb = knn_search(line_points(), 5);
    for (const auto& row : nb) CHECK(row.size() == 2);
  }
  SUBCASE("duplicates give zero distance and rho") {
    Mat x(3, 2);
    x << 1, 1, 1, 1, 4, 5;
    const auto nb = knn_search(x, 2);
    CHECK(nb[0][0].index == 1);
    CHECK(nb[0][0].distance == 0.0);
    const auto lp = local_probabilities(nb, 2, SigmaMode::Literal);
    CHECK(lp.rho[0] == 0.0);
    CHECK(lp.p[0][0] == 1.0);
  }
  SUBCASE("ties broken by ascending index") {
    Mat x(4, 1);
    x << 0, -1, 1, 2;
    const auto nb = knn_search(x, 2);
    CHECK(nb[0][0].index == 1);
    CHECK(nb[0][1].index == 2);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(knn_search(Mat(0, 3), 2), Error);
    CHECK_THROWS_AS(knn_search(Mat::Zero(1, 3), 2), Error);
    Mat bad = Mat::Zero(3, 1);
    bad(1, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(knn_search(bad, 2), NumericError);
  }
}

TEST_CASE("local_probabilities on the line example") {
  // Brute-force evaluation of exp(-(d - rho)/sigma) with sigma = log2(2) = 1.
  const auto lp = local_probabilities(knn_search(line_points(), 2), 2, SigmaMode::Literal);
  CHECK(lp.sigma[0] == 1.0);
  CHECK(lp.p[0][0] == 1.0);
  CHECK(lp.p[0][1] == doctest::Approx(0.1353352832366127).epsilon(1e-14));
  CHECK(lp.p[1][1] == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(lp.p[2][1] == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));

  SUBCASE("equidistant neighbours are equally likely") {
    Mat x(3, 1);
    x << 0, -2, 2;
    const auto eq = local_probabilities(knn_search(x, 2), 2, SigmaMode::Literal);
    CHECK(eq.p[0][0] == eq.p[0][1]);
  }
  SUBCASE("k = 1 in literal mode is rejected") {
    CHECK_THROWS_AS(local_probabilities(knn_search(line_points(), 1), 1, SigmaMode::Literal),
                    ConfigError);
  }
}

TEST_CASE("symmetrize") {
  CHECK(fuzzy_union(1.0, std::exp(-2.0)) == 1.0);
  CHECK(fuzzy_union(0.5, 0.5) == 0.75);
  CHECK(fuzzy_union(0.3, 0.0) == 0.3);

  const NeighborGraph g = build_graph(line_points(), raw_config(2));
  CHECK(g.probability(0, 1) == 1.0);
  CHECK(g.probability(1, 2) == 1.0);
  const double e1 = std::exp(-1.0), e2 = std::exp(-2.0);
  CHECK(g.probability(0, 2) == doctest::Approx(e2 + e1 - e1 * e2).epsilon(1e-14));
  CHECK(g.probability(2, 0) == g.probability(0, 2));
  CHECK(g.probability(1, 1) == 0.0);
}

TEST_CASE("sigma_calibrate") {
  const std::vector<Neighbor> any{{1, 0.5}, {2, 0.7}};
  CHECK(sigma_calibrate(any, 2, SigmaMode::Literal).sigma == 1.0);
  CHECK(sigma_calibrate(any, 16, SigmaMode::Literal).sigma == 4.0);

  SUBCASE("degenerate: equidistant neighbours at rho") {
    const std::vector<Neighbor> flat{{1, 2.0}, {2, 2.0}};
    const auto r = sigma_calibrate(flat, 2, SigmaMode::Smooth);
    CHECK(r.degenerate);
    CHECK(r.sigma == doctest::Approx(0.5 * (1e-6 + 1e3)));
  }
  SUBCASE("smooth mode solves the membership equation") {
    // d = 1, 2, 3 and k = 4: 1 + x + x^2 = 2 with x = exp(-1/sigma),
    // so x = (sqrt(5) - 1)/2 and sigma = -1/ln(x).
    const std::vector<Neighbor> nb{{1, 1.0}, {2, 2.0}, {3, 3.0}};
    const auto r = sigma_calibrate(nb, 4, SigmaMode::Smooth);
    CHECK_FALSE(r.degenerate);
    CHECK_FALSE(r.fallback);
    CHECK(std::abs(r.sigma - 2.0780869212350273) < 1e-5);
  }
  SUBCASE("unbracketed target falls back to log2(k)") {
    set_warnings_enabled(false);
    const std::vector<Neighbor> nb{{1, 1.0}, {2, 5.0}};
    const auto r = sigma_calibrate(nb, 8, SigmaMode::Smooth);  // target 3 > 2 neighbours
    set_warnings_enabled(true);
    CHECK(r.fallback);
    CHECK(r.sigma == 3.0);
  }
}

TEST_CASE("graph invariants against the brute-force oracle") {
  Rng rng(31337);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 5 + static_cast<Index>(rng.below(46));
    const Index d = 1 + static_cast<Index>(rng.below(6));
    const int k = 2 + static_cast<int>(rng.below(15));
    const Mat x = random_points(rng, n, d);
    const NeighborGraph g = build_graph(x, raw_config(k));
    const Mat ref = mnode::testing::brute_force_graph(x, k);
    double worst = 0.0;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        const double p = g.probability(i, j);
        worst = std::max(worst, std::abs(p - (i == j ? 0.0 : ref(i, j))));
        CHECK(p == g.probability(j, i));
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
      }
    CHECK(worst <= 1e-12);

    const auto lp = local_probabilities(knn_search(x, k), k, SigmaMode::Literal);
    for (const auto& row : lp.p) CHECK(*std::max_element(row.begin(), row.end()) == 1.0);
  }
}

TEST_CASE("permuting points relabels the graph") {
  Rng rng(8);
  const Index n = 30;
  const Mat x = random_points(rng, n, 3);
  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), Index{0});
  rng.shuffle(perm);
  Mat xp(n, 3);
  for (Index r = 0; r < n; ++r) xp.row(r) = x.row(perm[r]);
  const NeighborGraph g = build_graph(x, raw_config(6));
  const NeighborGraph gp = build_graph(xp, raw_config(6));
  CHECK(g.edges().size() == gp.edges().size());
  for (Index a = 0; a < n; ++a)
    for (Index b = 0; b < n; ++b) CHECK(gp.probability(a, b) == g.probability(perm[a], perm[b]));
}

TEST_CASE("min-max normalisation and default pipeline") {
  Mat x(3, 2);
  x << 0, 5, 2, 5, 4, 5;
  const Mat y = min_max_normalize(x);
  CHECK(y(1, 0) == 0.5);
  CHECK(y.col(1).isZero());

  Rng rng(4);
  Mat z = random_points(rng, 20, 3);
  z.col(1) *= 100.0;
  const NeighborGraph g = build_graph(z, GraphConfig{});  // k = 15, literal, normalized
  const Mat ref = mnode::testing::brute_force_graph(min_max_normalize(z), 15);
  for (const auto& e : g.edges()) CHECK(std::abs(e.p - ref(e.i, e.j)) <= 1e-12);
}

TEST_CASE("graph export") {
  const NeighborGraph g = build_graph(line_points(), raw_config(2));
  const auto dir = std::filesystem::temp_directory_path() / "mnode_graph_test";
  std::filesystem::create_directories(dir);
  write_edge_csv(g, dir / "edges.csv");
  write_graph_sidecar(g, dir / "graph.json");
  std::ifstream in(dir / "edges.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "i,j,distance,p_ij");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 3);
  std::ifstream js(dir / "graph.json");
  const auto doc = nlohmann::json::parse(js);
  CHECK(doc["n"] == 3);
  CHECK(doc["k"] == 2);
  CHECK(doc["metric"] == "euclidean");
  CHECK(doc["sigma_mode"] == "literal");
  std::filesystem::remove_all(dir);

  const std::vector<int> labels{1, 0, 1};
  std::vector<Index> order;
  const Mat w = label_sorted_weights(g, labels, &order);
  CHECK(order == std::vector<Index>{1, 0, 2});
  CHECK(w.isApprox(w.transpose()));
  CHECK(w(0, 1) == g.probability(1, 0));
}
