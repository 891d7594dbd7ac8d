#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "ngd/distance.hpp"
#include "ngd/error.hpp"
#include "ngd/quartet.hpp"
#include "oracles.hpp"

using ngd::TernaryTree;

namespace {

ngd::DistanceMatrix labeled(const Eigen::MatrixXd& d) {
  std::vector<std::string> labels;
  for (Eigen::Index i = 0; i < d.rows(); ++i) labels.push_back("L" + std::to_string(i));
  return ngd::make_distance_matrix(labels, d, 2.0);
}

ngd::DistanceMatrix novelists() {
  std::ifstream f(NGD_FIXTURES "/novelists.csv");
  return ngd::read_csv(f);
}

std::vector<std::vector<int>> author_groups(const ngd::DistanceMatrix& m) {
  const std::vector<std::vector<std::string>> authors{
      {"A Midsummer Night's Dream", "Julius Caesar", "Love's Labours Lost", "Romeo and Juliet"},
      {"The Battle of the Books", "Gulliver's Travels", "Tale of a Tub", "A Modest Proposal"},
      {"Lady Windermere's Fan", "A Woman of No Importance", "Salome", "The Picture of Dorian Gray"}};
  std::vector<std::vector<int>> groups;
  for (const auto& a : authors) {
    std::vector<int> g;
    for (const auto& t : a) g.push_back(static_cast<int>(m.index_of(t)));
    groups.push_back(g);
  }
  return groups;
}

}  // namespace

TEST_CASE("quartet cost") {
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(4, 4, 0.5);
  d.diagonal().setZero();
  d(0, 1) = d(1, 0) = 0.1;
  d(2, 3) = d(3, 2) = 0.2;
  const auto m = labeled(d);
  CHECK(ngd::quartet_cost(m, {0, 1, 2, 3}) == doctest::Approx(0.3));
  CHECK(ngd::quartet_cost(m, {0, 2, 1, 3}) == doctest::Approx(1.0));
  CHECK_THROWS(ngd::quartet_cost(m, {0, 0, 1, 2}));

  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(4, 4, 0.4);
  c.diagonal().setZero();
  const auto mc = labeled(c);
  CHECK(ngd::quartet_cost(mc, {0, 1, 2, 3}) == ngd::quartet_cost(mc, {0, 2, 1, 3}));
  CHECK(ngd::quartet_cost(mc, {0, 3, 1, 2}) == doctest::Approx(0.8));

  const auto f = novelists();
  const auto q = ngd::quartet_cost(f, {f.index_of("Salome"), f.index_of("Julius Caesar"), f.index_of("Tale of a Tub"),
                                       f.index_of("Gulliver's Travels")});
  CHECK(q == doctest::Approx(0.657));
}

TEST_CASE("four leaves: perfect and worst trees") {
  Eigen::MatrixXd d(4, 4);
  d << 0, 0.1, 0.9, 0.8, 0.1, 0, 0.7, 0.9, 0.9, 0.7, 0, 0.2, 0.8, 0.9, 0.2, 0;
  const auto m = labeled(d);
  // ab|cd costs 0.3, ac|bd 1.8, ad|bc 1.5.
  const std::vector<std::pair<int, int>> ab_cd{{0, 4}, {1, 4}, {4, 5}, {2, 5}, {3, 5}};
  const std::vector<std::pair<int, int>> ac_bd{{0, 4}, {2, 4}, {4, 5}, {1, 5}, {3, 5}};
  CHECK(ngd::tree_score(m, TernaryTree::from_edges(4, ab_cd)).s == 1.0);
  CHECK(ngd::tree_score(m, TernaryTree::from_edges(4, ac_bd)).s == 0.0);
  const auto r = ngd::hill_climb(m, {.seed = 1});
  CHECK(r.score.s == 1.0);
}

TEST_CASE("tree scores match the split oracle for every tree") {
  std::mt19937_64 rng(17);
  for (int n : {5, 6}) {
    const auto trees = oracle::all_trees(n);
    CHECK(trees.size() == (n == 5 ? 15u : 105u));
    const auto d = oracle::random_distances(n, rng);
    const ngd::QuartetTable table(d);
    std::set<std::vector<std::pair<int, int>>> distinct;
    for (const auto& e : trees) {
      const auto t = TernaryTree::from_edges(static_cast<std::size_t>(n), e);
      CHECK(t.is_valid());
      const auto want = oracle::tree_score(d, e);
      const auto got = table.score(t);
      CHECK(got.cost == doctest::Approx(want.cost));
      CHECK(got.min_cost == doctest::Approx(want.lo));
      CHECK(got.max_cost == doctest::Approx(want.hi));
      CHECK(got.s == doctest::Approx(want.s));
      CHECK(got.s >= 0.0);
      CHECK(got.s <= 1.0);
    }
  }
}

TEST_CASE("hill climbing reaches the exhaustive optimum for small n") {
  std::mt19937_64 rng(23);
  for (int n : {5, 6}) {
    for (int rep = 0; rep < 10; ++rep) {
      const auto d = oracle::random_distances(n, rng);
      ngd::HillClimbOptions o;
      o.seed = rng();
      o.restarts = 10;
      o.max_stale_steps = 500;
      const auto r = ngd::hill_climb(labeled(d), o);
      CHECK(r.score.s == doctest::Approx(oracle::best_score(d)).epsilon(1e-12));
    }
  }
}

TEST_CASE("mutations keep trees valid and accepted scores rise") {
  std::mt19937_64 rng(31);
  auto t = TernaryTree::random(9, rng);
  std::string why;
  for (int i = 0; i < 2000; ++i) {
    const auto before = t;
    ngd::mutate(t, rng);
    REQUIRE_MESSAGE(t.is_valid(&why), why);
    CHECK_FALSE(t == before);
  }
  const ngd::QuartetTable table(oracle::random_distances(9, rng));
  const auto r = ngd::climb_once(table, rng, 300, true);
  REQUIRE(r.traces.size() == 1);
  const auto& trace = r.traces.front();
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] > trace[i - 1]);
}

TEST_CASE("explicit mutation operators") {
  // ((0,1),2,(3,4)) with internal nodes 5,6,7
  const std::vector<std::pair<int, int>> e{{0, 5}, {1, 5}, {5, 6}, {2, 6}, {6, 7}, {3, 7}, {4, 7}};
  auto t = TernaryTree::from_edges(5, e);
  CHECK_FALSE(t.swap_leaves(0, 1));  // siblings
  CHECK(t.swap_leaves(0, 3));
  CHECK(t.is_valid());
  auto u = TernaryTree::from_edges(5, e);
  CHECK(u.regraft(6, 2, 3, 7));
  CHECK(u.is_valid());
  auto v = TernaryTree::from_edges(5, e);
  CHECK_FALSE(v.swap_subtrees(6, 5, 5, 0));  // overlapping
  const std::vector<std::pair<int, int>> bad{{0, 5}, {1, 5}, {2, 5}, {3, 6}, {4, 6}, {5, 6}, {6, 7}};
  CHECK_THROWS_AS(TernaryTree::from_edges(5, bad), ngd::Error);
}

TEST_CASE("hill climb contract") {
  Eigen::MatrixXd d3 = Eigen::MatrixXd::Constant(3, 3, 0.5);
  d3.diagonal().setZero();
  CHECK_THROWS_WITH(ngd::hill_climb(labeled(d3), {}), "need >=4 items");

  std::mt19937_64 rng(2);
  const auto m = labeled(oracle::random_distances(8, rng));
  const auto a = ngd::hill_climb(m, {.seed = 5});
  const auto b = ngd::hill_climb(m, {.seed = 5});
  CHECK(a.tree == b.tree);
  CHECK(a.score.s == b.score.s);
  CHECK(ngd::to_newick(a.tree, m.labels) == ngd::to_newick(b.tree, m.labels));

  const auto big = labeled(oracle::random_distances(26, rng));
  ngd::HillClimbOptions o{.seed = 1, .max_stale_steps = 20, .restarts = 1};
  CHECK_FALSE(ngd::hill_climb(big, o).warnings.empty());
}

TEST_CASE("novelist matrix") {
  const auto m = novelists();
  const auto groups = author_groups(m);
  const auto r = ngd::hill_climb(m, {.seed = 7});
  CHECK(ngd::steiner_subtrees_disjoint(r.tree, groups));
  CHECK(r.score.s > 0.9);
  const auto again = ngd::hill_climb(m, {.seed = 7});
  CHECK(again.tree == r.tree);
}

TEST_CASE("newick round trip") {
  std::mt19937_64 rng(9);
  const auto m = novelists();
  for (int i = 0; i < 20; ++i) {
    const auto t = TernaryTree::random(m.size(), rng);
    const auto text = ngd::to_newick(t, m.labels);
    const auto back = ngd::parse_newick(text, m.labels);
    CHECK(back.leaf_path_lengths() == t.leaf_path_lengths());
    CHECK(ngd::to_newick(back, m.labels) == text);
  }
  const std::vector<std::string> labels{"a", "b c", "d", "e"};
  const auto t = ngd::parse_newick("((a,b_c),(d,e));", labels);
  CHECK(t.leaf_path_lengths()(0, 1) == 2);
  CHECK(t.leaf_path_lengths()(0, 2) == 3);
  CHECK_THROWS(ngd::parse_newick("((a,b_c),(d,x));", labels));
}

TEST_CASE("steiner subtrees") {
  // ((0,1),(2,3)) plus leaf 4 on the middle edge
  const std::vector<std::pair<int, int>> e{{0, 5}, {1, 5}, {5, 6}, {4, 6}, {6, 7}, {2, 7}, {3, 7}};
  const auto t = TernaryTree::from_edges(5, e);
  const std::vector<int> g1{0, 1}, g2{2, 3}, g3{0, 2};
  CHECK(ngd::steiner_nodes(t, g1) == std::set<int>{0, 1, 5});
  const std::vector<std::vector<int>> ok{{0, 1}, {2, 3}};
  const std::vector<std::vector<int>> clash{{0, 2}, {1, 3}};
  CHECK(ngd::steiner_subtrees_disjoint(t, ok));
  CHECK_FALSE(ngd::steiner_subtrees_disjoint(t, clash));
}

TEST_CASE("json output") {
  const auto m = novelists();
  ngd::HillClimbOptions o{.seed = 3, .max_stale_steps = 200, .restarts = 2};
  const auto r = ngd::hill_climb(m, o);
  const auto j = ngd::to_json(r, m.labels, o);
  CHECK(j.at("seed") == 3);
  CHECK(j.at("edges").size() == 2 * m.size() - 3);
  CHECK(ngd::parse_newick(j.at("newick").get<std::string>(), m.labels).leaf_path_lengths() ==
        r.tree.leaf_path_lengths());
}
