#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace ngd {

struct DistanceMatrix;

/// Unrooted tree whose nodes 0..n-1 are the leaves (leaf i carries matrix
/// label i) and whose nodes n..2n-3 are internal nodes of degree three.
class TernaryTree {
 public:
  /// Random topology by inserting leaves in random order on random edges.
  static TernaryTree random(std::size_t leaves, std::mt19937_64& rng);
  /// Throws ngd::Error unless the edges form a valid ternary tree.
  static TernaryTree from_edges(std::size_t leaves, std::span<const std::pair<int, int>> edges);

  std::size_t leaf_count() const noexcept { return leaves_; }
  std::size_t node_count() const noexcept { return adj_.size(); }
  bool is_leaf(int node) const noexcept { return static_cast<std::size_t>(node) < leaves_; }
  const std::vector<int>& neighbors(int node) const { return adj_.at(static_cast<std::size_t>(node)); }

  /// Sorted (u < v) edge list.
  std::vector<std::pair<int, int>> edges() const;

  /// Degree, connectivity and acyclicity conditions; `why` receives the first failure.
  bool is_valid(std::string* why = nullptr) const;

  /// Edge counts between every pair of leaves.
  Eigen::MatrixXi leaf_path_lengths() const;

  /// Nodes on the side of `child` when the edge (parent, child) is cut.
  std::vector<char> subtree_mask(int parent, int child) const;

  /// Exchange the positions of two leaves. False for a no-op (siblings).
  bool swap_leaves(int a, int b);
  /// Exchange the subtrees hanging below (p1 -> c1) and (p2 -> c2).
  /// False when the subtrees overlap or the move changes nothing.
  bool swap_subtrees(int p1, int c1, int p2, int c2);
  /// Prune the subtree below (p -> c) and reinsert it on edge (u, v) of the
  /// remaining tree; p keeps its id. False when invalid or a no-op.
  bool regraft(int p, int c, int u, int v);

  bool operator==(const TernaryTree&) const = default;

 private:
  explicit TernaryTree(std::size_t leaves) : leaves_(leaves) {}
  void replace_neighbor(int node, int from, int to);

  std::size_t leaves_ = 0;
  std::vector<std::vector<int>> adj_;
};

enum class Mutation { LeafSwap, SubtreeSwap, Regraft };

/// Applies one mutation drawn uniformly from the three operators, retrying
/// until a move that changes the tree is found. Returns the operator used.
Mutation mutate(TernaryTree& tree, std::mt19937_64& rng);

/// Cost of topology uv|wx: d(u,v) + d(w,x).
double quartet_cost(const DistanceMatrix& d, std::array<std::size_t, 4> quartet);

struct TreeScore {
  double s = 1.0;         ///< (max_cost - cost) / (max_cost - min_cost), 1 when degenerate
  double cost = 0.0;      ///< C(T)
  double min_cost = 0.0;  ///< sum of per-quartet minimal topology costs
  double max_cost = 0.0;  ///< sum of per-quartet maximal topology costs
};

/// Per-quartet topology costs of a fixed matrix, shared by every tree scored
/// against it. Quartets are the a<b<c<d index tuples; topology t pairs a with
/// b, c, d for t = 0, 1, 2.
class QuartetTable {
 public:
  explicit QuartetTable(const Eigen::MatrixXd& distances);

  std::size_t leaf_count() const { return n_; }
  double min_cost() const { return min_cost_; }
  double max_cost() const { return max_cost_; }
  double cost(const TernaryTree& tree) const;
  TreeScore score(const TernaryTree& tree) const;

 private:
  std::size_t n_;
  std::vector<std::array<int, 4>> quartets_;
  std::vector<std::array<double, 3>> costs_;
  double min_cost_ = 0.0;
  double max_cost_ = 0.0;
};

TreeScore tree_score(const DistanceMatrix& d, const TernaryTree& tree);

struct HillClimbOptions {
  std::uint64_t seed = 0;
  std::size_t max_stale_steps = 10000;
  std::size_t restarts = 8;
  /// Record the accepted S values of every restart.
  bool trace = false;
};

struct HillClimbResult {
  TernaryTree tree;
  TreeScore score;
  std::size_t best_restart = 0;
  std::vector<double> restart_scores;
  std::vector<std::vector<double>> traces;
  std::vector<std::string> warnings;
};

/// Randomized hill-climbing over ternary trees, accepting a mutation only
/// when S strictly increases. Restarts run concurrently; the highest S wins
/// with ties going to the lowest restart index. Requires n >= 4 and a
/// finite (capped) matrix.
HillClimbResult hill_climb(const DistanceMatrix& d, const HillClimbOptions& options);

/// Single restart from an explicit generator; exposed for tests.
HillClimbResult climb_once(const QuartetTable& table, std::mt19937_64& rng, std::size_t max_stale_steps,
                           bool trace);

/// Unrooted Newick, rooted for printing at the internal node next to leaf 0;
/// children ordered by their smallest leaf index. Internal nodes unlabeled.
std::string to_newick(const TernaryTree& tree, std::span<const std::string> labels);
/// Parses Newick whose leaf labels are exactly `labels`; a bifurcating root
/// is suppressed.
TernaryTree parse_newick(std::string_view text, std::span<const std::string> labels);

nlohmann::ordered_json to_json(const HillClimbResult& result, std::span<const std::string> labels,
                               const HillClimbOptions& options);

/// Nodes of the smallest subtree connecting the given leaves.
std::set<int> steiner_nodes(const TernaryTree& tree, std::span<const int> leaves);
/// True when the Steiner subtrees of the groups share no node.
bool steiner_subtrees_disjoint(const TernaryTree& tree, std::span<const std::vector<int>> groups);

}  // namespace ngd
