#include "ngd/quartet.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <queue>
#include <thread>

#include <fmt/format.h>

#include "ngd/distance.hpp"
#include "ngd/error.hpp"

namespace ngd {

namespace {

int pick(std::mt19937_64& rng, std::size_t n) {
  return static_cast<int>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
}

}  // namespace

TernaryTree TernaryTree::random(std::size_t leaves, std::mt19937_64& rng) {
  if (leaves < 3) throw Error("a ternary tree needs at least three leaves");
  TernaryTree t(leaves);
  t.adj_.assign(2 * leaves - 2, {});
  std::vector<int> order(leaves);
  for (std::size_t i = 0; i < leaves; ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), rng);

  auto link = [&](int u, int v) {
    t.adj_[static_cast<std::size_t>(u)].push_back(v);
    t.adj_[static_cast<std::size_t>(v)].push_back(u);
  };
  int next_internal = static_cast<int>(leaves);
  std::vector<std::pair<int, int>> edges;
  const int hub = next_internal++;
  for (int k = 0; k < 3; ++k) {
    link(hub, order[static_cast<std::size_t>(k)]);
    edges.emplace_back(hub, order[static_cast<std::size_t>(k)]);
  }
  for (std::size_t k = 3; k < leaves; ++k) {
    const auto e = static_cast<std::size_t>(pick(rng, edges.size()));
    const auto [u, v] = edges[e];
    const int w = next_internal++;
    t.replace_neighbor(u, v, w);
    t.replace_neighbor(v, u, w);
    t.adj_[static_cast<std::size_t>(w)] = {u, v};
    link(w, order[k]);
    edges[e] = {u, w};
    edges.emplace_back(w, v);
    edges.emplace_back(w, order[k]);
  }
  return t;
}

TernaryTree TernaryTree::from_edges(std::size_t leaves, std::span<const std::pair<int, int>> edges) {
  if (leaves < 3) throw Error("a ternary tree needs at least three leaves");
  TernaryTree t(leaves);
  t.adj_.assign(2 * leaves - 2, {});
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= t.adj_.size() || static_cast<std::size_t>(v) >= t.adj_.size() ||
        u == v)
      throw Error(fmt::format("bad edge ({}, {})", u, v));
    t.adj_[static_cast<std::size_t>(u)].push_back(v);
    t.adj_[static_cast<std::size_t>(v)].push_back(u);
  }
  std::string why;
  if (!t.is_valid(&why)) throw Error("invalid ternary tree: " + why);
  return t;
}

void TernaryTree::replace_neighbor(int node, int from, int to) {
  auto& n = adj_[static_cast<std::size_t>(node)];
  auto it = std::find(n.begin(), n.end(), from);
  if (it == n.end()) throw Error("internal error: missing neighbor");
  *it = to;
}

std::vector<std::pair<int, int>> TernaryTree::edges() const {
  std::vector<std::pair<int, int>> out;
  for (std::size_t u = 0; u < adj_.size(); ++u)
    for (int v : adj_[u])
      if (static_cast<int>(u) < v) out.emplace_back(static_cast<int>(u), v);
  std::sort(out.begin(), out.end());
  return out;
}

bool TernaryTree::is_valid(std::string* why) const {
  auto fail = [&](std::string msg) {
    if (why) *why = std::move(msg);
    return false;
  };
  if (adj_.size() != 2 * leaves_ - 2) return fail("wrong node count");
  std::size_t degree_sum = 0;
  for (std::size_t u = 0; u < adj_.size(); ++u) {
    const auto expected = u < leaves_ ? 1u : 3u;
    if (adj_[u].size() != expected) return fail(fmt::format("node {} has degree {}", u, adj_[u].size()));
    auto sorted = adj_[u];
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) return fail("parallel edges");
    degree_sum += adj_[u].size();
  }
  if (degree_sum / 2 != adj_.size() - 1) return fail("edge count is not nodes - 1");
  std::vector<char> seen(adj_.size(), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : adj_[static_cast<std::size_t>(u)]) {
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  if (reached != adj_.size()) return fail("not connected");
  return true;
}

Eigen::MatrixXi TernaryTree::leaf_path_lengths() const {
  const auto n = static_cast<Eigen::Index>(leaves_);
  Eigen::MatrixXi p(n, n);
  std::vector<int> dist(adj_.size());
  std::vector<int> queue(adj_.size());
  for (Eigen::Index s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    std::size_t head = 0, tail = 0;
    queue[tail++] = static_cast<int>(s);
    dist[static_cast<std::size_t>(s)] = 0;
    while (head < tail) {
      const int u = queue[head++];
      for (int v : adj_[static_cast<std::size_t>(u)]) {
        if (dist[static_cast<std::size_t>(v)] < 0) {
          dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
          queue[tail++] = v;
        }
      }
    }
    for (Eigen::Index t = 0; t < n; ++t) p(s, t) = dist[static_cast<std::size_t>(t)];
  }
  return p;
}

std::vector<char> TernaryTree::subtree_mask(int parent, int child) const {
  std::vector<char> mask(adj_.size(), 0);
  std::vector<int> stack{child};
  mask[static_cast<std::size_t>(child)] = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : adj_[static_cast<std::size_t>(u)]) {
      if (v == parent && u == child) continue;
      if (!mask[static_cast<std::size_t>(v)]) {
        mask[static_cast<std::size_t>(v)] = 1;
        stack.push_back(v);
      }
    }
  }
  return mask;
}

bool TernaryTree::swap_leaves(int a, int b) {
  if (a == b || !is_leaf(a) || !is_leaf(b)) return false;
  const int pa = adj_[static_cast<std::size_t>(a)][0];
  const int pb = adj_[static_cast<std::size_t>(b)][0];
  if (pa == pb) return false;
  return swap_subtrees(pa, a, pb, b);
}

bool TernaryTree::swap_subtrees(int p1, int c1, int p2, int c2) {
  auto adjacent = [&](int u, int v) {
    const auto& n = adj_[static_cast<std::size_t>(u)];
    return std::find(n.begin(), n.end(), v) != n.end();
  };
  if (!adjacent(p1, c1) || !adjacent(p2, c2) || p1 == p2) return false;
  const auto m1 = subtree_mask(p1, c1);
  if (m1[static_cast<std::size_t>(p2)] || m1[static_cast<std::size_t>(c2)]) return false;
  const auto m2 = subtree_mask(p2, c2);
  if (m2[static_cast<std::size_t>(p1)] || m2[static_cast<std::size_t>(c1)]) return false;
  replace_neighbor(p1, c1, c2);
  replace_neighbor(p2, c2, c1);
  replace_neighbor(c1, p1, p2);
  replace_neighbor(c2, p2, p1);
  return true;
}

bool TernaryTree::regraft(int p, int c, int u, int v) {
  if (is_leaf(p)) return false;
  const auto& np = adj_[static_cast<std::size_t>(p)];
  if (std::find(np.begin(), np.end(), c) == np.end()) return false;
  const auto& nu = adj_[static_cast<std::size_t>(u)];
  if (std::find(nu.begin(), nu.end(), v) == nu.end()) return false;
  const auto mask = subtree_mask(p, c);
  if (u == p || v == p || mask[static_cast<std::size_t>(u)] || mask[static_cast<std::size_t>(v)]) return false;

  std::array<int, 2> rest{};
  std::size_t k = 0;
  for (int w : np)
    if (w != c) rest[k++] = w;
  const auto [a, b] = rest;
  replace_neighbor(a, p, b);
  replace_neighbor(b, p, a);
  // Reinserting on the edge that was just closed recreates the same tree.
  if ((u == a && v == b) || (u == b && v == a)) {
    replace_neighbor(a, b, p);
    replace_neighbor(b, a, p);
    return false;
  }
  replace_neighbor(u, v, p);
  replace_neighbor(v, u, p);
  adj_[static_cast<std::size_t>(p)] = {c, u, v};
  return true;
}

Mutation mutate(TernaryTree& tree, std::mt19937_64& rng) {
  const auto n = tree.leaf_count();
  const auto nodes = tree.node_count();
  auto random_directed_edge = [&]() {
    // Parent is internal; child is any neighbor.
    const int p = static_cast<int>(n) + pick(rng, nodes - n);
    const auto& nb = tree.neighbors(p);
    return std::pair{p, nb[static_cast<std::size_t>(pick(rng, nb.size()))]};
  };
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const auto op = static_cast<Mutation>(pick(rng, 3));
    switch (op) {
      case Mutation::LeafSwap: {
        const int a = pick(rng, n);
        const int b = pick(rng, n);
        if (tree.swap_leaves(a, b)) return op;
        break;
      }
      case Mutation::SubtreeSwap: {
        const auto [p1, c1] = random_directed_edge();
        const auto [p2, c2] = random_directed_edge();
        if (tree.swap_subtrees(p1, c1, p2, c2)) return op;
        break;
      }
      case Mutation::Regraft: {
        const auto [p, c] = random_directed_edge();
        const auto mask = tree.subtree_mask(p, c);
        std::vector<std::pair<int, int>> targets;
        for (auto [u, v] : tree.edges()) {
          if (u == p || v == p || mask[static_cast<std::size_t>(u)] || mask[static_cast<std::size_t>(v)]) continue;
          targets.emplace_back(u, v);
        }
        if (targets.empty()) break;
        const auto [u, v] = targets[static_cast<std::size_t>(pick(rng, targets.size()))];
        if (tree.regraft(p, c, u, v)) return op;
        break;
      }
    }
  }
  throw Error("no applicable mutation");
}

double quartet_cost(const DistanceMatrix& d, std::array<std::size_t, 4> q) {
  for (std::size_t i = 0; i < 4; ++i) {
    if (q[i] >= d.size()) throw Error("quartet leaf out of range");
    for (std::size_t j = i + 1; j < 4; ++j)
      if (q[i] == q[j]) throw Error("quartet needs four distinct leaves");
  }
  return d(q[0], q[1]) + d(q[2], q[3]);
}

QuartetTable::QuartetTable(const Eigen::MatrixXd& m) : n_(static_cast<std::size_t>(m.rows())) {
  const int n = static_cast<int>(n_);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      for (int c = b + 1; c < n; ++c)
        for (int d = c + 1; d < n; ++d) {
          const std::array<double, 3> costs{m(a, b) + m(c, d), m(a, c) + m(b, d), m(a, d) + m(b, c)};
          quartets_.push_back({a, b, c, d});
          costs_.push_back(costs);
          min_cost_ += *std::min_element(costs.begin(), costs.end());
          max_cost_ += *std::max_element(costs.begin(), costs.end());
        }
}

double QuartetTable::cost(const TernaryTree& tree) const {
  if (tree.leaf_count() != n_) throw Error("tree leaves do not match the matrix");
  const auto p = tree.leaf_path_lengths();
  double total = 0;
  for (std::size_t q = 0; q < quartets_.size(); ++q) {
    const auto [a, b, c, d] = quartets_[q];
    const int s0 = p(a, b) + p(c, d);
    const int s1 = p(a, c) + p(b, d);
    const int s2 = p(a, d) + p(b, c);
    // The induced topology is the pairing with strictly shortest paths.
    const std::size_t t = s0 < s1 ? (s0 < s2 ? 0 : 2) : (s1 < s2 ? 1 : 2);
    total += costs_[q][t];
  }
  return total;
}

TreeScore QuartetTable::score(const TernaryTree& tree) const {
  TreeScore s;
  s.cost = cost(tree);
  s.min_cost = min_cost_;
  s.max_cost = max_cost_;
  s.s = max_cost_ > min_cost_ ? std::clamp((max_cost_ - s.cost) / (max_cost_ - min_cost_), 0.0, 1.0) : 1.0;
  return s;
}

TreeScore tree_score(const DistanceMatrix& d, const TernaryTree& tree) {
  return QuartetTable(d.capped()).score(tree);
}

HillClimbResult climb_once(const QuartetTable& table, std::mt19937_64& rng, std::size_t max_stale_steps, bool trace) {
  auto tree = TernaryTree::random(table.leaf_count(), rng);
  double cost = table.cost(tree);
  const double eps = 1e-12 * std::max(1.0, table.max_cost());
  HillClimbResult r{tree, {}, 0, {}, {}, {}};
  if (trace) r.traces.push_back({table.score(tree).s});
  std::size_t stale = 0;
  while (stale < max_stale_steps && cost > table.min_cost() + eps) {
    auto candidate = tree;
    mutate(candidate, rng);
    const double c = table.cost(candidate);
    if (c < cost - eps) {
      tree = std::move(candidate);
      cost = c;
      stale = 0;
      if (trace) r.traces.back().push_back(table.score(tree).s);
    } else {
      ++stale;
    }
  }
  r.tree = std::move(tree);
  r.score = table.score(r.tree);
  r.restart_scores = {r.score.s};
  return r;
}

HillClimbResult hill_climb(const DistanceMatrix& d, const HillClimbOptions& options) {
  if (d.size() < 4) throw Error("need >=4 items");
  if (options.restarts == 0) throw Error("need at least one restart");
  const Eigen::MatrixXd m = d.capped();
  if (!m.allFinite()) throw Error("matrix must be finite");
  const QuartetTable table(m);

  auto run = [&](std::size_t restart) {
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                      static_cast<std::uint32_t>(restart)};
    std::mt19937_64 rng(seq);
    return climb_once(table, rng, options.max_stale_steps, options.trace);
  };

  std::vector<HillClimbResult> results;
  results.reserve(options.restarts);
  const std::size_t width = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t start = 0; start < options.restarts; start += width) {
    std::vector<std::future<HillClimbResult>> batch;
    for (std::size_t r = start; r < std::min(options.restarts, start + width); ++r)
      batch.push_back(std::async(std::launch::async, run, r));
    for (auto& f : batch) results.push_back(f.get());
  }

  std::size_t best = 0;
  for (std::size_t r = 1; r < results.size(); ++r)
    if (results[r].score.s > results[best].score.s) best = r;

  HillClimbResult out = results[best];
  out.best_restart = best;
  out.restart_scores.clear();
  out.traces.clear();
  for (auto& r : results) {
    out.restart_scores.push_back(r.score.s);
    if (options.trace) out.traces.push_back(r.traces.front());
  }
  if (d.size() > 25)
    out.warnings.push_back(fmt::format("{} items: trees with more than 25 leaves are hard to fit faithfully", d.size()));
  return out;
}

namespace {

std::string newick_label(const std::string& s) {
  if (!s.empty() && s.find_first_of(" \t\n()[]':;,_") == std::string::npos) return s;
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out.push_back('\'');
    out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

}  // namespace

std::string to_newick(const TernaryTree& tree, std::span<const std::string> labels) {
  if (labels.size() != tree.leaf_count()) throw Error("label count does not match tree");
  // Returns (smallest leaf, text) of the subtree below from -> node.
  std::function<std::pair<int, std::string>(int, int)> write = [&](int node, int from) -> std::pair<int, std::string> {
    if (tree.is_leaf(node)) return {node, newick_label(labels[static_cast<std::size_t>(node)])};
    std::vector<std::pair<int, std::string>> kids;
    for (int v : tree.neighbors(node))
      if (v != from) kids.push_back(write(v, node));
    std::sort(kids.begin(), kids.end());
    std::string s = "(";
    for (std::size_t i = 0; i < kids.size(); ++i) s += (i ? "," : "") + kids[i].second;
    return {kids.front().first, s + ")"};
  };
  const int root = tree.neighbors(0).front();
  return write(root, -1).second + ";";
}

TernaryTree parse_newick(std::string_view text, std::span<const std::string> labels) {
  struct Node {
    std::vector<int> children;
    std::string label;
  };
  std::vector<Node> nodes;
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  };
  auto read_label = [&]() {
    skip_ws();
    std::string s;
    if (pos < text.size() && text[pos] == '\'') {
      ++pos;
      while (true) {
        if (pos >= text.size()) throw Error("unterminated quoted Newick label");
        if (text[pos] == '\'') {
          if (pos + 1 < text.size() && text[pos + 1] == '\'') {
            s.push_back('\'');
            pos += 2;
            continue;
          }
          ++pos;
          break;
        }
        s.push_back(text[pos++]);
      }
    } else {
      while (pos < text.size() && std::string_view("(),:;").find(text[pos]) == std::string_view::npos) {
        s.push_back(text[pos] == '_' ? ' ' : text[pos]);
        ++pos;
      }
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    }
    skip_ws();
    if (pos < text.size() && text[pos] == ':') {  // branch length, ignored
      ++pos;
      while (pos < text.size() && std::string_view("(),;").find(text[pos]) == std::string_view::npos) ++pos;
    }
    return s;
  };
  std::function<int()> parse_node = [&]() -> int {
    skip_ws();
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (pos < text.size() && text[pos] == '(') {
      ++pos;
      while (true) {
        const int child = parse_node();
        nodes[static_cast<std::size_t>(id)].children.push_back(child);
        skip_ws();
        if (pos >= text.size()) throw Error("unexpected end of Newick");
        if (text[pos] == ',') {
          ++pos;
          continue;
        }
        if (text[pos] == ')') {
          ++pos;
          break;
        }
        throw Error(fmt::format("unexpected '{}' in Newick", text[pos]));
      }
      read_label();  // internal labels are ignored
    } else {
      nodes[static_cast<std::size_t>(id)].label = read_label();
      if (nodes[static_cast<std::size_t>(id)].label.empty()) throw Error("empty Newick leaf label");
    }
    return id;
  };
  const int root = parse_node();
  skip_ws();
  if (pos >= text.size() || text[pos] != ';') throw Error("Newick must end with ';'");

  std::map<std::string, int> leaf_id;
  for (std::size_t i = 0; i < labels.size(); ++i) leaf_id[labels[i]] = static_cast<int>(i);
  std::vector<int> id(nodes.size(), -1);
  int next_internal = static_cast<int>(labels.size());
  std::vector<char> used(labels.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].children.empty()) {
      auto it = leaf_id.find(nodes[i].label);
      if (it == leaf_id.end()) throw Error("unknown Newick leaf '" + nodes[i].label + "'");
      if (used[static_cast<std::size_t>(it->second)]++) throw Error("duplicate Newick leaf '" + nodes[i].label + "'");
      id[i] = it->second;
    }
  }
  std::vector<std::pair<int, int>> edges;
  const auto& r = nodes[static_cast<std::size_t>(root)];
  const bool suppress_root = r.children.size() == 2;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!nodes[i].children.empty() && !(suppress_root && static_cast<int>(i) == root)) id[i] = next_internal++;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (suppress_root && static_cast<int>(i) == root) continue;
    for (int c : nodes[i].children) edges.emplace_back(id[i], id[static_cast<std::size_t>(c)]);
  }
  if (suppress_root) edges.emplace_back(id[static_cast<std::size_t>(r.children[0])], id[static_cast<std::size_t>(r.children[1])]);
  return TernaryTree::from_edges(labels.size(), edges);
}

nlohmann::ordered_json to_json(const HillClimbResult& result, std::span<const std::string> labels,
                               const HillClimbOptions& options) {
  nlohmann::ordered_json j;
  j["newick"] = to_newick(result.tree, labels);
  j["s"] = result.score.s;
  j["cost"] = result.score.cost;
  j["min_cost"] = result.score.min_cost;
  j["max_cost"] = result.score.max_cost;
  j["seed"] = options.seed;
  j["restarts"] = options.restarts;
  j["max_stale_steps"] = options.max_stale_steps;
  j["best_restart"] = result.best_restart;
  j["restart_scores"] = result.restart_scores;
  j["leaves"] = std::vector<std::string>(labels.begin(), labels.end());
  j["edges"] = result.tree.edges();
  j["warnings"] = result.warnings;
  return j;
}

std::set<int> steiner_nodes(const TernaryTree& tree, std::span<const int> leaves) {
  std::set<int> out;
  if (leaves.empty()) return out;
  std::vector<int> parent(tree.node_count(), -2);
  std::vector<int> stack{leaves.front()};
  parent[static_cast<std::size_t>(leaves.front())] = -1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : tree.neighbors(u)) {
      if (parent[static_cast<std::size_t>(v)] == -2) {
        parent[static_cast<std::size_t>(v)] = u;
        stack.push_back(v);
      }
    }
  }
  for (int leaf : leaves)
    for (int u = leaf; u != -1 && out.insert(u).second; u = parent[static_cast<std::size_t>(u)]) {
    }
  return out;
}

bool steiner_subtrees_disjoint(const TernaryTree& tree, std::span<const std::vector<int>> groups) {
  std::vector<char> owner(tree.node_count(), 0);
  for (const auto& g : groups) {
    for (int u : steiner_nodes(tree, g)) {
      if (owner[static_cast<std::size_t>(u)]) return false;
      owner[static_cast<std::size_t>(u)] = 1;
    }
  }
  return true;
}

}  // namespace ngd
