#include "ngd/universality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "ngd/distance.hpp"
#include "ngd/error.hpp"

namespace ngd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTolerance = 1e-9;
constexpr std::uint64_t kSampleSeed = 0x5eed5eedULL;

// NGD written over code lengths; x == y is the identity case.
double ngd_from_codes(double g_xy, double g_x, double g_y, bool same) {
  if (same) return 0.0;
  const double hi = std::max(g_x, g_y);
  if (std::isinf(hi)) return 1.0;
  if (std::isinf(g_xy)) return kInf;
  if (hi == 0.0) return 0.0;
  return (g_xy - std::min(g_x, g_y)) / hi;
}

}  // namespace

GoogleDistribution GoogleDistribution::from_counts(std::vector<std::string> vocabulary, CountMatrix counts) {
  if (counts.rows() != counts.cols() || counts.rows() != static_cast<Eigen::Index>(vocabulary.size()))
    throw Error("count table shape does not match vocabulary");
  GoogleDistribution g;
  g.vocabulary = std::move(vocabulary);
  g.counts = std::move(counts);
  for (Eigen::Index i = 0; i < g.size(); ++i)
    for (Eigen::Index j = i; j < g.size(); ++j) g.n += g.counts(i, j);
  return g;
}

double GoogleDistribution::prob(Eigen::Index i, Eigen::Index j) const {
  if (n == 0) throw Error("distribution with N = 0");
  return static_cast<double>(counts(i, j)) / static_cast<double>(n);
}

double GoogleDistribution::code(Eigen::Index i, Eigen::Index j) const {
  return google_code(prob(i, j)).bits;
}

double GoogleDistribution::total_mass() const {
  double s = 0;
  for (Eigen::Index i = 0; i < size(); ++i)
    for (Eigen::Index j = i; j < size(); ++j) s += prob(i, j);
  return s;
}

double GoogleDistribution::kraft_sum() const {
  double s = 0;
  for (Eigen::Index i = 0; i < size(); ++i)
    for (Eigen::Index j = i; j < size(); ++j) s += std::exp2(-code(i, j));
  return s;
}

CooccurrenceTable::CooccurrenceTable(const CorpusIndex& index, std::vector<std::string> vocabulary)
    : vocabulary_(std::move(vocabulary)), doc_terms_(index.doc_count()) {
  std::set<std::string> seen;
  for (std::size_t t = 0; t < vocabulary_.size(); ++t) {
    if (!seen.insert(normalize_text(vocabulary_[t], index.tokenizer())).second)
      throw Error("duplicate vocabulary term: " + vocabulary_[t]);
    for (DocId d : index.documents_containing(vocabulary_[t])) doc_terms_[d].push_back(static_cast<Eigen::Index>(t));
  }
}

CountMatrix CooccurrenceTable::counts() const {
  std::vector<DocId> all(doc_terms_.size());
  std::iota(all.begin(), all.end(), DocId{0});
  return counts(all);
}

CountMatrix CooccurrenceTable::counts(std::span<const DocId> docs) const {
  const auto s = static_cast<Eigen::Index>(vocabulary_.size());
  CountMatrix c = CountMatrix::Zero(s, s);
  for (DocId d : docs) {
    const auto& terms = doc_terms_.at(d);
    for (std::size_t a = 0; a < terms.size(); ++a)
      for (std::size_t b = a; b < terms.size(); ++b) ++c(terms[a], terms[b]);
  }
  // Fill the lower triangle; the loops above write with terms[a] < terms[b].
  for (Eigen::Index i = 0; i < s; ++i)
    for (Eigen::Index j = i + 1; j < s; ++j) c(j, i) = c(i, j);
  return c;
}

GoogleDistribution google_distribution(const CorpusIndex& index, std::span<const std::string> vocabulary) {
  CooccurrenceTable table(index, {vocabulary.begin(), vocabulary.end()});
  return GoogleDistribution::from_counts(table.vocabulary(), table.counts());
}

void validate_partition(const Partition& partition, std::uint64_t doc_count) {
  std::vector<int> owner(doc_count, -1);
  std::vector<std::string> problems;
  for (std::size_t c = 0; c < partition.classes.size(); ++c) {
    if (partition.classes[c].empty()) problems.push_back(fmt::format("class {} is empty", c));
    for (DocId d : partition.classes[c]) {
      if (d >= doc_count) {
        problems.push_back(fmt::format("document {} out of range", d));
      } else if (owner[d] >= 0) {
        problems.push_back(fmt::format("document {} in classes {} and {}", d, owner[d], c));
      } else {
        owner[d] = static_cast<int>(c);
      }
    }
  }
  std::vector<std::uint64_t> gaps;
  for (std::uint64_t d = 0; d < doc_count; ++d)
    if (owner[d] < 0) gaps.push_back(d);
  if (!gaps.empty()) problems.push_back(fmt::format("documents not covered: {}", fmt::join(gaps, ",")));
  if (partition.classes.empty()) problems.emplace_back("no classes");
  if (!problems.empty()) throw Error(fmt::format("invalid partition: {}", fmt::join(problems, "; ")));
}

Partition random_partition(std::uint64_t doc_count, std::size_t classes, std::mt19937_64& rng) {
  if (classes == 0 || classes > doc_count) throw Error("need 1 <= classes <= document count");
  std::vector<DocId> order(doc_count);
  std::iota(order.begin(), order.end(), DocId{0});
  std::shuffle(order.begin(), order.end(), rng);
  Partition p;
  p.classes.resize(classes);
  // The first `classes` shuffled documents seed one class each; the rest land uniformly.
  std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
  for (std::size_t i = 0; i < order.size(); ++i) p.classes[i < classes ? i : pick(rng)].push_back(order[i]);
  for (auto& c : p.classes) std::sort(c.begin(), c.end());
  return p;
}

AuthorStats author_stats(const CooccurrenceTable& table, const Partition& partition) {
  validate_partition(partition, table.doc_count());
  AuthorStats stats;
  for (const auto& docs : partition.classes) {
    AuthorClass a;
    a.dist = GoogleDistribution::from_counts(table.vocabulary(), table.counts(docs));
    a.m = docs.size();
    stats.classes.push_back(std::move(a));
  }
  return stats;
}

AuthorStats author_stats(const CorpusIndex& index, const Partition& partition, std::span<const std::string> vocabulary) {
  CooccurrenceTable table(index, {vocabulary.begin(), vocabulary.end()});
  return author_stats(table, partition);
}

Theorem1Report check_theorem1(const GoogleDistribution& g, const AuthorStats& stats) {
  Theorem1Report r;
  r.min_slack = kInf;

  CountMatrix sum = CountMatrix::Zero(g.size(), g.size());
  std::int64_t n_sum = 0;
  for (const auto& a : stats.classes) {
    if (a.dist.size() != g.size()) throw Error("author statistics use a different vocabulary");
    sum += a.dist.counts;
    n_sum += a.dist.n;
  }
  r.mixture_exact = sum == g.counts && n_sum == g.n;

  std::vector<std::size_t> chosen(stats.classes.size());
  std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  if (chosen.size() > kExactClassLimit) {
    std::mt19937_64 rng(kSampleSeed);
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(kExactClassLimit);
    std::sort(chosen.begin(), chosen.end());
    r.sampled_classes = true;
  }

  for (std::size_t c : chosen) {
    const auto& a = stats.classes[c];
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      for (Eigen::Index j = i; j < g.size(); ++j) {
        ++r.checked;
        if (g.counts(i, j) < a.dist.counts(i, j)) ++r.violations;
        const double slack = (static_cast<double>(g.counts(i, j)) - static_cast<double>(a.dist.counts(i, j))) /
                             static_cast<double>(g.n);
        if (slack < r.min_slack) {
          r.min_slack = slack;
          r.tightest_class = c;
          r.tightest_x = i;
          r.tightest_y = j;
        }
      }
    }
  }
  return r;
}

UniformWitness check_nonuniversality_of_uniform(std::size_t s, std::size_t a) {
  if (a < 2) throw Error("construction requires at least two authors");
  if (s <= a) throw Error("construction requires s > a");
  UniformWitness w;
  w.s = s;
  w.a = a;
  w.uniform_prob = 1.0 / static_cast<double>(s);
  w.author_distribution.assign(s, 0.0);
  w.author_distribution[0] = 1.0;
  w.required_lower = (1.0 / static_cast<double>(a)) * w.author_distribution[0];
  w.violated = w.uniform_prob < w.required_lower;
  return w;
}

namespace {

BoundReport evaluate_pair(const GoogleDistribution& g, const GoogleDistribution& gi, Eigen::Index x, Eigen::Index y,
                          int k) {
  BoundReport b;
  b.x = x;
  b.y = y;
  b.k = k;
  b.author_mass = gi.prob(x, y);
  const bool same = x == y;
  const double gx = g.code(x, x), gy = g.code(y, y), gxy = g.code(x, y);
  const double ix = gi.code(x, x), iy = gi.code(y, y), ixy = gi.code(x, y);
  const double max_g = std::max(gx, gy);
  const double log_ratio = std::log2(static_cast<double>(g.n) / static_cast<double>(gi.n));
  b.ngd_global = ngd_from_codes(gxy, gx, gy, same);
  b.ngd_author = ngd_from_codes(ixy, ix, iy, same);

  if (max_g == 0.0) {
    // Whole sample space is this one term; both sides are the identity.
    b.beta = 1.0;
    b.gamma = 0.0;
    b.beta_bound = b.gamma_bound = kInf;
    b.holds = b.within_bounds = true;
    return b;
  }
  b.beta = std::max(ix, iy) / max_g;
  b.gamma = (std::min(ix, iy) - std::min(gx, gy) + log_ratio) / max_g;
  b.beta_bound = 1.0 + std::log2(2.0 * k) / max_g;
  b.gamma_bound = (std::log2(2.0 * k) + log_ratio) / max_g;

  if (std::isinf(b.ngd_author) || std::isinf(b.beta) || std::isinf(b.gamma)) {
    b.holds = false;
  } else if (std::isinf(b.ngd_global)) {
    b.holds = false;
  } else {
    const double rhs = b.beta * b.ngd_author + b.gamma;
    b.holds = b.ngd_global <= rhs + kTolerance;
  }
  b.within_bounds = b.holds && b.beta <= b.beta_bound + kTolerance && b.gamma <= b.gamma_bound + kTolerance;
  return b;
}

}  // namespace

Theorem2Report theorem2_mass(const GoogleDistribution& g, const AuthorClass& author, std::size_t author_index, int k) {
  if (k < 1) throw Error("k must be at least 1");
  const auto& gi = author.dist;
  if (gi.n == 0) throw Error(fmt::format("author {} has N_i = 0", author_index));
  if (gi.size() != g.size()) throw Error("author statistics use a different vocabulary");

  Theorem2Report r;
  r.k = k;
  r.author = author_index;
  r.required = std::pow(1.0 - 1.0 / k, 2);

  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    for (Eigen::Index j = i; j < g.size(); ++j)
      if (gi.counts(i, j) > 0) pairs.emplace_back(i, j);

  const std::size_t limit = kExactVocabularyLimit * (kExactVocabularyLimit + 1) / 2;
  if (static_cast<std::size_t>(g.size()) > kExactVocabularyLimit && pairs.size() > limit) {
    std::mt19937_64 rng(kSampleSeed);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    pairs.resize(limit);
    std::sort(pairs.begin(), pairs.end());
    r.sampled = true;
  }

  double total = 0, exact = 0, bounded = 0;
  for (auto [i, j] : pairs) {
    auto b = evaluate_pair(g, gi, i, j, k);
    total += b.author_mass;
    if (b.holds) exact += b.author_mass;
    if (b.within_bounds) bounded += b.author_mass;
    r.pairs.push_back(b);
  }
  // A sample reports the satisfied fraction of the sampled mass.
  r.mass_exact = r.sampled ? exact / total : exact;
  r.mass_within_bounds = r.sampled ? bounded / total : bounded;
  return r;
}

Theorem2Report theorem2_mass(const CorpusIndex& index, const Partition& partition, std::size_t class_index, int k,
                             std::span<const std::string> vocabulary) {
  CooccurrenceTable table(index, {vocabulary.begin(), vocabulary.end()});
  auto g = GoogleDistribution::from_counts(table.vocabulary(), table.counts());
  auto stats = author_stats(table, partition);
  if (class_index >= stats.classes.size()) throw Error("no such class");
  return theorem2_mass(g, stats.classes[class_index], class_index, k);
}

nlohmann::ordered_json to_json(const GoogleDistribution& g, const Theorem1Report& r) {
  nlohmann::ordered_json j;
  j["checked"] = r.checked;
  j["violations"] = r.violations;
  j["min_slack"] = r.min_slack;
  j["tightest"] = {{"class", r.tightest_class},
                   {"x", g.vocabulary.at(static_cast<std::size_t>(r.tightest_x))},
                   {"y", g.vocabulary.at(static_cast<std::size_t>(r.tightest_y))}};
  j["mixture_exact"] = r.mixture_exact;
  j["sampled_classes"] = r.sampled_classes;
  return j;
}

nlohmann::ordered_json to_json(const GoogleDistribution& g, const Theorem2Report& r, std::size_t max_witnesses) {
  nlohmann::ordered_json j;
  j["k"] = r.k;
  j["author"] = r.author;
  j["required"] = r.required;
  j["mass_exact"] = r.mass_exact;
  j["mass_within_bounds"] = r.mass_within_bounds;
  j["satisfied"] = r.satisfied();
  j["sampled"] = r.sampled;
  // Tightest pairs: smallest margin rhs - lhs of the exact inequality.
  std::vector<const BoundReport*> order;
  for (const auto& b : r.pairs) order.push_back(&b);
  auto margin = [](const BoundReport* b) { return b->beta * b->ngd_author + b->gamma - b->ngd_global; };
  std::stable_sort(order.begin(), order.end(), [&](auto* a, auto* b) { return margin(a) < margin(b); });
  auto witnesses = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < std::min(max_witnesses, order.size()); ++i) {
    const auto* b = order[i];
    witnesses.push_back({{"x", g.vocabulary.at(static_cast<std::size_t>(b->x))},
                         {"y", g.vocabulary.at(static_cast<std::size_t>(b->y))},
                         {"author_mass", b->author_mass},
                         {"beta", b->beta},
                         {"gamma", b->gamma},
                         {"beta_bound", b->beta_bound},
                         {"gamma_bound", b->gamma_bound},
                         {"ngd_global", b->ngd_global},
                         {"ngd_author", b->ngd_author},
                         {"holds", b->holds},
                         {"within_bounds", b->within_bounds}});
  }
  j["witnesses"] = std::move(witnesses);
  return j;
}

nlohmann::ordered_json to_json(const UniformWitness& w) {
  return {{"s", w.s},
          {"a", w.a},
          {"uniform_prob", w.uniform_prob},
          {"required_lower", w.required_lower},
          {"violated", w.violated}};
}

}  // namespace ngd
