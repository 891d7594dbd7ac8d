#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "ngd/corpus_index.hpp"

namespace ngd {

/// counts(i, i) = |x_i|, counts(i, j) = |x_i ∩ x_j|; symmetric.
using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Probability mass over the singletons and unordered doubletons of a
/// vocabulary: g(x, y) = counts(x, y) / N with N the sum of the upper
/// triangle including the diagonal.
struct GoogleDistribution {
  std::vector<std::string> vocabulary;
  CountMatrix counts;
  std::int64_t n = 0;

  static GoogleDistribution from_counts(std::vector<std::string> vocabulary, CountMatrix counts);

  Eigen::Index size() const { return counts.rows(); }
  double prob(Eigen::Index i, Eigen::Index j) const;
  /// Code length in bits, +inf for zero-probability events.
  double code(Eigen::Index i, Eigen::Index j) const;
  double total_mass() const;
  /// Σ 2^-G over the sample space.
  double kraft_sum() const;
};

/// Per-document vocabulary membership, from which the count table of any
/// subset of documents is accumulated.
class CooccurrenceTable {
 public:
  CooccurrenceTable(const CorpusIndex& index, std::vector<std::string> vocabulary);

  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  std::size_t doc_count() const { return doc_terms_.size(); }

  CountMatrix counts() const;
  CountMatrix counts(std::span<const DocId> docs) const;

 private:
  std::vector<std::string> vocabulary_;
  std::vector<std::vector<Eigen::Index>> doc_terms_;
};

GoogleDistribution google_distribution(const CorpusIndex& index, std::span<const std::string> vocabulary);

/// Disjoint non-empty document classes covering the whole index ("web authors").
struct Partition {
  std::vector<std::vector<DocId>> classes;
};

/// Throws ngd::Error listing overlapping, missing, out-of-range ids and empty classes.
void validate_partition(const Partition& partition, std::uint64_t doc_count);

/// Uniform random assignment of documents to `classes` non-empty classes.
Partition random_partition(std::uint64_t doc_count, std::size_t classes, std::mt19937_64& rng);

struct AuthorClass {
  GoogleDistribution dist;  ///< g_i with dist.n = N_i
  std::uint64_t m = 0;      ///< M_i
};

struct AuthorStats {
  std::vector<AuthorClass> classes;
};

AuthorStats author_stats(const CooccurrenceTable& table, const Partition& partition);
AuthorStats author_stats(const CorpusIndex& index, const Partition& partition,
                         std::span<const std::string> vocabulary);

struct Theorem1Report {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double min_slack = 0.0;  ///< min over classes and pairs of g - (N_i/N) g_i
  std::size_t tightest_class = 0;
  Eigen::Index tightest_x = 0;
  Eigen::Index tightest_y = 0;
  bool mixture_exact = false;  ///< Σ_i counts_i == counts and Σ_i N_i == N
  bool sampled_classes = false;
};

/// Checks g(x,y) >= (N_i/N) g_i(x,y) for every class and pair. Compared in
/// integer counts, where the inequality reads counts >= counts_i.
Theorem1Report check_theorem1(const GoogleDistribution& g, const AuthorStats& stats);

struct UniformWitness {
  std::size_t s = 0;
  std::size_t a = 0;
  double uniform_prob = 0.0;     ///< L(x) = 1/s
  double required_lower = 0.0;   ///< c_i * g_i(x) with c_i = 1/a and g_i(x) = 1
  std::vector<double> author_distribution;  ///< g_i: all mass on term 0
  bool violated = false;         ///< uniform_prob < required_lower
};

/// Builds the point-mass author distribution that the uniform distribution
/// cannot dominate. Requires s > a >= 2.
UniformWitness check_nonuniversality_of_uniform(std::size_t s, std::size_t a);

struct BoundReport {
  Eigen::Index x = 0;
  Eigen::Index y = 0;
  double author_mass = 0.0;  ///< g_i(x, y)
  double beta = 0.0;
  double gamma = 0.0;
  double beta_bound = 0.0;   ///< 1 + log(2k) / max{G(x), G(y)}
  double gamma_bound = 0.0;  ///< log(2kN/N_i) / max{G(x), G(y)}
  double ngd_global = 0.0;
  double ngd_author = 0.0;
  bool holds = false;          ///< NGD <= beta NGD_i + gamma, exact beta and gamma
  bool within_bounds = false;  ///< holds, and beta, gamma under their displayed bounds
  int k = 0;
};

struct Theorem2Report {
  int k = 0;
  std::size_t author = 0;
  double required = 0.0;          ///< (1 - 1/k)^2
  double mass_exact = 0.0;        ///< g_i-mass of pairs where `holds`
  double mass_within_bounds = 0.0;  ///< g_i-mass of pairs where `within_bounds`
  bool sampled = false;
  std::vector<BoundReport> pairs;

  bool satisfied() const { return mass_within_bounds >= required; }
};

/// Vocabularies above this size are checked on a fixed-seed sample of pairs.
inline constexpr std::size_t kExactVocabularyLimit = 64;
inline constexpr std::size_t kExactClassLimit = 16;

Theorem2Report theorem2_mass(const GoogleDistribution& g, const AuthorClass& author, std::size_t author_index, int k);
Theorem2Report theorem2_mass(const CorpusIndex& index, const Partition& partition, std::size_t class_index, int k,
                             std::span<const std::string> vocabulary);

nlohmann::ordered_json to_json(const GoogleDistribution& g, const Theorem1Report& r);
nlohmann::ordered_json to_json(const GoogleDistribution& g, const Theorem2Report& r, std::size_t max_witnesses = 5);
nlohmann::ordered_json to_json(const UniformWitness& w);

}  // namespace ngd
