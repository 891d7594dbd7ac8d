#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace ngd {

class CountProvider;

/// Pearson product-moment correlation. Throws on length mismatch, fewer
/// than two values, or zero variance ("undefined correlation").
double pearson(std::span<const double> a, std::span<const double> b);

/// Known (source, target) translations whose NGDs form the matrix columns.
struct BasisVocabulary {
  std::vector<std::pair<std::string, std::string>> pairs;

  /// At least two pairs; no repeated source or target word.
  void validate() const;
  /// Tab-separated `source<TAB>target` lines; blank and '#' lines skipped.
  static BasisVocabulary read_tsv(std::istream& in);
};

struct PermutationScore {
  std::vector<std::size_t> permutation;  ///< source row r maps to target word permutation[r]
  double correlation = 0.0;
};

struct PermutationResult {
  bool success = false;
  std::vector<std::pair<std::string, std::string>> mapping;
  double correlation = 0.0;
  std::vector<PermutationScore> all_correlations;  ///< k! entries, lexicographic order
  std::size_t ties = 0;  ///< other permutations sharing the best correlation
  std::string diagnostic;
};

inline constexpr std::size_t kMaxUnknownWords = 8;

/// Correlates the row-major flattening of `source` against `target` with its
/// rows permuted, for every permutation in lexicographic order. The first
/// permutation reaching the maximum wins; success requires it to be > 0.
PermutationResult best_permutation(const Eigen::MatrixXd& source, const Eigen::MatrixXd& target);

/// Builds the NGD matrices (rows: unknown words, columns: basis words) on each
/// language side and resolves the permutation.
PermutationResult infer_permutation(const BasisVocabulary& basis, std::span<const std::string> source_unknown,
                                    std::span<const std::string> target_unknown, CountProvider& source_provider,
                                    CountProvider& target_provider, double source_n, double target_n,
                                    double inf_cap = 2.0);

nlohmann::ordered_json to_json(const PermutationResult& result, std::span<const std::string> source_unknown,
                               std::span<const std::string> target_unknown);

}  // namespace ngd
