#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ngd/anchor_learner.hpp"
#include "ngd/count_provider.hpp"

namespace ngd {

/// A named list of terms. `source` names the file it came from, for errors.
struct TermList {
  std::string source;
  std::vector<std::string> terms;
};

/// One term per line; '#' lines and blank lines skipped; duplicates dropped
/// after query normalization.
TermList read_term_file(const std::filesystem::path& path);
TermList read_term_list(std::istream& in, std::string source);

struct TrialConfig {
  TermList category;    ///< positive lexicon
  TermList dictionary;  ///< negative pool, drawn without filtering
  std::size_t train_positive = 25;
  std::size_t train_negative = 25;
  std::size_t test_positive = 10;
  std::size_t test_negative = 10;
  std::size_t category_anchors = 3;
  std::size_t dictionary_anchors = 3;
  std::size_t folds = 5;
  HyperGrid grid = HyperGrid::defaults();
  double n = 0.0;
  double inf_cap = 2.0;
  std::uint64_t seed = 0;

  std::size_t test_size() const { return test_positive + test_negative; }
  std::size_t example_count() const { return train_positive + train_negative + test_size(); }
  std::size_t anchor_count() const { return category_anchors + dictionary_anchors; }
  /// anchors + examples + examples * anchors
  std::uint64_t query_budget() const;
};

struct TrialDraw {
  std::vector<std::string> anchors;
  std::vector<std::string> train_positive, train_negative;
  std::vector<std::string> test_positive, test_negative;
};

/// Disjoint draws of anchors, training and test terms. Throws naming the file
/// that is too small.
TrialDraw draw_trial(const TrialConfig& config);

struct TrialResult {
  bool valid = false;
  std::string error;  ///< why the trial is invalid
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t test_size = 0;
  std::uint64_t seed = 0;
  TrialDraw draw;
  std::vector<Prediction> predictions;
  std::vector<int> expected;  ///< +1 / -1 per prediction
  double gamma = 0.0, cost = 0.0, cv_accuracy = 0.0;
  std::optional<std::uint64_t> remote_fetches;  ///< absent when trials ran in parallel
  std::optional<std::uint64_t> cache_hits;
};

/// Draw, featurize, train with k-fold CV, score on the held-out set.
/// Degenerate training features mark the trial invalid instead of throwing.
TrialResult run_trial(const TrialConfig& config, CountProvider& provider);

inline constexpr std::size_t kHistogramBins = 20;  // width 0.05; 1.0 lands in the last bin

struct TrialsSummary {
  std::vector<TrialResult> trials;
  std::array<std::size_t, kHistogramBins> histogram{};
  std::size_t valid = 0;
  double mean = 0.0;
  double variance = 0.0;  ///< population variance over valid trials
  double stddev = 0.0;
  QueryAccounting accounting;  ///< provider totals after the run
  std::uint64_t remote_fetches = 0;  ///< fetched during this run
};

std::size_t histogram_bin(std::size_t correct, std::size_t total);

/// Trial t uses configs[t % size] with a seed derived from (config seed, t).
/// Per-trial errors are recorded and the remaining trials still run.
/// `parallel` is refused for providers that are not local.
TrialsSummary run_trials(std::size_t n, std::span<const TrialConfig> configs, CountProvider& provider,
                         bool parallel = false);

nlohmann::ordered_json to_json(const TrialResult& r);
nlohmann::ordered_json to_json(const TrialsSummary& s);
/// bin_lo,bin_hi,count
void write_histogram_csv(std::ostream& out, const TrialsSummary& s);

}  // namespace ngd
