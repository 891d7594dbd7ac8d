#include "ngd/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <ostream>
#include <random>
#include <set>

#include <fmt/format.h>

#include "ngd/error.hpp"

namespace ngd {

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t t) {
  auto rng = make_rng(seed, 0x7472ULL + t);
  return rng();
}

// Takes `count` terms from the shuffled pool skipping anything already used.
std::vector<std::string> take(const std::vector<std::string>& pool, std::size_t& cursor, std::size_t count,
                              const std::set<std::string>& used, const std::string& source, std::size_t needed) {
  std::vector<std::string> out;
  while (out.size() < count) {
    if (cursor >= pool.size())
      throw Error(fmt::format("insufficient vocabulary in {}: need {} distinct terms", source, needed));
    const auto& t = pool[cursor++];
    if (!used.contains(t)) out.push_back(t);
  }
  return out;
}

}  // namespace

TermList read_term_list(std::istream& in, std::string source) {
  TermList list{std::move(source), {}};
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = normalize_query_term(line);
    if (t.empty() || t.front() == '#') continue;
    if (seen.insert(t).second) list.terms.push_back(t);
  }
  return list;
}

TermList read_term_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  return read_term_list(in, path.string());
}

std::uint64_t TrialConfig::query_budget() const {
  const auto a = anchor_count(), e = example_count();
  return a + e + a * e;
}

TrialDraw draw_trial(const TrialConfig& config) {
  auto rng = make_rng(config.seed, 1);
  auto cat = config.category.terms;
  auto dict = config.dictionary.terms;
  std::shuffle(cat.begin(), cat.end(), rng);
  std::shuffle(dict.begin(), dict.end(), rng);

  const auto cat_need = config.category_anchors + config.train_positive + config.test_positive;
  const auto dict_need = config.dictionary_anchors + config.train_negative + config.test_negative;
  const auto cat_name = config.category.source.empty() ? std::string("category list") : config.category.source;
  const auto dict_name = config.dictionary.source.empty() ? std::string("dictionary list") : config.dictionary.source;

  TrialDraw d;
  std::set<std::string> used;
  std::size_t ci = 0, di = 0;
  auto mark = [&](const std::vector<std::string>& v) { used.insert(v.begin(), v.end()); };
  auto cat_anchors = take(cat, ci, config.category_anchors, used, cat_name, cat_need);
  mark(cat_anchors);
  d.train_positive = take(cat, ci, config.train_positive, used, cat_name, cat_need);
  mark(d.train_positive);
  d.test_positive = take(cat, ci, config.test_positive, used, cat_name, cat_need);
  mark(d.test_positive);
  auto dict_anchors = take(dict, di, config.dictionary_anchors, used, dict_name, dict_need);
  mark(dict_anchors);
  d.train_negative = take(dict, di, config.train_negative, used, dict_name, dict_need);
  mark(d.train_negative);
  d.test_negative = take(dict, di, config.test_negative, used, dict_name, dict_need);

  d.anchors = std::move(cat_anchors);
  d.anchors.insert(d.anchors.end(), dict_anchors.begin(), dict_anchors.end());
  return d;
}

TrialResult run_trial(const TrialConfig& config, CountProvider& provider) {
  if (config.test_size() == 0) throw Error("empty test set");
  TrialResult r;
  r.seed = config.seed;
  r.test_size = config.test_size();
  r.draw = draw_trial(config);
  const auto before = provider.accounting();

  LearnerOptions opts;
  opts.n = config.n;
  opts.inf_cap = config.inf_cap;
  opts.folds = config.folds;
  opts.grid = config.grid;
  opts.seed = config.seed;

  auto record_accounting = [&] {
    const auto after = provider.accounting();
    r.remote_fetches = after.remote_fetches - before.remote_fetches;
    r.cache_hits = after.cache_hits - before.cache_hits;
  };

  AnchorModel model;
  try {
    model = train(r.draw.train_positive, r.draw.train_negative, r.draw.anchors, provider, opts);
  } catch (const DegenerateFeatures& e) {
    r.error = e.what();
    record_accounting();
    return r;
  }
  r.gamma = model.classifier.gamma;
  r.cost = model.classifier.cost;
  r.cv_accuracy = model.classifier.cv_accuracy;

  std::vector<std::string> test = r.draw.test_positive;
  test.insert(test.end(), r.draw.test_negative.begin(), r.draw.test_negative.end());
  r.expected.assign(r.draw.test_positive.size(), 1);
  r.expected.resize(test.size(), -1);
  r.predictions = predict(model, test, provider);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& p = r.predictions[i];
    if (!p.error.empty()) throw ProviderError(p.error);
    if (p.label == r.expected[i]) ++r.correct;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.test_size);
  r.valid = true;
  record_accounting();
  return r;
}

std::size_t histogram_bin(std::size_t correct, std::size_t total) {
  if (total == 0 || correct > total) throw Error("accuracy outside [0, 1]");
  return std::min(kHistogramBins - 1, correct * kHistogramBins / total);
}

TrialsSummary run_trials(std::size_t n, std::span<const TrialConfig> configs, CountProvider& provider,
                         bool parallel) {
  if (n == 0) throw Error("need at least one trial");
  if (configs.empty()) throw Error("no trial configurations");
  if (parallel && !provider.is_local()) throw Error("parallel trials need a local provider");

  auto config_for = [&](std::size_t t) {
    auto c = configs[t % configs.size()];
    c.seed = trial_seed(c.seed, t);
    return c;
  };
  auto guarded = [&](std::size_t t) {
    const auto c = config_for(t);
    try {
      return run_trial(c, provider);
    } catch (const Error& e) {
      TrialResult r;
      r.seed = c.seed;
      r.test_size = c.test_size();
      r.error = e.what();
      return r;
    }
  };

  TrialsSummary s;
  const auto before = provider.accounting();
  if (parallel) {
    std::vector<std::future<TrialResult>> jobs;
    for (std::size_t t = 0; t < n; ++t) jobs.push_back(std::async(std::launch::async, guarded, t));
    for (auto& j : jobs) {
      auto r = j.get();
      r.remote_fetches.reset();
      r.cache_hits.reset();
      s.trials.push_back(std::move(r));
    }
  } else {
    for (std::size_t t = 0; t < n; ++t) s.trials.push_back(guarded(t));
  }
  s.accounting = provider.accounting();
  s.remote_fetches = s.accounting.remote_fetches - before.remote_fetches;

  double sum = 0;
  for (const auto& r : s.trials) {
    if (!r.valid) continue;
    ++s.valid;
    ++s.histogram[histogram_bin(r.correct, r.test_size)];
    sum += r.accuracy;
  }
  if (s.valid > 0) {
    s.mean = sum / static_cast<double>(s.valid);
    double ss = 0;
    for (const auto& r : s.trials)
      if (r.valid) ss += (r.accuracy - s.mean) * (r.accuracy - s.mean);
    s.variance = ss / static_cast<double>(s.valid);
    s.stddev = std::sqrt(s.variance);
  }
  return s;
}

nlohmann::ordered_json to_json(const TrialResult& r) {
  nlohmann::ordered_json j;
  j["valid"] = r.valid;
  if (!r.error.empty()) j["error"] = r.error;
  j["seed"] = r.seed;
  j["accuracy"] = r.accuracy;
  j["correct"] = r.correct;
  j["test_size"] = r.test_size;
  j["anchors"] = r.draw.anchors;
  j["train_positive"] = r.draw.train_positive;
  j["train_negative"] = r.draw.train_negative;
  if (r.valid) {
    j["gamma"] = r.gamma;
    j["cost"] = r.cost;
    j["cv_accuracy"] = r.cv_accuracy;
  }
  auto preds = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.predictions.size(); ++i) {
    const auto& p = r.predictions[i];
    preds.push_back({{"term", p.term}, {"expected", r.expected[i]}, {"label", p.label}, {"margin", p.margin}});
  }
  j["predictions"] = std::move(preds);
  if (r.remote_fetches) j["remote_fetches"] = *r.remote_fetches;
  if (r.cache_hits) j["cache_hits"] = *r.cache_hits;
  return j;
}

nlohmann::ordered_json to_json(const TrialsSummary& s) {
  nlohmann::ordered_json j;
  j["trials"] = s.trials.size();
  j["valid_trials"] = s.valid;
  j["mean"] = s.mean;
  j["variance"] = s.variance;
  j["stddev"] = s.stddev;
  j["histogram"] = s.histogram;
  j["accounting"] = {{"remote_fetches", s.accounting.remote_fetches},
                     {"cache_hits", s.accounting.cache_hits},
                     {"quota_remaining", s.accounting.quota_remaining},
                     {"remote_fetches_this_run", s.remote_fetches}};
  auto trials = nlohmann::ordered_json::array();
  for (const auto& r : s.trials) trials.push_back(to_json(r));
  j["results"] = std::move(trials);
  return j;
}

void write_histogram_csv(std::ostream& out, const TrialsSummary& s) {
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < kHistogramBins; ++b)
    out << fmt::format("{:.2f},{:.2f},{}\n", 0.05 * static_cast<double>(b), 0.05 * static_cast<double>(b + 1),
                       s.histogram[b]);
}

}  // namespace ngd
