#include "ngd/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ngd/anchor_learner.hpp"
#include "ngd/corpus_index.hpp"
#include "ngd/count_provider.hpp"
#include "ngd/distance.hpp"
#include "ngd/error.hpp"
#include "ngd/eval_harness.hpp"
#include "ngd/quartet.hpp"
#include "ngd/translator.hpp"
#include "ngd/universality.hpp"

namespace ngd {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Above this the dense vocabulary count matrix gets unreasonably large.
constexpr std::size_t kMaxDenseVocabulary = 4096;

struct ProviderArgs {
  std::string index, remote, fixture;
  std::optional<double> n;

  void add(CLI::App* app, const std::string& prefix = "") {
    app->add_option("--" + prefix + "index", index, "Corpus index directory");
    app->add_option("--" + prefix + "remote", remote, "Count endpoint URL");
    app->add_option("--" + prefix + "fixture", fixture, "JSON-lines count file");
    app->add_option("--" + prefix + "n", n, "Normalizer N");
  }

  std::unique_ptr<CountProvider> open() const {
    const int given = !index.empty() + !remote.empty() + !fixture.empty();
    if (given > 1) throw Error("give exactly one of --index, --remote, --fixture");
    if (!index.empty()) return make_index_provider(std::make_shared<const CorpusIndex>(CorpusIndex::load(index)));
    if (!fixture.empty()) return make_fixture_provider(fixture);
    std::string url = remote;
    if (url.empty()) {
      if (const char* env = std::getenv("NGD_PROVIDER_URL"); env != nullptr && *env != '\0') url = env;
    }
    if (url.empty()) throw Error("no count provider: give --index, --remote or --fixture");
    return make_remote_provider(url, ProviderOptions::from_environment(), n);
  }

  double normalizer(const CountProvider& p) const {
    if (n) {
      if (!(*n > 0)) throw Error("--n must be positive");
      return *n;
    }
    if (auto d = p.default_normalizer()) return *d;
    throw Error("provider publishes no normalizer: pass --n");
  }
};

struct Output {
  std::string path;
  std::string format;

  void write(std::ostream& out, const std::string& text) const {
    if (path.empty()) {
      out << text;
      return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << text;
    if (!f) throw Error("cannot write " + path);
  }
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::vector<std::string> terms_from(const std::vector<std::string>& inline_terms, const std::string& file) {
  std::vector<std::string> out = inline_terms;
  if (!file.empty()) {
    auto list = read_term_file(file);
    out.insert(out.end(), list.terms.begin(), list.terms.end());
  }
  return out;
}

std::vector<std::string> read_documents(const std::vector<std::string>& inputs, bool per_line) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> dir;
      for (const auto& e : fs::directory_iterator(in))
        if (e.is_regular_file()) dir.push_back(e.path());
      std::sort(dir.begin(), dir.end());
      files.insert(files.end(), dir.begin(), dir.end());
    } else {
      files.emplace_back(in);
    }
  }
  std::vector<std::string> docs;
  for (const auto& f : files) {
    std::ifstream s(f, std::ios::binary);
    if (!s) throw Error("cannot read " + f.string());
    if (per_line) {
      std::string line;
      while (std::getline(s, line)) docs.push_back(line);
    } else {
      std::ostringstream ss;
      ss << s.rdbuf();
      docs.push_back(ss.str());
    }
  }
  return docs;
}

json record_json(const CountRecord& r) {
  json j;
  j["x"] = r.query.x();
  if (r.query.is_pair()) j["y"] = r.query.y();
  j["count"] = r.count;
  j["n_snapshot"] = r.n_snapshot;
  j["provider_id"] = r.provider_id;
  j["fetched_at"] = r.fetched_at;
  return j;
}

json accounting_json(const QueryAccounting& a) {
  return json{{"remote_fetches", a.remote_fetches}, {"cache_hits", a.cache_hits}, {"quota_remaining", a.quota_remaining}};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!normalize_query_term(item).empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Normalized Google distance toolkit", "ngd"};
  app.require_subcommand(1);
  double inf_cap = 2.0;
  Output output;
  app.add_option("--inf-cap", inf_cap, "Stand-in for infinite distances")->check(CLI::PositiveNumber);
  app.add_option("--out", output.path, "Write primary output here");
  app.add_option("--format", output.format, "json|csv|newick")->check(CLI::IsMember({"json", "csv", "newick"}));
  app.fallthrough();

  std::function<void()> action;

  // index build
  auto* index_cmd = app.add_subcommand("index", "Corpus index operations")->require_subcommand(1);
  auto* build_cmd = index_cmd->add_subcommand("build", "Build an inverted index from text files");
  std::vector<std::string> build_inputs;
  std::string build_dir;
  bool per_line = false, keep_text = true, keep_case = false;
  build_cmd->add_option("inputs", build_inputs, "Files or directories of documents")->required();
  build_cmd->add_option("--dir", build_dir, "Index output directory")->required();
  build_cmd->add_flag("--lines", per_line, "Each input line is a document");
  build_cmd->add_flag("!--no-text", keep_text, "Do not retain text (disables phrase queries)");
  build_cmd->add_flag("--keep-case", keep_case, "Do not lowercase tokens");
  build_cmd->callback([&] {
    action = [&] {
      const auto docs = read_documents(build_inputs, per_line);
      const auto index = CorpusIndex::build(docs, TokenizerConfig{!keep_case, keep_text});
      index.save(build_dir);
      const auto stats = corpus_stats(index);
      output.write(out, dump(json{{"documents", index.doc_count()},
                                  {"skipped_documents", index.skipped_documents()},
                                  {"terms", index.term_count()},
                                  {"M", stats.M},
                                  {"N", stats.N},
                                  {"alpha_estimate", stats.alpha_estimate}}));
    };
  });

  // count
  auto* count_cmd = app.add_subcommand("count", "Page count of a term or a term pair");
  ProviderArgs count_p;
  std::vector<std::string> count_terms;
  count_p.add(count_cmd);
  count_cmd->add_option("terms", count_terms, "One term, or two for a pair")->required()->expected(1, 2);
  count_cmd->callback([&] {
    action = [&] {
      auto p = count_p.open();
      const auto q = count_terms.size() == 1 ? Query::single(count_terms[0]) : Query::pair(count_terms[0], count_terms[1]);
      const auto r = p->get_count(q);
      if (output.format == "json") {
        auto j = record_json(r);
        j["accounting"] = accounting_json(p->accounting());
        output.write(out, dump(j));
      } else {
        output.write(out, fmt::format("{}\n", r.count));
      }
    };
  });

  // pair
  auto* pair_cmd = app.add_subcommand("pair", "NGD between two terms");
  ProviderArgs pair_p;
  std::string pair_x, pair_y;
  pair_p.add(pair_cmd);
  pair_cmd->add_option("x", pair_x)->required();
  pair_cmd->add_option("y", pair_y)->required();
  pair_cmd->callback([&] {
    action = [&] {
      auto p = pair_p.open();
      double d = 0, n = 0;
      if (normalize_query_term(pair_x) != normalize_query_term(pair_y)) {
        n = pair_p.normalizer(*p);
        d = term_ngd(*p, pair_x, pair_y, n);
      }
      if (output.format == "json") {
        const auto flags = n > 0 ? ngd_flags(static_cast<double>(p->count(pair_x)), static_cast<double>(p->count(pair_y)),
                                             static_cast<double>(p->count(pair_x, pair_y)), n)
                                 : NgdFlags{};
        output.write(out, dump(json{{"x", pair_x},
                                    {"y", pair_y},
                                    {"ngd", std::isinf(d) ? json("inf") : json(d)},
                                    {"n", n},
                                    {"negative", flags.negative},
                                    {"normalizer_below_counts", flags.normalizer_below_counts}}));
      } else {
        output.write(out, std::isinf(d) ? std::string("inf\n") : fmt::format("{:.3f}\n", d));
      }
    };
  });

  // matrix
  auto* matrix_cmd = app.add_subcommand("matrix", "Pairwise NGD matrix of a term list");
  ProviderArgs matrix_p;
  std::vector<std::string> matrix_terms;
  std::string matrix_file;
  bool matrix_raw = false;
  matrix_p.add(matrix_cmd);
  matrix_cmd->add_option("terms", matrix_terms);
  matrix_cmd->add_option("--terms-file", matrix_file, "File with one term per line");
  matrix_cmd->add_flag("--raw", matrix_raw, "Write inf instead of the cap");
  matrix_cmd->callback([&] {
    action = [&] {
      auto p = matrix_p.open();
      const auto terms = terms_from(matrix_terms, matrix_file);
      const auto m = distance_matrix(terms, *p, matrix_p.normalizer(*p), inf_cap);
      if (output.format == "json") {
        output.write(out, dump(to_json(m)));
      } else {
        std::ostringstream s;
        write_csv(s, m, !matrix_raw);
        output.write(out, s.str());
      }
      if (!m.infinite_pairs.empty()) err << fmt::format("{} pair(s) never co-occur; capped at {}\n", m.infinite_pairs.size(), inf_cap);
      if (!m.negative_pairs.empty()) err << fmt::format("{} negative distance(s) from count noise\n", m.negative_pairs.size());
    };
  });

  // cluster
  auto* cluster_cmd = app.add_subcommand("cluster", "Quartet-tree hill climbing on a distance matrix");
  ProviderArgs cluster_p;
  std::string cluster_matrix, cluster_terms_file;
  std::vector<std::string> cluster_terms;
  std::uint64_t seed = 0;
  HillClimbOptions hc;
  cluster_p.add(cluster_cmd);
  cluster_cmd->add_option("--matrix", cluster_matrix, "Distance matrix CSV");
  cluster_cmd->add_option("terms", cluster_terms, "Terms to cluster through a provider");
  cluster_cmd->add_option("--terms-file", cluster_terms_file, "File with one term per line");
  cluster_cmd->add_option("--seed", seed)->required();
  cluster_cmd->add_option("--restarts", hc.restarts)->check(CLI::PositiveNumber);
  cluster_cmd->add_option("--max-stale", hc.max_stale_steps)->check(CLI::PositiveNumber);
  cluster_cmd->callback([&] {
    action = [&] {
      DistanceMatrix m;
      if (!cluster_matrix.empty()) {
        std::ifstream f(cluster_matrix);
        if (!f) throw Error("cannot read " + cluster_matrix);
        m = read_csv(f, inf_cap);
      } else {
        auto p = cluster_p.open();
        m = distance_matrix(terms_from(cluster_terms, cluster_terms_file), *p, cluster_p.normalizer(*p), inf_cap);
      }
      hc.seed = seed;
      const auto r = hill_climb(m, hc);
      for (const auto& w : r.warnings) err << "warning: " << w << "\n";
      if (output.format == "json") {
        output.write(out, dump(to_json(r, m.labels, hc)));
      } else {
        output.write(out, to_newick(r.tree, m.labels) + "\n");
        err << fmt::format("S(T) = {:.6f}\n", r.score.s);
      }
    };
  });

  // learn
  auto* learn_cmd = app.add_subcommand("learn", "Train an anchor-word classifier");
  ProviderArgs learn_p;
  std::string pos_file, neg_file, anchor_file, anchor_list;
  std::size_t folds = 5;
  learn_p.add(learn_cmd);
  learn_cmd->add_option("--positives", pos_file, "Positive examples, one per line")->required();
  learn_cmd->add_option("--negatives", neg_file, "Negative examples, one per line")->required();
  learn_cmd->add_option("--anchors", anchor_list, "Comma-separated anchor words");
  learn_cmd->add_option("--anchors-file", anchor_file, "Anchor words, one per line");
  learn_cmd->add_option("--seed", seed)->required();
  learn_cmd->add_option("--folds", folds)->check(CLI::Range(2, 100));
  learn_cmd->callback([&] {
    action = [&] {
      auto p = learn_p.open();
      const auto anchors = terms_from(split_list(anchor_list), anchor_file);
      if (anchors.empty()) throw Error("no anchors: give --anchors or --anchors-file");
      LearnerOptions o;
      o.n = learn_p.normalizer(*p);
      o.inf_cap = inf_cap;
      o.folds = folds;
      o.seed = seed;
      const auto model = train(read_term_file(pos_file).terms, read_term_file(neg_file).terms, anchors, *p, o);
      output.write(out, dump(model.to_json()));
      err << fmt::format("gamma {} cost {} cv accuracy {:.4f}\n", model.classifier.gamma, model.classifier.cost,
                         model.classifier.cv_accuracy);
    };
  });

  // classify
  auto* classify_cmd = app.add_subcommand("classify", "Classify terms with a trained model");
  ProviderArgs classify_p;
  std::string model_path, classify_file;
  std::vector<std::string> classify_terms;
  classify_p.add(classify_cmd);
  classify_cmd->add_option("--model", model_path)->required();
  classify_cmd->add_option("terms", classify_terms);
  classify_cmd->add_option("--terms-file", classify_file, "File with one term per line");
  classify_cmd->callback([&] {
    action = [&] {
      std::ifstream f(model_path);
      if (!f) throw Error("cannot read " + model_path);
      const auto model = AnchorModel::from_json(nlohmann::json::parse(f));
      auto p = classify_p.open();
      const auto terms = terms_from(classify_terms, classify_file);
      if (terms.empty()) throw Error("no terms to classify");
      const auto preds = predict(model, terms, *p);
      if (output.format == "json") {
        auto arr = json::array();
        for (const auto& pr : preds) {
          json j{{"term", pr.term}, {"label", pr.label}, {"margin", pr.margin}};
          if (!pr.error.empty()) j["error"] = pr.error;
          arr.push_back(std::move(j));
        }
        output.write(out, dump(arr));
      } else {
        std::ostringstream s;
        write_predictions_csv(s, preds);
        output.write(out, s.str());
      }
      for (const auto& pr : preds)
        if (!pr.error.empty()) err << pr.term << ": " << pr.error << "\n";
    };
  });

  // translate
  auto* translate_cmd = app.add_subcommand("translate", "Match unknown words across two languages");
  ProviderArgs src_p, dst_p;
  std::string basis_path, src_words, dst_words;
  src_p.add(translate_cmd);
  dst_p.add(translate_cmd, "target-");
  translate_cmd->add_option("--basis", basis_path, "Tab-separated known translations")->required();
  translate_cmd->add_option("--source-words", src_words, "Comma-separated unknown source words")->required();
  translate_cmd->add_option("--target-words", dst_words, "Comma-separated unknown target words")->required();
  translate_cmd->callback([&] {
    action = [&] {
      std::ifstream f(basis_path);
      if (!f) throw Error("cannot read " + basis_path);
      const auto basis = BasisVocabulary::read_tsv(f);
      const auto src = split_list(src_words), dst = split_list(dst_words);
      auto sp = src_p.open();
      const bool separate = !dst_p.index.empty() || !dst_p.remote.empty() || !dst_p.fixture.empty();
      std::unique_ptr<CountProvider> dp = separate ? dst_p.open() : nullptr;
      CountProvider& target = separate ? *dp : *sp;
      const double sn = src_p.normalizer(*sp);
      const double dn = separate || dst_p.n ? dst_p.normalizer(target) : sn;
      const auto r = infer_permutation(basis, src, dst, *sp, target, sn, dn, inf_cap);
      output.write(out, dump(to_json(r, src, dst)));
      if (!r.diagnostic.empty()) err << r.diagnostic << "\n";
      if (!r.success) throw Error("translation failed: " + r.diagnostic);
    };
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Randomized classification trials against category files");
  ProviderArgs eval_p;
  std::vector<std::string> category_files;
  std::string dictionary_file, histogram_path;
  std::size_t trials = 1;
  bool parallel = false;
  TrialConfig base;
  eval_p.add(eval_cmd);
  eval_cmd->add_option("--category", category_files, "Category term files (one config each)")->required();
  eval_cmd->add_option("--dictionary", dictionary_file, "Negative pool term file")->required();
  eval_cmd->add_option("--trials", trials)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", seed)->required();
  eval_cmd->add_option("--train-positive", base.train_positive);
  eval_cmd->add_option("--train-negative", base.train_negative);
  eval_cmd->add_option("--test-positive", base.test_positive);
  eval_cmd->add_option("--test-negative", base.test_negative);
  eval_cmd->add_option("--folds", base.folds)->check(CLI::Range(2, 100));
  eval_cmd->add_option("--histogram", histogram_path, "Write the accuracy histogram CSV here");
  eval_cmd->add_flag("--parallel", parallel, "Run trials concurrently (local providers only)");
  eval_cmd->callback([&] {
    action = [&] {
      auto p = eval_p.open();
      base.n = eval_p.normalizer(*p);
      base.inf_cap = inf_cap;
      base.seed = seed;
      base.dictionary = read_term_file(dictionary_file);
      std::vector<TrialConfig> configs;
      for (const auto& c : category_files) {
        auto cfg = base;
        cfg.category = read_term_file(c);
        configs.push_back(std::move(cfg));
      }
      const auto s = run_trials(trials, configs, *p, parallel);
      if (output.format == "csv") {
        std::ostringstream h;
        write_histogram_csv(h, s);
        output.write(out, h.str());
      } else {
        output.write(out, dump(to_json(s)));
      }
      if (!histogram_path.empty()) {
        std::ofstream h(histogram_path);
        if (!h) throw Error("cannot write " + histogram_path);
        write_histogram_csv(h, s);
      }
      err << fmt::format("{} valid of {} trials; mean {:.4f} variance {:.5f}; remote fetches {}\n", s.valid,
                         s.trials.size(), s.mean, s.variance, s.remote_fetches);
      for (std::size_t t = 0; t < s.trials.size(); ++t)
        if (!s.trials[t].valid) err << fmt::format("trial {}: {}\n", t, s.trials[t].error);
    };
  });

  // universality
  auto* uni_cmd = app.add_subcommand("universality", "Distribution and dominance checks on a corpus index");
  std::string uni_index, uni_vocab;
  std::size_t uni_classes = 4;
  int uni_k = 2;
  std::vector<std::size_t> uniform;
  uni_cmd->add_option("--index", uni_index, "Corpus index directory");
  uni_cmd->add_option("--vocab", uni_vocab, "Vocabulary file (default: every indexed term)");
  uni_cmd->add_option("--classes", uni_classes, "Number of random document classes")->check(CLI::PositiveNumber);
  uni_cmd->add_option("--k", uni_k, "Bound parameter for the code-length comparison")->check(CLI::Range(2, 1 << 20));
  uni_cmd->add_option("--seed", seed);
  uni_cmd->add_option("--uniform", uniform, "S A: witness that the uniform distribution is not universal")->expected(2);
  uni_cmd->callback([&] {
    action = [&] {
      json j;
      if (!uniform.empty()) j["uniform_witness"] = to_json(check_nonuniversality_of_uniform(uniform[0], uniform[1]));
      if (!uni_index.empty()) {
        const auto index = CorpusIndex::load(uni_index);
        const auto vocab = uni_vocab.empty() ? index.terms() : read_term_file(uni_vocab).terms;
        if (vocab.size() > kMaxDenseVocabulary)
          throw Error(fmt::format("vocabulary of {} terms is too large for a dense count table; pass --vocab", vocab.size()));
        const CooccurrenceTable table(index, vocab);
        const auto g = GoogleDistribution::from_counts(vocab, table.counts());
        const auto stats = corpus_stats(index, std::span<const std::string>(vocab));
        j["distribution"] = {{"terms", vocab.size()},
                             {"M", stats.M},
                             {"N", stats.N},
                             {"total_mass", g.total_mass()},
                             {"kraft_sum", g.kraft_sum()}};
        std::mt19937_64 rng(seed);
        const auto part = random_partition(index.doc_count(), std::min<std::uint64_t>(uni_classes, index.doc_count()), rng);
        const auto authors = author_stats(table, part);
        j["theorem1"] = to_json(g, check_theorem1(g, authors));
        auto t2 = json::array();
        for (std::size_t c = 0; c < authors.classes.size() && c < kExactClassLimit; ++c)
          t2.push_back(to_json(g, theorem2_mass(g, authors.classes[c], c, uni_k)));
        j["theorem2"] = std::move(t2);
      }
      if (j.empty()) throw Error("nothing to check: give --index or --uniform");
      output.write(out, dump(j));
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      app.exit(e, out, err);
      return kExitOk;
    }
    app.exit(e, err, err);
    if (dynamic_cast<const CLI::CallForHelp*>(&e) == nullptr) err << app.help();
    return kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomainError;
  }
}

}  // namespace ngd
