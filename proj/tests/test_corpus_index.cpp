#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "ngd/corpus_index.hpp"
#include "ngd/error.hpp"
#include "oracles.hpp"

using ngd::CorpusIndex;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ngd_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::vector<std::string> random_corpus(std::size_t docs, std::size_t vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(1, 12), word(0, vocab - 1);
  std::vector<std::string> out;
  for (std::size_t d = 0; d < docs; ++d) {
    std::string text;
    for (std::size_t i = 0, l = len(rng); i < l; ++i) text += (i ? " " : "") + ("w" + std::to_string(word(rng)));
    out.push_back(text);
  }
  return out;
}

}  // namespace

TEST_CASE("two-document corpus") {
  const std::vector<std::string> docs{"a b", "a"};
  const auto idx = CorpusIndex::build(docs);
  CHECK(idx.doc_count() == 2);
  CHECK(*idx.postings("a") == ngd::Postings{0, 1});
  CHECK(*idx.postings("b") == ngd::Postings{0});
  CHECK(idx.doc_freq("a") == 2);
  CHECK(idx.doc_freq("z") == 0);
  CHECK(idx.pair_freq("a", "b") == 1);
  CHECK(idx.pair_freq("a", "a") == 2);
}

TEST_CASE("case folding and multiplicity") {
  const std::vector<std::string> docs{"A  a"};
  const auto idx = CorpusIndex::build(docs);
  CHECK(idx.terms() == std::vector<std::string>{"a"});
  CHECK(*idx.postings("a") == ngd::Postings{0});
}

TEST_CASE("empty corpus and token-less documents") {
  const std::vector<std::string> none;
  CHECK_THROWS_WITH(CorpusIndex::build(none), "empty corpus");
  const std::vector<std::string> blank{"  ", "--"};
  CHECK_THROWS_WITH(CorpusIndex::build(blank), "empty corpus");
  const std::vector<std::string> mixed{"...", "x y", ""};
  const auto idx = CorpusIndex::build(mixed);
  CHECK(idx.doc_count() == 1);
  CHECK(idx.skipped_documents() == 2);
}

TEST_CASE("phrase queries") {
  std::vector<std::string> docs{"jan steen painted", "steen jan", "the jan steen school", "jan  STEEN", "jansteen",
                                "jan", "steen", "a jan b steen", "nothing", "more text"};
  const auto idx = CorpusIndex::build(docs);
  CHECK(idx.doc_freq("jan steen") == 3);
  CHECK(idx.doc_freq("jan steen") == oracle::doc_freq(docs, "jan steen"));
  CHECK(idx.pair_freq("jan steen", "painted") == 1);
  CHECK(idx.doc_freq("Jan   Steen") == 3);

  const auto bare = CorpusIndex::build(docs, ngd::TokenizerConfig{true, false});
  CHECK_THROWS_WITH(bare.doc_freq("jan steen"), "phrase queries require retained text");
  CHECK(bare.doc_freq("jan") == idx.doc_freq("jan"));
}

TEST_CASE("corpus stats on the toy corpus") {
  const std::vector<std::string> docs{"a", "a b"};
  const auto idx = CorpusIndex::build(docs);
  const auto s = ngd::corpus_stats(idx);
  CHECK(s.M == 2);
  CHECK(s.N == 4);
  CHECK(s.alpha_estimate == doctest::Approx(2.0));

  const std::vector<std::string> one{"a"};
  const auto s1 = ngd::corpus_stats(CorpusIndex::build(one));
  CHECK(s1.M == 1);
  CHECK(s1.N == 1);
  CHECK(s1.alpha_estimate == 1.0);

  const std::vector<std::string> only_a{"a"};
  CHECK(ngd::corpus_stats(idx, only_a).N == 2);
}

TEST_CASE("index counts match a full scan") {
  std::mt19937_64 rng(11);
  for (std::size_t docs : {12u, 200u, 1000u}) {
    const auto corpus = random_corpus(docs, 30, rng);
    const auto idx = CorpusIndex::build(corpus);
    const auto vocab = idx.terms();
    for (std::size_t i = 0; i < vocab.size(); i += 3) {
      CHECK(idx.doc_freq(vocab[i]) == oracle::doc_freq(corpus, vocab[i]));
      for (std::size_t j = i; j < vocab.size(); j += 5) {
        const auto pf = idx.pair_freq(vocab[i], vocab[j]);
        CHECK(pf == oracle::pair_freq(corpus, vocab[i], vocab[j]));
        CHECK(pf == idx.pair_freq(vocab[j], vocab[i]));
        CHECK(pf <= std::min(idx.doc_freq(vocab[i]), idx.doc_freq(vocab[j])));
      }
    }
    const auto s = ngd::corpus_stats(idx);
    if (docs <= 200) CHECK(s.N == oracle::normalizer(corpus, vocab));
    std::uint64_t widest = 0;
    for (const auto& d : corpus) {
      const auto w = oracle::words(d);
      widest = std::max<std::uint64_t>(widest, std::set<std::string>(w.begin(), w.end()).size());
    }
    CHECK(s.M <= s.N);
    CHECK(s.N <= widest * (widest + 1) / 2 * s.M);
  }
}

TEST_CASE("planted corpus reproduces planted frequencies") {
  // 12 documents; each term pair co-occurs in a chosen number of them.
  std::vector<std::string> docs;
  for (int i = 0; i < 12; ++i) {
    std::string d = "x";
    if (i < 6) d += " y";
    if (i < 3) d += " z";
    if (i % 2 == 0) d += " w";
    docs.push_back(d);
  }
  const auto idx = CorpusIndex::build(docs);
  CHECK(idx.doc_freq("x") == 12);
  CHECK(idx.doc_freq("y") == 6);
  CHECK(idx.pair_freq("y", "z") == 3);
  CHECK(idx.pair_freq("y", "w") == 3);
  CHECK(idx.pair_freq("z", "w") == 2);
  const std::vector<std::string> vocab{"w", "x", "y", "z"};
  CHECK(ngd::corpus_stats(idx).N == oracle::normalizer(docs, vocab));
}

TEST_CASE("save and load round trip") {
  std::mt19937_64 rng(5);
  auto corpus = random_corpus(300, 50, rng);
  corpus.push_back("caf\xc3\xa9 jan steen");
  for (bool keep : {true, false}) {
    const auto idx = CorpusIndex::build(corpus, ngd::TokenizerConfig{true, keep});
    const auto dir = temp_dir(keep ? "rt_text" : "rt_bare");
    idx.save(dir);
    const auto back = CorpusIndex::load(dir);
    CHECK(back.doc_count() == idx.doc_count());
    CHECK(back.terms() == idx.terms());
    CHECK(back.has_text() == keep);
    for (const auto& t : idx.terms()) CHECK(*back.postings(t) == *idx.postings(t));
    if (keep) CHECK(back.doc_freq("jan steen") == 1);

    // Saving the loaded index again gives identical bytes.
    const auto again = temp_dir(keep ? "rt_text2" : "rt_bare2");
    back.save(again);
    for (const char* f : {"meta.json", "postings.bin", "texts.bin"}) {
      if (!keep && std::string(f) == "texts.bin") {
        CHECK_FALSE(std::filesystem::exists(dir / f));
        continue;
      }
      std::ifstream a(dir / f, std::ios::binary), b(again / f, std::ios::binary);
      const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
      CHECK(sa == sb);
    }
  }
}

TEST_CASE("load rejects damaged files") {
  const std::vector<std::string> docs{"a b", "b c"};
  const auto dir = temp_dir("damaged");
  CorpusIndex::build(docs).save(dir);
  {
    std::ofstream f(dir / "postings.bin", std::ios::binary | std::ios::trunc);
    f << "NGDP";
  }
  CHECK_THROWS_AS(CorpusIndex::load(dir), ngd::Error);
  CHECK_THROWS_AS(CorpusIndex::load(dir / "missing"), ngd::Error);
}

TEST_CASE("intersect") {
  CHECK(ngd::intersect({1, 3, 5, 7}, {0, 3, 4, 7, 9}) == ngd::Postings{3, 7});
  CHECK(ngd::intersect({}, {1}).empty());
}
