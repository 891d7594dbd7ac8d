#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ngd {

/// Text normalization applied to documents and query terms alike.
/// Tokens are maximal runs of ASCII alphanumerics or non-ASCII bytes; every
/// other byte separates tokens. No stemming, no stopwords.
struct TokenizerConfig {
  bool lowercase = true;
  /// Keep normalized document text so multi-word terms can be matched as phrases.
  bool retain_text = true;

  bool operator==(const TokenizerConfig&) const = default;
};

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config);

/// Tokens joined by single spaces.
std::string normalize_text(std::string_view text, const TokenizerConfig& config);

using DocId = std::uint32_t;
using Postings = std::vector<DocId>;

/// Immutable inverted index over a document collection. Each indexed document
/// is one page of the sample space; a term's event is the set of pages that
/// contain it at least once.
class CorpusIndex {
 public:
  /// Documents without any token are skipped and counted in skipped_documents().
  /// Throws ngd::Error("empty corpus") when nothing remains.
  static CorpusIndex build(std::span<const std::string> documents, TokenizerConfig config = {});

  std::uint64_t doc_count() const noexcept { return doc_count_; }
  std::size_t skipped_documents() const noexcept { return skipped_; }
  const TokenizerConfig& tokenizer() const noexcept { return config_; }
  bool has_text() const noexcept { return !texts_.empty(); }

  /// All indexed single-word terms, sorted.
  std::vector<std::string> terms() const;
  std::size_t term_count() const noexcept { return postings_.size(); }

  /// Postings of a single token, or nullptr when absent.
  const Postings* postings(std::string_view token) const;

  /// Sorted ids of the documents containing `term` (single word or phrase).
  Postings documents_containing(std::string_view term) const;

  std::uint64_t doc_freq(std::string_view term) const;
  std::uint64_t pair_freq(std::string_view x, std::string_view y) const;

  /// Normalized text of a document; requires has_text().
  const std::string& text(DocId id) const;

  /// Writes meta.json, postings.bin and (when text is retained) texts.bin.
  void save(const std::filesystem::path& dir) const;
  static CorpusIndex load(const std::filesystem::path& dir);

 private:
  CorpusIndex() = default;

  TokenizerConfig config_;
  std::map<std::string, Postings, std::less<>> postings_;
  std::vector<std::string> texts_;
  std::uint64_t doc_count_ = 0;
  std::size_t skipped_ = 0;
};

struct CorpusStats {
  std::uint64_t M = 0;  ///< page count
  std::uint64_t N = 0;  ///< sum of singleton and doubleton event sizes
  double alpha_estimate = 0.0;
};

/// Normalizer over `vocabulary` (default: every indexed single-word term).
/// A page holding t vocabulary terms adds t singleton and t(t-1)/2 doubleton
/// memberships, so N is accumulated per page in time linear in the postings.
CorpusStats corpus_stats(const CorpusIndex& index,
                         std::optional<std::span<const std::string>> vocabulary = std::nullopt);

/// Sorted intersection of two posting lists.
Postings intersect(const Postings& a, const Postings& b);

}  // namespace ngd
