#include "ngd/corpus_index.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include <nlohmann/json.hpp>

#include "ngd/error.hpp"

namespace ngd {

namespace {

constexpr std::array<char, 4> kPostingsMagic{'N', 'G', 'D', 'P'};
constexpr std::array<char, 4> kTextsMagic{'N', 'G', 'D', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

bool is_token_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

char fold(char c, bool lowercase) {
  if (lowercase && c >= 'A' && c <= 'Z') return static_cast<char>(c - 'A' + 'a');
  return c;
}

// Little-endian fixed-width and LEB128 helpers for the binary files.
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_varint(std::string& out, std::uint32_t v) {
  while (v >= 0x80u) {
    out.push_back(static_cast<char>((v & 0x7fu) | 0x80u));
    v >>= 7;
  }
  out.push_back(static_cast<char>(v));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint32_t varint() {
    std::uint32_t v = 0;
    for (int shift = 0; shift < 35; shift += 7) {
      need(1);
      auto byte = static_cast<unsigned char>(data_[pos_++]);
      v |= static_cast<std::uint32_t>(byte & 0x7fu) << shift;
      if ((byte & 0x80u) == 0) return v;
    }
    throw Error("corrupt varint in index file");
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw Error("truncated index file");
  }

  std::string data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

void check_magic(Reader& r, const std::array<char, 4>& magic, const std::string& file) {
  if (r.bytes(4) != std::string(magic.begin(), magic.end())) throw Error("bad magic in " + file);
  if (r.u32() != kFormatVersion) throw Error("unsupported format version in " + file);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (is_token_byte(static_cast<unsigned char>(c))) {
      current.push_back(fold(c, config.lowercase));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string normalize_text(std::string_view text, const TokenizerConfig& config) {
  std::string out;
  for (const auto& t : tokenize(text, config)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

Postings intersect(const Postings& a, const Postings& b) {
  Postings out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

CorpusIndex CorpusIndex::build(std::span<const std::string> documents, TokenizerConfig config) {
  CorpusIndex index;
  index.config_ = config;
  for (const auto& raw : documents) {
    auto tokens = tokenize(raw, config);
    if (tokens.empty()) {
      ++index.skipped_;
      continue;
    }
    const auto id = static_cast<DocId>(index.doc_count_);
    if (config.retain_text) {
      std::string text;
      for (const auto& t : tokens) {
        if (!text.empty()) text.push_back(' ');
        text += t;
      }
      index.texts_.push_back(std::move(text));
    }
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    for (auto& t : tokens) index.postings_[std::move(t)].push_back(id);
    ++index.doc_count_;
  }
  if (index.doc_count_ == 0) throw Error("empty corpus");
  return index;
}

std::vector<std::string> CorpusIndex::terms() const {
  std::vector<std::string> out;
  out.reserve(postings_.size());
  for (const auto& [term, _] : postings_) out.push_back(term);
  return out;
}

const Postings* CorpusIndex::postings(std::string_view token) const {
  auto it = postings_.find(token);
  return it == postings_.end() ? nullptr : &it->second;
}

Postings CorpusIndex::documents_containing(std::string_view term) const {
  const auto tokens = tokenize(term, config_);
  if (tokens.empty()) throw Error("empty term after normalization: '" + std::string(term) + "'");
  if (tokens.size() == 1) {
    const auto* p = postings(tokens.front());
    return p ? *p : Postings{};
  }
  if (!has_text()) throw Error("phrase queries require retained text");

  // Candidates hold every token; the phrase check then scans the stored text.
  Postings candidates;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto* p = postings(tokens[i]);
    if (p == nullptr) return {};
    candidates = i == 0 ? *p : intersect(candidates, *p);
    if (candidates.empty()) return {};
  }
  std::string needle = " ";
  for (const auto& t : tokens) needle += t + ' ';
  Postings out;
  for (DocId id : candidates) {
    std::string hay = ' ' + texts_[id] + ' ';
    if (hay.find(needle) != std::string::npos) out.push_back(id);
  }
  return out;
}

std::uint64_t CorpusIndex::doc_freq(std::string_view term) const {
  return documents_containing(term).size();
}

std::uint64_t CorpusIndex::pair_freq(std::string_view x, std::string_view y) const {
  if (normalize_text(x, config_) == normalize_text(y, config_)) return doc_freq(x);
  return intersect(documents_containing(x), documents_containing(y)).size();
}

const std::string& CorpusIndex::text(DocId id) const {
  if (!has_text()) throw Error("index does not retain text");
  if (id >= texts_.size()) throw Error("document id out of range");
  return texts_[id];
}

void CorpusIndex::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);

  nlohmann::ordered_json meta;
  meta["format_version"] = kFormatVersion;
  meta["doc_count"] = doc_count_;
  meta["term_count"] = postings_.size();
  meta["skipped_documents"] = skipped_;
  meta["tokenizer"] = {{"lowercase", config_.lowercase}, {"retain_text", config_.retain_text}};
  meta["flags"] = {{"has_texts", has_text()}};
  write_file(dir / "meta.json", meta.dump(2) + "\n");

  std::string bin(kPostingsMagic.begin(), kPostingsMagic.end());
  put_u32(bin, kFormatVersion);
  put_u32(bin, static_cast<std::uint32_t>(postings_.size()));
  for (const auto& [term, ids] : postings_) {
    put_u32(bin, static_cast<std::uint32_t>(term.size()));
    bin += term;
    put_u32(bin, static_cast<std::uint32_t>(ids.size()));
    DocId prev = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      put_varint(bin, i == 0 ? ids[i] : ids[i] - prev);
      prev = ids[i];
    }
  }
  write_file(dir / "postings.bin", bin);

  const auto texts_path = dir / "texts.bin";
  if (has_text()) {
    std::string t(kTextsMagic.begin(), kTextsMagic.end());
    put_u32(t, kFormatVersion);
    put_u32(t, static_cast<std::uint32_t>(texts_.size()));
    for (const auto& s : texts_) {
      put_u32(t, static_cast<std::uint32_t>(s.size()));
      t += s;
    }
    write_file(texts_path, t);
  } else {
    std::filesystem::remove(texts_path);
  }
}

CorpusIndex CorpusIndex::load(const std::filesystem::path& dir) {
  CorpusIndex index;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir / "meta.json"));
    if (meta.at("format_version").get<std::uint32_t>() != kFormatVersion)
      throw Error("unsupported index format version");
    index.doc_count_ = meta.at("doc_count").get<std::uint64_t>();
    index.skipped_ = meta.value("skipped_documents", std::size_t{0});
    index.config_.lowercase = meta.at("tokenizer").at("lowercase").get<bool>();
    index.config_.retain_text = meta.at("tokenizer").at("retain_text").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed meta.json: ") + e.what());
  }

  Reader r(read_file(dir / "postings.bin"));
  check_magic(r, kPostingsMagic, "postings.bin");
  const auto terms = r.u32();
  for (std::uint32_t t = 0; t < terms; ++t) {
    auto term = r.bytes(r.u32());
    const auto n = r.u32();
    Postings ids;
    ids.reserve(n);
    DocId prev = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
      DocId id = i == 0 ? r.varint() : prev + r.varint();
      if (id >= index.doc_count_) throw Error("posting id out of range in postings.bin");
      ids.push_back(id);
      prev = id;
    }
    index.postings_.emplace(std::move(term), std::move(ids));
  }
  if (!r.done()) throw Error("trailing bytes in postings.bin");

  if (meta.at("flags").at("has_texts").get<bool>()) {
    Reader tr(read_file(dir / "texts.bin"));
    check_magic(tr, kTextsMagic, "texts.bin");
    const auto n = tr.u32();
    if (n != index.doc_count_) throw Error("texts.bin document count mismatch");
    index.texts_.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) index.texts_.push_back(tr.bytes(tr.u32()));
    if (!tr.done()) throw Error("trailing bytes in texts.bin");
  }
  return index;
}

CorpusStats corpus_stats(const CorpusIndex& index, std::optional<std::span<const std::string>> vocabulary) {
  std::vector<std::uint64_t> per_doc(index.doc_count(), 0);
  auto add = [&](const Postings& ids) {
    for (DocId id : ids) ++per_doc[id];
  };
  if (vocabulary) {
    std::set<std::string> seen;
    for (const auto& term : *vocabulary) {
      if (!seen.insert(normalize_text(term, index.tokenizer())).second) continue;
      add(index.documents_containing(term));
    }
  } else {
    for (const auto& term : index.terms()) add(*index.postings(term));
  }
  CorpusStats stats;
  stats.M = index.doc_count();
  for (auto t : per_doc) stats.N += t * (t + 1) / 2;
  stats.alpha_estimate = static_cast<double>(stats.N) / static_cast<double>(stats.M);
  return stats;
}

}  // namespace ngd
