#include "ngd/translator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "ngd/count_provider.hpp"
#include "ngd/distance.hpp"
#include "ngd/error.hpp"

namespace ngd {

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("correlation needs equal lengths");
  if (a.size() < 2) throw Error("correlation needs at least two values");
  const auto n = static_cast<Eigen::Index>(a.size());
  const Eigen::Map<const Eigen::VectorXd> x(a.data(), n), y(b.data(), n);
  const Eigen::VectorXd dx = x.array() - x.mean();
  const Eigen::VectorXd dy = y.array() - y.mean();
  const double sxx = dx.squaredNorm(), syy = dy.squaredNorm();
  if (sxx == 0 || syy == 0) throw Error("undefined correlation");
  return std::clamp(dx.dot(dy) / std::sqrt(sxx * syy), -1.0, 1.0);
}

void BasisVocabulary::validate() const {
  if (pairs.size() < 2) throw Error("basis vocabulary needs at least two pairs");
  std::set<std::string> src, dst;
  for (const auto& [s, t] : pairs) {
    if (!src.insert(normalize_query_term(s)).second) throw Error("duplicate basis source word: " + s);
    if (!dst.insert(normalize_query_term(t)).second) throw Error("duplicate basis target word: " + t);
  }
}

BasisVocabulary BasisVocabulary::read_tsv(std::istream& in) {
  BasisVocabulary b;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (normalize_query_term(line).empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw Error(fmt::format("basis line {}: expected 'source<TAB>target'", lineno));
    b.pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  b.validate();
  return b;
}

PermutationResult best_permutation(const Eigen::MatrixXd& source, const Eigen::MatrixXd& target) {
  if (source.rows() != target.rows() || source.cols() != target.cols()) throw Error("matrix shapes differ");
  const auto k = static_cast<std::size_t>(source.rows());
  if (k == 0) throw Error("no unknown words");
  if (k > kMaxUnknownWords) throw Error("permutation space too large");

  PermutationResult r;
  // Row-major flattening of the source once.
  std::vector<double> src;
  for (Eigen::Index i = 0; i < source.rows(); ++i)
    for (Eigen::Index j = 0; j < source.cols(); ++j) src.push_back(source(i, j));

  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<double> dst(src.size());
  bool have = false;
  do {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < target.cols(); ++j) dst[pos++] = target(static_cast<Eigen::Index>(perm[i]), j);
    double c = 0;
    try {
      c = pearson(src, dst);
    } catch (const Error& e) {
      r.diagnostic = std::string("zero-variance NGD matrix: ") + e.what();
      r.all_correlations.clear();
      r.success = false;
      return r;
    }
    r.all_correlations.push_back({perm, c});
    if (!have || c > r.correlation) {
      have = true;
      r.correlation = c;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  const PermutationScore* best = nullptr;
  for (const auto& s : r.all_correlations) {
    if (s.correlation == r.correlation) {
      if (best == nullptr)
        best = &s;
      else
        ++r.ties;
    }
  }
  if (r.ties > 0) r.diagnostic = fmt::format("{} permutation(s) tie with the best; lexicographically first chosen", r.ties);
  r.success = r.correlation > 0;
  if (!r.success) {
    r.diagnostic = "no positive correlation";
    return r;
  }
  for (std::size_t i = 0; i < k; ++i) r.mapping.emplace_back(std::to_string(i), std::to_string(best->permutation[i]));
  return r;
}

PermutationResult infer_permutation(const BasisVocabulary& basis, std::span<const std::string> source_unknown,
                                    std::span<const std::string> target_unknown, CountProvider& source_provider,
                                    CountProvider& target_provider, double source_n, double target_n,
                                    double inf_cap) {
  basis.validate();
  if (source_unknown.size() != target_unknown.size()) throw Error("unknown word lists differ in length");
  if (source_unknown.empty()) throw Error("no unknown words");
  if (source_unknown.size() > kMaxUnknownWords) throw Error("permutation space too large");

  const auto k = static_cast<Eigen::Index>(source_unknown.size());
  const auto b = static_cast<Eigen::Index>(basis.pairs.size());
  Eigen::MatrixXd src(k, b), dst(k, b);
  auto cap = [&](double v) { return std::isinf(v) ? inf_cap : v; };
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) {
      const auto& [s, t] = basis.pairs[static_cast<std::size_t>(j)];
      src(i, j) = cap(term_ngd(source_provider, source_unknown[static_cast<std::size_t>(i)], s, source_n));
      dst(i, j) = cap(term_ngd(target_provider, target_unknown[static_cast<std::size_t>(i)], t, target_n));
    }
  }
  auto r = best_permutation(src, dst);
  for (auto& [s, t] : r.mapping) {
    s = source_unknown[std::stoul(s)];
    t = target_unknown[std::stoul(t)];
  }
  return r;
}

nlohmann::ordered_json to_json(const PermutationResult& result, std::span<const std::string> source_unknown,
                               std::span<const std::string> target_unknown) {
  nlohmann::ordered_json j;
  j["success"] = result.success;
  j["correlation"] = result.correlation;
  auto mapping = nlohmann::ordered_json::array();
  for (const auto& [s, t] : result.mapping) mapping.push_back({{"source", s}, {"target", t}});
  j["mapping"] = std::move(mapping);
  j["ties"] = result.ties;
  j["diagnostic"] = result.diagnostic;
  auto table = nlohmann::ordered_json::array();
  for (const auto& p : result.all_correlations) {
    std::vector<std::string> targets;
    for (auto idx : p.permutation)
      targets.push_back(idx < target_unknown.size() ? target_unknown[idx] : std::to_string(idx));
    table.push_back({{"targets", targets}, {"correlation", p.correlation}});
  }
  j["source_order"] = std::vector<std::string>(source_unknown.begin(), source_unknown.end());
  j["correlations"] = std::move(table);
  return j;
}

}  // namespace ngd
