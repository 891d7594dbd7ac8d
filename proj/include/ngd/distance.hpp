#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ngd/error.hpp"

namespace ngd {

class CountProvider;

/// g(x,y) = f(x,y) / N.
template <std::floating_point Scalar>
Scalar google_prob(Scalar f_xy, Scalar n) {
  if (!(n > 0)) throw Error("normalizer must be positive");
  if (f_xy < 0 || f_xy > n) throw Error("count outside [0, N]");
  return f_xy / n;
}

/// Prefix code length in bits; +inf for probability zero.
template <std::floating_point Scalar>
struct CodeLength {
  Scalar bits = 0;
  bool is_infinite() const { return std::isinf(bits); }
};

template <std::floating_point Scalar>
CodeLength<Scalar> google_code(Scalar g) {
  if (g < 0 || g > 1) throw Error("probability outside [0, 1]");
  if (g == 0) return {std::numeric_limits<Scalar>::infinity()};
  return {g == 1 ? Scalar(0) : -std::log2(g)};
}

/// Normalized Google distance from page counts, base-2 logs.
///
///   (max{log fx, log fy} - log fxy) / (log N - min{log fx, log fy})
///
/// fx = 0 or fy = 0 gives 1; fxy = 0 with both singletons present gives +inf.
/// Values below zero (fxy above a singleton count) are returned as computed.
/// Throws when N <= min(fx, fy), where the denominator stops being positive.
template <std::floating_point Scalar>
Scalar ngd(Scalar f_x, Scalar f_y, Scalar f_xy, Scalar n) {
  if (f_x < 0 || f_y < 0 || f_xy < 0) throw Error("negative count");
  if (f_x == 0 || f_y == 0) return Scalar(1);
  const Scalar lo = std::log2(std::min(f_x, f_y));
  const Scalar hi = std::log2(std::max(f_x, f_y));
  const Scalar denom = std::log2(n) - lo;
  if (!(denom > 0)) throw Error("normalizer too small");
  if (f_x == f_y && f_x == f_xy) return Scalar(0);
  if (f_xy == 0) return std::numeric_limits<Scalar>::infinity();
  return (hi - std::log2(f_xy)) / denom;
}

inline double ngd(std::uint64_t f_x, std::uint64_t f_y, std::uint64_t f_xy, double n) {
  return ngd<double>(static_cast<double>(f_x), static_cast<double>(f_y), static_cast<double>(f_xy), n);
}

struct NgdFlags {
  bool negative = false;                 ///< count noise: fxy exceeds a singleton count
  bool normalizer_below_counts = false;  ///< N < max(fx, fy)
};

NgdFlags ngd_flags(double f_x, double f_y, double f_xy, double n);

/// Express a count observed under normalizer `from_n` on the scale of `to_n`.
double rescale_count(double count, double from_n, double to_n);

/// Term-level distance through a provider. Terms equal after query
/// normalization are at distance 0 without any lookup.
double term_ngd(CountProvider& provider, std::string_view x, std::string_view y, double n);

/// Length of the compressed form of a byte string.
class Compressor {
 public:
  virtual ~Compressor() = default;
  virtual std::size_t compressed_size(std::span<const std::uint8_t> data) const = 0;
};

/// zlib deflate at a fixed level.
class DeflateCompressor final : public Compressor {
 public:
  explicit DeflateCompressor(int level = 9) : level_(level) {}
  std::size_t compressed_size(std::span<const std::uint8_t> data) const override;

 private:
  int level_;
};

/// (C(xy) - min{C(x), C(y)}) / max{C(x), C(y)}, xy the concatenation.
double ncd(std::span<const std::uint8_t> x, std::span<const std::uint8_t> y, const Compressor& compressor);
double ncd(std::string_view x, std::string_view y, const Compressor& compressor);

/// Symmetric labeled NGD matrix. `raw` keeps +inf and negative values as
/// computed; capped() substitutes inf_cap for the infinite entries.
struct DistanceMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd raw;
  double inf_cap = 2.0;
  double n_used = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> infinite_pairs;  ///< i < j
  std::vector<std::pair<std::size_t, std::size_t>> negative_pairs;  ///< i < j

  std::size_t size() const { return labels.size(); }
  Eigen::MatrixXd capped() const;
  double operator()(std::size_t i, std::size_t j) const;
  std::size_t index_of(std::string_view label) const;
};

/// Builds the flag lists from `raw` and validates shape, symmetry and diagonal.
DistanceMatrix make_distance_matrix(std::vector<std::string> labels, Eigen::MatrixXd raw, double inf_cap,
                                    double n_used = 0.0);

/// All pairwise NGDs for `terms`. Each singleton count is fetched once via the
/// provider cache. Provider failures are rethrown naming the offending pair.
DistanceMatrix distance_matrix(std::span<const std::string> terms, CountProvider& provider, double n,
                               double inf_cap = 2.0);

/// CSV with a header row and a label column. The raw form writes `inf` for
/// infinite entries; the capped form writes inf_cap.
void write_csv(std::ostream& out, const DistanceMatrix& m, bool capped);
/// Reads the CSV form back; `inf` entries become +inf in raw.
DistanceMatrix read_csv(std::istream& in, double inf_cap = 2.0);

nlohmann::ordered_json to_json(const DistanceMatrix& m);
DistanceMatrix distance_matrix_from_json(const nlohmann::json& j);

/// Shortest decimal text that parses back to the same double; "inf" for +inf.
std::string format_real(double v);

}  // namespace ngd
