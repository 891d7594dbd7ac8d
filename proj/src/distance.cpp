#include "ngd/distance.hpp"

#include <charconv>
#include <istream>
#include <ostream>

#include <fmt/format.h>
#include <zlib.h>

#include "ngd/count_provider.hpp"

namespace ngd {

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos && (s.empty() || (s.front() != ' ' && s.back() != ' ')))
    return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// One logical CSV record (quoted fields may span lines). False at EOF.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool quoted = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

double parse_entry(std::string s) {
  while (!s.empty() && s.back() == ' ') s.pop_back();
  while (!s.empty() && s.front() == ' ') s.erase(s.begin());
  if (s == "inf" || s == "+inf" || s == "Infinity") return std::numeric_limits<double>::infinity();
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw Error("bad matrix entry '" + s + "'");
  return v;
}

}  // namespace

NgdFlags ngd_flags(double f_x, double f_y, double f_xy, double n) {
  NgdFlags flags;
  flags.negative = f_x > 0 && f_y > 0 && f_xy > std::max(f_x, f_y);
  flags.normalizer_below_counts = n < std::max(f_x, f_y);
  return flags;
}

double rescale_count(double count, double from_n, double to_n) {
  if (!(from_n > 0) || !(to_n > 0)) throw Error("rescaling needs positive normalizers");
  return count * (to_n / from_n);
}

double term_ngd(CountProvider& provider, std::string_view x, std::string_view y, double n) {
  if (Query::single(x) == Query::single(y)) return 0.0;
  const auto fx = provider.count(x);
  const auto fy = provider.count(y);
  const auto fxy = provider.count(x, y);
  return ngd(fx, fy, fxy, n);
}

std::size_t DeflateCompressor::compressed_size(std::span<const std::uint8_t> data) const {
  uLongf bound = compressBound(static_cast<uLong>(data.size()));
  std::vector<Bytef> buffer(bound);
  if (compress2(buffer.data(), &bound, data.data(), static_cast<uLong>(data.size()), level_) != Z_OK)
    throw Error("deflate failed");
  return bound;
}

double ncd(std::span<const std::uint8_t> x, std::span<const std::uint8_t> y, const Compressor& compressor) {
  if (x.empty() || y.empty()) throw Error("ncd needs non-empty inputs");
  std::vector<std::uint8_t> xy(x.begin(), x.end());
  xy.insert(xy.end(), y.begin(), y.end());
  const auto cx = static_cast<double>(compressor.compressed_size(x));
  const auto cy = static_cast<double>(compressor.compressed_size(y));
  const auto cxy = static_cast<double>(compressor.compressed_size(xy));
  return (cxy - std::min(cx, cy)) / std::max(cx, cy);
}

double ncd(std::string_view x, std::string_view y, const Compressor& compressor) {
  auto bytes = [](std::string_view s) {
    return std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  };
  return ncd(bytes(x), bytes(y), compressor);
}

Eigen::MatrixXd DistanceMatrix::capped() const {
  return raw.unaryExpr([cap = inf_cap](double v) { return std::isinf(v) ? cap : v; });
}

double DistanceMatrix::operator()(std::size_t i, std::size_t j) const {
  const double v = raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return std::isinf(v) ? inf_cap : v;
}

std::size_t DistanceMatrix::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return i;
  throw Error("no such label: " + std::string(label));
}

DistanceMatrix make_distance_matrix(std::vector<std::string> labels, Eigen::MatrixXd raw, double inf_cap,
                                    double n_used) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (raw.rows() != n || raw.cols() != n) throw Error("matrix shape does not match labels");
  if (!(inf_cap > 0)) throw Error("inf_cap must be positive");
  DistanceMatrix m;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (raw(i, i) != 0.0) throw Error("matrix diagonal must be zero");
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (raw(i, j) != raw(j, i) && !(std::isnan(raw(i, j)) && std::isnan(raw(j, i))))
        throw Error(fmt::format("matrix not symmetric at ({}, {})", labels[i], labels[j]));
      if (std::isnan(raw(i, j))) throw Error("NaN matrix entry");
      if (std::isinf(raw(i, j))) m.infinite_pairs.emplace_back(i, j);
      if (raw(i, j) < 0) m.negative_pairs.emplace_back(i, j);
    }
  }
  m.labels = std::move(labels);
  m.raw = std::move(raw);
  m.inf_cap = inf_cap;
  m.n_used = n_used;
  return m;
}

DistanceMatrix distance_matrix(std::span<const std::string> terms, CountProvider& provider, double n,
                               double inf_cap) {
  if (terms.size() < 2) throw Error("distance matrix needs at least two terms");
  for (std::size_t i = 0; i < terms.size(); ++i)
    for (std::size_t j = i + 1; j < terms.size(); ++j)
      if (Query::single(terms[i]) == Query::single(terms[j])) throw Error("duplicate term: " + terms[i]);

  const auto size = static_cast<Eigen::Index>(terms.size());
  std::vector<std::uint64_t> singles(terms.size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    try {
      singles[i] = provider.count(terms[i]);
    } catch (const ProviderError& e) {
      throw ProviderError(fmt::format("count for '{}': {}", terms[i], e.what()));
    }
  }
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(size, size);
  for (Eigen::Index i = 0; i < size; ++i) {
    for (Eigen::Index j = i + 1; j < size; ++j) {
      std::uint64_t joint = 0;
      try {
        joint = provider.count(terms[i], terms[j]);
      } catch (const ProviderError& e) {
        throw ProviderError(fmt::format("count for pair ('{}', '{}'): {}", terms[i], terms[j], e.what()));
      }
      raw(i, j) = raw(j, i) = ngd(singles[i], singles[j], joint, n);
    }
  }
  return make_distance_matrix({terms.begin(), terms.end()}, std::move(raw), inf_cap, n);
}

std::string format_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

void write_csv(std::ostream& out, const DistanceMatrix& m, bool capped) {
  out << "";
  for (const auto& l : m.labels) out << ',' << csv_field(l);
  out << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << csv_field(m.labels[i]);
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double v = m.raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      out << ',' << format_real(capped && std::isinf(v) ? m.inf_cap : v);
    }
    out << '\n';
  }
}

DistanceMatrix read_csv(std::istream& in, double inf_cap) {
  std::vector<std::string> header;
  if (!read_csv_record(in, header) || header.size() < 2) throw Error("matrix CSV needs a header row");
  std::vector<std::string> labels(header.begin() + 1, header.end());
  const auto n = static_cast<Eigen::Index>(labels.size());
  Eigen::MatrixXd raw(n, n);
  std::vector<std::string> row;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!read_csv_record(in, row)) throw Error("matrix CSV has too few rows");
    if (static_cast<Eigen::Index>(row.size()) != n + 1) throw Error(fmt::format("matrix CSV row {} has wrong width", i + 1));
    if (row[0] != labels[static_cast<std::size_t>(i)]) throw Error("row label '" + row[0] + "' does not match header");
    for (Eigen::Index j = 0; j < n; ++j) raw(i, j) = parse_entry(row[static_cast<std::size_t>(j) + 1]);
  }
  return make_distance_matrix(std::move(labels), std::move(raw), inf_cap);
}

nlohmann::ordered_json to_json(const DistanceMatrix& m) {
  nlohmann::ordered_json j;
  j["labels"] = m.labels;
  auto rows = nlohmann::ordered_json::array();
  auto raw_rows = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.raw.rows(); ++i) {
    auto row = nlohmann::ordered_json::array();
    auto raw_row = nlohmann::ordered_json::array();
    for (Eigen::Index j2 = 0; j2 < m.raw.cols(); ++j2) {
      const double v = m.raw(i, j2);
      row.push_back(std::isinf(v) ? m.inf_cap : v);
      if (std::isinf(v))
        raw_row.push_back("inf");
      else
        raw_row.push_back(v);
    }
    rows.push_back(std::move(row));
    raw_rows.push_back(std::move(raw_row));
  }
  j["entries"] = std::move(rows);
  j["raw_entries"] = std::move(raw_rows);
  j["inf_cap"] = m.inf_cap;
  j["n_used"] = m.n_used;
  auto pairs = [&](const auto& list) {
    auto a = nlohmann::ordered_json::array();
    for (auto [r, c] : list) a.push_back({m.labels[r], m.labels[c]});
    return a;
  };
  j["infinite_pairs"] = pairs(m.infinite_pairs);
  j["negative_pairs"] = pairs(m.negative_pairs);
  return j;
}

DistanceMatrix distance_matrix_from_json(const nlohmann::json& j) {
  try {
    auto labels = j.at("labels").get<std::vector<std::string>>();
    const auto n = static_cast<Eigen::Index>(labels.size());
    const auto& rows = j.at("raw_entries");
    if (static_cast<Eigen::Index>(rows.size()) != n) throw Error("raw_entries shape does not match labels");
    Eigen::MatrixXd raw(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& row = rows.at(static_cast<std::size_t>(r));
      if (static_cast<Eigen::Index>(row.size()) != n) throw Error("raw_entries shape does not match labels");
      for (Eigen::Index c = 0; c < n; ++c) {
        const auto& v = row.at(static_cast<std::size_t>(c));
        raw(r, c) = v.is_string() ? parse_entry(v.get<std::string>()) : v.get<double>();
      }
    }
    return make_distance_matrix(std::move(labels), std::move(raw), j.at("inf_cap").get<double>(),
                                j.value("n_used", 0.0));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed matrix JSON: ") + e.what());
  }
}

}  // namespace ngd
