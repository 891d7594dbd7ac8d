#pragma once

#include <compare>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace ngd {

class CorpusIndex;

/// Lowercases ASCII, trims and collapses whitespace runs to one space.
std::string normalize_query_term(std::string_view term);

/// A singleton term or an unordered pair. Pairs are stored with x < y;
/// a pair of identical terms collapses to the singleton.
class Query {
 public:
  static Query single(std::string_view term);
  static Query pair(std::string_view a, std::string_view b);

  const std::string& x() const noexcept { return x_; }
  const std::string& y() const noexcept { return y_; }
  bool is_pair() const noexcept { return !y_.empty(); }
  std::string to_string() const;

  auto operator<=>(const Query&) const = default;

 private:
  Query(std::string x, std::string y) : x_(std::move(x)), y_(std::move(y)) {}
  std::string x_;
  std::string y_;
};

struct CountRecord {
  Query query = Query::single("_");
  std::uint64_t count = 0;
  double n_snapshot = 0.0;  ///< 0 when the source does not publish a normalizer
  std::string provider_id;
  std::int64_t fetched_at = 0;  ///< unix seconds

  bool operator==(const CountRecord&) const = default;
};

struct QueryAccounting {
  std::uint64_t remote_fetches = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t quota_remaining = 0;

  bool operator==(const QueryAccounting&) const = default;
};

/// Seconds since the unix epoch; injectable so rate limiting is testable.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() = 0;
  virtual void sleep_until(double t) = 0;
};

class SystemClock final : public Clock {
 public:
  double now() override;
  void sleep_until(double t) override;
};

/// Time only moves when somebody sleeps or advance() is called.
class FakeClock final : public Clock {
 public:
  explicit FakeClock(double start = 0.0) : now_(start) {}
  double now() override;
  void sleep_until(double t) override;
  void advance(double seconds);

 private:
  std::mutex mu_;
  double now_;
};

/// Spaces admissions at least 1/rate seconds apart. rate <= 0 disables it.
class RateLimiter {
 public:
  RateLimiter(double requests_per_second, Clock& clock)
      : interval_(requests_per_second > 0 ? 1.0 / requests_per_second : 0.0), clock_(clock) {}

  /// Blocks until a request may go out and returns its admission time.
  double acquire();

 private:
  std::mutex mu_;
  double interval_;
  Clock& clock_;
  std::optional<double> next_;
};

/// Where counts come from on a cache miss.
class CountBackend {
 public:
  virtual ~CountBackend() = default;
  virtual std::string id() const = 0;
  virtual std::uint64_t fetch(const Query& q) = 0;
  /// Normalizer the source reports for its current snapshot, if any.
  virtual std::optional<double> normalizer() const { return std::nullopt; }
  /// Local sources skip rate limiting and quota by default.
  virtual bool is_local() const { return false; }
};

/// Exact counts from an offline corpus index. Normalizer = CorpusStats.N.
class IndexBackend final : public CountBackend {
 public:
  explicit IndexBackend(std::shared_ptr<const CorpusIndex> index);
  std::string id() const override { return "index"; }
  std::uint64_t fetch(const Query& q) override;
  std::optional<double> normalizer() const override { return normalizer_; }
  bool is_local() const override { return true; }
  const CorpusIndex& index() const { return *index_; }

 private:
  std::shared_ptr<const CorpusIndex> index_;
  double normalizer_;
};

/// Counts recorded in a JSON-lines file:
///   {"x": "horse", "count": 46700000}
///   {"x": "horse", "y": "rider", "count": 2630000}
///   {"n": 8058044651}
/// Queries absent from the file count as 0.
class FixtureBackend final : public CountBackend {
 public:
  static std::unique_ptr<FixtureBackend> from_file(const std::filesystem::path& path);
  static std::unique_ptr<FixtureBackend> from_string(std::string_view jsonl, std::string id = "fixture");

  std::string id() const override { return id_; }
  std::uint64_t fetch(const Query& q) override;
  std::optional<double> normalizer() const override { return normalizer_; }
  bool is_local() const override { return true; }

 private:
  std::string id_;
  std::map<Query, std::uint64_t> counts_;
  std::optional<double> normalizer_;
};

/// Minimal HTTP+JSON count client. Issues `GET <url>?q=<x>` for singletons
/// and `GET <url>?q=<x>&and=<y>` for pairs; the body must be a JSON object
/// with an integer field `count`.
class HttpBackend final : public CountBackend {
 public:
  explicit HttpBackend(std::string url, std::optional<double> normalizer = std::nullopt);
  std::string id() const override { return "remote:" + url_; }
  std::uint64_t fetch(const Query& q) override;
  std::optional<double> normalizer() const override { return normalizer_; }

 private:
  std::string url_;
  std::string origin_;
  std::string path_;
  std::optional<double> normalizer_;
};

/// Append-only, tab-separated record-per-line cache file; last record wins.
///   x <TAB> y <TAB> count <TAB> n_snapshot <TAB> provider_id <TAB> fetched_at
/// `y` is empty for singletons. Lines starting with '#' and truncated lines
/// are ignored on load.
class CountCache {
 public:
  CountCache() = default;
  explicit CountCache(std::filesystem::path path);

  std::optional<CountRecord> find(const std::string& provider_id, const Query& q) const;
  void put(const CountRecord& record);
  std::size_t size() const { return records_.size(); }

  static std::string format_line(const CountRecord& record);
  static std::optional<CountRecord> parse_line(std::string_view line);

 private:
  std::optional<std::filesystem::path> path_;
  std::map<std::pair<std::string, Query>, CountRecord> records_;
};

struct ProviderOptions {
  double requests_per_second = 1.0;
  std::uint64_t daily_quota = 500;
  std::optional<std::filesystem::path> cache_path;
  /// Not owned; defaults to a process-wide SystemClock.
  Clock* clock = nullptr;

  /// Unlimited rate and quota, for index and fixture sources.
  static ProviderOptions local();
  /// Defaults overridden by NGD_CACHE_PATH and NGD_DAILY_QUOTA when set.
  static ProviderOptions from_environment();
  static ProviderOptions from_environment(ProviderOptions base);
};

/// Cache-first count provider. Thread-safe; concurrent misses on the same
/// query share one backend fetch.
class CountProvider {
 public:
  CountProvider(std::unique_ptr<CountBackend> backend, ProviderOptions options = {});

  CountRecord get_count(const Query& q);
  std::uint64_t count(std::string_view term) { return get_count(Query::single(term)).count; }
  std::uint64_t count(std::string_view a, std::string_view b) { return get_count(Query::pair(a, b)).count; }

  QueryAccounting accounting() const;
  std::string id() const { return backend_->id(); }
  std::optional<double> default_normalizer() const { return backend_->normalizer(); }
  bool is_local() const { return backend_->is_local(); }
  CountBackend& backend() { return *backend_; }

 private:
  std::unique_ptr<CountBackend> backend_;
  ProviderOptions options_;
  Clock* clock_;
  RateLimiter limiter_;

  mutable std::mutex mu_;
  CountCache cache_;
  std::map<Query, std::shared_future<CountRecord>> inflight_;
  std::uint64_t remote_fetches_ = 0;
  std::uint64_t cache_hits_ = 0;
  std::int64_t quota_day_ = -1;
  std::uint64_t fetches_today_ = 0;
};

std::unique_ptr<CountProvider> make_index_provider(std::shared_ptr<const CorpusIndex> index,
                                                   ProviderOptions options = ProviderOptions::local());
std::unique_ptr<CountProvider> make_fixture_provider(const std::filesystem::path& path,
                                                     ProviderOptions options = ProviderOptions::local());
std::unique_ptr<CountProvider> make_remote_provider(std::string url, ProviderOptions options = {},
                                                    std::optional<double> normalizer = std::nullopt);

}  // namespace ngd
