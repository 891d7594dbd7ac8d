#include "ngd/count_provider.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ngd/corpus_index.hpp"
#include "ngd/error.hpp"

namespace ngd {

namespace {

Clock& system_clock() {
  static SystemClock clock;
  return clock;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

std::string normalize_query_term(std::string_view term) {
  std::string out;
  bool pending_space = false;
  for (char c : term) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
  }
  return out;
}

Query Query::single(std::string_view term) {
  auto x = normalize_query_term(term);
  if (x.empty()) throw Error("empty query term");
  return Query(std::move(x), {});
}

Query Query::pair(std::string_view a, std::string_view b) {
  auto x = normalize_query_term(a);
  auto y = normalize_query_term(b);
  if (x.empty() || y.empty()) throw Error("empty query term");
  if (x == y) return Query(std::move(x), {});
  if (y < x) std::swap(x, y);
  return Query(std::move(x), std::move(y));
}

std::string Query::to_string() const {
  return is_pair() ? "(" + x_ + ", " + y_ + ")" : x_;
}

double SystemClock::now() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep_until(double t) {
  const double dt = t - now();
  if (dt > 0) std::this_thread::sleep_for(std::chrono::duration<double>(dt));
}

double FakeClock::now() {
  std::lock_guard lock(mu_);
  return now_;
}

void FakeClock::sleep_until(double t) {
  std::lock_guard lock(mu_);
  if (t > now_) now_ = t;
}

void FakeClock::advance(double seconds) {
  std::lock_guard lock(mu_);
  now_ += seconds;
}

double RateLimiter::acquire() {
  std::lock_guard lock(mu_);
  double t = clock_.now();
  if (interval_ <= 0) return t;
  if (next_ && t < *next_) {
    clock_.sleep_until(*next_);
    t = std::max(*next_, clock_.now());
  }
  next_ = t + interval_;
  return t;
}

IndexBackend::IndexBackend(std::shared_ptr<const CorpusIndex> index)
    : index_(std::move(index)), normalizer_(static_cast<double>(corpus_stats(*index_).N)) {}

std::uint64_t IndexBackend::fetch(const Query& q) {
  return q.is_pair() ? index_->pair_freq(q.x(), q.y()) : index_->doc_freq(q.x());
}

std::unique_ptr<FixtureBackend> FixtureBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ProviderError("cannot open fixture file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str(), "fixture:" + path.filename().string());
}

std::unique_ptr<FixtureBackend> FixtureBackend::from_string(std::string_view jsonl, std::string id) {
  auto backend = std::unique_ptr<FixtureBackend>(new FixtureBackend());
  backend->id_ = std::move(id);
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (normalize_query_term(line).empty() || line.front() == '#') continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (j.contains("n")) backend->normalizer_ = j.at("n").get<double>();
      if (!j.contains("x")) continue;
      const auto x = j.at("x").get<std::string>();
      const auto q = j.contains("y") ? Query::pair(x, j.at("y").get<std::string>()) : Query::single(x);
      backend->counts_[q] = j.at("count").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(fmt::format("fixture line {}: {}", lineno, e.what()));
    }
  }
  return backend;
}

std::uint64_t FixtureBackend::fetch(const Query& q) {
  auto it = counts_.find(q);
  return it == counts_.end() ? 0 : it->second;
}

HttpBackend::HttpBackend(std::string url, std::optional<double> normalizer)
    : url_(std::move(url)), normalizer_(normalizer) {
  const auto scheme = url_.find("://");
  if (scheme == std::string::npos) throw ProviderError("remote URL needs a scheme: " + url_);
  const auto slash = url_.find('/', scheme + 3);
  origin_ = url_.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url_.substr(slash);
}

std::uint64_t HttpBackend::fetch(const Query& q) {
  httplib::Client client(origin_);
  client.set_connection_timeout(10);
  client.set_read_timeout(30);
  httplib::Params params{{"q", q.x()}};
  if (q.is_pair()) params.emplace("and", q.y());
  auto res = client.Get(path_, params, httplib::Headers{});
  if (!res) {
    throw ProviderError(fmt::format("request for {} failed: {}", q.to_string(), httplib::to_string(res.error())));
  }
  if (res->status != 200) {
    throw RemoteResponseError(fmt::format("HTTP {} for {}", res->status, q.to_string()), res->body);
  }
  try {
    auto j = nlohmann::json::parse(res->body);
    const auto& c = j.at("count");
    if (!c.is_number_integer() || c.get<std::int64_t>() < 0) throw RemoteResponseError("field 'count' is not a nonnegative integer", res->body);
    return c.get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw RemoteResponseError(fmt::format("malformed response for {}: {}", q.to_string(), e.what()), res->body);
  }
}

CountCache::CountCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(*path_);
  if (!in) return;  // first use
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (auto rec = parse_line(line)) records_[{rec->provider_id, rec->query}] = std::move(*rec);
  }
}

std::optional<CountRecord> CountCache::find(const std::string& provider_id, const Query& q) const {
  auto it = records_.find({provider_id, q});
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

void CountCache::put(const CountRecord& record) {
  records_[{record.provider_id, record.query}] = record;
  if (!path_) return;
  const bool fresh = !std::filesystem::exists(*path_);
  std::ofstream out(*path_, std::ios::app);
  if (!out) throw ProviderError("cannot append to cache file " + path_->string());
  if (fresh) out << "# ngd count cache v1: x\ty\tcount\tn_snapshot\tprovider_id\tfetched_at\n";
  out << format_line(record) << '\n';
  out.flush();
}

std::string CountCache::format_line(const CountRecord& r) {
  return fmt::format("{}\t{}\t{}\t{}\t{}\t{}", r.query.x(), r.query.y(), r.count, r.n_snapshot, r.provider_id,
                     r.fetched_at);
}

std::optional<CountRecord> CountCache::parse_line(std::string_view line) {
  const auto f = split_tabs(line);
  if (f.size() != 6 || f[0].empty() || f[4].empty()) return std::nullopt;
  auto count = parse_number<std::uint64_t>(f[2]);
  auto n = parse_number<double>(f[3]);
  auto at = parse_number<std::int64_t>(f[5]);
  if (!count || !n || !at) return std::nullopt;
  CountRecord r;
  r.query = f[1].empty() ? Query::single(f[0]) : Query::pair(f[0], f[1]);
  r.count = *count;
  r.n_snapshot = *n;
  r.provider_id = std::string(f[4]);
  r.fetched_at = *at;
  return r;
}

ProviderOptions ProviderOptions::local() {
  ProviderOptions o;
  o.requests_per_second = 0;
  o.daily_quota = std::numeric_limits<std::uint64_t>::max();
  return o;
}

ProviderOptions ProviderOptions::from_environment() { return from_environment(ProviderOptions{}); }

ProviderOptions ProviderOptions::from_environment(ProviderOptions base) {
  if (const char* p = std::getenv("NGD_CACHE_PATH"); p && *p) base.cache_path = p;
  if (const char* q = std::getenv("NGD_DAILY_QUOTA"); q && *q) {
    auto v = parse_number<std::uint64_t>(q);
    if (!v) throw Error(std::string("NGD_DAILY_QUOTA is not a nonnegative integer: ") + q);
    base.daily_quota = *v;
  }
  return base;
}

CountProvider::CountProvider(std::unique_ptr<CountBackend> backend, ProviderOptions options)
    : backend_(std::move(backend)),
      options_(std::move(options)),
      clock_(options_.clock ? options_.clock : &system_clock()),
      limiter_(options_.requests_per_second, *clock_),
      cache_(options_.cache_path ? CountCache(*options_.cache_path) : CountCache()) {}

CountRecord CountProvider::get_count(const Query& q) {
  std::promise<CountRecord> promise;
  {
    std::unique_lock lock(mu_);
    if (auto hit = cache_.find(backend_->id(), q)) {
      ++cache_hits_;
      return *hit;
    }
    if (auto it = inflight_.find(q); it != inflight_.end()) {
      auto shared = it->second;
      ++cache_hits_;
      lock.unlock();
      return shared.get();
    }
    const auto day = static_cast<std::int64_t>(std::floor(clock_->now() / 86400.0));
    if (day != quota_day_) {
      quota_day_ = day;
      fetches_today_ = 0;
    }
    if (fetches_today_ >= options_.daily_quota) throw QuotaExceeded();
    ++fetches_today_;
    ++remote_fetches_;
    inflight_.emplace(q, promise.get_future().share());
  }

  try {
    const double admitted = limiter_.acquire();
    CountRecord rec;
    rec.query = q;
    rec.count = backend_->fetch(q);
    rec.n_snapshot = backend_->normalizer().value_or(0.0);
    rec.provider_id = backend_->id();
    rec.fetched_at = static_cast<std::int64_t>(std::floor(admitted));
    {
      std::lock_guard lock(mu_);
      cache_.put(rec);
      inflight_.erase(q);
    }
    promise.set_value(rec);
    return rec;
  } catch (...) {
    {
      std::lock_guard lock(mu_);
      inflight_.erase(q);
    }
    promise.set_exception(std::current_exception());
    throw;
  }
}

QueryAccounting CountProvider::accounting() const {
  std::lock_guard lock(mu_);
  const auto used = std::min(fetches_today_, options_.daily_quota);
  return {remote_fetches_, cache_hits_, options_.daily_quota - used};
}

std::unique_ptr<CountProvider> make_index_provider(std::shared_ptr<const CorpusIndex> index, ProviderOptions options) {
  return std::make_unique<CountProvider>(std::make_unique<IndexBackend>(std::move(index)), std::move(options));
}

std::unique_ptr<CountProvider> make_fixture_provider(const std::filesystem::path& path, ProviderOptions options) {
  return std::make_unique<CountProvider>(FixtureBackend::from_file(path), std::move(options));
}

std::unique_ptr<CountProvider> make_remote_provider(std::string url, ProviderOptions options,
                                                    std::optional<double> normalizer) {
  return std::make_unique<CountProvider>(std::make_unique<HttpBackend>(std::move(url), normalizer),
                                         std::move(options));
}

}  // namespace ngd
