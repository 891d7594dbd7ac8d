#include <doctest.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "ngd/corpus_index.hpp"
#include "ngd/count_provider.hpp"
#include "ngd/error.hpp"
#include "oracles.hpp"

// After Eigen: the resolver header it pulls in defines a `_res` macro.
#include <httplib.h>

using ngd::CountProvider;
using ngd::Query;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ngd_test_" + name);
  std::filesystem::remove(p);
  return p;
}

ngd::ProviderOptions remote_like(ngd::Clock& clock, std::uint64_t quota = 500) {
  ngd::ProviderOptions o;
  o.clock = &clock;
  o.daily_quota = quota;
  return o;
}

// Serves counts from a fixed table on a free port for the lifetime of the object.
struct CountServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};

  CountServer() {
    server.Get("/count", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      const auto q = req.get_param_value("q");
      const auto a = req.get_param_value("and");
      if (q == "broken") {
        res.set_content("{\"hits\": \"lots\"}", "application/json");
      } else if (q == "notjson") {
        res.set_content("<html>rate limited</html>", "text/html");
      } else if (q == "down") {
        res.status = 503;
        res.set_content("busy", "text/plain");
      } else {
        const int c = a.empty() ? static_cast<int>(q.size()) * 100 : 7;
        res.set_content("{\"count\": " + std::to_string(c) + "}", "application/json");
      }
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~CountServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/count"; }
};

}  // namespace

TEST_CASE("query normalization and ordering") {
  CHECK(ngd::normalize_query_term("  Horse   Rider ") == "horse rider");
  CHECK(Query::pair("rider", "horse") == Query::pair("horse", "rider"));
  CHECK(Query::pair("rider", "horse").x() == "horse");
  CHECK(Query::pair("a", "A") == Query::single("a"));
  CHECK_FALSE(Query::single("a").is_pair());
}

TEST_CASE("fixture provider with the horse and rider counts") {
  auto p = ngd::make_fixture_provider(NGD_FIXTURES "/horse_rider.jsonl");
  CHECK(p->accounting().remote_fetches == 0);
  CHECK(p->accounting().cache_hits == 0);
  CHECK(p->count("horse") == 46700000);
  CHECK(p->count("Horse") == 46700000);
  CHECK(p->accounting().remote_fetches == 1);
  CHECK(p->accounting().cache_hits == 1);
  CHECK(p->get_count(Query::pair("rider", "horse")) == p->get_count(Query::pair("horse", "rider")));
  CHECK(p->count("unicorn") == 0);
  CHECK(*p->default_normalizer() == 8058044651.0);
}

TEST_CASE("fixture parsing errors") {
  CHECK_THROWS_AS(ngd::FixtureBackend::from_string("{\"x\": \"a\"}"), ngd::Error);
  CHECK_THROWS_AS(ngd::FixtureBackend::from_string("not json"), ngd::Error);
  CHECK_THROWS_AS(ngd::make_fixture_provider("/nonexistent/file.jsonl"), ngd::Error);
}

TEST_CASE("accounting for a remote-style source") {
  ngd::FakeClock clock(1000.0);
  CountProvider p(std::make_unique<oracle::FunctionBackend>([](const Query&) { return 5u; }, 100.0, false),
                  remote_like(clock));
  CHECK(p.accounting() == ngd::QueryAccounting{0, 0, 500});
  p.count("a");
  p.count("a");
  CHECK(p.accounting() == ngd::QueryAccounting{1, 1, 499});
  const auto rec = p.get_count(Query::single("a"));
  CHECK(rec.n_snapshot == 100.0);
  CHECK(rec.provider_id == "planted");
  CHECK(rec.fetched_at == 1000);
}

TEST_CASE("rate limiter with a fake clock") {
  ngd::FakeClock clock(0.0);
  ngd::RateLimiter limiter(2.0, clock);
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(limiter.acquire());
  for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] - t[i - 1] >= 0.5 - 1e-12);
  // No one-second window admits more than two.
  for (std::size_t i = 0; i + 2 < t.size(); ++i) CHECK(t[i + 2] - t[i] >= 1.0 - 1e-12);
  clock.advance(100);
  const double idle = clock.now();
  CHECK(limiter.acquire() == idle);

  ngd::RateLimiter off(0.0, clock);
  CHECK(off.acquire() == off.acquire());
}

TEST_CASE("provider respects the rate limit") {
  ngd::FakeClock clock(0.0);
  auto opts = remote_like(clock);
  opts.requests_per_second = 1.0;
  CountProvider p(std::make_unique<oracle::FunctionBackend>([](const Query&) { return 1u; }, 10.0, false), opts);
  for (int i = 0; i < 5; ++i) p.count("t" + std::to_string(i));
  CHECK(clock.now() >= 4.0);
  CHECK(clock.now() < 5.0);
}

TEST_CASE("daily quota") {
  ngd::FakeClock clock(10.0);
  CountProvider p(std::make_unique<oracle::FunctionBackend>([](const Query&) { return 1u; }, 10.0, false),
                  remote_like(clock, 2));
  p.count("a");
  p.count("b");
  CHECK(p.accounting().quota_remaining == 0);
  CHECK_THROWS_WITH(p.count("c"), "daily quota exceeded");
  CHECK(p.count("a") == 1);  // cached, still fine
  clock.advance(86400);
  CHECK(p.count("c") == 1);
  CHECK(p.accounting().quota_remaining == 1);
}

TEST_CASE("cache file round trip") {
  const auto path = temp_file("cache.tsv");
  ngd::CountRecord rec{Query::pair("new york", "rider"), 12345, 8058044651.0, "remote:http://x/y", 1700000000};
  {
    ngd::CountCache c(path);
    c.put(rec);
    c.put({Query::single("horse"), 1, 2.0, "fixture", 3});
    c.put({Query::single("horse"), 46700000, 8058044651.0, "fixture", 4});
  }
  const ngd::CountCache back(path);
  CHECK(back.size() == 2);
  CHECK(*back.find("remote:http://x/y", Query::pair("rider", "new york")) == rec);
  CHECK(back.find("fixture", Query::single("horse"))->count == 46700000);
  CHECK_FALSE(back.find("other", Query::single("horse")));

  {
    std::ofstream f(path, std::ios::app);
    f << "truncated\tline\n" << "horse\t\t9";
  }
  const ngd::CountCache damaged(path);
  CHECK(damaged.size() == 2);
  CHECK(damaged.find("fixture", Query::single("horse"))->count == 46700000);

  CHECK(ngd::CountCache::parse_line(ngd::CountCache::format_line(rec)) == rec);
}

TEST_CASE("warm cache survives a new provider") {
  const auto path = temp_file("warm.tsv");
  ngd::FakeClock clock(0.0);
  auto opts = remote_like(clock);
  opts.cache_path = path;
  std::uint64_t first = 0;
  {
    CountProvider p(std::make_unique<oracle::FunctionBackend>([](const Query&) { return 42u; }, 10.0, false), opts);
    first = p.count("x", "y");
  }
  CountProvider q(std::make_unique<oracle::FunctionBackend>([](const Query&) { return 99u; }, 10.0, false), opts);
  CHECK(q.count("y", "x") == first);
  CHECK(q.accounting().remote_fetches == 0);
  CHECK(q.accounting().cache_hits == 1);
}

TEST_CASE("concurrent misses coalesce") {
  std::atomic<int> calls{0};
  auto slow = [&](const Query&) -> std::uint64_t {
    ++calls;
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    return 3;
  };
  CountProvider p(std::make_unique<oracle::FunctionBackend>(slow, 10.0, true), ngd::ProviderOptions::local());
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int i = 0; i < 6; ++i)
    threads.emplace_back([&] {
      if (p.count("same") == 3) ++ok;
    });
  for (auto& t : threads) t.join();
  CHECK(ok == 6);
  CHECK(calls == 1);
  CHECK(p.accounting().remote_fetches == 1);
  CHECK(p.accounting().cache_hits == 5);
}

TEST_CASE("index provider") {
  const std::vector<std::string> docs{"a b", "a", "b c"};
  auto p = ngd::make_index_provider(std::make_shared<const ngd::CorpusIndex>(ngd::CorpusIndex::build(docs)));
  CHECK(p->count("a") == 2);
  CHECK(p->count("a", "b") == 1);
  CHECK(p->is_local());
  CHECK(*p->default_normalizer() == static_cast<double>(ngd::corpus_stats(ngd::CorpusIndex::build(docs)).N));
}

TEST_CASE("remote provider over HTTP") {
  CountServer server;
  ngd::FakeClock clock(0.0);
  auto p = ngd::make_remote_provider(server.url(), remote_like(clock), 1e9);
  CHECK(p->count("horse") == 500);
  CHECK(p->count("horse", "rider") == 7);
  CHECK(p->count("horse") == 500);
  CHECK(server.hits == 2);
  CHECK_FALSE(p->is_local());

  try {
    p->count("broken");
    FAIL("expected a malformed-response error");
  } catch (const ngd::RemoteResponseError& e) {
    CHECK(e.payload() == "{\"hits\": \"lots\"}");
  }
  try {
    p->count("notjson");
    FAIL("expected a malformed-response error");
  } catch (const ngd::RemoteResponseError& e) {
    CHECK(e.payload() == "<html>rate limited</html>");
  }
  CHECK_THROWS_AS(p->count("down"), ngd::RemoteResponseError);

  auto dead = ngd::make_remote_provider("http://127.0.0.1:1/count", remote_like(clock), 1e9);
  CHECK_THROWS_AS(dead->count("x"), ngd::ProviderError);
  CHECK_THROWS_AS(ngd::make_remote_provider("no-scheme"), ngd::ProviderError);
}

TEST_CASE("environment overrides") {
  setenv("NGD_DAILY_QUOTA", "17", 1);
  setenv("NGD_CACHE_PATH", "/tmp/ngd_env_cache.tsv", 1);
  const auto o = ngd::ProviderOptions::from_environment();
  CHECK(o.daily_quota == 17);
  CHECK(o.cache_path == std::filesystem::path("/tmp/ngd_env_cache.tsv"));
  unsetenv("NGD_DAILY_QUOTA");
  unsetenv("NGD_CACHE_PATH");
  CHECK(ngd::ProviderOptions::from_environment().daily_quota == 500);
}
