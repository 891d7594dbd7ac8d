#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ngd/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = ngd::run_command(args, out, err);
  return {code, out.str(), err.str()};
}

const std::string kHorseRider = NGD_FIXTURES "/horse_rider.jsonl";
const std::string kNovelists = NGD_FIXTURES "/novelists.csv";

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("ngd_cli_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return (path / name).string();
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

// Two groups of words; a pair is in the file only when both words share a
// group, so cross-group pairs are missing and count as zero.
std::string grouped_fixture(int fruits, int tools) {
  std::ostringstream s;
  s << "{\"n\": 1000000}\n";
  std::vector<std::vector<std::string>> groups(2);
  for (int i = 0; i < fruits; ++i) groups[0].push_back("f" + std::to_string(i));
  for (int i = 0; i < tools; ++i) groups[1].push_back("t" + std::to_string(i));
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      s << "{\"x\": \"" << g[i] << "\", \"count\": 1000}\n";
      for (std::size_t j = i + 1; j < g.size(); ++j)
        s << "{\"x\": \"" << g[i] << "\", \"y\": \"" << g[j] << "\", \"count\": 1000}\n";
    }
  }
  return s.str();
}

std::string word_file(const std::string& prefix, int from, int to) {
  std::string s;
  for (int i = from; i < to; ++i) s += prefix + std::to_string(i) + "\n";
  return s;
}

}  // namespace

TEST_CASE("pair") {
  auto r = run({"pair", "horse", "rider", "--fixture", kHorseRider});
  CHECK(r.code == 0);
  CHECK(r.out == "0.443\n");
  r = run({"pair", "horse", "rider", "--fixture", NGD_FIXTURES "/horse_rider_half.jsonl"});
  CHECK(r.out == "0.460\n");
  r = run({"pair", "Horse", "horse", "--fixture", kHorseRider});
  CHECK(r.out == "0.000\n");
  r = run({"pair", "horse", "unicorn", "--fixture", kHorseRider});
  CHECK(r.out == "1.000\n");
  r = run({"--format", "json", "pair", "horse", "rider", "--fixture", kHorseRider});
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("ngd").get<double>() == doctest::Approx(0.4434).epsilon(1e-3));
  CHECK(j.at("negative") == false);
  // N below the counts is an error, not a number.
  r = run({"pair", "horse", "rider", "--fixture", kHorseRider, "--n", "1000"});
  CHECK(r.code == 1);
  CHECK(r.err.find("normalizer too small") != std::string::npos);
}

TEST_CASE("usage and domain errors") {
  CHECK(run({}).code == ngd::kExitUsage);
  CHECK(run({"pair", "horse"}).code == ngd::kExitUsage);
  CHECK(run({"frobnicate"}).code == ngd::kExitUsage);
  CHECK(run({"cluster", "--matrix", kNovelists}).code == ngd::kExitUsage);  // --seed is required
  CHECK(run({"--format", "xml", "pair", "a", "b"}).code == ngd::kExitUsage);
  const auto help = run({"--help"});
  CHECK(help.code == ngd::kExitOk);
  CHECK(help.out.find("cluster") != std::string::npos);

  auto r = run({"pair", "a", "b"});
  CHECK(r.code == ngd::kExitDomainError);
  CHECK(r.err.rfind("error: ", 0) == 0);
  r = run({"pair", "a", "b", "--fixture", kHorseRider, "--index", "/tmp/nowhere"});
  CHECK(r.code == ngd::kExitDomainError);
  r = run({"count", "horse", "--fixture", "/nonexistent.jsonl"});
  CHECK(r.code == ngd::kExitDomainError);
}

TEST_CASE("count") {
  auto r = run({"count", "horse", "rider", "--fixture", kHorseRider});
  CHECK(r.out == "2630000\n");
  r = run({"--format", "json", "count", "rider", "--fixture", kHorseRider});
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("count") == 12200000);
  CHECK(j.at("n_snapshot") == 8058044651.0);
  CHECK(j.at("accounting").at("remote_fetches") == 1);
}

TEST_CASE("index build, count, matrix and universality") {
  TempDir tmp;
  const auto docs = tmp.file("docs.txt",
                             "the horse and the rider\nhorse saddle\nrider on a bicycle\njan steen painted\n"
                             "jan steen again\nsteen jan reversed\n");
  const auto dir = tmp / "index";
  auto r = run({"index", "build", docs, "--dir", dir, "--lines"});
  REQUIRE(r.code == 0);
  const auto stats = nlohmann::json::parse(r.out);
  CHECK(stats.at("documents") == 6);
  CHECK(stats.at("N").get<double>() > 0);

  CHECK(run({"count", "horse", "--index", dir}).out == "2\n");
  CHECK(run({"count", "jan steen", "--index", dir}).out == "2\n");
  CHECK(run({"count", "horse", "rider", "--index", dir}).out == "1\n");

  const auto csv_path = tmp / "m.csv";
  r = run({"--out", csv_path, "matrix", "horse", "rider", "saddle", "bicycle", "--index", dir});
  REQUIRE(r.code == 0);
  CHECK(r.out.empty());
  std::ifstream in(csv_path);
  std::string header;
  std::getline(in, header);
  CHECK(header == ",horse,rider,saddle,bicycle");
  r = run({"--format", "json", "matrix", "horse", "rider", "saddle", "bicycle", "--index", dir});
  const auto mj = nlohmann::json::parse(r.out);
  CHECK(mj.at("labels").size() == 4);

  // Clustering the matrix written above.
  r = run({"cluster", "--matrix", csv_path, "--seed", "1"});
  CHECK(r.code == 0);
  CHECK(r.out.back() == '\n');
  CHECK(r.out.find(';') != std::string::npos);

  r = run({"universality", "--index", dir, "--classes", "2", "--seed", "3"});
  REQUIRE(r.code == 0);
  const auto u = nlohmann::json::parse(r.out);
  CHECK(u.at("distribution").at("total_mass").get<double>() == doctest::Approx(1.0));
  CHECK(u.at("theorem1").at("violations") == 0);
  r = run({"universality", "--uniform", "3", "2"});
  CHECK(nlohmann::json::parse(r.out).at("uniform_witness").at("violated") == true);
  CHECK(run({"universality"}).code == 1);
}

TEST_CASE("cluster is deterministic for a seed") {
  const auto a = run({"cluster", "--matrix", kNovelists, "--seed", "7"});
  const auto b = run({"cluster", "--matrix", kNovelists, "--seed", "7"});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.err == b.err);
  CHECK(a.err.find("S(T) = 0.9") != std::string::npos);
  const auto j = nlohmann::json::parse(run({"--format", "json", "cluster", "--matrix", kNovelists, "--seed", "7"}).out);
  CHECK(j.at("newick").get<std::string>() + "\n" == a.out);
}

TEST_CASE("learn, classify and eval on a planted fixture") {
  TempDir tmp;
  const auto fixture = tmp.file("counts.jsonl", grouped_fixture(60, 120));
  const auto pos = tmp.file("pos.txt", word_file("f", 3, 15));
  const auto neg = tmp.file("neg.txt", word_file("t", 3, 15));
  const auto model = tmp / "model.json";
  auto r = run({"--out", model, "learn", "--fixture", fixture, "--positives", pos, "--negatives", neg, "--anchors",
                "f0,f1,f2,t0,t1,t2", "--seed", "4"});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("cv accuracy 1.0000") != std::string::npos);

  r = run({"classify", "--fixture", fixture, "--model", model, "f40", "t77", "f59"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("term,label,margin\nf40,+1,", 0) == 0);
  CHECK(r.out.find("\nt77,-1,") != std::string::npos);
  r = run({"--format", "json", "classify", "--fixture", fixture, "--model", model, "t5"});
  CHECK(nlohmann::json::parse(r.out)[0].at("label") == -1);
  CHECK(run({"classify", "--fixture", fixture, "--model", tmp / "missing.json", "x"}).code == 1);

  const auto cat = tmp.file("fruit.txt", word_file("f", 0, 60));
  const auto dict = tmp.file("dict.txt", word_file("t", 0, 120));
  const auto hist = tmp / "hist.csv";
  std::vector<std::string> args{"eval", "--fixture", fixture, "--category", cat, "--dictionary", dict,
                                "--trials", "3", "--seed", "5", "--histogram", hist};
  r = run(args);
  REQUIRE(r.code == 0);
  const auto s = nlohmann::json::parse(r.out);
  CHECK(s.at("mean") == 1.0);
  CHECK(s.at("valid_trials") == 3);
  CHECK(s.at("histogram")[19] == 3);
  CHECK(fs::exists(hist));
  CHECK(run(args).out == r.out);

  const auto small = tmp.file("small.txt", word_file("f", 0, 10));
  r = run({"eval", "--fixture", fixture, "--category", small, "--dictionary", dict, "--trials", "1", "--seed", "5"});
  CHECK(r.code == 0);
  CHECK(r.err.find("small.txt") != std::string::npos);
}

TEST_CASE("translate") {
  TempDir tmp;
  std::ostringstream counts;
  counts << "{\"n\": 1000000}\n";
  for (const char* w : {"b0", "b1", "b2", "b3", "u0", "u1", "u2"}) counts << "{\"x\": \"" << w << "\", \"count\": 1000}\n";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      counts << "{\"x\": \"u" << i << "\", \"y\": \"b" << j << "\", \"count\": " << 10 + (i * 37 + j * 91) % 900 << "}\n";
  const auto fixture = tmp.file("t.jsonl", counts.str());
  const auto basis = tmp.file("basis.tsv", "b0\tb0\nb1\tb1\nb2\tb2\nb3\tb3\n");
  auto r = run({"translate", "--fixture", fixture, "--target-fixture", fixture, "--basis", basis, "--source-words",
                "u0,u1,u2", "--target-words", "u2,u0,u1"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("success") == true);
  for (const auto& m : j.at("mapping")) CHECK(m.at("source") == m.at("target"));
  CHECK(j.at("correlations").size() == 6);

  // Without a target source both sides share one provider.
  r = run({"translate", "--fixture", fixture, "--basis", basis, "--source-words", "u0,u1", "--target-words", "u1,u0"});
  CHECK(r.code == 0);

  const auto flat = tmp.file("flat.jsonl", "{\"n\": 1000000}\n");
  r = run({"translate", "--fixture", flat, "--basis", basis, "--source-words", "a,b", "--target-words", "c,d"});
  CHECK(r.code == 1);
  CHECK(r.err.find("zero-variance") != std::string::npos);
}
