#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "attnflow/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("attnflow_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Result {
  int status;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int status = attnflow::cli::run(args, out, err);
  return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

nlohmann::json json_file(const std::string& path) { return nlohmann::json::parse(slurp(path)); }

}  // namespace

TEST_CASE("version and usage") {
  auto v = run({"--version"});
  CHECK(v.status == 0);
  CHECK(v.out.find("attnflow ") == 0);
  auto bad = run({"--no-such-flag", "stats"});
  CHECK(bad.status == 2);
  auto unknown = run({"frobnicate"});
  CHECK(unknown.status == 1);
  CHECK(unknown.err.rfind("error code=InvalidArgument", 0) == 0);
  CHECK(std::count(unknown.err.begin(), unknown.err.end(), '\n') == 1);
}

TEST_CASE("pipeline on the star log conserves sessions") {
  TempDir dir;
  spit(dir / "sessions.csv", "u1,hub\nu1,x\nu2,hub\nu2,y\nu3,hub\nu3,z\n");
  auto r = run({"pipeline", "--input", dir / "sessions.csv", "--out", dir / "run1"});
  REQUIRE(r.status == 0);
  auto summary = json_file(dir / "run1/summary.json");
  CHECK(summary["schema_version"] == 1);
  CHECK(summary["totals"]["sum_D"] == 3.0);
  CHECK(summary["totals"]["sum_A"] == 6.0);
  CHECK(summary["network"]["interior_nodes"] == 4);
  CHECK(summary["network"]["edges"] == 7);
  CHECK(summary["concentration"]["gini_D"] == doctest::Approx(0.25));
  // Hub has D = 0 and leaves have S = 0: the regression reports why it is empty.
  CHECK(summary["regression"]["model_1"]["error"] == "TooFewRows");
  CHECK(fs::exists(dir / "run1/effective_config.txt"));
  CHECK(fs::exists(dir / "run1/zipf_A.csv"));
  CHECK(fs::exists(dir / "run1/lorenz_A.csv"));
}

TEST_CASE("stage commands chain through files") {
  TempDir dir;
  REQUIRE(run({"generate", "--family", "random-cyclic", "--size", "1000", "--planted-alpha", "0.8", "--seed", "4",
               "--out", dir / "gen"})
              .status == 0);
  REQUIRE(run({"stats", "--network", dir / "gen/network.csv", "--out", dir / "st"}).status == 0);
  auto fit = run({"fit", "--stats", dir / "st/stats.csv", "--x", "A", "--y", "D", "--out", dir / "fit"});
  REQUIRE(fit.status == 0);
  auto f = json_file(dir / "fit/fit.json");
  CHECK(std::abs(f["exponent"].get<double>() - 0.8) <= 0.05);

  REQUIRE(run({"distance", "--network", dir / "gen/network.csv", "--out", dir / "dist"}).status == 0);
  auto reg = run({"regress", "--stats", dir / "st/stats.csv", "--distances", dir / "dist/source_distances.csv",
                  "--out", dir / "reg"});
  REQUIRE(reg.status == 0);
  auto table = json_file(dir / "reg/regression.json");
  CHECK(table["coefficients"].size() == 5);
  CHECK(table["n_observations"] == 1000);

  REQUIRE(run({"gini", "--stats", dir / "st/stats.csv", "--column", "D", "--out", dir / "g"}).status == 0);
  CHECK(fs::exists(dir / "g/lorenz_D.csv"));
  REQUIRE(run({"zipf", "--stats", dir / "st/stats.csv", "--column", "C", "--out", dir / "z"}).status == 0);
  CHECK(slurp(dir / "z/zipf_C.csv").rfind("rank,value\n1,", 0) == 0);
}

TEST_CASE("simulate then compare passes") {
  TempDir dir;
  REQUIRE(run({"generate", "--seed", "42", "--out", dir / "gen"}).status == 0);
  REQUIRE(run({"simulate", "--network", dir / "gen/network.csv", "--walkers", "1e6", "--seed", "42", "--out",
               dir / "sim"})
              .status == 0);
  auto cmp = run({"compare", "--network", dir / "gen/network.csv", "--estimates", dir / "sim/estimates.csv", "--out",
                  dir / "cmp"});
  REQUIRE(cmp.status == 0);
  CHECK(cmp.out.rfind("PASS", 0) == 0);
  auto report = json_file(dir / "cmp/comparison.json");
  CHECK(report["pass"] == true);
}

TEST_CASE("ingest, build and duplication from a log") {
  TempDir dir;
  spit(dir / "log.tsv", "user\titem\tts\na\tx\t0\na\ty\t10\na\tx\t9000\nb\ty\t1\nb\tz\t2\n");
  auto ingest = run({"ingest", "--input", dir / "log.tsv", "--delimiter", "tab", "--header", "--gap-seconds", "3600",
                     "--out", dir / "i"});
  REQUIRE(ingest.status == 0);
  CHECK(slurp(dir / "i/edges.csv") ==
        "src,dst,weight\n__source__,x,2\nx,y,1\ny,__sink__,1\nx,__sink__,1\n__source__,y,1\ny,z,1\nz,__sink__,1\n");
  CHECK(json_file(dir / "i/log_summary.json")["sessions"] == 3);

  auto build = run({"build", "--input", dir / "log.tsv", "--delimiter", "tab", "--header", "--out", dir / "b"});
  REQUIRE(build.status == 0);
  CHECK(json_file(dir / "b/network.json")["balanced"] == true);

  auto dup = run({"duplication", "--input", dir / "log.tsv", "--delimiter", "tab", "--header", "--out", dir / "d"});
  REQUIRE(dup.status == 0);
  CHECK(fs::exists(dir / "d/zipf_degree_after.csv"));
}

TEST_CASE("failures leave no partial artifacts") {
  TempDir dir;
  spit(dir / "bad.csv", "u1,A\nu1\n");
  auto r = run({"pipeline", "--input", dir / "bad.csv", "--out", dir / "out"});
  CHECK(r.status == 1);
  CHECK(r.err.rfind("error code=MalformedRecord", 0) == 0);
  CHECK_FALSE(fs::exists(dir / "out"));

  spit(dir / "flat.csv", "item,A,D,S,F,C,phi\na,2,1,1,1,1,1\nb,2,2,1,1,1,1\nc,2,3,1,1,1,1\n");
  fs::create_directories(dir / "keep");
  spit(dir / "keep/other.txt", "x");
  auto fit = run({"fit", "--stats", dir / "flat.csv", "--out", dir / "keep"});
  CHECK(fit.status == 1);
  CHECK(fit.err.rfind("error code=DegenerateX", 0) == 0);
  CHECK(fs::exists(dir / "keep/other.txt"));
  CHECK_FALSE(fs::exists(dir / "keep/effective_config.txt"));

  auto missing = run({"stats", "--input", dir / "nope.csv", "--out", dir / "o2"});
  CHECK(missing.status == 1);
  CHECK(missing.err.rfind("error code=IoError", 0) == 0);

  REQUIRE(run({"generate", "--size", "30", "--out", dir / "gen"}).status == 0);
  auto guard = run({"distance", "--network", dir / "gen/network.csv", "--pairwise", "--pairwise-cap", "10", "--out",
                    dir / "o3"});
  CHECK(guard.err.rfind("error code=SizeGuard", 0) == 0);
  CHECK_FALSE(fs::exists(dir / "o3"));
}

TEST_CASE("trapped nodes are dropped or rejected") {
  TempDir dir;
  spit(dir / "net.csv", "src,dst,weight\n__source__,A,1\nA,__sink__,1\n__source__,C1,1\nC1,C2,1\nC2,C1,1\n");
  // balance() closes C1/C2 on the way in, so the network certifies.
  CHECK(run({"build", "--network", dir / "net.csv", "--out", dir / "b"}).status == 0);
  spit(dir / "island.csv", "src,dst,weight\n__source__,A,1\nA,__sink__,1\nC1,C2,1\nC2,C1,1\n");
  auto drop = run({"stats", "--network", dir / "island.csv", "--out", dir / "s"});
  CHECK(drop.status == 0);
  CHECK(drop.err.find("dropped 2") != std::string::npos);
  auto fail = run({"stats", "--network", dir / "island.csv", "--trapped", "fail", "--out", dir / "f"});
  CHECK(fail.err.rfind("error code=NotCertified", 0) == 0);
}

TEST_CASE("config file with flag overrides") {
  TempDir dir;
  spit(dir / "run.conf", "# settings\nfamily = chain\nsize = 5\nseed = 9\n");
  auto r = run({"generate", "--config", dir / "run.conf", "--size", "3", "--out", dir / "o"});
  REQUIRE(r.status == 0);
  auto echo = slurp(dir / "o/effective_config.txt");
  CHECK(echo.find("family = chain\n") != std::string::npos);
  CHECK(echo.find("size = 3\n") != std::string::npos);
  CHECK(echo.find("seed = 9\n") != std::string::npos);
  CHECK(json_file(dir / "o/network.json")["interior_nodes"] == 3);
}

TEST_CASE("pipeline output is byte-identical across runs") {
  TempDir dir;
  REQUIRE(run({"generate", "--family", "session-log", "--size", "40", "--seed", "5", "--out", dir / "g"}).status == 0);
  for (auto out : {"a", "b"})
    REQUIRE(run({"pipeline", "--input", dir / "g/sessions.csv", "--out", dir / out, "--analyses",
                 "stats,distance,fits,concentration,duplication,regression,simulate,pairwise", "--walkers", "20000"})
                .status == 0);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dir.path / "a")) {
    ++files;
    auto other = dir.path / "b" / entry.path().filename();
    REQUIRE(fs::exists(other));
    CHECK_MESSAGE(slurp(entry.path()) == slurp(other), entry.path().filename().string());
  }
  CHECK(files > 15);
}
