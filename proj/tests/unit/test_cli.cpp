#include "cli.hpp"

#include "markph/data.hpp"
#include "markph/simulator.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace markph;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

struct Workspace {
  fs::path dir;
  std::string data;
  Workspace() {
    dir = fs::temp_directory_path() / ("markph_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    data = (dir / "d.csv").string();
    std::ofstream f(data);
    write_dataset(f, sample(SimModelSpec::named("m2"), 300, 5));
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string out(const std::string& name) const { return (dir / name).string(); }
};

const Workspace& workspace() {
  static const Workspace w;
  return w;
}

}  // namespace

TEST_CASE("fit writes the profile and baseline") {
  const auto& w = workspace();
  const Result r = run({"fit", "--data", w.data, "--bandwidth", "0.3", "--interval", "0.1", "0.9",
                        "--grid", "40", "--out", w.out("fit")});
  CHECK(r.code == 0);
  CHECK(line_count(w.dir / "fit" / "profile.csv") == 41);
  CHECK(fs::exists(w.dir / "fit" / "baseline.csv"));
  const auto manifest = nlohmann::json::parse(slurp(w.dir / "fit" / "fit_manifest.json"));
  CHECK(manifest["input"]["sha256"].get<std::string>().size() == 64);
  CHECK(manifest["outputs"].size() == 2);
}

TEST_CASE("input and configuration errors exit with 2") {
  const auto& w = workspace();
  const std::string bad = w.out("bad.csv");
  {
    std::ofstream f(bad);
    f << "time,status,mark,z1\n1,1,,0\n";
  }
  Result r = run({"fit", "--data", bad, "--out", w.out("bad")});
  CHECK(r.code == 2);
  CHECK(r.err.find("event without mark") != std::string::npos);
  CHECK(run({"fit", "--data", w.data, "--bandwidth", "0", "--out", w.out("bad")}).code == 2);
  CHECK(run({"fit", "--out", w.out("bad")}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"fit", "--help"}).code == 0);
  CHECK(run({"bands", "--data", w.data, "--out", w.out("bad")}).code == 2);
  CHECK(run({"bands", "--data", w.data, "--method", "multiplier", "--resamples", "500", "--seed",
             "1", "--out", w.out("bad")})
            .code == 2);
  CHECK(run({"test", "--data", w.data, "--family", "h10", "--test-grid", "0.5", "--seed", "1",
             "--out", w.out("bad")})
            .code == 2);
}

TEST_CASE("estimation failures exit with 3 and name the grid points") {
  const auto& w = workspace();
  const std::string tiny = w.out("tiny.csv");
  {
    std::ofstream f(tiny);
    f << "time,status,mark,z1\n1,1,0.5,1\n2,0,,0\n";
  }
  const Result r = run({"fit", "--data", tiny, "--bandwidth", "0.2", "--grid-points", "0.5",
                        "--out", w.out("tiny")});
  CHECK(r.code == 3);
  CHECK(r.err.find("0.5") != std::string::npos);
}

TEST_CASE("bands are reproducible for a seed") {
  const auto& w = workspace();
  for (const char* dir : {"b1", "b2"}) {
    const Result r = run({"bands", "--data", w.data, "--bandwidth", "0.2", "--seed", "3",
                          "--resamples", "2000", "--out", w.out(dir)});
    REQUIRE(r.code == 0);
  }
  const auto a = slurp(w.dir / "b1" / "cv_simultaneous_band.csv");
  CHECK(a == slurp(w.dir / "b2" / "cv_simultaneous_band.csv"));
  CHECK(a.rfind("v,center,lower,upper,kind,level\n", 0) == 0);
  CHECK(fs::exists(w.dir / "b1" / "ve_pointwise_band.csv"));
  CHECK(fs::exists(w.dir / "b1" / "cv_pointwise_band.csv"));
  const Result m = run({"bands", "--data", w.data, "--bandwidth", "0.2", "--seed", "3",
                        "--resamples", "1000", "--method", "multiplier", "--out", w.out("b3")});
  CHECK(m.code == 0);
  CHECK(slurp(w.dir / "b3" / "cv_simultaneous_band.csv").find("simultaneous-multiplier") !=
        std::string::npos);
}

TEST_CASE("test reports six statistics") {
  const auto& w = workspace();
  const Result r = run({"test", "--data", w.data, "--bandwidth", "0.2", "--family", "both",
                        "--alpha", "0.05", "--seed", "7", "--resamples", "2000", "--out",
                        w.out("t1")});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(w.dir / "t1" / "tests.json"));
  REQUIRE(j["tests"].size() == 2);
  std::size_t stats = 0;
  for (const auto& t : j["tests"]) stats += t["statistics"].size();
  CHECK(stats == 6);
  run({"test", "--data", w.data, "--bandwidth", "0.2", "--family", "both", "--seed", "7",
       "--resamples", "2000", "--out", w.out("t2")});
  CHECK(slurp(w.dir / "t1" / "tests.json") == slurp(w.dir / "t2" / "tests.json"));
}

TEST_CASE("config file values yield to flags") {
  const auto& w = workspace();
  const std::string cfg = w.out("cfg.json");
  {
    std::ofstream f(cfg);
    f << R"({"bandwidth": 0.3, "grid": 5, "data": ")" << w.data << R"("})";
  }
  Result r = run({"fit", "--config", cfg, "--grid", "7", "--out", w.out("c1")});
  REQUIRE(r.code == 0);
  CHECK(line_count(w.dir / "c1" / "profile.csv") == 8);
  const auto manifest = nlohmann::json::parse(slurp(w.dir / "c1" / "fit_manifest.json"));
  CHECK(manifest["config"]["bandwidth"].get<double>() == 0.3);
  {
    std::ofstream f(cfg);
    f << R"({"bandwith": 0.3})";
  }
  CHECK(run({"fit", "--config", cfg, "--data", w.data, "--out", w.out("c2")}).code == 2);
}

TEST_CASE("simulate, residuals, wald and validate") {
  const auto& w = workspace();
  Result r = run({"simulate", "--model", "m1", "--n", "150", "--reps", "2", "--bandwidth", "0.3",
                  "--seed", "1", "--resamples", "1000", "--threads", "1", "--out", w.out("s")});
  REQUIRE(r.code == 0);
  const auto report = nlohmann::json::parse(slurp(w.dir / "s" / "mc_report.json"));
  CHECK(report["model"] == "M1");
  CHECK(report["rejections"].size() == 7);
  CHECK(slurp(w.dir / "s" / "mc_table.csv").rfind("model,n,h,statistic,rejection_pct", 0) == 0);
  CHECK(run({"simulate", "--model", "m1", "--n", "150", "--reps", "2", "--out", w.out("s")}).code == 2);
  CHECK(run({"simulate", "--params", "0", "0", "0.3", "--censoring", "0", "--seed", "1", "--out",
             w.out("s")})
            .code == 2);

  r = run({"residuals", "--data", w.data, "--bandwidth", "0.3", "--out", w.out("r")});
  CHECK(r.code == 0);
  CHECK(line_count(w.dir / "r" / "residuals.csv") == 301);

  r = run({"wald", "--data", w.data});
  CHECK(r.code == 0);
  CHECK(nlohmann::json::parse(r.out).contains("p_two_sided"));

  r = run({"validate", "--data", w.data});
  CHECK(r.code == 0);
  CHECK(nlohmann::json::parse(r.out)["subjects"] == 300);
}

TEST_CASE("sha256") {
  CHECK(cli::sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
