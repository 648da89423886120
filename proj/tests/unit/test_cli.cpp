#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <doctest.h>

#include "bhp/cli.hpp"
#include "bhp/errors.hpp"

using namespace bhp;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bhp_lab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("bhp-unit-" + std::to_string(::getpid()) + "-" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int n = 0;
    return n;
  }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return path / name;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config parsing") {
  const auto c = parse_config_text(R"({"model": {"kind": "interval", "beta": 1}, "seed": 5})");
  CHECK(c.model.is_interval());
  CHECK(c.seed == 5);

  try {
    parse_config_text("");
    FAIL("empty config accepted");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("model") != std::string::npos);
  }
  try {
    parse_config_text("{\n  \"model\": ,\n}");
    FAIL("syntax error accepted");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text(R"({"model": {"kind": "interval", "betta": 1}})"), ValidationError);
  CHECK_THROWS_AS(parse_config_text(R"({"model": {"kind": "interval", "beta": "one"}})"), ValidationError);
  CHECK_THROWS_AS(parse_config_text(R"({"model": {"kind": "torus"}})"), ValidationError);
  CHECK_THROWS_AS(parse_config_text(R"({"model": {"kind": "ou", "c": 1, "b": 1, "a": 0.1}})"),
                  ValidationError);
}

TEST_CASE("resolve_model") {
  const auto c = parse_config_text(R"({"model": {"kind": "interval", "beta": 1}})");
  const auto rm = resolve_model(c);
  CHECK(rm.spectral.closed_form());
  CHECK(rm.spectral.lambda1 == doctest::Approx(-0.5));
  const auto sub = parse_config_text(R"({"model": {"kind": "interval", "beta": 0.2}})");
  CHECK_THROWS_AS(resolve_model(sub), SubcriticalityError);
  CHECK_NOTHROW(resolve_model(sub, true));
}

TEST_CASE("usage errors exit 1") {
  TempDir tmp;
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"spectral"}).code == 1);
  const auto empty = tmp.write("empty.json", "");
  const auto r = cli({"spectral", "--config", empty.string(), "--out", (tmp.path / "o").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("model") != std::string::npos);
  fs::create_directories(tmp.path / "nothing");
  CHECK(cli({"report", (tmp.path / "nothing").string()}).code == 1);
}

TEST_CASE("spectral command writes a report") {
  TempDir tmp;
  const auto cfg = tmp.write("c.json", R"({"model": {"kind": "interval", "beta": 1}})");
  const auto r = cli({"spectral", "--config", cfg.string(), "--out", (tmp.path / "o").string()});
  CHECK(r.code == 0);
  for (const char* name : {"report.json", "results.csv", "manifest.json", "timing.json"})
    CHECK(fs::exists(tmp.path / "o" / name));
  const auto rep = cli({"report", tmp.path.string()});
  CHECK(rep.code == 0);
  CHECK(rep.out.find("spectral") != std::string::npos);
}

TEST_CASE("simulate is reproducible and replayable") {
  TempDir tmp;
  const auto cfg = tmp.write(
      "c.json",
      R"({"model": {"kind": "interval", "beta": 1}, "simulate": {"x": 1.5, "horizon": 2}, "seed": 4})");
  CHECK(cli({"simulate", "--config", cfg.string(), "--out", (tmp.path / "a").string()}).code == 0);
  CHECK(cli({"simulate", "--config", cfg.string(), "--out", (tmp.path / "b").string()}).code == 0);
  const auto a = slurp(tmp.path / "a" / "forest.tsv");
  CHECK_FALSE(a.empty());
  CHECK(a == slurp(tmp.path / "b" / "forest.tsv"));
  const auto manifest = (tmp.path / "a" / "manifest.json").string();
  CHECK(cli({"--config", manifest, "--out", (tmp.path / "c").string()}).code == 0);
  CHECK(a == slurp(tmp.path / "c" / "forest.tsv"));
  CHECK(cli({"simulate", "--config", cfg.string(), "--seed", "5", "--out", (tmp.path / "d").string()})
            .code == 0);
  CHECK(a != slurp(tmp.path / "d" / "forest.tsv"));
}

TEST_CASE("out-of-scope experiment exits 0") {
  TempDir tmp;
  const auto cfg = tmp.write(
      "c.json", R"({"model": {"kind": "ou", "c": 2, "b": 1.5, "a": 0.1}, "experiment": {"replicas": 4}})");
  const auto r = cli({"verify", "slln", "--config", cfg.string(), "--out", (tmp.path / "o").string()});
  CHECK(r.code == 0);
  CHECK(slurp(tmp.path / "o" / "report.json").find("hypothesis-not-met") != std::string::npos);
}

}
