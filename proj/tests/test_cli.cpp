#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "qp/cli.hpp"
#include "qp/csv.hpp"

using namespace qp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("qp_cli_" + tag);
  fs::remove_all(p);
  return p;
}

json small_mam() {
  return json{{"n_nodes", 80}, {"horizons", {1.0, 2.0, 4.0, 8.0}}, {"max_iter", 2000}};
}

std::map<std::string, std::string> artifact_checksums(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    out[e.path().filename().string()] = fnv1a64_hex(read_file(e.path().string()));
  return out;
}

}  // namespace

TEST_CASE("minimal config parses; defaults are filled") {
  auto cfg = parse_config(R"({"system":"ou1d","command":"equilibria","out":"run1"})");
  CHECK(cfg.command == Command::Equilibria);
  CHECK(cfg.out == "run1");
  CHECK(cfg.system->name() == "ou1d");
  CHECK(cfg.mam.opts.n_nodes == 200);
  CHECK(cfg.sim.opts.eps == 0.3);
}

TEST_CASE("unknown keys are rejected by name") {
  try {
    parse_config(R"({"system":"ou1d","command":"simulate","out":"x","sim":{"epsilonn":0.2}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE_FALSE(e.issues.empty());
    CHECK(e.issues.front().find("epsilonn") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(R"({"system":"ou1d","command":"hjb","out":"x","grd":{}})"),
                  ConfigError);
}

TEST_CASE("missing required fields are named") {
  try {
    parse_config(R"({"system":"ou1d"})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    bool saw_command = false, saw_out = false;
    for (const auto& i : e.issues) {
      if (i.find("command") != std::string::npos) saw_command = true;
      if (i.find("out") != std::string::npos) saw_out = true;
    }
    CHECK(saw_command);
    CHECK(saw_out);
  }
}

TEST_CASE("config round trip is the identity") {
  const std::string text = R"({
    "system": {"dimension":1, "drift":["x1 - x1^3"], "sigma":"identity", "box":[[-2.5,2.5]]},
    "command": "quasipotential",
    "out": "run2",
    "seed": 7,
    "mam": {"n_nodes": 50, "from": [-1.0], "to": [0.0], "horizons": [1.0, 2.0]},
    "sim": {"eps": 0.25, "hitting": true, "hit_start": [0.5],
             "hit_targets": [{"center":[0.0],"rho":0.1}]}
  })";
  auto once = config_to_json(parse_config(text));
  auto twice = config_to_json(parse_config_json(once));
  CHECK(once == twice);
  CHECK(once.dump() == twice.dump());
}

TEST_CASE("invalid option values are collected as field errors") {
  CHECK_THROWS_AS(parse_config(
                      R"({"system":"ou1d","command":"simulate","out":"x","sim":{"dt":-1}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(
                      R"({"system":"ou1d","command":"nope","out":"x"})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(
                      R"({"system":"ou1d","command":"quasipotential","out":"x",
                          "mam":{"horizons":[2.0,1.0]}})"),
                  ConfigError);
  // dimension mismatch between system and points
  CHECK_THROWS_AS(parse_config(
                      R"({"system":"ou1d","command":"quasipotential","out":"x",
                          "mam":{"to":[0.0,1.0]}})"),
                  ConfigError);
}

TEST_CASE("equilibria command writes the classified roots") {
  const fs::path dir = fresh_dir("eq");
  json j{{"system", "doublewell1d"}, {"command", "equilibria"}, {"out", dir.string()}};
  CHECK(run(parse_config_json(j)) == 0);

  auto eq = json::parse(read_file((dir / "equilibria.json").string()));
  REQUIRE(eq.at("count").get<int>() == 3);
  const auto& list = eq.at("equilibria");
  CHECK(list[0]["location"][0].get<double>() == doctest::Approx(-1.0));
  CHECK(list[0]["kind"] == "stable");
  CHECK(list[1]["location"][0].get<double>() == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(list[1]["kind"] == "unstable");
  CHECK(list[2]["kind"] == "stable");
  CHECK(fs::exists(dir / "assumptions.json"));

  auto manifest = json::parse(read_file((dir / "manifest.json").string()));
  CHECK(manifest.at("status") == "OK");
  CHECK(manifest.at("files").size() == 2);
}

TEST_CASE("quasipotential command writes result.json and path.csv") {
  const fs::path dir = fresh_dir("qp");
  json j{{"system", "ou1d"},
         {"command", "quasipotential"},
         {"out", dir.string()},
         {"mam", small_mam()}};
  j["mam"]["to"] = {1.0};
  CHECK(run(parse_config_json(j)) == 0);
  auto res = json::parse(read_file((dir / "result.json").string()));
  CHECK(res.at("value").get<double>() == doctest::Approx(1.0).epsilon(0.05));
  CHECK(res.at("converged").get<bool>());
  CHECK(read_file((dir / "path.csv").string()).rfind("t,x1\n", 0) == 0);
}

TEST_CASE("hjb command writes the solution with a residual sidecar") {
  const fs::path dir = fresh_dir("hjb");
  json j{{"system", "ou1d"},
         {"command", "hjb"},
         {"out", dir.string()},
         {"grid", {{"h", 0.01}}}};
  CHECK(run(parse_config_json(j)) == 0);
  auto sol = json::parse(read_file((dir / "solution.json").string()));
  CHECK(sol.at("converged").get<bool>());
  CHECK(sol.at("residual").get<double>() < 0.1);
  CHECK(read_file((dir / "solution.csv").string()).rfind("x1,W\n", 0) == 0);
}

TEST_CASE("simulate command writes histogram and stats") {
  const fs::path dir = fresh_dir("sim");
  json j{{"system", "ou1d"},
         {"command", "simulate"},
         {"out", dir.string()},
         {"seed", 11},
         {"sim", {{"eps", 0.3}, {"steps", 400000}, {"bins", 60}, {"stationarity", true}}}};
  CHECK(run(parse_config_json(j)) == 0);
  auto stats = json::parse(read_file((dir / "stats.json").string()));
  CHECK(stats.at("reliable").get<bool>());
  CHECK(stats.at("variance")[0].get<double>() == doctest::Approx(0.045).epsilon(0.15));
  CHECK(stats.at("stationarity").contains("norm2"));
  CHECK(read_file((dir / "histogram.csv").string()).rfind("x1,count,density,W\n", 0) == 0);
}

TEST_CASE("compare command reports all three routes and the max discrepancy") {
  const fs::path dir = fresh_dir("cmp");
  json j{{"system", "ou1d"},
         {"command", "compare"},
         {"out", dir.string()},
         {"seed", 5},
         {"mam", small_mam()},
         {"grid", {{"h", 0.02}}},
         {"sim", {{"eps", 0.3}, {"steps", 1000000}, {"bins", 80}}},
         {"compare", {{"probe_count", 5}}}};
  CHECK(run(parse_config_json(j)) == 0);
  const std::string csv = read_file((dir / "compare.csv").string());
  CHECK(csv.rfind("x1,W_mam,W_hjb,W_mc\n", 0) == 0);
  auto cj = json::parse(read_file((dir / "compare.json").string()));
  CHECK(cj.at("rows").size() == 5);
  CHECK(cj.at("max_abs_mam_hjb").get<double>() < 0.05);
}

TEST_CASE("multiwell command writes the cost matrix and graph potentials") {
  const fs::path dir = fresh_dir("mw");
  json j{{"system", "asymdoublewell1d"},
         {"command", "multiwell"},
         {"out", dir.string()},
         {"seed", 3},
         {"mam", small_mam()},
         {"multiwell", {{"simulate", true}, {"rho", 0.2}}},
         {"sim", {{"eps", 0.25}, {"steps", 6000000}, {"dt", 2e-3}, {"x0", {-0.95}}}}};
  CHECK(run(parse_config_json(j)) == 0);
  auto g = json::parse(read_file((dir / "graph.json").string()));
  CHECK(g.at("J").get<int>() == 3);
  // deep well (largest x) has W = 0; shallow well has W > 0
  CHECK(g.at("W")[2].get<double>() == doctest::Approx(0.0));
  CHECK(g.at("W")[0].get<double>() > 0.1);
  auto v = json::parse(read_file((dir / "verdict.json").string()));
  CHECK(v.at("exponent_ordering_matches").get<bool>());
  const std::string csv = read_file((dir / "costmatrix.csv").string());
  CHECK(csv.rfind("from,to_0,to_1,to_2\n", 0) == 0);
}

TEST_CASE("output directories are never overwritten silently") {
  const fs::path dir = fresh_dir("ow");
  json j{{"system", "ou1d"}, {"command", "equilibria"}, {"out", dir.string()}};
  CHECK(run(parse_config_json(j)) == 0);
  CHECK_THROWS_AS(run(parse_config_json(j)), ConfigError);
  j["overwrite"] = true;
  CHECK(run(parse_config_json(j)) == 0);
}

TEST_CASE("fixed seed makes artifacts byte-identical across runs") {
  for (const json& j : {
           json{{"system", "doublewell1d"},
                {"command", "simulate"},
                {"out", ""},
                {"seed", 20},
                {"sim", {{"eps", 0.4}, {"steps", 300000}, {"bins", 50},
                          {"balls", true}, {"rho", 0.2},
                          {"hitting", true}, {"hit_start", {-1.0}},
                          {"hit_targets", json::array({{{"center", {1.0}}, {"rho", 0.2}}})},
                          {"hit_runs", 6}, {"hit_cap", 100.0}}}},
           json{{"system", "ou1d"},
                {"command", "quasipotential"},
                {"out", ""},
                {"seed", 21},
                {"mam", small_mam()}}}) {
    json cfg = j;
    if (cfg.at("command") == "quasipotential") cfg["mam"]["to"] = {1.0};
    const fs::path dir = fresh_dir("det");
    cfg["out"] = dir.string();
    CHECK(run(parse_config_json(cfg)) == 0);
    auto first = artifact_checksums(dir);
    fs::remove_all(dir);
    CHECK(run(parse_config_json(cfg)) == 0);
    CHECK(artifact_checksums(dir) == first);
  }
}

TEST_CASE("binary end-to-end: exit codes 0 and 2") {
  const char* bin = std::getenv("QP_BIN");
  REQUIRE(bin != nullptr);
  const fs::path dir = fresh_dir("bin");
  const fs::path cfg = fs::temp_directory_path() / "qp_cli_bin_cfg.json";
  {
    std::ofstream out(cfg);
    out << json{{"system", "ou1d"}, {"command", "equilibria"}, {"out", dir.string()}}.dump();
  }
  const std::string cmd = std::string(bin) + " equilibria --config " + cfg.string() +
                          " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(rc) == 0);

  // conflicting command on the command line: config error
  const std::string cmd2 = std::string(bin) + " simulate --config " + cfg.string() +
                           " > /dev/null 2>&1";
  rc = std::system(cmd2.c_str());
  CHECK(WEXITSTATUS(rc) == 2);

  // unknown key injected via a dotted override: config error
  const std::string cmd3 = std::string(bin) + " equilibria --config " + cfg.string() +
                           " --overwrite --sim.epsilonn 0.2 > /dev/null 2>&1";
  rc = std::system(cmd3.c_str());
  CHECK(WEXITSTATUS(rc) == 2);

  // dotted override steers a real field
  const fs::path dir2 = fresh_dir("bin2");
  const std::string cmd4 = std::string(bin) + " equilibria --config " + cfg.string() +
                           " --out " + dir2.string() + " --equilibria.n_starts 37" +
                           " > /dev/null 2>&1";
  rc = std::system(cmd4.c_str());
  CHECK(WEXITSTATUS(rc) == 0);
  CHECK(fs::exists(dir2 / "equilibria.json"));
}
