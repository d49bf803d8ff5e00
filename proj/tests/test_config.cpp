#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lalg/config.hpp"

using namespace lalg;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
  fs::path p = fs::temp_directory_path() / ("lalg_test_" + name + ".ini");
  std::ofstream(p) << text;
  return p;
}

const char* kSo3 = R"([params]
samples = 30

[algebroid:g]
kind = lie_algebra
constants = so3

[task:jacobi]
type = check
algebroid = g
samples = ${samples}
)";

}  // namespace

TEST_CASE("so(3) check task passes with zero residual") {
  Workspace ws(load_config(write_temp("so3", kSo3)));
  ws.validate();
  auto r = ws.run_task("jacobi");
  CHECK(r.pass);
  CHECK(r.report["results"]["jacobi"].get<double>() < 1e-14);
  // a Lie algebra lives over a point, so one sample covers it
  CHECK(r.report["results"]["samples"] == 1);
  CHECK(r.report["task"]["samples"] == "30");
}

TEST_CASE("overrides change values, the echo and the hash") {
  auto p = write_temp("so3", kSo3);
  Config a = load_config(p), b = load_config(p, {"task:jacobi.samples=7"});
  CHECK(a.hash != b.hash);
  CHECK(a.hash == load_config(p).hash);
  Workspace ws(b);
  auto r = ws.run_task("jacobi");
  CHECK(r.report["task"]["samples"] == "7");
  CHECK(r.report["overrides"][0] == "task:jacobi.samples=7");
  CHECK_THROWS_AS(load_config(p, {"samples=3"}), ConfigError);
  CHECK_THROWS_AS(load_config(p, {"task:nothing.samples=3"}), ConfigError);
}

TEST_CASE("validation errors name the offending entity") {
  auto expect_error = [](const std::string& text, const std::string& needle) {
    try {
      Workspace ws(load_config(write_temp("bad", text)));
      ws.validate();
      FAIL("no error for: " << text);
    } catch (const ConfigError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  expect_error("[task:t]\ntype = check\nalgebroid = nowhere\n", "nowhere");
  expect_error("[algebroid:a]\nkind = tangent\nchart = c\n", "chart named 'c'");
  expect_error("[chart:c]\ncoords = x\n[algebroid:a]\nkind = twisted\nchart = c\n", "unknown kind 'twisted'");
  expect_error("[cube:a]\nkind = reverse\nof = b\n[cube:b]\nkind = reverse\nof = a\n", "circular");
  expect_error("[algebroid:a]\nkind = product\nbase = a\nfactor = a\n", "circular");
  expect_error("[widget:a]\nx = 1\n", "unknown section kind");
  expect_error("[chart:c]\ncoords = x\nlo = 1\nhi = 0\n", "hi must not be below lo");
  expect_error("[chart:c]\ncoords = x, y\n[algebroid:a]\nkind = cotangent_poisson\nchart = c\npi_1_2 = x +\n",
               "pi_1_2");
  expect_error("[task:t]\ntype = check\nalgebroid = ${missing}\n", "unknown parameter 'missing'");
}

TEST_CASE("parameters expand inside other parameters") {
  Config c = load_config(write_temp("params", "[params]\na = 2\nb = ${a}*x\n[chart:c]\ncoords = x\n"
                                              "[algebroid:p]\nkind = lie_algebra\ndim = 2\nconstants = 1 2 1 ${a}\n"));
  Workspace ws(c);
  CHECK(ws.algebroid("p").rank() == 2);
  CHECK(c.tree.get_child("params").get<std::string>("b") == "2*x");
}

TEST_CASE("empty config describes to an empty table") {
  Workspace ws(load_config(write_temp("empty", "")));
  std::ostringstream os;
  ws.describe(os);
  std::string text = os.str();
  CHECK(text.find("entity") == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
}

TEST_CASE("shipped configs validate and describe") {
  for (const auto& e : fs::directory_iterator(LALG_CONFIG_DIR)) {
    if (e.path().extension() != ".ini") continue;
    CAPTURE(e.path().string());
    Workspace ws(load_config(e.path()));
    std::ostringstream os;
    CHECK_NOTHROW(ws.describe(os));
    CHECK(os.str().find("task") != std::string::npos);
  }
}

TEST_CASE("reports are written atomically with sorted keys") {
  fs::path dir = fs::temp_directory_path() / "lalg_test_reports";
  fs::remove_all(dir);
  std::ostringstream log;
  CHECK(run_config(load_config(write_temp("so3", kSo3)), dir, log) == 0);
  std::ifstream in(dir / "jacobi.json");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"checks\"") < text.find("\"config_hash\""));
  CHECK(text.find("\"config_hash\"") < text.find("\"wall_time\""));
  CHECK_FALSE(fs::exists(dir / "jacobi.json.tmp"));
  CHECK(log.str().find("PASS jacobi") == 0);
}
