#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "torusmix/experiment.hpp"

using namespace torusmix;
using nlohmann::json;

namespace {

json base_config() {
  return json::parse(R"({
    "experiment": "clt",
    "family": {"type": "trig"},
    "schedule": {"type": "constant", "L": 1e4},
    "eta": 0.75,
    "alpha": 1.0,
    "observables": ["cos_x"],
    "ensemble": {"samples": 400, "time": 50},
    "out": "test_artifacts/clt",
    "seed": 9
  })");
}

}  // namespace

TEST_CASE("config parsing reads fields and round-trips", "[experiment]") {
  json j = base_config();
  j["schedule"] = {{"type", "polynomial"}, {"L0", 1000.0}, {"power", 6.0},
                   {"cap", 1e12}, {"horizon", 40}};
  j["times"] = {8, 16};
  j["coefficients"] = {1e3, 1e4};
  j["square"] = {{"corner_x", 0.45}, {"corner_y", 0.3}, {"side", 0.1}};
  j["threads"] = 2;
  ExperimentConfig cfg = parse_config(j);
  CHECK(cfg.kind == "clt");
  CHECK(cfg.schedule == "polynomial");
  CHECK(cfg.coefficient == 1000.0);
  CHECK(cfg.power == 6.0);
  CHECK(cfg.cap == 1e12);
  CHECK(cfg.horizon == 40);
  CHECK(cfg.time_list == std::vector<int>{8, 16});
  CHECK(cfg.coefficient_list == std::vector<double>{1e3, 1e4});
  CHECK(cfg.side == 0.1);
  CHECK(cfg.samples == 400);
  CHECK(cfg.time_n == 50);
  CHECK(cfg.seed == 9);
  CHECK(cfg.threads == 2);

  ExperimentConfig again = parse_config(config_to_json(cfg));
  CHECK(config_to_json(again) == config_to_json(cfg));
}

TEST_CASE("config rejection diagnostics name the offending field",
          "[experiment]") {
  json j = base_config();
  j["eta"] = 0.4;
  CHECK_THROWS_WITH(parse_config(j),
                    Catch::Matchers::ContainsSubstring("eta must lie in (1/2, 1)"));
  j = base_config();
  j["eta"] = 1.0;
  CHECK_THROWS_AS(parse_config(j), ConfigError);

  j = base_config();
  j["alpha"] = 0.0;
  CHECK_THROWS_WITH(parse_config(j),
                    Catch::Matchers::ContainsSubstring("alpha must lie in (0, 1]"));

  j = base_config();
  j["experiment"] = "resonance";
  CHECK_THROWS_WITH(parse_config(j),
                    Catch::Matchers::ContainsSubstring("unknown experiment kind"));

  j = base_config();
  j["observables"] = {"tan_x"};
  CHECK_THROWS_WITH(parse_config(j),
                    Catch::Matchers::ContainsSubstring("unknown observable id"));

  j = base_config();
  j["spin"] = 1;
  CHECK_THROWS_WITH(parse_config(j),
                    Catch::Matchers::ContainsSubstring("unknown config field: spin"));

  j = base_config();
  j["eta"] = "large";
  CHECK_THROWS_WITH(parse_config(j),
                    Catch::Matchers::ContainsSubstring("must be a number"));

  j = base_config();
  j.erase("experiment");
  CHECK_THROWS_AS(parse_config(j), ConfigError);

  j = base_config();
  j["family"] = {{"type", "cubic"}};
  CHECK_THROWS_AS(parse_config(j), ConfigError);

  CHECK_THROWS_WITH(load_config("does_not_exist.json"),
                    Catch::Matchers::ContainsSubstring("cannot read config file"));
}

TEST_CASE("preset registry covers the documented suite", "[experiment]") {
  const char* expected[] = {"linear-oracle",      "clt-constant-L",
                            "coboundary-degenerate", "sigma-tail-square",
                            "finite-time-mixing", "strong-law-p14",
                            "birkhoff-l2-p32",    "clt-growing-p56",
                            "square-mixing-p18"};
  for (const char* name : expected) {
    const Preset& p = find_preset(name);
    CHECK(p.name == name);
    CHECK_FALSE(p.note.empty());
    CHECK_FALSE(p.runtime.empty());
    CHECK_NOTHROW(validate_config(p.config));
  }
  CHECK_THROWS_AS(find_preset("unknown"), ConfigError);
  std::string listing = preset_listing();
  CHECK(listing.find("sigma-tail-square") != std::string::npos);
  CHECK(listing.find("coboundary-degenerate") != std::string::npos);
  CHECK(listing.find("finite-time-mixing") != std::string::npos);
}

TEST_CASE("linear oracle preset passes end to end", "[experiment]") {
  RunResult run = run_experiment(find_preset("linear-oracle").config);
  REQUIRE_FALSE(run.table.rows.empty());
  CHECK(run.table.all_pass());
  bool saw_children = false, saw_excised = false;
  for (const ResultRow& r : run.table.rows) {
    if (r.experiment == "crossing-split.children") {
      saw_children = true;
      CHECK(r.estimate == 10.0);
    }
    if (r.experiment == "crossing-split.excised") {
      saw_excised = true;
      CHECK(r.estimate <= 1e-12);
    }
  }
  CHECK(saw_children);
  CHECK(saw_excised);
  CHECK(run.wall_seconds >= 0.0);
}

TEST_CASE("dispatch smoke runs for analysis kinds", "[experiment]") {
  ExperimentConfig hyp;
  hyp.kind = "hypotheses";
  hyp.coefficient_list = {1e3, 1e4};
  ResultTable ht = run_experiment(hyp).table;
  REQUIRE(ht.rows.size() == 6);
  CHECK(ht.all_pass());
  CHECK(ht.rows[1].experiment == "hypotheses.m0");
  CHECK(ht.rows[1].estimate == 2.0);

  ExperimentConfig lya;
  lya.kind = "lyapunov";
  lya.coefficient = 1e4;
  lya.time_n = 30;
  lya.samples = 500;
  ResultTable lt = run_experiment(lya).table;
  REQUIRE(lt.rows.size() == 1);
  CHECK(lt.rows[0].pass);
  CHECK(lt.rows[0].theory == Catch::Approx(std::log(1e4)));
  CHECK(lt.rows[0].fitted_c ==
        Catch::Approx(std::log(std::numbers::pi)).margin(0.25));

  ExperimentConfig sl;
  sl.kind = "singular-limit";
  sl.coefficient_list = {1e3};
  sl.budget = 30000;
  ResultTable st = run_experiment(sl).table;
  REQUIRE(st.rows.size() == 1);
  CHECK(st.rows[0].pass);
  CHECK(st.rows[0].params.find("limit=0.5") != std::string::npos);

  ExperimentConfig pro;
  pro.kind = "proliferation";
  pro.family = "linear";
  pro.coefficient = 10.0;
  pro.k1 = 0.05;
  pro.corner_x = 0.45;
  pro.corner_y = 0.3;
  pro.side = 0.01;
  pro.time_list = {4};
  pro.samples = 2000;
  ResultTable pt = run_experiment(pro).table;
  REQUIRE(pt.rows.size() == 1);
  CHECK(pt.rows[0].estimate == 1.0);
  CHECK(pt.rows[0].pass);

  ExperimentConfig stp;
  stp.kind = "stopping-times";
  stp.coefficient = 1e4;
  stp.time_n = 12;
  stp.samples = 3000;
  ResultTable tt = run_experiment(stp).table;
  bool saw_order = false;
  for (const ResultRow& r : tt.rows)
    if (r.experiment == "stopping-times.order") {
      saw_order = true;
      CHECK(r.estimate == 0.0);
      CHECK(r.pass);
    }
  CHECK(saw_order);
}

TEST_CASE("identical seeds give identical tables at any thread count",
          "[experiment]") {
  ExperimentConfig cfg = parse_config(base_config());
  cfg.threads = 1;
  std::string csv1 = run_experiment(cfg).table.to_csv();
  cfg.threads = 3;
  std::string csv2 = run_experiment(cfg).table.to_csv();
  cfg.threads = 0;
  std::string csv3 = run_experiment(cfg).table.to_csv();
  CHECK(csv1 == csv2);
  CHECK(csv1 == csv3);
}

TEST_CASE("artifacts round-trip through the report digest", "[experiment]") {
  namespace fs = std::filesystem;
  fs::path dir = fs::path("test_artifacts") / "oracle";
  fs::remove_all(dir);

  ExperimentConfig cfg = find_preset("linear-oracle").config;
  cfg.out_dir = dir.string();
  RunResult run = run_experiment(cfg);
  write_artifacts(run);
  REQUIRE(fs::exists(dir / "results.csv"));
  REQUIRE(fs::exists(dir / "manifest.json"));

  {
    std::ifstream in(dir / "results.csv", std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    CHECK(text == run.table.to_csv());
  }
  {
    std::ifstream in(dir / "manifest.json", std::ios::binary);
    nlohmann::json man;
    in >> man;
    CHECK(man["schema_version"] == 1);
    CHECK(man["experiment"] == "crossing-split");
    CHECK(man["all_pass"] == true);
    CHECK(man["seed"] == cfg.seed);
    CHECK(man["rows"] == run.table.rows.size());
    CHECK(man["config"]["family"]["type"] == "linear");
  }

  std::string digest = emit_report(dir.string());
  CHECK(digest.rfind("PASS 4/4", 0) == 0);

  CHECK_THROWS_WITH(emit_report("test_artifacts/nowhere"),
                    Catch::Matchers::ContainsSubstring("missing run artifacts"));

  RunResult failing = run;
  failing.config.out_dir = (fs::path("test_artifacts") / "failing").string();
  failing.table.rows[1].pass = false;
  write_artifacts(failing);
  std::string bad = emit_report(failing.config.out_dir);
  CHECK(bad.rfind("FAIL 3/4", 0) == 0);
  CHECK(bad.find(failing.table.rows[1].experiment) != std::string::npos);

  RunResult empty;
  empty.config = cfg;
  empty.config.out_dir = (fs::path("test_artifacts") / "empty").string();
  write_artifacts(empty);
  std::string none = emit_report(empty.config.out_dir);
  CHECK(none.find("no rows") != std::string::npos);
}
