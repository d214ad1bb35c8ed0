#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "json.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string env_or_fail(const char* name) {
  const char* v = std::getenv(name);
  REQUIRE_MESSAGE(v != nullptr, "missing env var ", name);
  return v;
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("bimkit_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Runs a command, returns its exit code; stdout/stderr go to a log file so
// test output stays readable.
int run(const std::string& cmd, const fs::path& log_dir,
        const std::string& log_name = "") {
  static int call = 0;
  const std::string name =
      log_name.empty() ? "cmd_" + std::to_string(call++) + ".log" : log_name;
  const auto log = log_dir / name;
  const int status =
      std::system((cmd + " >'" + log.string() + "' 2>&1").c_str());
  if (status == -1) return -1;
  return WEXITSTATUS(status);
}

std::string quoted(const std::string& s) { return "'" + s + "'"; }

json load_json(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE_MESSAGE(in.good(), "cannot open ", p.string());
  json j;
  in >> j;
  return j;
}

}  // namespace

TEST_CASE("help and usage errors") {
  TempDir dir;
  const std::string cli = env_or_fail("BIMKIT_CLI");
  CHECK(run(cli + " ingest --help", dir.path) == 0);
  CHECK(run(cli + " --help", dir.path) == 0);
  CHECK(run(cli + " frobnicate", dir.path) == 1);
  CHECK(run(cli + " ingest --no-such-flag", dir.path) == 1);
  CHECK(run(cli, dir.path) == 1);
}

TEST_CASE("full pipeline on a generated synthetic city") {
  TempDir dir;
  const std::string cli = env_or_fail("BIMKIT_CLI");
  const std::string synthgen = env_or_fail("BIMKIT_SYNTHGEN");
  const auto city = dir.path / "city";

  REQUIRE(run(synthgen + " --out " + quoted(city.string()) + " --count 250",
              dir.path) == 0);
  const std::string cfg = " --config " + quoted((city / "config.json").string());

  REQUIRE(run(cli + cfg + " ingest", dir.path) == 0);
  CHECK(fs::exists(city / "out/metadata_inventory.geojson"));
  CHECK(fs::exists(city / "out/vision_inventory.geojson"));
  CHECK(fs::exists(city / "out/rejects_metadata.jsonl"));

  REQUIRE(run(cli + cfg + " geocode", dir.path) == 0);
  CHECK(fs::exists(city / "out/geocoded_inventory.geojson"));
  CHECK(fs::exists(city / "out/geocode_cache.jsonl"));

  REQUIRE(run(cli + cfg + " merge", dir.path) == 0);
  CHECK(fs::exists(city / "out/merged_inventory.geojson"));

  // Every record is geocoded after the file-provider pass, and the
  // interchange keeps the original record order.
  const json merged = load_json(city / "out/merged_inventory.geojson");
  size_t nogeo = 0;
  for (const auto& f : merged["features"])
    if (f["geometry"].is_null()) ++nogeo;
  CHECK(nogeo == 0);
  REQUIRE(merged["features"].size() == 250);
  for (int i = 0; i < 250; ++i)
    CHECK(merged["features"][i]["properties"]["id"] ==
          "B" + std::to_string(i + 1));

  REQUIRE(run(cli + cfg + " impute --jobs 2", dir.path) == 0);
  const json imputed = load_json(city / "out/imputed_inventory.geojson");
  size_t missing = 0, imputed_count = 0;
  for (const auto& f : imputed["features"]) {
    if (!f["properties"]["attributes"].contains("ss_probability")) ++missing;
    else if (f["properties"]["attributes"]["ss_probability"]["provenance"]
                 ["source"] == "imputed")
      ++imputed_count;
  }
  CHECK(missing == 0);
  CHECK(imputed_count > 0);

  REQUIRE(run(cli + cfg + " cross-validate --attribute stories --folds 4",
              dir.path) == 0);
  const json cv = load_json(city / "out/cv_report.json");
  CHECK(cv["attribute"] == "stories");
  CHECK(cv["folds"] == 4);
  CHECK(cv["metrics"].contains("rmse"));

  REQUIRE(run(cli + cfg + " selftrain", dir.path) == 0);
  const json rounds = load_json(city / "out/selftrain_report.json");
  CHECK(rounds.is_array());
  CHECK(!rounds.empty());
  CHECK(rounds[0].contains("eval"));
  CHECK(fs::exists(city / "out/selftrain_model.json"));
  CHECK(fs::exists(city / "out/selftrain_labeled.csv"));

  REQUIRE(run(cli + cfg + " rasterize --jobs 2", dir.path) == 0);
  CHECK(fs::exists(city / "out/ss_heatmap.asc"));
  CHECK(fs::exists(city / "out/ss_cells.geojson"));

  REQUIRE(run(cli + cfg + " report", dir.path) == 0);
  const json report = load_json(city / "out/report.json");
  CHECK(report["inventories"].contains("imputed_inventory"));
  const auto& ss = report["inventories"]["imputed_inventory"]["attributes"]
                         ["ss_probability"];
  CHECK(ss["missing"] == 0);
  CHECK(report.contains("cv_report"));
  CHECK(report.contains("selftrain_report"));

  SUBCASE("outputs are not overwritten without --force") {
    CHECK(run(cli + cfg + " merge", dir.path) == 1);
    CHECK(run(cli + cfg + " merge --force", dir.path) == 0);
  }
}

TEST_CASE("train and metrics subcommands") {
  TempDir dir;
  const std::string cli = env_or_fail("BIMKIT_CLI");
  const std::string synthgen = env_or_fail("BIMKIT_SYNTHGEN");
  const auto city = dir.path / "city";
  REQUIRE(run(synthgen + " --out " + quoted(city.string()) + " --count 60",
              dir.path) == 0);

  const auto model_path = dir.path / "model.json";
  REQUIRE(run(cli + " train --labeled " +
                  quoted((city / "selftrain_seed.csv").string()) +
                  " --out-model " + quoted(model_path.string()) +
                  " --hidden 8 --lr 0.15 --stage1-epochs 10 --stage2-epochs 40"
                  " --seed 3",
              dir.path) == 0);
  const json model = load_json(model_path);
  CHECK(model["layer_sizes"].size() == 3);

  // metrics from a hand-written prediction CSV.
  const auto pred_csv = dir.path / "preds.csv";
  std::ofstream(pred_csv) << "id,prediction,label\na,1,1\nb,1,0\nc,0,1\nd,0,0\n"
                             "e,1,1\n";
  const auto out = dir.path / "metrics.json";
  REQUIRE(run(cli + " metrics --input " + quoted(pred_csv.string()) + " --out " +
                  quoted(out.string()),
              dir.path) == 0);
  const json m = load_json(out);
  CHECK(m["tp"] == 2);
  CHECK(m["fp"] == 1);
  CHECK(m["fn"] == 1);
  CHECK(m["tn"] == 1);
  CHECK(m["accuracy"] == doctest::Approx(0.6));
}

TEST_CASE("malformed user inputs exit 1, not 2") {
  TempDir dir;
  const std::string cli = env_or_fail("BIMKIT_CLI");

  SUBCASE("non-numeric feature in a labeled CSV") {
    const auto bad = dir.path / "bad.csv";
    std::ofstream(bad) << "id,f1,f2,label\na,1.0,oops,1\n";
    CHECK(run(cli + " train --labeled " + quoted(bad.string()) +
                  " --out-model " + quoted((dir.path / "m.json").string()),
              dir.path) == 1);
  }
  SUBCASE("non-integer label") {
    const auto bad = dir.path / "bad2.csv";
    std::ofstream(bad) << "id,f1,f2,label\na,1.0,2.0,yes\n";
    CHECK(run(cli + " train --labeled " + quoted(bad.string()) +
                  " --out-model " + quoted((dir.path / "m.json").string()),
              dir.path) == 1);
  }
  SUBCASE("broken config JSON") {
    const auto cfg = dir.path / "cfg.json";
    std::ofstream(cfg) << "{ not json";
    CHECK(run(cli + " --config " + quoted(cfg.string()) + " report",
              dir.path) == 1);
  }
  SUBCASE("config with wrong value types") {
    const auto cfg = dir.path / "cfg2.json";
    std::ofstream(cfg) << R"({"paths": {"metadata_csv": 42}})";
    CHECK(run(cli + " --config " + quoted(cfg.string()) + " ingest",
              dir.path) == 1);
  }
  SUBCASE("metrics with non-class values") {
    const auto bad = dir.path / "preds.csv";
    std::ofstream(bad) << "id,prediction,label\na,0.7,1\n";
    CHECK(run(cli + " metrics --input " + quoted(bad.string()), dir.path) == 1);
  }
}

TEST_CASE("bundled dataset regenerates byte-identically from defaults") {
  TempDir dir;
  const std::string synthgen = env_or_fail("BIMKIT_SYNTHGEN");
  const fs::path bundled = fs::path(env_or_fail("BIMKIT_DATA_DIR")) /
                           "synthetic_city";
  REQUIRE(fs::exists(bundled / "config.json"));
  const auto fresh = dir.path / "fresh";
  REQUIRE(run(synthgen + " --out " + quoted(fresh.string()), dir.path) == 0);

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(bundled)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename();
    CAPTURE(name.string());
    REQUIRE(fs::exists(fresh / name));
    CHECK(slurp(entry.path()) == slurp(fresh / name));
    ++compared;
  }
  CHECK(compared == 7);
}

TEST_CASE("impute with insufficient data exits 1 with the documented message") {
  TempDir dir;
  const std::string cli = env_or_fail("BIMKIT_CLI");

  // Hand-written inventory with only 3 known values.
  json features = json::array();
  for (int i = 0; i < 5; ++i) {
    json f;
    f["type"] = "Feature";
    f["geometry"] = {{"type", "Point"}, {"coordinates", {-122.0 + 0.001 * i, 37.0}}};
    f["properties"] = {{"id", "B" + std::to_string(i)},
                       {"attributes", json::object()}};
    if (i < 3)
      f["properties"]["attributes"]["stories"] = {
          {"kind", "numeric"},
          {"value", 2},
          {"provenance", {{"source", "metadata"}}}};
    features.push_back(f);
  }
  const json doc{{"type", "FeatureCollection"},
                 {"schema", {{"stories", "numeric"}}},
                 {"features", features}};
  const auto inv_path = dir.path / "tiny.geojson";
  std::ofstream(inv_path) << doc.dump(2);

  const auto out_path = dir.path / "out.geojson";
  const int code = run(cli + " impute --in " + quoted(inv_path.string()) +
                           " --out " + quoted(out_path.string()) +
                           " --attribute stories --engine kriging",
                       dir.path, "impute_tiny.log");
  CHECK(code == 1);
  // The message names the attribute and the count.
  std::ifstream log(dir.path / "impute_tiny.log");
  std::string text((std::istreambuf_iterator<char>(log)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("stories") != std::string::npos);
  CHECK(text.find("3") != std::string::npos);
}
