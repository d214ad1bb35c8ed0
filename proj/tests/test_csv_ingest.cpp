#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "bimkit/csv.hpp"
#include "bimkit/ingest.hpp"
#include "bimkit/rng.hpp"

using namespace bimkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("bimkit_ingest_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name, const std::string& content) const {
    const auto p = (path / name).string();
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
  }
};

CsvSchemaSpec metadata_spec() {
  CsvSchemaSpec spec;
  spec.id_column = "id";
  spec.address_column = "address";
  spec.lat_column = "lat";
  spec.lon_column = "lon";
  spec.attributes = {{"stories", AttributeKind::Numeric, std::nullopt},
                     {"material", AttributeKind::Categorical, std::nullopt}};
  return spec;
}

}  // namespace

TEST_CASE("csv parser") {
  const auto t = parse_csv_text("a,b,c\n1,\"x,y\",3\n4,\"he said \"\"hi\"\"\",6\n");
  CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "x,y");
  CHECK(t.rows[1][1] == "he said \"hi\"");
  CHECK(t.row_lines == std::vector<size_t>{2, 3});

  SUBCASE("quoted newline keeps line numbers right") {
    const auto q = parse_csv_text("a,b\n\"multi\nline\",2\n3,4\n");
    REQUIRE(q.rows.size() == 2);
    CHECK(q.rows[0][0] == "multi\nline");
    CHECK(q.row_lines == std::vector<size_t>{2, 4});
  }
  SUBCASE("crlf and missing trailing newline") {
    const auto q = parse_csv_text("a,b\r\n1,2\r\n3,4");
    REQUIRE(q.rows.size() == 2);
    CHECK(q.rows[1][1] == "4");
  }
  SUBCASE("escape round-trip") {
    Rng rng(3);
    const std::string chars = "ab,\"\n x";
    for (int trial = 0; trial < 50; ++trial) {
      std::string field;
      for (int i = 0; i < 8; ++i) field += chars[rng.index(chars.size())];
      const auto parsed = parse_csv_text("h\n" + csv_escape(field) + "\n");
      REQUIRE(parsed.rows.size() == 1);
      CHECK(parsed.rows[0][0] == field);
    }
  }
}

TEST_CASE("parse_metadata_csv") {
  TempDir dir;
  SUBCASE("0-row file with valid header gives empty inventory") {
    const auto path = dir.file("m.csv", "id,address,lat,lon,stories,material\n");
    const auto result = parse_metadata_csv(path, metadata_spec());
    CHECK(result.inventory.size() == 0);
    CHECK(result.rejects.empty());
  }
  SUBCASE("direct mapping with provenance Metadata") {
    const auto path = dir.file(
        "m.csv", "id,address,lat,lon,stories,material\n"
                 "B1,12 Oak St,37.1,-122.1,2,wood\n");
    const auto result = parse_metadata_csv(path, metadata_spec());
    REQUIRE(result.inventory.size() == 1);
    const auto* rec = result.inventory.find("B1");
    CHECK(std::get<NumericValue>(rec->attributes.at("stories").value).value == 2.0);
    CHECK(std::get<CategoricalValue>(rec->attributes.at("material").value).label ==
          "wood");
    CHECK(std::holds_alternative<MetadataSource>(
        rec->attributes.at("stories").provenance));
    CHECK(rec->geocode->lat == 37.1);
    CHECK(rec->address == "12 Oak St");
  }
  SUBCASE("empty cells mean absent") {
    const auto path = dir.file("m.csv",
                               "id,address,lat,lon,stories,material\n"
                               "B1,,,,,\n");
    const auto result = parse_metadata_csv(path, metadata_spec());
    const auto* rec = result.inventory.find("B1");
    REQUIRE(rec != nullptr);
    CHECK(rec->attributes.empty());
    CHECK_FALSE(rec->geocode.has_value());
    CHECK_FALSE(rec->address.has_value());
  }
  SUBCASE("missing declared column is a schema error naming it") {
    const auto path = dir.file("m.csv", "id,address,lat,lon,stories\nB1,x,1,2,3\n");
    try {
      parse_metadata_csv(path, metadata_spec());
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("material") != std::string::npos);
    }
  }
  SUBCASE("bad rows are rejected with line numbers, parsing continues") {
    const auto path = dir.file("m.csv",
                               "id,address,lat,lon,stories,material\n"
                               "B1,a,37.0,-122.0,2,wood\n"
                               "B2,b,37.0,-122.0,two,wood\n"
                               "B3,c,999,-122.0,3,brick\n"
                               "B1,d,37.0,-122.0,4,steel\n"
                               ",e,37.0,-122.0,5,wood\n"
                               "B4,f,37.0,-122.0,6\n"
                               "B5,g,37.0,-122.0,7,concrete\n");
    const auto result = parse_metadata_csv(path, metadata_spec());
    CHECK(result.inventory.size() == 2);  // B1, B5
    REQUIRE(result.rejects.size() == 5);
    CHECK(result.rejects[0].line == 3);  // non-numeric stories
    CHECK(result.rejects[1].line == 4);  // lat out of range
    CHECK(result.rejects[2].line == 5);  // duplicate id
    CHECK(result.rejects[3].line == 6);  // empty id
    CHECK(result.rejects[4].line == 7);  // wrong field count
    CHECK(result.rejects[0].reason.find("stories") != std::string::npos);
  }
  SUBCASE("1000-row file: record count equals lines minus header minus rejects") {
    Rng rng(31);
    std::string content = "id,address,lat,lon,stories,material\n";
    int expected_rejects = 0;
    for (int i = 0; i < 1000; ++i) {
      const bool bad = rng.uniform() < 0.08;
      if (bad) {
        content += "R" + std::to_string(i) + ",a,37.0,-122.0,NOTANUMBER,wood\n";
        ++expected_rejects;
      } else {
        content += "R" + std::to_string(i) + ",a,37.0,-122.0,2,wood\n";
      }
    }
    const auto path = dir.file("big.csv", content);
    // Independent line counter.
    std::ifstream in(path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    const auto result = parse_metadata_csv(path, metadata_spec());
    CHECK(static_cast<int>(result.rejects.size()) == expected_rejects);
    CHECK(static_cast<int>(result.inventory.size()) ==
          lines - 1 - static_cast<int>(result.rejects.size()));
  }
  SUBCASE("determinism: identical bytes give identical inventories") {
    const auto path = dir.file("m.csv",
                               "id,address,lat,lon,stories,material\n"
                               "B1,a,37.0,-122.0,2,wood\nB2,b,37.1,-122.1,3,\n");
    const auto r1 = parse_metadata_csv(path, metadata_spec());
    const auto r2 = parse_metadata_csv(path, metadata_spec());
    CHECK(r1.inventory == r2.inventory);
  }
}

TEST_CASE("parse_vision_csv") {
  TempDir dir;
  CsvSchemaSpec spec;
  spec.id_column = "id";
  spec.attributes = {{"ss_label", AttributeKind::Categorical, std::nullopt}};

  SUBCASE("confidence from paired column") {
    const auto path = dir.file("v.csv",
                               "id,ss_label,ss_label_confidence\n"
                               "B1,soft-story,0.91\n");
    const auto result = parse_vision_csv(path, spec);
    const auto& attr = result.inventory.find("B1")->attributes.at("ss_label");
    CHECK(std::get<CategoricalValue>(attr.value).label == "soft-story");
    CHECK(std::get<VisionSource>(attr.provenance).confidence == 0.91);
  }
  SUBCASE("confidence column absent defaults to 1.0") {
    const auto path = dir.file("v.csv", "id,ss_label\nB1,soft-story\n");
    const auto result = parse_vision_csv(path, spec);
    const auto& attr = result.inventory.find("B1")->attributes.at("ss_label");
    CHECK(std::get<VisionSource>(attr.provenance).confidence == 1.0);
  }
  SUBCASE("mixed valid and invalid confidences: rejects match hand count") {
    const auto path = dir.file("v.csv",
                               "id,ss_label,ss_label_confidence\n"
                               "B1,ss,0.5\n"
                               "B2,ss,1.5\n"
                               "B3,ss,-0.1\n"
                               "B4,ss,0.99\n"
                               "B5,ss,nope\n");
    const auto result = parse_vision_csv(path, spec);
    CHECK(result.inventory.size() == 2);
    CHECK(result.rejects.size() == 3);
  }
}

TEST_CASE("rejects report is JSON lines") {
  TempDir dir;
  const auto path = (dir.path / "rejects.jsonl").string();
  write_rejects_report({{3, "bad"}, {9, "worse"}}, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(nlohmann::json::parse(line) == nlohmann::json({{"line", 3}, {"reason", "bad"}}));
  std::getline(in, line);
  CHECK(nlohmann::json::parse(line)["line"] == 9);
}

TEST_CASE("geojson export") {
  TempDir dir;
  const std::map<std::string, AttributeKind> schema{
      {"stories", AttributeKind::Numeric},
      {"ss_probability", AttributeKind::Numeric}};

  SUBCASE("empty inventory gives empty features") {
    const auto path = (dir.path / "e.geojson").string();
    export_geojson(Inventory({}, schema), path);
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    CHECK(j["type"] == "FeatureCollection");
    CHECK(j["features"].empty());
  }
  SUBCASE("coordinates are [lon, lat]") {
    BuildingRecord rec;
    rec.id = "B1";
    rec.geocode = Geocode{37.5, -122.5};
    rec.attributes["stories"] =
        Attribute{NumericValue{3, std::nullopt}, MetadataSource{}};
    const auto path = (dir.path / "one.geojson").string();
    export_geojson(Inventory({rec}, schema), path);
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    REQUIRE(j["features"].size() == 1);
    CHECK(j["features"][0]["geometry"]["coordinates"][0] == -122.5);
    CHECK(j["features"][0]["geometry"]["coordinates"][1] == 37.5);
  }
  SUBCASE("record without geocode: skip vs fail") {
    BuildingRecord rec;
    rec.id = "B1";
    const Inventory inv({rec}, schema);
    const auto path = (dir.path / "s.geojson").string();
    const auto stats = export_geojson(inv, path, MissingGeocodePolicy::Skip);
    CHECK(stats.written == 0);
    CHECK(stats.skipped_ids == std::vector<std::string>{"B1"});
    CHECK_THROWS_AS(export_geojson(inv, path, MissingGeocodePolicy::Fail), Error);
  }
  SUBCASE("round-trip property on randomized inventories") {
    Rng rng(53);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<BuildingRecord> recs;
      const int n = 1 + static_cast<int>(rng.index(25));
      for (int i = 0; i < n; ++i) {
        BuildingRecord rec;
        rec.id = "r" + std::to_string(i);
        if (rng.uniform() < 0.7) rec.address = "addr, \"quoted\" " + std::to_string(i);
        rec.geocode = Geocode{rng.uniform(-89, 89), rng.uniform(-179, 179)};
        if (rng.uniform() < 0.8) {
          NumericValue num{rng.normal() * 100,
                           rng.uniform() < 0.3
                               ? std::optional<std::string>("m")
                               : std::nullopt};
          Provenance prov;
          switch (rng.index(3)) {
            case 0: prov = MetadataSource{}; break;
            case 1: prov = VisionSource{rng.uniform()}; break;
            default:
              prov = ImputedSource{static_cast<ImputeMethod>(rng.index(3)),
                                   rng.uniform(0, 5)};
          }
          rec.attributes["stories"] = Attribute{num, prov};
        }
        if (rng.uniform() < 0.5)
          rec.attributes["ss_probability"] =
              Attribute{NumericValue{rng.uniform(), std::nullopt},
                        VisionSource{rng.uniform()}};
        recs.push_back(std::move(rec));
      }
      const Inventory inv(recs, schema);
      const auto path = (dir.path / "prop.geojson").string();
      export_geojson(inv, path);
      CHECK(parse_geojson(path) == inv);
    }
  }
  SUBCASE("round-trip of 50 records preserves every attribute") {
    Rng rng(37);
    std::vector<BuildingRecord> recs;
    for (int i = 0; i < 50; ++i) {
      BuildingRecord rec;
      rec.id = "B" + std::to_string(i);
      rec.address = "addr " + std::to_string(i);
      rec.geocode = Geocode{37.0 + 0.001 * i, -122.0 - 0.001 * i};
      rec.attributes["stories"] = Attribute{
          NumericValue{static_cast<double>(1 + rng.index(20)), std::nullopt},
          MetadataSource{}};
      if (i % 2 == 0)
        rec.attributes["ss_probability"] =
            Attribute{NumericValue{rng.uniform(), std::nullopt},
                      i % 4 ? Provenance{VisionSource{0.8}}
                            : Provenance{ImputedSource{ImputeMethod::Kriging,
                                                       rng.uniform()}}};
      recs.push_back(std::move(rec));
    }
    const Inventory inv(recs, schema);
    const auto path = (dir.path / "rt.geojson").string();
    export_geojson(inv, path);
    const Inventory back = parse_geojson(path);
    CHECK(back == inv);
  }
}
