#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>
#include <unistd.h>

#include "httplib.h"
#include "json.hpp"

#include "bimkit/geocoder.hpp"

using namespace bimkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("bimkit_geo_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Instrumented provider: counts calls, serves a fixed table.
class MockProvider : public GeocodeProvider {
 public:
  std::atomic<int> calls{0};

  GeocodeResult resolve(const GeocodeRequest& req) override {
    ++calls;
    const std::string key = normalize_address(req.address);
    if (key == "1 main st") return {{37.0, -122.0}, MatchQuality::Exact};
    if (key == "2 side ave") return {{37.5, -122.5}, MatchQuality::Interpolated};
    throw NotFoundError("no match: " + req.address);
  }
  std::string name() const override { return "mock"; }
};

std::string write_table(const TempDir& dir) {
  const auto p = (dir.path / "table.csv").string();
  std::ofstream out(p);
  out << "address,lat,lon,quality\n";
  out << "1 Main St,37.0,-122.0,exact\n";
  out << "\"9 Pine St, Unit 2\",37.2,-122.2,approximate\n";
  return p;
}

}  // namespace

TEST_CASE("normalize_address") {
  CHECK(normalize_address("1 Main  St") == "1 main st");
  CHECK(normalize_address("  1\tMAIN st \n") == "1 main st");
  CHECK(normalize_address("") == "");
}

TEST_CASE("file provider") {
  TempDir dir;
  FileProvider provider(write_table(dir));
  SUBCASE("normalization rule maps messy addresses") {
    const auto res = provider.resolve({"1 Main  St", std::nullopt});
    CHECK(res.geocode.lat == 37.0);
    CHECK(res.geocode.lon == -122.0);
    CHECK(res.match_quality == MatchQuality::Exact);
  }
  SUBCASE("quoted address with comma") {
    const auto res = provider.resolve({"9 pine st, unit 2", std::nullopt});
    CHECK(res.match_quality == MatchQuality::Approximate);
  }
  SUBCASE("unknown address is NotFound") {
    CHECK_THROWS_AS(provider.resolve({"404 Nowhere", std::nullopt}), NotFoundError);
  }
  SUBCASE("empty address is an error") {
    CHECK_THROWS_AS(provider.resolve({"", std::nullopt}), Error);
  }
}

TEST_CASE("cache makes the second resolve free") {
  GeocodeCache cache(std::nullopt);
  MockProvider provider;
  CachingGeocoder geocoder(provider, cache);

  const auto r1 = geocoder.resolve({"1 Main St", std::nullopt});
  CHECK(provider.calls == 1);
  const auto r2 = geocoder.resolve({"1  MAIN  st", std::nullopt});  // same key
  CHECK(provider.calls == 1);  // zero provider calls for the cached address
  CHECK(r1.geocode == r2.geocode);
  geocoder.resolve({"2 Side Ave", std::nullopt});
  CHECK(provider.calls == 2);
}

TEST_CASE("cache persists as JSON lines and reloads") {
  TempDir dir;
  const auto cache_path = (dir.path / "cache.jsonl").string();
  {
    GeocodeCache cache(cache_path);
    MockProvider provider;
    CachingGeocoder geocoder(provider, cache);
    geocoder.resolve({"1 Main St", std::nullopt});
    geocoder.resolve({"2 Side Ave", std::nullopt});
    CHECK(provider.calls == 2);
  }
  // Every line is a standalone JSON object.
  std::ifstream in(cache_path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("address"));
    CHECK(j.contains("lat"));
    CHECK(j.contains("lon"));
    CHECK(j.contains("quality"));
    ++lines;
  }
  CHECK(lines == 2);

  // Warm start: no provider call at all.
  GeocodeCache cache(cache_path);
  CHECK(cache.size() == 2);
  MockProvider provider;
  CachingGeocoder geocoder(provider, cache);
  const auto res = geocoder.resolve({"1 main st", std::nullopt});
  CHECK(provider.calls == 0);
  CHECK(res.geocode.lat == 37.0);
}

TEST_CASE("cache serializes concurrent readers and writers") {
  GeocodeCache cache(std::nullopt);
  MockProvider provider;
  CachingGeocoder geocoder(provider, cache);
  std::vector<std::thread> threads;
  std::atomic<int> errors{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 200; ++i) {
        try {
          const auto res = geocoder.resolve({"1 Main St", std::nullopt});
          if (res.geocode.lat != 37.0) ++errors;
        } catch (...) {
          ++errors;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(errors == 0);
  CHECK(cache.size() == 1);
}

TEST_CASE("geocode_inventory fills geocodes, collects failures") {
  const std::map<std::string, AttributeKind> schema{
      {"stories", AttributeKind::Numeric}};
  auto make = [&](const std::string& id, std::optional<std::string> addr,
                  std::optional<Geocode> geo = std::nullopt) {
    BuildingRecord rec;
    rec.id = id;
    rec.address = std::move(addr);
    rec.geocode = geo;
    rec.attributes["stories"] =
        Attribute{NumericValue{2, std::nullopt}, MetadataSource{}};
    return rec;
  };

  MockProvider provider;
  GeocodeCache cache(std::nullopt);
  CachingGeocoder geocoder(provider, cache);

  SUBCASE("all resolvable: no failures") {
    const Inventory inv({make("A", "1 Main St"), make("B", "2 Side Ave")}, schema);
    const auto outcome = geocode_inventory(geocoder, inv);
    CHECK(outcome.failures.empty());
    CHECK(outcome.inventory.find("A")->geocode->lat == 37.0);
    CHECK(outcome.inventory.find("B")->geocode->lat == 37.5);
  }
  SUBCASE("none resolvable: inventory unchanged, all ids fail") {
    const Inventory inv({make("A", "x"), make("B", "y"), make("C", std::nullopt)},
                        schema);
    const auto outcome = geocode_inventory(geocoder, inv);
    CHECK(outcome.inventory == inv);
    CHECK(outcome.failures == std::vector<std::string>{"A", "B", "C"});
  }
  SUBCASE("10 records, 3 unresolvable") {
    std::vector<BuildingRecord> recs;
    for (int i = 0; i < 7; ++i)
      recs.push_back(make("ok" + std::to_string(i), "1 Main St"));
    for (int i = 0; i < 3; ++i)
      recs.push_back(make("bad" + std::to_string(i), "unknown addr"));
    const auto outcome = geocode_inventory(geocoder, Inventory(recs, schema));
    CHECK(outcome.failures.size() == 3);
  }
  SUBCASE("existing geocodes and attributes are never touched") {
    const Inventory inv({make("A", "1 Main St", Geocode{10, 20})}, schema);
    const auto outcome = geocode_inventory(geocoder, inv);
    CHECK(outcome.inventory == inv);
    CHECK(provider.calls == 0);
  }
}

TEST_CASE("http provider against a local server") {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::atomic<int> rate_limit_budget{0};  // first N requests get 429

  server.Get("/geocode", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    if (rate_limit_budget.fetch_sub(1) > 0) {
      res.status = 429;
      return;
    }
    const std::string addr = req.get_param_value("address");
    if (req.get_param_value("key") != "sekrit") {
      res.status = 403;
      return;
    }
    nlohmann::json body;
    if (normalize_address(addr) == "1 main st") {
      body = {{"status", "OK"}, {"lat", 37.0}, {"lon", -122.0},
              {"quality", "exact"}};
    } else {
      body = {{"status", "ZERO_RESULTS"}};
    }
    res.set_content(body.dump(), "application/json");
  });

  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RetryPolicy fast;
  fast.max_attempts = 3;
  fast.initial_backoff_ms = 1;

  SUBCASE("successful resolve") {
    HttpProvider provider("127.0.0.1", port, "/geocode", "sekrit", fast);
    const auto res = provider.resolve({"1 Main St", std::nullopt});
    CHECK(res.geocode.lat == 37.0);
    CHECK(res.match_quality == MatchQuality::Exact);
    CHECK(hits == 1);
  }
  SUBCASE("zero results maps to NotFound without retries") {
    HttpProvider provider("127.0.0.1", port, "/geocode", "sekrit", fast);
    hits = 0;
    CHECK_THROWS_AS(provider.resolve({"nowhere", std::nullopt}), NotFoundError);
    CHECK(hits == 1);
  }
  SUBCASE("rate limiting backs off and retries until success") {
    HttpProvider provider("127.0.0.1", port, "/geocode", "sekrit", fast);
    hits = 0;
    rate_limit_budget = 2;
    const auto res = provider.resolve({"1 Main St", std::nullopt});
    CHECK(res.geocode.lat == 37.0);
    CHECK(hits == 3);
  }
  SUBCASE("persistent rate limiting exhausts the retry cap") {
    HttpProvider provider("127.0.0.1", port, "/geocode", "sekrit", fast);
    hits = 0;
    rate_limit_budget = 100;
    try {
      provider.resolve({"1 Main St", std::nullopt});
      FAIL("expected TransportError");
    } catch (const TransportError& e) {
      CHECK(e.attempts == 3);
      CHECK(std::string(e.what()).find("rate limited") != std::string::npos);
    }
    CHECK(hits == 3);
  }
  SUBCASE("http error statuses surface as TransportError with attempts") {
    HttpProvider provider("127.0.0.1", port, "/geocode", "wrongkey", fast);
    try {
      provider.resolve({"1 Main St", std::nullopt});
      FAIL("expected TransportError");
    } catch (const TransportError& e) {
      CHECK(e.attempts == 3);
    }
  }
  SUBCASE("connection failure retries then raises TransportError") {
    // Nothing listens on the server's port + 1 (best effort).
    HttpProvider provider("127.0.0.1", 1, "/geocode", "sekrit", fast);
    CHECK_THROWS_AS(provider.resolve({"1 Main St", std::nullopt}), TransportError);
  }

  server.stop();
  server_thread.join();
}
