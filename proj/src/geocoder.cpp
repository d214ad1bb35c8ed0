#include "bimkit/geocoder.hpp"

#include <cctype>
#include <chrono>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "bimkit/csv.hpp"

namespace bimkit {

std::string to_string(MatchQuality q) {
  switch (q) {
    case MatchQuality::Exact: return "exact";
    case MatchQuality::Interpolated: return "interpolated";
    case MatchQuality::Approximate: return "approximate";
  }
  return "exact";
}

MatchQuality match_quality_from_string(const std::string& s) {
  if (s == "exact") return MatchQuality::Exact;
  if (s == "interpolated") return MatchQuality::Interpolated;
  if (s == "approximate") return MatchQuality::Approximate;
  throw Error("unknown match quality: " + s);
}

std::string normalize_address(std::string_view address) {
  std::string out;
  out.reserve(address.size());
  bool pending_space = false;
  for (char c : address) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

FileProvider::FileProvider(const std::string& csv_path) {
  const CsvTable table = read_csv(csv_path);
  const int addr = table.column("address");
  const int lat = table.column("lat");
  const int lon = table.column("lon");
  if (addr < 0 || lat < 0 || lon < 0)
    throw SchemaError("geocode table needs columns address,lat,lon");
  const int quality = table.column("quality");
  for (const auto& row : table.rows) {
    const auto lat_val = csv_parse_double(row[lat]);
    const auto lon_val = csv_parse_double(row[lon]);
    if (!lat_val || !lon_val)
      throw SchemaError("geocode table has unparsable coordinates for '" +
                        row[addr] + "'");
    GeocodeResult res;
    res.geocode = Geocode{*lat_val, *lon_val};
    validate_geocode(res.geocode);
    res.match_quality = quality >= 0 && !row[quality].empty()
                            ? match_quality_from_string(row[quality])
                            : MatchQuality::Exact;
    table_[normalize_address(row[addr])] = res;
  }
}

GeocodeResult FileProvider::resolve(const GeocodeRequest& req) {
  if (req.address.empty()) throw Error("geocode request with empty address");
  const auto it = table_.find(normalize_address(req.address));
  if (it == table_.end())
    throw NotFoundError("no match for address: " + req.address);
  return it->second;
}

HttpProvider::HttpProvider(std::string host, int port, std::string path,
                           std::string api_key, RetryPolicy retry)
    : host_(std::move(host)), port_(port), path_(std::move(path)),
      api_key_(std::move(api_key)), retry_(retry) {}

GeocodeResult HttpProvider::resolve(const GeocodeRequest& req) {
  if (req.address.empty()) throw Error("geocode request with empty address");

  httplib::Client client(host_, port_);
  client.set_connection_timeout(10);
  client.set_read_timeout(10);

  httplib::Params params{{"address", req.address}, {"key", api_key_}};
  if (req.region_hint) params.emplace("region", *req.region_hint);

  int backoff_ms = retry_.initial_backoff_ms;
  int attempt = 0;
  std::string last_error;
  while (attempt < retry_.max_attempts) {
    ++attempt;
    const auto res = client.Get(path_, params, httplib::Headers{});
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
    } else if (res->status == 429) {
      last_error = "rate limited (HTTP 429)";
    } else if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
    } else {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("invalid geocoder response: ") + e.what(),
                             attempt);
      }
      const std::string status = body.value("status", "");
      if (status == "ZERO_RESULTS")
        throw NotFoundError("no match for address: " + req.address);
      if (status != "OK")
        throw TransportError("geocoder status: " + status, attempt);
      GeocodeResult out;
      out.geocode = Geocode{body.at("lat").get<double>(),
                            body.at("lon").get<double>()};
      validate_geocode(out.geocode);
      out.match_quality = match_quality_from_string(body.value("quality", "exact"));
      return out;
    }
    if (attempt < retry_.max_attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms = static_cast<int>(backoff_ms * retry_.multiplier);
    }
  }
  throw TransportError(last_error + " after " + std::to_string(attempt) +
                           " attempts",
                       attempt);
}

GeocodeCache::GeocodeCache(std::optional<std::string> path) {
  if (!path) return;
  std::ifstream in(*path, std::ios::binary);
  if (in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      GeocodeResult res;
      res.geocode = Geocode{j.at("lat").get<double>(), j.at("lon").get<double>()};
      res.match_quality = match_quality_from_string(j.value("quality", "exact"));
      entries_[j.at("address").get<std::string>()] = res;
    }
  }
  append_.emplace(*path, std::ios::binary | std::ios::app);
  if (!*append_) throw IoError("cannot open geocode cache: " + *path);
}

std::optional<GeocodeResult> GeocodeCache::lookup(
    const std::string& normalized_address) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(normalized_address);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void GeocodeCache::store(const std::string& normalized_address,
                         const GeocodeResult& result) {
  {
    std::unique_lock lock(mutex_);
    entries_[normalized_address] = result;
  }
  if (append_) {
    const nlohmann::json j{{"address", normalized_address},
                           {"lat", result.geocode.lat},
                           {"lon", result.geocode.lon},
                           {"quality", to_string(result.match_quality)}};
    std::lock_guard lock(append_mutex_);
    *append_ << j.dump() << '\n';
    append_->flush();
  }
}

size_t GeocodeCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

GeocodeResult CachingGeocoder::resolve(const GeocodeRequest& req) {
  if (req.address.empty()) throw Error("geocode request with empty address");
  const std::string key = normalize_address(req.address);
  if (const auto hit = cache_.lookup(key)) return *hit;
  const GeocodeResult result = provider_.resolve(req);
  cache_.store(key, result);
  return result;
}

GeocodeOutcome geocode_inventory(CachingGeocoder& geocoder, const Inventory& inv) {
  GeocodeOutcome outcome;
  std::vector<BuildingRecord> records = inv.records();
  for (auto& rec : records) {
    if (rec.geocode) continue;
    if (!rec.address || rec.address->empty()) {
      outcome.failures.push_back(rec.id);
      continue;
    }
    try {
      rec.geocode = geocoder.resolve({*rec.address, std::nullopt}).geocode;
    } catch (const NotFoundError&) {
      outcome.failures.push_back(rec.id);
    } catch (const TransportError&) {
      outcome.failures.push_back(rec.id);
    }
  }
  outcome.inventory = Inventory(std::move(records), inv.schema());
  return outcome;
}

}  // namespace bimkit
