#ifndef BIMKIT_GEOCODER_HPP
#define BIMKIT_GEOCODER_HPP

#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "bimkit/inventory.hpp"

namespace bimkit {

struct GeocodeRequest {
  std::string address;
  std::optional<std::string> region_hint;
};

enum class MatchQuality { Exact, Interpolated, Approximate };

std::string to_string(MatchQuality q);
MatchQuality match_quality_from_string(const std::string& s);

struct GeocodeResult {
  Geocode geocode;
  MatchQuality match_quality = MatchQuality::Exact;
};

// Lowercase, trim, collapse internal whitespace runs to single spaces.
std::string normalize_address(std::string_view address);

class GeocodeProvider {
 public:
  virtual ~GeocodeProvider() = default;
  // Throws NotFoundError when the provider has no match and TransportError
  // after retries are exhausted. Thread-safe.
  virtual GeocodeResult resolve(const GeocodeRequest& req) = 0;
  virtual std::string name() const = 0;
};

// Lookup table from a CSV `address,lat,lon[,quality]`; addresses are matched
// after normalization. Deterministic and offline.
class FileProvider : public GeocodeProvider {
 public:
  explicit FileProvider(const std::string& csv_path);
  GeocodeResult resolve(const GeocodeRequest& req) override;
  std::string name() const override { return "file"; }

 private:
  std::unordered_map<std::string, GeocodeResult> table_;
};

struct RetryPolicy {
  int max_attempts = 3;
  int initial_backoff_ms = 500;
  double multiplier = 2.0;
};

// GET <path>?address=<...>&key=<...> against a JSON endpoint:
//   {"status": "OK", "lat": .., "lon": .., "quality": "exact"}
//   {"status": "ZERO_RESULTS"}               -> NotFoundError
// HTTP 429 and transport failures back off exponentially and retry up to the
// policy cap, then raise TransportError carrying the attempt count.
class HttpProvider : public GeocodeProvider {
 public:
  HttpProvider(std::string host, int port, std::string path, std::string api_key,
               RetryPolicy retry = {});
  GeocodeResult resolve(const GeocodeRequest& req) override;
  std::string name() const override { return "http"; }

 private:
  std::string host_;
  int port_;
  std::string path_;
  std::string api_key_;
  RetryPolicy retry_;
};

// Persistent JSON-lines cache {address, lat, lon, quality}, keyed by the
// normalized address. Reads may run concurrently; writes are serialized
// (single-writer contract).
class GeocodeCache {
 public:
  // Loads existing entries when the file exists; appends new ones to it.
  // Pass nullopt for a purely in-memory cache.
  explicit GeocodeCache(std::optional<std::string> path);

  std::optional<GeocodeResult> lookup(const std::string& normalized_address) const;
  void store(const std::string& normalized_address, const GeocodeResult& result);
  size_t size() const;

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, GeocodeResult> entries_;
  std::optional<std::ofstream> append_;
  std::mutex append_mutex_;
};

// Provider behind a cache: with a warm cache, resolve is a pure function of
// the normalized address and performs zero provider calls.
class CachingGeocoder {
 public:
  CachingGeocoder(GeocodeProvider& provider, GeocodeCache& cache)
      : provider_(provider), cache_(cache) {}

  GeocodeResult resolve(const GeocodeRequest& req);

 private:
  GeocodeProvider& provider_;
  GeocodeCache& cache_;
};

struct GeocodeOutcome {
  Inventory inventory;
  std::vector<std::string> failures;  // ids that could not be resolved
};

// Fills in geocodes for records that have an address but no geocode yet.
// Attributes are never touched. Failures are collected, not fatal.
GeocodeOutcome geocode_inventory(CachingGeocoder& geocoder, const Inventory& inv);

}  // namespace bimkit

#endif
