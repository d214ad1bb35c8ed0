#ifndef BIMKIT_INGEST_HPP
#define BIMKIT_INGEST_HPP

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bimkit/inventory.hpp"

namespace bimkit {

struct AttributeColumn {
  std::string name;
  AttributeKind kind = AttributeKind::Numeric;
  // Vision ingestion: column with the prediction confidence. When unset,
  // "<name>_confidence" is used if the header has it, else 1.0 is assumed.
  std::optional<std::string> confidence_column;
};

struct CsvSchemaSpec {
  std::string id_column;
  std::optional<std::string> address_column;
  std::optional<std::string> lat_column;
  std::optional<std::string> lon_column;
  std::vector<AttributeColumn> attributes;
};

CsvSchemaSpec csv_schema_from_json(const nlohmann::json& j);

struct RowReject {
  size_t line = 0;  // physical line in the source file
  std::string reason;
};

struct IngestResult {
  Inventory inventory;
  std::vector<RowReject> rejects;
};

// One BuildingRecord per row, provenance Metadata; empty cells mean absent.
// Malformed rows (bad numerics, out-of-range coordinates, duplicate ids) are
// rejected row-by-row and parsing continues. A missing declared column is a
// SchemaError naming it.
IngestResult parse_metadata_csv(const std::string& path, const CsvSchemaSpec& spec);

// As parse_metadata_csv but provenance Vision(confidence); rows with a
// confidence outside [0, 1] are rejected.
IngestResult parse_vision_csv(const std::string& path, const CsvSchemaSpec& spec);

// JSON-lines, one {"line": n, "reason": "..."} object per rejected row.
void write_rejects_report(const std::vector<RowReject>& rejects,
                          const std::string& path);

enum class MissingGeocodePolicy { Skip, Fail };

struct ExportStats {
  size_t written = 0;
  std::vector<std::string> skipped_ids;  // records without a geocode
};

// RFC 7946 FeatureCollection, one Point feature per geocoded record,
// coordinates in [lon, lat] order. Attribute values, provenance and
// uncertainty go into feature properties; the attribute schema rides along
// as a foreign member so the file can be parsed back into an Inventory.
ExportStats export_geojson(const Inventory& inv, const std::string& path,
                           MissingGeocodePolicy policy = MissingGeocodePolicy::Skip);

nlohmann::json inventory_to_geojson(const Inventory& inv,
                                    MissingGeocodePolicy policy,
                                    ExportStats* stats = nullptr);

Inventory parse_geojson(const std::string& path);
Inventory inventory_from_geojson(const nlohmann::json& j);

// Attribute-level serialization used inside the feature properties; exposed
// so other writers (e.g. the pipeline interchange) stay format-compatible.
nlohmann::json attribute_to_json(const Attribute& attr);
Attribute attribute_from_json(const nlohmann::json& j);

}  // namespace bimkit

#endif
