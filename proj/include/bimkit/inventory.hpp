#ifndef BIMKIT_INVENTORY_HPP
#define BIMKIT_INVENTORY_HPP

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "bimkit/errors.hpp"

namespace bimkit {

struct Geocode {
  double lat = 0.0;
  double lon = 0.0;

  bool operator==(const Geocode&) const = default;
};

// Throws Error unless lat in [-90, 90] and lon in [-180, 180], both finite.
void validate_geocode(const Geocode& g);

enum class AttributeKind { Numeric, Categorical };

std::string to_string(AttributeKind kind);
AttributeKind attribute_kind_from_string(const std::string& s);

struct NumericValue {
  double value = 0.0;
  std::optional<std::string> unit;

  bool operator==(const NumericValue&) const = default;
};

struct CategoricalValue {
  std::string label;

  bool operator==(const CategoricalValue&) const = default;
};

using AttributeValue = std::variant<NumericValue, CategoricalValue>;

AttributeKind kind_of(const AttributeValue& v);

enum class ImputeMethod { Kriging, NeuralNet, NeighborMajority };

std::string to_string(ImputeMethod m);
ImputeMethod impute_method_from_string(const std::string& s);

// One building attribute comes from exactly one of these sources.
struct MetadataSource {
  bool operator==(const MetadataSource&) const = default;
};

struct VisionSource {
  double confidence = 1.0;  // in [0, 1]

  bool operator==(const VisionSource&) const = default;
};

struct ImputedSource {
  ImputeMethod method = ImputeMethod::Kriging;
  double uncertainty = 0.0;  // >= 0; meaning depends on the engine

  bool operator==(const ImputedSource&) const = default;
};

using Provenance = std::variant<MetadataSource, VisionSource, ImputedSource>;

struct Attribute {
  AttributeValue value;
  Provenance provenance;

  bool operator==(const Attribute&) const = default;
};

struct BuildingRecord {
  std::string id;
  std::optional<std::string> address;
  std::optional<Geocode> geocode;
  std::map<std::string, Attribute> attributes;

  bool operator==(const BuildingRecord&) const = default;
};

// Immutable after construction; operations produce new inventories, so the
// same instance can be shared read-only across workers.
class Inventory {
 public:
  Inventory() = default;
  // Validates all invariants: unique ids, geocode bounds, finite numeric
  // values, non-empty labels, provenance ranges, kinds matching the schema.
  Inventory(std::vector<BuildingRecord> records,
            std::map<std::string, AttributeKind> schema);

  const std::vector<BuildingRecord>& records() const { return records_; }
  const std::map<std::string, AttributeKind>& schema() const { return schema_; }
  size_t size() const { return records_.size(); }

  const BuildingRecord* find(const std::string& id) const;

  bool operator==(const Inventory& other) const {
    return records_ == other.records_ && schema_ == other.schema_;
  }

 private:
  std::vector<BuildingRecord> records_;
  std::map<std::string, AttributeKind> schema_;
  std::unordered_map<std::string, size_t> index_;
};

struct MergePolicy {
  enum class Preference { MetadataWins, VisionWins };
  Preference preference = Preference::MetadataWins;
  // Records sharing an id whose geocodes disagree by more than this are a
  // conflict, not a merge. 50 m separates adjacent parcels in dense cities.
  double geocode_conflict_m = 50.0;
};

// One record per id; where both sources define an attribute the policy
// decides, otherwise the defined side fills the gap. Provenance is kept per
// attribute. Throws SchemaError on kind conflicts and ConflictError when two
// geocodes for the same id are further apart than the policy threshold.
Inventory merge_inventories(const Inventory& metadata_inv,
                            const Inventory& vision_inv,
                            const MergePolicy& policy = {});

struct MissingReport {
  std::vector<std::string> present_ids;
  std::vector<std::string> missing_ids;
};

// Partitions all record ids by whether `attribute` is populated.
// Throws SchemaError when the attribute is not in the schema.
MissingReport missing_report(const Inventory& inv, const std::string& attribute);

}  // namespace bimkit

#endif
