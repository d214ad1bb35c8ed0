#include "bimkit/inventory.hpp"

#include <cmath>

#include "bimkit/spatial.hpp"

namespace bimkit {

void validate_geocode(const Geocode& g) {
  if (!std::isfinite(g.lat) || !std::isfinite(g.lon))
    throw Error("geocode has non-finite coordinates");
  if (g.lat < -90.0 || g.lat > 90.0)
    throw Error("latitude out of range [-90, 90]: " + std::to_string(g.lat));
  if (g.lon < -180.0 || g.lon > 180.0)
    throw Error("longitude out of range [-180, 180]: " + std::to_string(g.lon));
}

std::string to_string(AttributeKind kind) {
  return kind == AttributeKind::Numeric ? "numeric" : "categorical";
}

AttributeKind attribute_kind_from_string(const std::string& s) {
  if (s == "numeric") return AttributeKind::Numeric;
  if (s == "categorical") return AttributeKind::Categorical;
  throw SchemaError("unknown attribute kind: " + s);
}

AttributeKind kind_of(const AttributeValue& v) {
  return std::holds_alternative<NumericValue>(v) ? AttributeKind::Numeric
                                                 : AttributeKind::Categorical;
}

std::string to_string(ImputeMethod m) {
  switch (m) {
    case ImputeMethod::Kriging: return "kriging";
    case ImputeMethod::NeuralNet: return "neural-net";
    case ImputeMethod::NeighborMajority: return "neighbor-majority";
  }
  return "kriging";
}

ImputeMethod impute_method_from_string(const std::string& s) {
  if (s == "kriging") return ImputeMethod::Kriging;
  if (s == "neural-net") return ImputeMethod::NeuralNet;
  if (s == "neighbor-majority") return ImputeMethod::NeighborMajority;
  throw Error("unknown impute method: " + s);
}

namespace {

void validate_attribute(const std::string& record_id, const std::string& name,
                        const Attribute& attr,
                        const std::map<std::string, AttributeKind>& schema) {
  auto it = schema.find(name);
  if (it == schema.end())
    throw SchemaError("record " + record_id + ": attribute '" + name +
                      "' not declared in schema");
  if (kind_of(attr.value) != it->second)
    throw SchemaError("record " + record_id + ": attribute '" + name +
                      "' kind does not match schema (" + to_string(it->second) +
                      ")");
  if (const auto* num = std::get_if<NumericValue>(&attr.value)) {
    if (!std::isfinite(num->value))
      throw Error("record " + record_id + ": attribute '" + name +
                  "' has non-finite value");
  } else {
    if (std::get<CategoricalValue>(attr.value).label.empty())
      throw Error("record " + record_id + ": attribute '" + name +
                  "' has empty label");
  }
  if (const auto* vis = std::get_if<VisionSource>(&attr.provenance)) {
    if (!(vis->confidence >= 0.0 && vis->confidence <= 1.0))
      throw Error("record " + record_id + ": attribute '" + name +
                  "' vision confidence outside [0, 1]");
  } else if (const auto* imp = std::get_if<ImputedSource>(&attr.provenance)) {
    if (!(imp->uncertainty >= 0.0) || !std::isfinite(imp->uncertainty))
      throw Error("record " + record_id + ": attribute '" + name +
                  "' imputed uncertainty must be >= 0");
  }
}

}  // namespace

Inventory::Inventory(std::vector<BuildingRecord> records,
                     std::map<std::string, AttributeKind> schema)
    : records_(std::move(records)), schema_(std::move(schema)) {
  index_.reserve(records_.size());
  for (size_t i = 0; i < records_.size(); ++i) {
    const auto& rec = records_[i];
    if (rec.id.empty()) throw Error("record with empty id");
    if (!index_.emplace(rec.id, i).second)
      throw Error("duplicate record id: " + rec.id);
    if (rec.geocode) validate_geocode(*rec.geocode);
    for (const auto& [name, attr] : rec.attributes)
      validate_attribute(rec.id, name, attr, schema_);
  }
}

const BuildingRecord* Inventory::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

namespace {

bool provenance_is_preferred(const Provenance& p, const MergePolicy& policy) {
  const bool metadata = std::holds_alternative<MetadataSource>(p);
  return policy.preference == MergePolicy::Preference::MetadataWins ? metadata
                                                                    : !metadata;
}

}  // namespace

Inventory merge_inventories(const Inventory& metadata_inv,
                            const Inventory& vision_inv,
                            const MergePolicy& policy) {
  std::map<std::string, AttributeKind> schema = metadata_inv.schema();
  for (const auto& [name, kind] : vision_inv.schema()) {
    auto [it, inserted] = schema.emplace(name, kind);
    if (!inserted && it->second != kind)
      throw SchemaError("schema kind conflict for attribute '" + name + "'");
  }

  std::vector<std::string> geocode_conflicts;
  for (const auto& base : metadata_inv.records()) {
    const BuildingRecord* other = vision_inv.find(base.id);
    if (other && base.geocode && other->geocode &&
        haversine_m(*base.geocode, *other->geocode) > policy.geocode_conflict_m)
      geocode_conflicts.push_back(base.id);
  }
  if (!geocode_conflicts.empty()) {
    std::string msg = "conflicting geocodes (>" +
                      std::to_string(policy.geocode_conflict_m) + " m) for ids:";
    for (const auto& id : geocode_conflicts) msg += " " + id;
    throw ConflictError(msg, geocode_conflicts);
  }

  std::vector<BuildingRecord> merged;
  merged.reserve(metadata_inv.size() + vision_inv.size());

  for (const auto& base : metadata_inv.records()) {
    BuildingRecord out = base;
    if (const BuildingRecord* other = vision_inv.find(base.id)) {
      if (out.geocode && other->geocode) {
        if (policy.preference == MergePolicy::Preference::VisionWins)
          out.geocode = other->geocode;
      } else if (!out.geocode) {
        out.geocode = other->geocode;
      }
      if (!out.address) out.address = other->address;
      for (const auto& [name, attr] : other->attributes) {
        auto it = out.attributes.find(name);
        if (it == out.attributes.end()) {
          out.attributes.emplace(name, attr);
        } else if (!provenance_is_preferred(it->second.provenance, policy) &&
                   provenance_is_preferred(attr.provenance, policy)) {
          it->second = attr;
        }
      }
    }
    merged.push_back(std::move(out));
  }
  for (const auto& rec : vision_inv.records())
    if (!metadata_inv.find(rec.id)) merged.push_back(rec);

  return Inventory(std::move(merged), std::move(schema));
}

MissingReport missing_report(const Inventory& inv, const std::string& attribute) {
  if (!inv.schema().count(attribute))
    throw SchemaError("unknown attribute: " + attribute);
  MissingReport report;
  for (const auto& rec : inv.records()) {
    if (rec.attributes.count(attribute))
      report.present_ids.push_back(rec.id);
    else
      report.missing_ids.push_back(rec.id);
  }
  return report;
}

}  // namespace bimkit
