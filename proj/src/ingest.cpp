#include "bimkit/ingest.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "bimkit/csv.hpp"

namespace bimkit {

CsvSchemaSpec csv_schema_from_json(const nlohmann::json& j) {
  CsvSchemaSpec spec;
  spec.id_column = j.at("id_column").get<std::string>();
  if (j.contains("address_column")) spec.address_column = j["address_column"];
  if (j.contains("lat_column")) spec.lat_column = j["lat_column"];
  if (j.contains("lon_column")) spec.lon_column = j["lon_column"];
  for (const auto& col : j.at("attributes")) {
    AttributeColumn ac;
    ac.name = col.at("name").get<std::string>();
    ac.kind = attribute_kind_from_string(col.at("kind").get<std::string>());
    if (col.contains("confidence_column"))
      ac.confidence_column = col["confidence_column"];
    spec.attributes.push_back(std::move(ac));
  }
  return spec;
}

namespace {

struct ColumnPlan {
  int id = -1;
  int address = -1;
  int lat = -1;
  int lon = -1;
  struct Attr {
    AttributeColumn spec;
    int column = -1;
    int confidence = -1;  // vision only
  };
  std::vector<Attr> attrs;
};

ColumnPlan plan_columns(const CsvTable& table, const CsvSchemaSpec& spec,
                        bool vision) {
  ColumnPlan plan;
  auto require = [&](const std::string& name) {
    const int c = table.column(name);
    if (c < 0) throw SchemaError("missing column: " + name);
    return c;
  };
  plan.id = require(spec.id_column);
  if (spec.address_column) plan.address = require(*spec.address_column);
  if (spec.lat_column) plan.lat = require(*spec.lat_column);
  if (spec.lon_column) plan.lon = require(*spec.lon_column);
  for (const auto& attr : spec.attributes) {
    ColumnPlan::Attr a;
    a.spec = attr;
    a.column = require(attr.name);
    if (vision) {
      if (attr.confidence_column)
        a.confidence = require(*attr.confidence_column);
      else
        a.confidence = table.column(attr.name + "_confidence");
    }
    plan.attrs.push_back(std::move(a));
  }
  return plan;
}

IngestResult parse_csv_common(const std::string& path, const CsvSchemaSpec& spec,
                              bool vision) {
  const CsvTable table = read_csv(path);
  if (table.header.empty()) throw SchemaError("empty file: " + path);
  const ColumnPlan plan = plan_columns(table, spec, vision);

  IngestResult result;
  std::vector<BuildingRecord> records;
  std::map<std::string, AttributeKind> schema;
  for (const auto& attr : spec.attributes) schema[attr.name] = attr.kind;
  std::unordered_map<std::string, bool> seen_ids;

  for (size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const size_t line = table.row_lines[r];
    auto reject = [&](const std::string& reason) {
      result.rejects.push_back({line, reason});
    };

    if (row.size() != table.header.size()) {
      reject("expected " + std::to_string(table.header.size()) +
             " fields, found " + std::to_string(row.size()));
      continue;
    }
    const std::string& id = row[plan.id];
    if (id.empty()) {
      reject("empty id");
      continue;
    }
    if (seen_ids.count(id)) {
      reject("duplicate id: " + id);
      continue;
    }

    BuildingRecord rec;
    rec.id = id;
    if (plan.address >= 0 && !row[plan.address].empty())
      rec.address = row[plan.address];

    bool bad = false;
    if (plan.lat >= 0 && plan.lon >= 0 && !row[plan.lat].empty() &&
        !row[plan.lon].empty()) {
      const auto lat = csv_parse_double(row[plan.lat]);
      const auto lon = csv_parse_double(row[plan.lon]);
      if (!lat || !lon) {
        reject("unparsable coordinates");
        continue;
      }
      const Geocode g{*lat, *lon};
      if (g.lat < -90 || g.lat > 90 || g.lon < -180 || g.lon > 180) {
        reject("coordinates out of range");
        continue;
      }
      rec.geocode = g;
    }

    for (const auto& attr : plan.attrs) {
      const std::string& cell = row[attr.column];
      if (cell.empty()) continue;

      AttributeValue value;
      if (attr.spec.kind == AttributeKind::Numeric) {
        const auto num = csv_parse_double(cell);
        if (!num) {
          reject("non-numeric value '" + cell + "' in numeric column '" +
                 attr.spec.name + "'");
          bad = true;
          break;
        }
        value = NumericValue{*num, std::nullopt};
      } else {
        value = CategoricalValue{cell};
      }

      Provenance prov = MetadataSource{};
      if (vision) {
        double confidence = 1.0;
        if (attr.confidence >= 0 && !row[attr.confidence].empty()) {
          const auto conf = csv_parse_double(row[attr.confidence]);
          if (!conf || *conf < 0.0 || *conf > 1.0) {
            reject("confidence outside [0, 1] for attribute '" +
                   attr.spec.name + "'");
            bad = true;
            break;
          }
          confidence = *conf;
        }
        prov = VisionSource{confidence};
      }
      rec.attributes[attr.spec.name] = Attribute{std::move(value), prov};
    }
    if (bad) continue;

    seen_ids[id] = true;
    records.push_back(std::move(rec));
  }

  result.inventory = Inventory(std::move(records), std::move(schema));
  return result;
}

}  // namespace

IngestResult parse_metadata_csv(const std::string& path, const CsvSchemaSpec& spec) {
  return parse_csv_common(path, spec, false);
}

IngestResult parse_vision_csv(const std::string& path, const CsvSchemaSpec& spec) {
  return parse_csv_common(path, spec, true);
}

void write_rejects_report(const std::vector<RowReject>& rejects,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  for (const auto& reject : rejects) {
    nlohmann::json j{{"line", reject.line}, {"reason", reject.reason}};
    out << j.dump() << '\n';
  }
}

namespace {

nlohmann::json provenance_to_json(const Provenance& p) {
  nlohmann::json j;
  if (std::holds_alternative<MetadataSource>(p)) {
    j["source"] = "metadata";
  } else if (const auto* vis = std::get_if<VisionSource>(&p)) {
    j["source"] = "vision";
    j["confidence"] = vis->confidence;
  } else {
    const auto& imp = std::get<ImputedSource>(p);
    j["source"] = "imputed";
    j["method"] = to_string(imp.method);
    j["uncertainty"] = imp.uncertainty;
  }
  return j;
}

Provenance provenance_from_json(const nlohmann::json& j) {
  const std::string source = j.at("source");
  if (source == "metadata") return MetadataSource{};
  if (source == "vision") return VisionSource{j.value("confidence", 1.0)};
  if (source == "imputed")
    return ImputedSource{impute_method_from_string(j.at("method")),
                         j.at("uncertainty").get<double>()};
  throw Error("unknown provenance source: " + source);
}

}  // namespace

nlohmann::json attribute_to_json(const Attribute& attr) {
  nlohmann::json j;
  if (const auto* num = std::get_if<NumericValue>(&attr.value)) {
    j["kind"] = "numeric";
    j["value"] = num->value;
    if (num->unit) j["unit"] = *num->unit;
  } else {
    j["kind"] = "categorical";
    j["label"] = std::get<CategoricalValue>(attr.value).label;
  }
  j["provenance"] = provenance_to_json(attr.provenance);
  return j;
}

Attribute attribute_from_json(const nlohmann::json& j) {
  Attribute attr;
  const std::string kind = j.at("kind");
  if (kind == "numeric") {
    NumericValue num;
    num.value = j.at("value").get<double>();
    if (j.contains("unit")) num.unit = j["unit"].get<std::string>();
    attr.value = std::move(num);
  } else if (kind == "categorical") {
    attr.value = CategoricalValue{j.at("label").get<std::string>()};
  } else {
    throw Error("unknown attribute kind: " + kind);
  }
  attr.provenance = provenance_from_json(j.at("provenance"));
  return attr;
}

nlohmann::json inventory_to_geojson(const Inventory& inv,
                                    MissingGeocodePolicy policy,
                                    ExportStats* stats) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& rec : inv.records()) {
    if (!rec.geocode) {
      if (policy == MissingGeocodePolicy::Fail)
        throw Error("record without geocode: " + rec.id);
      if (stats) stats->skipped_ids.push_back(rec.id);
      continue;
    }
    nlohmann::json props;
    props["id"] = rec.id;
    if (rec.address) props["address"] = *rec.address;
    nlohmann::json attrs = nlohmann::json::object();
    for (const auto& [name, attr] : rec.attributes)
      attrs[name] = attribute_to_json(attr);
    props["attributes"] = std::move(attrs);

    nlohmann::json feature;
    feature["type"] = "Feature";
    feature["geometry"] = {{"type", "Point"},
                           {"coordinates", {rec.geocode->lon, rec.geocode->lat}}};
    feature["properties"] = std::move(props);
    features.push_back(std::move(feature));
    if (stats) ++stats->written;
  }

  nlohmann::json schema = nlohmann::json::object();
  for (const auto& [name, kind] : inv.schema()) schema[name] = to_string(kind);

  nlohmann::json collection;
  collection["type"] = "FeatureCollection";
  collection["schema"] = std::move(schema);
  collection["features"] = std::move(features);
  return collection;
}

ExportStats export_geojson(const Inventory& inv, const std::string& path,
                           MissingGeocodePolicy policy) {
  ExportStats stats;
  const nlohmann::json doc = inventory_to_geojson(inv, policy, &stats);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing: " + path);
  return stats;
}

Inventory inventory_from_geojson(const nlohmann::json& j) {
  if (j.value("type", "") != "FeatureCollection")
    throw Error("not a GeoJSON FeatureCollection");

  std::map<std::string, AttributeKind> schema;
  if (j.contains("schema"))
    for (const auto& [name, kind] : j["schema"].items())
      schema[name] = attribute_kind_from_string(kind.get<std::string>());

  std::vector<BuildingRecord> records;
  for (const auto& feature : j.at("features")) {
    BuildingRecord rec;
    const auto& props = feature.at("properties");
    rec.id = props.at("id").get<std::string>();
    if (props.contains("address")) rec.address = props["address"].get<std::string>();
    const auto& geom = feature.at("geometry");
    if (geom.at("type") != "Point") throw Error("expected Point geometry");
    const auto& coords = geom.at("coordinates");
    rec.geocode = Geocode{coords.at(1).get<double>(), coords.at(0).get<double>()};
    if (props.contains("attributes")) {
      for (const auto& [name, attr] : props["attributes"].items()) {
        rec.attributes[name] = attribute_from_json(attr);
        if (!schema.count(name)) schema[name] = kind_of(rec.attributes[name].value);
      }
    }
    records.push_back(std::move(rec));
  }
  return Inventory(std::move(records), std::move(schema));
}

Inventory parse_geojson(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid JSON in " + path + ": " + e.what());
  }
  return inventory_from_geojson(j);
}

}  // namespace bimkit
