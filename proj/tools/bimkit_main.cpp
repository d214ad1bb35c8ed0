// bimkit: config-driven pipeline for regional building inventories.
// Subcommands mirror the workflow stages: ingest -> geocode -> merge ->
// impute -> rasterize, plus the classifier workflow (train, selftrain,
// metrics), cross-validate and report.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "bimkit/csv.hpp"
#include "bimkit/errors.hpp"
#include "bimkit/geocoder.hpp"
#include "bimkit/impute.hpp"
#include "bimkit/ingest.hpp"
#include "bimkit/inventory.hpp"
#include "bimkit/raster.hpp"
#include "bimkit/selftrain.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Config {
  json data = json::object();
  fs::path base = ".";

  static Config load(const std::string& path) {
    Config cfg;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw bimkit::IoError("cannot open config: " + path);
    try {
      in >> cfg.data;
    } catch (const json::exception& e) {
      throw bimkit::Error("invalid JSON in config " + path + ": " + e.what());
    }
    cfg.base = fs::path(path).parent_path();
    return cfg;
  }

  // Paths in the config resolve relative to the config file's directory.
  std::optional<std::string> path(const std::string& key) const {
    if (!data.contains("paths") || !data["paths"].contains(key))
      return std::nullopt;
    const fs::path p = data["paths"][key].get<std::string>();
    return (p.is_absolute() ? p : base / p).string();
  }

  std::string require_path(const std::string& key) const {
    if (auto p = path(key)) return *p;
    throw bimkit::Error("config is missing paths." + key);
  }

  const json* section(const std::string& key) const {
    if (!data.contains(key)) return nullptr;
    return &data[key];
  }
};

// Shared state filled by CLI flags.
struct CommonArgs {
  std::string config_path;
  bool force = false;
  std::optional<uint64_t> seed;
  int jobs = 0;  // 0 = unset

  Config config() const {
    return config_path.empty() ? Config{} : Config::load(config_path);
  }
};

std::string pick(const std::string& flag_value, const Config& cfg,
                 const std::string& key) {
  if (!flag_value.empty()) return flag_value;
  if (auto p = cfg.path(key)) return *p;
  throw bimkit::Error("no path given for " + key +
                      " (flag missing and config has no paths." + key + ")");
}

void prepare_output(const std::string& path, bool force) {
  if (fs::exists(path) && !force)
    throw bimkit::Error("output exists: " + path + " (pass --force to overwrite)");
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw bimkit::IoError("cannot open file for writing: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw bimkit::IoError("failed writing: " + path);
}

// Interchange policy: inventories between pipeline stages keep ungeocoded
// records as features with null geometry so geocoding can still see them.
// Record order is preserved.
json inventory_interchange(const bimkit::Inventory& inv) {
  json features = json::array();
  for (const auto& rec : inv.records()) {
    json props;
    props["id"] = rec.id;
    if (rec.address) props["address"] = *rec.address;
    json attrs = json::object();
    for (const auto& [name, attr] : rec.attributes)
      attrs[name] = bimkit::attribute_to_json(attr);
    props["attributes"] = std::move(attrs);

    json feature;
    feature["type"] = "Feature";
    if (rec.geocode)
      feature["geometry"] = {{"type", "Point"},
                             {"coordinates", {rec.geocode->lon, rec.geocode->lat}}};
    else
      feature["geometry"] = nullptr;
    feature["properties"] = std::move(props);
    features.push_back(std::move(feature));
  }
  json schema = json::object();
  for (const auto& [name, kind] : inv.schema()) schema[name] = to_string(kind);
  json collection;
  collection["type"] = "FeatureCollection";
  collection["schema"] = std::move(schema);
  collection["features"] = std::move(features);
  return collection;
}

void write_inventory_interchange(const bimkit::Inventory& inv,
                                 const std::string& path) {
  write_json_file(inventory_interchange(inv), path);
}

bimkit::Inventory read_inventory(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw bimkit::IoError("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw bimkit::Error("invalid JSON in " + path + ": " + e.what());
  }
  std::map<std::string, bimkit::AttributeKind> schema;
  if (j.contains("schema"))
    for (const auto& [name, kind] : j["schema"].items())
      schema[name] = bimkit::attribute_kind_from_string(kind.get<std::string>());
  std::vector<bimkit::BuildingRecord> records;
  for (const auto& f : j.at("features")) {
    bimkit::BuildingRecord rec;
    const auto& props = f.at("properties");
    rec.id = props.at("id").get<std::string>();
    if (props.contains("address"))
      rec.address = props["address"].get<std::string>();
    if (f.contains("geometry") && !f["geometry"].is_null()) {
      const auto& coords = f.at("geometry").at("coordinates");
      rec.geocode = bimkit::Geocode{coords.at(1).get<double>(),
                                    coords.at(0).get<double>()};
    }
    if (props.contains("attributes")) {
      for (const auto& [name, a] : props["attributes"].items()) {
        rec.attributes[name] = bimkit::attribute_from_json(a);
        if (!schema.count(name))
          schema[name] = bimkit::kind_of(rec.attributes[name].value);
      }
    }
    records.push_back(std::move(rec));
  }
  return bimkit::Inventory(std::move(records), std::move(schema));
}

// ---- dataset CSVs for the classifier workflow ------------------------------

double feature_value(const std::string& cell, const std::string& path) {
  const auto v = bimkit::csv_parse_double(cell);
  if (!v)
    throw bimkit::Error("non-numeric feature value '" + cell + "' in " + path);
  return *v;
}

bimkit::LabeledSet read_labeled_csv(const std::string& path) {
  const bimkit::CsvTable table = bimkit::read_csv(path);
  const int label_col = table.column("label");
  const int id_col = table.column("id");
  if (id_col != 0 || label_col < 2)
    throw bimkit::SchemaError("labeled dataset needs columns id,f1..fd,label");
  bimkit::LabeledSet set;
  for (const auto& row : table.rows) {
    bimkit::LabeledItem item;
    item.id = row[0];
    for (int c = 1; c < label_col; ++c)
      item.features.push_back(feature_value(row[c], path));
    if (row[label_col] == "0") item.label = 0;
    else if (row[label_col] == "1") item.label = 1;
    else throw bimkit::Error("label must be 0 or 1, got '" + row[label_col] +
                             "' in " + path);
    set.items.push_back(std::move(item));
  }
  return set;
}

bimkit::UnlabeledPool read_unlabeled_csv(const std::string& path) {
  const bimkit::CsvTable table = bimkit::read_csv(path);
  if (table.column("id") != 0)
    throw bimkit::SchemaError("unlabeled dataset needs columns id,f1..fd");
  bimkit::UnlabeledPool pool;
  for (const auto& row : table.rows) {
    bimkit::UnlabeledItem item;
    item.id = row[0];
    for (size_t c = 1; c < row.size(); ++c)
      item.features.push_back(feature_value(row[c], path));
    pool.items.push_back(std::move(item));
  }
  return pool;
}

void write_labeled_csv(const bimkit::LabeledSet& set, const std::string& path) {
  const size_t dim = set.feature_dim();
  std::vector<std::string> header{"id"};
  for (size_t d = 1; d <= dim; ++d) header.push_back("f" + std::to_string(d));
  header.push_back("label");
  header.push_back("origin");
  header.push_back("pseudo_round");
  header.push_back("pseudo_confidence");
  std::vector<std::vector<std::string>> rows;
  rows.reserve(set.items.size());
  char buf[40];
  for (const auto& item : set.items) {
    std::vector<std::string> row{item.id};
    for (double f : item.features) {
      std::snprintf(buf, sizeof buf, "%.17g", f);
      row.push_back(buf);
    }
    row.push_back(std::to_string(item.label));
    if (const auto* pseudo = std::get_if<bimkit::PseudoOrigin>(&item.origin)) {
      row.push_back("pseudo");
      row.push_back(std::to_string(pseudo->round));
      std::snprintf(buf, sizeof buf, "%.6g", pseudo->confidence);
      row.push_back(buf);
    } else {
      row.push_back("expert");
      row.push_back("");
      row.push_back("");
    }
    rows.push_back(std::move(row));
  }
  bimkit::write_csv(path, header, rows);
}

bimkit::TrainHyper hyper_from(const json* st, const std::vector<int>& hidden_flag,
                              double lr_flag, int batch_flag, int s1_flag,
                              int s2_flag) {
  bimkit::TrainHyper hyper;
  if (st) {
    if (st->contains("hidden_layers"))
      hyper.hidden_layers = (*st)["hidden_layers"].get<std::vector<int>>();
    hyper.learning_rate = st->value("lr", hyper.learning_rate);
    hyper.batch_size = st->value("batch", hyper.batch_size);
    hyper.schedule.stage1_epochs =
        st->value("stage1_epochs", hyper.schedule.stage1_epochs);
    hyper.schedule.stage2_epochs =
        st->value("stage2_epochs", hyper.schedule.stage2_epochs);
  }
  if (!hidden_flag.empty()) hyper.hidden_layers = hidden_flag;
  if (lr_flag > 0) hyper.learning_rate = lr_flag;
  if (batch_flag >= 0) hyper.batch_size = batch_flag;
  if (s1_flag >= 0) hyper.schedule.stage1_epochs = s1_flag;
  if (s2_flag >= 0) hyper.schedule.stage2_epochs = s2_flag;
  return hyper;
}

bimkit::ImputeConfig impute_config_from(const Config& cfg,
                                        const CommonArgs& common) {
  bimkit::ImputeConfig out;
  if (const json* surf = cfg.section("surf")) {
    out.k = surf->value("k", out.k);
    if (surf->contains("family"))
      out.family = bimkit::variogram_family_from_string((*surf)["family"]);
    out.min_known = surf->value("min_known", out.min_known);
    out.variogram_bins = surf->value("variogram_bins", out.variogram_bins);
    out.variogram_max_lag_m = surf->value("max_lag_m", out.variogram_max_lag_m);
    out.max_variogram_points =
        surf->value("max_variogram_points", out.max_variogram_points);
    if (surf->contains("mlp")) {
      const json& mlp = (*surf)["mlp"];
      if (mlp.contains("layers"))
        out.mlp.hidden_layers = mlp["layers"].get<std::vector<int>>();
      out.mlp.learning_rate = mlp.value("lr", out.mlp.learning_rate);
      out.mlp.epochs = mlp.value("epochs", out.mlp.epochs);
      out.mlp.batch_size = mlp.value("batch", out.mlp.batch_size);
      out.mlp.seed = mlp.value("seed", out.mlp.seed);
    }
  }
  if (cfg.data.contains("seed")) out.seed = cfg.data["seed"].get<uint64_t>();
  if (common.seed) {
    out.seed = *common.seed;
    out.mlp.seed = *common.seed;
  }
  if (common.jobs > 0) out.jobs = common.jobs;
  return out;
}

// ---- subcommands ------------------------------------------------------------

int cmd_ingest(const CommonArgs& common, std::string metadata_csv,
               std::string vision_csv, std::string out_metadata,
               std::string out_vision, std::string rejects_metadata,
               std::string rejects_vision) {
  const Config cfg = common.config();
  metadata_csv = pick(metadata_csv, cfg, "metadata_csv");
  out_metadata = pick(out_metadata, cfg, "metadata_inventory");

  const json* schema = cfg.section("metadata_schema");
  if (!schema) throw bimkit::Error("config is missing metadata_schema");
  const auto metadata_spec = bimkit::csv_schema_from_json(*schema);

  prepare_output(out_metadata, common.force);
  const auto metadata = bimkit::parse_metadata_csv(metadata_csv, metadata_spec);
  write_inventory_interchange(metadata.inventory, out_metadata);
  if (rejects_metadata.empty())
    if (auto p = cfg.path("rejects_metadata")) rejects_metadata = *p;
  if (!rejects_metadata.empty()) {
    prepare_output(rejects_metadata, common.force);
    bimkit::write_rejects_report(metadata.rejects, rejects_metadata);
  }
  std::cerr << "ingest: " << metadata.inventory.size() << " metadata records, "
            << metadata.rejects.size() << " rejects\n";

  if (vision_csv.empty())
    if (auto p = cfg.path("vision_csv")) vision_csv = *p;
  if (!vision_csv.empty()) {
    const json* vschema = cfg.section("vision_schema");
    if (!vschema) throw bimkit::Error("config is missing vision_schema");
    out_vision = pick(out_vision, cfg, "vision_inventory");
    prepare_output(out_vision, common.force);
    const auto vision =
        bimkit::parse_vision_csv(vision_csv, bimkit::csv_schema_from_json(*vschema));
    write_inventory_interchange(vision.inventory, out_vision);
    if (rejects_vision.empty())
      if (auto p = cfg.path("rejects_vision")) rejects_vision = *p;
    if (!rejects_vision.empty()) {
      prepare_output(rejects_vision, common.force);
      bimkit::write_rejects_report(vision.rejects, rejects_vision);
    }
    std::cerr << "ingest: " << vision.inventory.size() << " vision records, "
              << vision.rejects.size() << " rejects\n";
  }
  return 0;
}

int cmd_geocode(const CommonArgs& common, std::string in_path,
                std::string out_path, std::string cache_path) {
  const Config cfg = common.config();
  in_path = pick(in_path, cfg, "metadata_inventory");
  out_path = pick(out_path, cfg, "geocoded_inventory");
  prepare_output(out_path, common.force);

  const json* geocoder_cfg = cfg.section("geocoder");
  std::string provider_kind =
      geocoder_cfg ? geocoder_cfg->value("provider", "file") : "file";

  std::unique_ptr<bimkit::GeocodeProvider> provider;
  if (provider_kind == "file") {
    std::string table;
    if (geocoder_cfg && geocoder_cfg->contains("table")) {
      const fs::path p = (*geocoder_cfg)["table"].get<std::string>();
      table = (p.is_absolute() ? p : cfg.base / p).string();
    }
    if (auto p = cfg.path("geocode_table")) table = *p;
    if (table.empty()) throw bimkit::Error("file geocoder needs a lookup table");
    provider = std::make_unique<bimkit::FileProvider>(table);
  } else if (provider_kind == "http") {
    if (!geocoder_cfg || !geocoder_cfg->contains("host"))
      throw bimkit::Error("http geocoder needs host/port/path in config");
    const char* key = std::getenv("GEOCODER_API_KEY");
    bimkit::RetryPolicy retry;
    retry.max_attempts = geocoder_cfg->value("retries", retry.max_attempts);
    retry.initial_backoff_ms =
        geocoder_cfg->value("backoff_ms", retry.initial_backoff_ms);
    provider = std::make_unique<bimkit::HttpProvider>(
        (*geocoder_cfg)["host"].get<std::string>(),
        geocoder_cfg->value("port", 80),
        geocoder_cfg->value("path", std::string("/geocode")),
        key ? key : "", retry);
  } else {
    throw bimkit::Error("unknown geocoder provider: " + provider_kind);
  }

  if (cache_path.empty())
    if (auto p = cfg.path("geocode_cache")) cache_path = *p;
  std::optional<std::string> cache_file;
  if (!cache_path.empty()) {
    const fs::path parent = fs::path(cache_path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    cache_file = cache_path;
  }
  bimkit::GeocodeCache cache(cache_file);
  bimkit::CachingGeocoder geocoder(*provider, cache);

  const auto inventory = read_inventory(in_path);
  const auto outcome = bimkit::geocode_inventory(geocoder, inventory);
  write_inventory_interchange(outcome.inventory, out_path);
  std::cerr << "geocode: " << outcome.failures.size() << " failures of "
            << inventory.size() << " records\n";
  for (const auto& id : outcome.failures) std::cerr << "  unresolved: " << id << "\n";
  return 0;
}

int cmd_merge(const CommonArgs& common, std::string metadata_inv,
              std::string vision_inv, std::string out_path, std::string prefer) {
  const Config cfg = common.config();
  metadata_inv = pick(metadata_inv, cfg, "geocoded_inventory");
  vision_inv = pick(vision_inv, cfg, "vision_inventory");
  out_path = pick(out_path, cfg, "merged_inventory");
  prepare_output(out_path, common.force);

  if (prefer.empty()) {
    if (const json* merge_cfg = cfg.section("merge"))
      prefer = merge_cfg->value("prefer", "metadata");
    else
      prefer = "metadata";
  }
  bimkit::MergePolicy policy;
  if (prefer == "metadata")
    policy.preference = bimkit::MergePolicy::Preference::MetadataWins;
  else if (prefer == "vision")
    policy.preference = bimkit::MergePolicy::Preference::VisionWins;
  else
    throw bimkit::Error("--prefer must be metadata or vision");

  const auto merged = bimkit::merge_inventories(read_inventory(metadata_inv),
                                                read_inventory(vision_inv), policy);
  write_inventory_interchange(merged, out_path);
  std::cerr << "merge: " << merged.size() << " records\n";
  return 0;
}

int cmd_impute(const CommonArgs& common, std::string in_path,
               std::string out_path, std::string attribute, std::string engine) {
  const Config cfg = common.config();
  in_path = pick(in_path, cfg, "merged_inventory");
  out_path = pick(out_path, cfg, "imputed_inventory");
  prepare_output(out_path, common.force);

  const json* surf = cfg.section("surf");
  if (attribute.empty() && surf) attribute = surf->value("attribute", "");
  if (attribute.empty()) throw bimkit::Error("--attribute is required");
  if (engine.empty()) engine = surf ? surf->value("engine", "kriging") : "kriging";

  const auto inventory = read_inventory(in_path);
  const auto before = bimkit::missing_report(inventory, attribute);
  const auto imputed =
      bimkit::impute(inventory, attribute,
                     bimkit::impute_engine_from_string(engine),
                     impute_config_from(cfg, common));
  const auto after = bimkit::missing_report(imputed, attribute);
  write_inventory_interchange(imputed, out_path);
  std::cerr << "impute: '" << attribute << "' missing " << before.missing_ids.size()
            << " -> " << after.missing_ids.size() << " of " << imputed.size()
            << " records\n";
  return 0;
}

int cmd_cross_validate(const CommonArgs& common, std::string in_path,
                       std::string attribute, std::string engine, int folds,
                       std::string out_path) {
  const Config cfg = common.config();
  in_path = pick(in_path, cfg, "merged_inventory");
  const json* surf = cfg.section("surf");
  if (attribute.empty() && surf) attribute = surf->value("attribute", "");
  if (attribute.empty()) throw bimkit::Error("--attribute is required");
  if (engine.empty()) engine = surf ? surf->value("engine", "kriging") : "kriging";

  const auto report = bimkit::cross_validate(
      read_inventory(in_path), attribute,
      bimkit::impute_engine_from_string(engine), impute_config_from(cfg, common),
      folds);

  const json j = report.to_json();
  if (out_path.empty())
    if (auto p = cfg.path("cv_report")) out_path = *p;
  if (!out_path.empty()) {
    prepare_output(out_path, common.force);
    write_json_file(j, out_path);
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_train(const CommonArgs& common, std::string labeled_path,
              std::string out_model, const std::vector<int>& hidden, double lr,
              int batch, int stage1, int stage2) {
  const Config cfg = common.config();
  labeled_path = pick(labeled_path, cfg, "selftrain_seed_csv");
  if (out_model.empty())
    if (auto p = cfg.path("selftrain_model")) out_model = *p;
  if (out_model.empty()) throw bimkit::Error("--out-model is required");
  prepare_output(out_model, common.force);

  const auto hyper =
      hyper_from(cfg.section("selftrain"), hidden, lr, batch, stage1, stage2);
  const uint64_t seed =
      common.seed.value_or(cfg.data.value("seed", uint64_t{0}));

  std::vector<bimkit::LossEntry> trace;
  const auto model =
      bimkit::train_seed(read_labeled_csv(labeled_path), hyper, seed, &trace);
  write_json_file(bimkit::mlp_to_json(model), out_model);
  if (!trace.empty())
    std::cerr << "train: final loss " << trace.back().loss << " after "
              << trace.size() << " epochs\n";
  return 0;
}

int cmd_selftrain(const CommonArgs& common, std::string seed_csv,
                  std::string pool_csv, std::string eval_csv, double tau,
                  int rounds, std::optional<bool> balance_flag,
                  std::string out_model, std::string out_labeled,
                  std::string report_path, const std::vector<int>& hidden,
                  double lr, int batch, int stage1, int stage2) {
  const Config cfg = common.config();
  seed_csv = pick(seed_csv, cfg, "selftrain_seed_csv");
  pool_csv = pick(pool_csv, cfg, "selftrain_pool_csv");
  if (eval_csv.empty())
    if (auto p = cfg.path("selftrain_eval_csv")) eval_csv = *p;

  const json* st = cfg.section("selftrain");
  bimkit::SelfTrainConfig st_cfg;
  st_cfg.hyper = hyper_from(st, hidden, lr, batch, stage1, stage2);
  if (st) {
    st_cfg.confidence_threshold = st->value("tau", st_cfg.confidence_threshold);
    st_cfg.max_rounds = st->value("rounds", st_cfg.max_rounds);
    st_cfg.balance = st->value("balance", st_cfg.balance);
  }
  if (tau > 0) st_cfg.confidence_threshold = tau;
  if (rounds > 0) st_cfg.max_rounds = rounds;
  if (balance_flag) st_cfg.balance = *balance_flag;
  st_cfg.seed = common.seed.value_or(cfg.data.value("seed", uint64_t{0}));

  std::optional<bimkit::LabeledSet> eval_set;
  if (!eval_csv.empty()) eval_set = read_labeled_csv(eval_csv);

  const auto result = bimkit::self_train_loop(
      read_labeled_csv(seed_csv), read_unlabeled_csv(pool_csv), st_cfg, eval_set);

  json rounds_json = json::array();
  for (const auto& r : result.rounds) {
    json jr{{"round", r.round},
            {"labeled_count", r.labeled_count},
            {"accepted", r.accepted},
            {"mean_confidence", r.mean_confidence}};
    if (r.eval) jr["eval"] = bimkit::metrics_to_json(*r.eval);
    rounds_json.push_back(std::move(jr));
  }

  if (report_path.empty())
    if (auto p = cfg.path("selftrain_report")) report_path = *p;
  if (!report_path.empty()) {
    prepare_output(report_path, common.force);
    write_json_file(rounds_json, report_path);
  }
  if (out_model.empty())
    if (auto p = cfg.path("selftrain_model")) out_model = *p;
  if (!out_model.empty()) {
    prepare_output(out_model, common.force);
    write_json_file(bimkit::mlp_to_json(result.model), out_model);
  }
  if (out_labeled.empty())
    if (auto p = cfg.path("selftrain_labeled")) out_labeled = *p;
  if (!out_labeled.empty()) {
    prepare_output(out_labeled, common.force);
    write_labeled_csv(result.labeled, out_labeled);
  }
  std::cout << rounds_json.dump(2) << '\n';
  return 0;
}

int cmd_rasterize(const CommonArgs& common, std::string in_path,
                  std::string attribute, std::string engine, double cell_size,
                  double threshold, std::string bbox_str, double cutoff, int k,
                  std::string out_asc, std::string out_cells) {
  const Config cfg = common.config();
  in_path = pick(in_path, cfg, "imputed_inventory");
  const json* raster = cfg.section("raster");
  if (attribute.empty() && raster) attribute = raster->value("attribute", "");
  if (attribute.empty()) throw bimkit::Error("--attribute is required");

  bimkit::SurfaceConfig surface;
  if (raster) {
    if (raster->contains("engine"))
      surface.engine =
          bimkit::surface_engine_from_string((*raster)["engine"].get<std::string>());
    surface.cell_size_deg = raster->value("cell_size", surface.cell_size_deg);
    surface.k = raster->value("k", surface.k);
    if (raster->contains("cutoff_m")) surface.cutoff_m = (*raster)["cutoff_m"];
  }
  if (!engine.empty()) surface.engine = bimkit::surface_engine_from_string(engine);
  if (cell_size > 0) surface.cell_size_deg = cell_size;
  if (cutoff > 0) surface.cutoff_m = cutoff;
  if (k > 0) surface.k = k;
  if (common.jobs > 0) surface.jobs = common.jobs;
  if (common.seed) surface.seed = *common.seed;
  else if (cfg.data.contains("seed")) surface.seed = cfg.data["seed"].get<uint64_t>();

  if (!bbox_str.empty()) {
    bimkit::BoundingBox box;
    std::istringstream ss(bbox_str);
    char comma;
    if (!(ss >> box.min_lat >> comma >> box.min_lon >> comma >> box.max_lat >>
          comma >> box.max_lon))
      throw bimkit::Error("--bbox expects minlat,minlon,maxlat,maxlon");
    surface.bbox = box;
  }

  std::optional<double> cell_threshold;
  if (threshold >= 0) cell_threshold = threshold;
  else if (raster && raster->contains("threshold"))
    cell_threshold = (*raster)["threshold"].get<double>();

  const auto grid =
      bimkit::probability_surface(read_inventory(in_path), attribute, surface);

  if (out_asc.empty())
    if (auto p = cfg.path("raster_asc")) out_asc = *p;
  if (!out_asc.empty()) {
    prepare_output(out_asc, common.force);
    bimkit::export_ascii_grid(grid, out_asc);
  }
  if (out_cells.empty())
    if (auto p = cfg.path("raster_cells")) out_cells = *p;
  if (!out_cells.empty()) {
    prepare_output(out_cells, common.force);
    bimkit::export_geojson_cells(grid, out_cells, cell_threshold);
  }
  std::cerr << "rasterize: " << grid.nrows << "x" << grid.ncols << " grid\n";
  return 0;
}

int cmd_metrics(const CommonArgs& common, std::string input, int positive,
                std::string out_path) {
  const bimkit::CsvTable table = bimkit::read_csv(input);
  const int pred_col = table.column("prediction");
  const int label_col = table.column("label");
  if (pred_col < 0 || label_col < 0)
    throw bimkit::SchemaError("metrics input needs columns prediction,label");
  auto class_index = [](const std::string& cell) {
    const auto v = bimkit::csv_parse_double(cell);
    if (!v || *v != std::floor(*v))
      throw bimkit::Error("class index expected, got '" + cell + "'");
    return static_cast<int>(*v);
  };
  std::vector<int> preds, labels;
  for (const auto& row : table.rows) {
    preds.push_back(class_index(row[pred_col]));
    labels.push_back(class_index(row[label_col]));
  }
  const auto m = bimkit::compute_metrics(preds, labels, positive);
  const json j = bimkit::metrics_to_json(m);
  if (!out_path.empty()) {
    prepare_output(out_path, common.force);
    write_json_file(j, out_path);
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_report(const CommonArgs& common, std::string out_path) {
  const Config cfg = common.config();
  json report;

  auto count_missing = [](const bimkit::Inventory& inv) {
    json per_attr = json::object();
    for (const auto& [name, kind] : inv.schema()) {
      const auto rep = bimkit::missing_report(inv, name);
      per_attr[name] = {
          {"present", rep.present_ids.size()},
          {"missing", rep.missing_ids.size()},
          {"missing_rate",
           inv.size() == 0
               ? 0.0
               : static_cast<double>(rep.missing_ids.size()) / inv.size()}};
    }
    return per_attr;
  };

  json inventories = json::object();
  for (const char* key :
       {"metadata_inventory", "vision_inventory", "geocoded_inventory",
        "merged_inventory", "imputed_inventory"}) {
    const auto p = cfg.path(key);
    if (!p || !fs::exists(*p)) continue;
    const auto inv = read_inventory(*p);
    size_t geocoded = 0;
    for (const auto& rec : inv.records())
      if (rec.geocode) ++geocoded;
    inventories[key] = {{"records", inv.size()},
                        {"geocoded", geocoded},
                        {"attributes", count_missing(inv)}};
  }
  report["inventories"] = std::move(inventories);

  for (const char* key : {"cv_report", "selftrain_report"}) {
    const auto p = cfg.path(key);
    if (!p || !fs::exists(*p)) continue;
    std::ifstream in(*p, std::ios::binary);
    json j;
    in >> j;
    report[key] = std::move(j);
  }

  if (out_path.empty())
    if (auto p = cfg.path("report")) out_path = *p;
  if (!out_path.empty()) {
    prepare_output(out_path, common.force);
    write_json_file(report, out_path);
  }
  std::cout << report.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bimkit: regional building-inventory pipeline"};
  app.require_subcommand(1);

  CommonArgs common;
  app.add_option("--config", common.config_path, "pipeline config JSON")
      ->envname("BIMKIT_CONFIG");
  app.add_flag("--force", common.force, "overwrite existing outputs");
  uint64_t seed_value = 0;
  bool seed_given = false;
  app.add_option("--seed", seed_value, "seed for stochastic steps")
      ->each([&](const std::string&) { seed_given = true; });
  app.add_option("--jobs", common.jobs,
                 "worker threads for impute/rasterize (default all cores)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "parse metadata/vision CSVs");
  std::string in_metadata, in_vision, out_metadata, out_vision, rej_meta, rej_vis;
  ingest->add_option("--metadata", in_metadata, "metadata CSV");
  ingest->add_option("--vision", in_vision, "vision CSV");
  ingest->add_option("--out-metadata", out_metadata, "metadata inventory out");
  ingest->add_option("--out-vision", out_vision, "vision inventory out");
  ingest->add_option("--rejects-metadata", rej_meta, "rejects report (JSON lines)");
  ingest->add_option("--rejects-vision", rej_vis, "rejects report (JSON lines)");

  // geocode
  auto* geocode = app.add_subcommand("geocode", "resolve addresses to coordinates");
  std::string geo_in, geo_out, geo_cache;
  geocode->add_option("--in", geo_in, "inventory in");
  geocode->add_option("--out", geo_out, "inventory out");
  geocode->add_option("--geocode-cache", geo_cache, "persistent cache (JSON lines)");

  // merge
  auto* merge = app.add_subcommand("merge", "merge metadata and vision inventories");
  std::string merge_meta, merge_vis, merge_out, merge_prefer;
  merge->add_option("--metadata-inv", merge_meta, "metadata inventory");
  merge->add_option("--vision-inv", merge_vis, "vision inventory");
  merge->add_option("--out", merge_out, "merged inventory out");
  merge->add_option("--prefer", merge_prefer, "metadata|vision (conflict winner)");

  // impute
  auto* impute = app.add_subcommand("impute", "fill missing attribute values");
  std::string imp_in, imp_out, imp_attr, imp_engine;
  impute->add_option("--in", imp_in, "inventory in");
  impute->add_option("--out", imp_out, "inventory out");
  impute->add_option("--attribute", imp_attr, "attribute to impute");
  impute->add_option("--engine", imp_engine,
                     "kriging|neural-net|neighbor-majority");

  // cross-validate
  auto* cv = app.add_subcommand("cross-validate", "hold-out imputation metrics");
  std::string cv_in, cv_attr, cv_engine, cv_out;
  int cv_folds = 5;
  cv->add_option("--in", cv_in, "inventory in");
  cv->add_option("--attribute", cv_attr, "attribute to validate");
  cv->add_option("--engine", cv_engine, "kriging|neural-net|neighbor-majority");
  cv->add_option("--folds", cv_folds, "number of folds (>= 2)");
  cv->add_option("--out", cv_out, "report JSON out");

  // train
  auto* train = app.add_subcommand("train", "train a classifier on a labeled set");
  std::string train_labeled, train_model;
  std::vector<int> train_hidden;
  double train_lr = -1;
  int train_batch = -1, train_s1 = -1, train_s2 = -1;
  train->add_option("--labeled", train_labeled, "labeled CSV (id,f1..fd,label)");
  train->add_option("--out-model", train_model, "model JSON out");
  train->add_option("--hidden", train_hidden, "hidden layer sizes");
  train->add_option("--lr", train_lr, "learning rate");
  train->add_option("--batch", train_batch, "mini-batch size (0 = full)");
  train->add_option("--stage1-epochs", train_s1, "frozen-body epochs");
  train->add_option("--stage2-epochs", train_s2, "all-layer epochs");

  // selftrain
  auto* selftrain = app.add_subcommand(
      "selftrain", "semi-automatic labeling loop (train/pseudo-label rounds)");
  std::string st_seed, st_pool, st_eval, st_model, st_labeled, st_report;
  double st_tau = -1;
  int st_rounds = -1;
  bool st_balance = false, st_no_balance = false;
  std::vector<int> st_hidden;
  double st_lr = -1;
  int st_batch = -1, st_s1 = -1, st_s2 = -1;
  selftrain->add_option("--seed-csv", st_seed, "expert-labeled seed CSV");
  selftrain->add_option("--pool-csv", st_pool, "unlabeled pool CSV");
  selftrain->add_option("--eval-set", st_eval, "held-out labeled CSV");
  selftrain->add_option("--tau", st_tau, "confidence threshold in (0.5, 1]");
  selftrain->add_option("--rounds", st_rounds, "max self-training rounds");
  selftrain->add_flag("--balance", st_balance, "balance classes before training");
  selftrain->add_flag("--no-balance", st_no_balance, "disable class balancing");
  selftrain->add_option("--out-model", st_model, "final model JSON out");
  selftrain->add_option("--out-labeled", st_labeled, "final labeled CSV out");
  selftrain->add_option("--report", st_report, "per-round report JSON out");
  selftrain->add_option("--hidden", st_hidden, "hidden layer sizes");
  selftrain->add_option("--lr", st_lr, "learning rate");
  selftrain->add_option("--batch", st_batch, "mini-batch size");
  selftrain->add_option("--stage1-epochs", st_s1, "frozen-body epochs");
  selftrain->add_option("--stage2-epochs", st_s2, "all-layer epochs");

  // rasterize
  auto* rasterize = app.add_subcommand("rasterize", "attribute probability surface");
  std::string ras_in, ras_attr, ras_engine, ras_bbox, ras_asc, ras_cells;
  double ras_cell = -1, ras_threshold = -1, ras_cutoff = -1;
  int ras_k = -1;
  rasterize->add_option("--in", ras_in, "inventory in");
  rasterize->add_option("--attribute", ras_attr, "numeric attribute to rasterize");
  rasterize->add_option("--engine", ras_engine, "idw|kriging");
  rasterize->add_option("--cell-size", ras_cell, "cell size in degrees");
  rasterize->add_option("--threshold", ras_threshold,
                        "minimum probability for GeoJSON cells");
  rasterize->add_option("--bbox", ras_bbox, "minlat,minlon,maxlat,maxlon");
  rasterize->add_option("--cutoff", ras_cutoff, "nodata cutoff radius (m)");
  rasterize->add_option("--k", ras_k, "neighbors per cell");
  rasterize->add_option("--out-asc", ras_asc, "ESRI ASCII grid out");
  rasterize->add_option("--out-cells", ras_cells, "GeoJSON cells out");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "classification metrics from CSV");
  std::string met_input, met_out;
  int met_positive = 1;
  metrics->add_option("--input", met_input, "CSV with prediction,label columns")
      ->required();
  metrics->add_option("--positive", met_positive, "positive class index");
  metrics->add_option("--out", met_out, "metrics JSON out");

  // report
  auto* report = app.add_subcommand("report", "pipeline summary JSON");
  std::string rep_out;
  report->add_option("--out", rep_out, "summary JSON out");

  // Global flags (--seed, --jobs, --force, --config) may appear after the
  // subcommand name.
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  }
  if (seed_given) common.seed = seed_value;
  if (common.jobs == 0) {
    // impute/rasterize default to available parallelism
    common.jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (common.jobs < 1) common.jobs = 1;
  }

  try {
    if (*ingest)
      return cmd_ingest(common, in_metadata, in_vision, out_metadata, out_vision,
                        rej_meta, rej_vis);
    if (*geocode) return cmd_geocode(common, geo_in, geo_out, geo_cache);
    if (*merge)
      return cmd_merge(common, merge_meta, merge_vis, merge_out, merge_prefer);
    if (*impute) return cmd_impute(common, imp_in, imp_out, imp_attr, imp_engine);
    if (*cv) return cmd_cross_validate(common, cv_in, cv_attr, cv_engine,
                                       cv_folds, cv_out);
    if (*train)
      return cmd_train(common, train_labeled, train_model, train_hidden, train_lr,
                       train_batch, train_s1, train_s2);
    if (*selftrain) {
      std::optional<bool> balance_flag;
      if (st_balance) balance_flag = true;
      if (st_no_balance) balance_flag = false;
      return cmd_selftrain(common, st_seed, st_pool, st_eval, st_tau, st_rounds,
                           balance_flag, st_model, st_labeled, st_report,
                           st_hidden, st_lr, st_batch, st_s1, st_s2);
    }
    if (*rasterize)
      return cmd_rasterize(common, ras_in, ras_attr, ras_engine, ras_cell,
                           ras_threshold, ras_bbox, ras_cutoff, ras_k, ras_asc,
                           ras_cells);
    if (*metrics) return cmd_metrics(common, met_input, met_positive, met_out);
    if (*report) return cmd_report(common, rep_out);
    std::cerr << app.help();
    return 1;
  } catch (const bimkit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    // JSON enters only through user-supplied files (configs, inventories,
    // models), so shape errors are data errors.
    std::cerr << "error: malformed JSON input: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
