#include "bimkit/impute.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <thread>

#include "bimkit/rng.hpp"
#include "bimkit/spatial.hpp"

namespace bimkit {

std::string to_string(ImputeEngine e) {
  switch (e) {
    case ImputeEngine::Kriging: return "kriging";
    case ImputeEngine::NeuralNet: return "neural-net";
    case ImputeEngine::NeighborMajority: return "neighbor-majority";
  }
  return "kriging";
}

ImputeEngine impute_engine_from_string(const std::string& s) {
  if (s == "kriging") return ImputeEngine::Kriging;
  if (s == "neural-net") return ImputeEngine::NeuralNet;
  if (s == "neighbor-majority") return ImputeEngine::NeighborMajority;
  throw Error("unknown impute engine: " + s);
}

std::vector<double> build_neighbor_features(const NeighborContext& ctx, int k) {
  if (k < 1) throw Error("build_neighbor_features: k must be >= 1");
  std::vector<double> features(static_cast<size_t>(4) * k, 0.0);
  const size_t n = std::min<size_t>(ctx.neighbors.size(), static_cast<size_t>(k));
  for (size_t i = 0; i < n; ++i) {
    const auto& s = ctx.neighbors[i];
    const LocalOffsetKm off = local_offset_km(ctx.target, s.location);
    features[3 * i + 0] = s.value;
    features[3 * i + 1] = off.north;
    features[3 * i + 2] = off.east;
    features[static_cast<size_t>(3) * k + i] = 1.0;  // presence mask
  }
  return features;
}

VariogramModel fit_variogram_auto(const std::vector<SpatialSample>& samples,
                                  VariogramFamily family, int n_bins,
                                  double max_lag_m, int max_points,
                                  uint64_t seed) {
  std::vector<SpatialSample> subset = samples;
  if (max_points > 0 && subset.size() > static_cast<size_t>(max_points)) {
    Rng rng(seed);
    rng.shuffle(subset);
    subset.resize(static_cast<size_t>(max_points));
  }
  if (max_lag_m <= 0.0) {
    double min_lat = subset[0].location.lat, max_lat = min_lat;
    double min_lon = subset[0].location.lon, max_lon = min_lon;
    for (const auto& s : subset) {
      min_lat = std::min(min_lat, s.location.lat);
      max_lat = std::max(max_lat, s.location.lat);
      min_lon = std::min(min_lon, s.location.lon);
      max_lon = std::max(max_lon, s.location.lon);
    }
    max_lag_m =
        0.5 * haversine_m({min_lat, min_lon}, {max_lat, max_lon});
    if (max_lag_m <= 0.0)
      throw Error("fit_variogram_auto: degenerate sample extent");
  }
  return fit_variogram(empirical_variogram(subset, n_bins, max_lag_m), family);
}

namespace {

struct KnownNumeric {
  std::vector<size_t> record_idx;
  std::vector<SpatialSample> samples;
};

struct KnownCategorical {
  std::vector<size_t> record_idx;
  std::vector<Geocode> locations;
  std::vector<int> labels;             // indices into vocab
  std::vector<std::string> vocab;      // sorted distinct labels
};

double numeric_value(const Attribute& attr) {
  return std::get<NumericValue>(attr.value).value;
}

KnownNumeric collect_known_numeric(const Inventory& inv,
                                   const std::string& attribute) {
  KnownNumeric known;
  for (size_t i = 0; i < inv.records().size(); ++i) {
    const auto& rec = inv.records()[i];
    if (!rec.geocode) continue;
    const auto it = rec.attributes.find(attribute);
    if (it == rec.attributes.end()) continue;
    known.record_idx.push_back(i);
    known.samples.push_back({*rec.geocode, numeric_value(it->second)});
  }
  return known;
}

KnownCategorical collect_known_categorical(const Inventory& inv,
                                           const std::string& attribute) {
  KnownCategorical known;
  std::vector<std::string> raw;
  for (size_t i = 0; i < inv.records().size(); ++i) {
    const auto& rec = inv.records()[i];
    if (!rec.geocode) continue;
    const auto it = rec.attributes.find(attribute);
    if (it == rec.attributes.end()) continue;
    known.record_idx.push_back(i);
    known.locations.push_back(*rec.geocode);
    raw.push_back(std::get<CategoricalValue>(it->second.value).label);
  }
  known.vocab = raw;
  std::sort(known.vocab.begin(), known.vocab.end());
  known.vocab.erase(std::unique(known.vocab.begin(), known.vocab.end()),
                    known.vocab.end());
  for (const auto& label : raw) {
    const auto it = std::lower_bound(known.vocab.begin(), known.vocab.end(), label);
    known.labels.push_back(static_cast<int>(it - known.vocab.begin()));
  }
  return known;
}

AttributeKind require_kind(const Inventory& inv, const std::string& attribute) {
  const auto it = inv.schema().find(attribute);
  if (it == inv.schema().end())
    throw SchemaError("unknown attribute: " + attribute);
  return it->second;
}

void check_engine_kind(ImputeEngine engine, AttributeKind kind,
                       const std::string& attribute) {
  if (engine == ImputeEngine::Kriging && kind != AttributeKind::Numeric)
    throw Error("kriging requires a numeric attribute; '" + attribute +
                "' is categorical");
  if (engine == ImputeEngine::NeighborMajority && kind != AttributeKind::Categorical)
    throw Error("neighbor-majority requires a categorical attribute; '" +
                attribute + "' is numeric");
}

void check_min_known(size_t known, int min_known, const std::string& attribute) {
  if (known < static_cast<size_t>(min_known))
    throw InsufficientDataError(
        "attribute '" + attribute + "' has " + std::to_string(known) +
        " known geocoded records, need at least " + std::to_string(min_known));
}

void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& body) {
  if (jobs <= 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const int workers = std::min<int>(jobs, static_cast<int>(n));
  std::vector<std::thread> pool;
  std::atomic<size_t> next{0};
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

// Per-dimension z-score scaler fitted on training features.
struct FeatureScaler {
  std::vector<double> mean, stddev;

  void fit(const std::vector<std::vector<double>>& x) {
    const size_t d = x[0].size();
    mean.assign(d, 0.0);
    stddev.assign(d, 0.0);
    for (const auto& row : x)
      for (size_t j = 0; j < d; ++j) mean[j] += row[j];
    for (auto& m : mean) m /= static_cast<double>(x.size());
    for (const auto& row : x)
      for (size_t j = 0; j < d; ++j) {
        const double diff = row[j] - mean[j];
        stddev[j] += diff * diff;
      }
    for (auto& s : stddev)
      s = std::max(std::sqrt(s / static_cast<double>(x.size())), 1e-9);
  }

  std::vector<double> apply(std::vector<double> row) const {
    for (size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / stddev[j];
    return row;
  }
};

// Neighbor features for every training point, excluding the point itself
// from its own neighbor search.
std::vector<std::vector<double>> self_excluded_features(
    const std::vector<SpatialSample>& samples, int k) {
  std::vector<Geocode> locations;
  locations.reserve(samples.size());
  for (const auto& s : samples) locations.push_back(s.location);
  SpatialIndex index(std::move(locations));

  std::vector<std::vector<double>> features(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto nn = index.knn(samples[i].location, k + 1);
    NeighborContext ctx;
    ctx.target = samples[i].location;
    for (size_t idx : nn) {
      if (idx == i) continue;
      if (ctx.neighbors.size() == static_cast<size_t>(k)) break;
      ctx.neighbors.push_back(samples[idx]);
    }
    features[i] = build_neighbor_features(ctx, k);
  }
  return features;
}

NeighborContext context_from_index(const SpatialIndex& index,
                                   const std::vector<SpatialSample>& samples,
                                   const Geocode& target, int k) {
  NeighborContext ctx;
  ctx.target = target;
  for (size_t idx : index.knn(target, k)) ctx.neighbors.push_back(samples[idx]);
  return ctx;
}

// ---- numeric engines ------------------------------------------------------

struct NumericPredictor {
  virtual ~NumericPredictor() = default;
  virtual std::pair<double, double> predict(const Geocode& target) const = 0;
};

struct KrigingPredictor : NumericPredictor {
  VariogramModel model;
  SpatialIndex index;
  const std::vector<SpatialSample>& samples;
  int k;

  KrigingPredictor(const std::vector<SpatialSample>& train, const ImputeConfig& cfg)
      : index([&] {
          std::vector<Geocode> pts;
          pts.reserve(train.size());
          for (const auto& s : train) pts.push_back(s.location);
          return pts;
        }()),
        samples(train), k(cfg.k) {
    model = fit_variogram_auto(train, cfg.family, cfg.variogram_bins,
                               cfg.variogram_max_lag_m, cfg.max_variogram_points,
                               cfg.seed);
  }

  std::pair<double, double> predict(const Geocode& target) const override {
    const auto pred = krige(model, context_from_index(index, samples, target, k));
    return {pred.mean, std::sqrt(pred.variance)};
  }
};

struct MlpRegressionPredictor : NumericPredictor {
  SpatialIndex index;
  const std::vector<SpatialSample>& samples;
  int k;
  FeatureScaler scaler;
  double target_mean = 0.0, target_std = 1.0;
  MlpModel model;
  double half_width = 0.0;  // uncertainty from k-fold residuals

  MlpRegressionPredictor(const std::vector<SpatialSample>& train,
                         const ImputeConfig& cfg, bool estimate_uncertainty)
      : index([&] {
          std::vector<Geocode> pts;
          pts.reserve(train.size());
          for (const auto& s : train) pts.push_back(s.location);
          return pts;
        }()),
        samples(train), k(cfg.k) {
    auto features = self_excluded_features(train, k);
    scaler.fit(features);

    double mean = 0.0;
    for (const auto& s : train) mean += s.value;
    mean /= static_cast<double>(train.size());
    double var = 0.0;
    for (const auto& s : train) var += (s.value - mean) * (s.value - mean);
    target_mean = mean;
    target_std = std::max(std::sqrt(var / static_cast<double>(train.size())), 1e-9);

    std::vector<std::vector<double>> x;
    std::vector<std::vector<double>> y;
    x.reserve(train.size());
    for (size_t i = 0; i < train.size(); ++i) {
      x.push_back(scaler.apply(features[i]));
      y.push_back({(train[i].value - target_mean) / target_std});
    }

    std::vector<int> layers{static_cast<int>(x[0].size())};
    for (int h : cfg.mlp.hidden_layers) layers.push_back(h);
    layers.push_back(1);
    model = mlp_init(layers, Activation::ReLU, OutputKind::Identity, cfg.mlp.seed);
    TrainOptions opt;
    opt.learning_rate = cfg.mlp.learning_rate;
    opt.epochs = cfg.mlp.epochs;
    opt.batch_size = cfg.mlp.batch_size;
    opt.seed = cfg.mlp.seed;
    mlp_train_regressor(model, x, y, opt);

    if (estimate_uncertainty && cfg.residual_folds >= 2 &&
        train.size() >= static_cast<size_t>(cfg.residual_folds)) {
      half_width = 1.96 * residual_stddev(train, cfg);
    }
  }

  static double residual_stddev(const std::vector<SpatialSample>& train,
                                const ImputeConfig& cfg);

  std::pair<double, double> predict(const Geocode& target) const override {
    const auto ctx = context_from_index(index, samples, target, k);
    const auto x = scaler.apply(build_neighbor_features(ctx, k));
    const double z = mlp_predict(model, x)[0];
    return {target_mean + target_std * z, half_width};
  }
};

std::unique_ptr<NumericPredictor> make_numeric_predictor(
    ImputeEngine engine, const std::vector<SpatialSample>& train,
    const ImputeConfig& cfg, bool estimate_uncertainty) {
  if (engine == ImputeEngine::Kriging)
    return std::make_unique<KrigingPredictor>(train, cfg);
  return std::make_unique<MlpRegressionPredictor>(train, cfg, estimate_uncertainty);
}

double MlpRegressionPredictor::residual_stddev(
    const std::vector<SpatialSample>& train, const ImputeConfig& cfg) {
  const size_t n = train.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  rng.shuffle(order);

  std::vector<double> residuals;
  residuals.reserve(n);
  for (int fold = 0; fold < cfg.residual_folds; ++fold) {
    std::vector<SpatialSample> fold_train;
    std::vector<size_t> test_idx;
    for (size_t pos = 0; pos < n; ++pos) {
      if (static_cast<int>(pos % cfg.residual_folds) == fold)
        test_idx.push_back(order[pos]);
      else
        fold_train.push_back(train[order[pos]]);
    }
    if (test_idx.empty() || fold_train.size() < 2) continue;
    ImputeConfig sub = cfg;
    sub.residual_folds = 0;  // no recursion
    MlpRegressionPredictor predictor(fold_train, sub, false);
    for (size_t idx : test_idx)
      residuals.push_back(predictor.predict(train[idx].location).first -
                          train[idx].value);
  }
  if (residuals.empty()) return 0.0;
  double mean = 0.0;
  for (double r : residuals) mean += r;
  mean /= static_cast<double>(residuals.size());
  double var = 0.0;
  for (double r : residuals) var += (r - mean) * (r - mean);
  return std::sqrt(var / static_cast<double>(residuals.size()));
}

// ---- categorical engines --------------------------------------------------

struct CategoricalPredictor {
  virtual ~CategoricalPredictor() = default;
  // Returns (label index, uncertainty = 1 - confidence).
  virtual std::pair<int, double> predict(const Geocode& target) const = 0;
};

struct MajorityPredictor : CategoricalPredictor {
  SpatialIndex index;
  const std::vector<int>& labels;
  int n_classes;
  int k;

  MajorityPredictor(const std::vector<Geocode>& locations,
                    const std::vector<int>& labels, int n_classes, int k)
      : index(locations), labels(labels), n_classes(n_classes), k(k) {}

  std::pair<int, double> predict(const Geocode& target) const override {
    const auto nn = index.knn(target, k);
    std::vector<int> votes(static_cast<size_t>(n_classes), 0);
    for (size_t idx : nn) ++votes[static_cast<size_t>(labels[idx])];
    // Tie break: the tied label whose closest supporter comes first.
    int best = -1;
    for (size_t idx : nn) {
      const int label = labels[idx];
      if (best < 0 || votes[label] > votes[best]) best = label;
    }
    const double share =
        static_cast<double>(votes[best]) / static_cast<double>(nn.size());
    return {best, 1.0 - share};
  }
};

struct MlpClassPredictor : CategoricalPredictor {
  SpatialIndex index;
  std::vector<SpatialSample> as_samples;  // value = label index
  int k;
  FeatureScaler scaler;
  MlpModel model;

  MlpClassPredictor(const std::vector<Geocode>& locations,
                    const std::vector<int>& labels, int n_classes,
                    const ImputeConfig& cfg)
      : index(locations), k(cfg.k) {
    as_samples.reserve(locations.size());
    for (size_t i = 0; i < locations.size(); ++i)
      as_samples.push_back({locations[i], static_cast<double>(labels[i])});

    auto features = self_excluded_features(as_samples, k);
    scaler.fit(features);
    std::vector<std::vector<double>> x;
    x.reserve(features.size());
    for (auto& f : features) x.push_back(scaler.apply(std::move(f)));

    std::vector<int> layers{static_cast<int>(x[0].size())};
    for (int h : cfg.mlp.hidden_layers) layers.push_back(h);
    layers.push_back(n_classes);
    model = mlp_init(layers, Activation::ReLU, OutputKind::SoftMax, cfg.mlp.seed);
    TrainOptions opt;
    opt.learning_rate = cfg.mlp.learning_rate;
    opt.epochs = cfg.mlp.epochs;
    opt.batch_size = cfg.mlp.batch_size;
    opt.seed = cfg.mlp.seed;
    mlp_train_classifier(model, x, labels, opt);
  }

  std::pair<int, double> predict(const Geocode& target) const override {
    NeighborContext ctx;
    ctx.target = target;
    for (size_t idx : index.knn(target, k)) ctx.neighbors.push_back(as_samples[idx]);
    const auto x = scaler.apply(build_neighbor_features(ctx, k));
    const auto probs = mlp_predict(model, x);
    const auto it = std::max_element(probs.begin(), probs.end());
    return {static_cast<int>(it - probs.begin()), 1.0 - *it};
  }
};

std::unique_ptr<CategoricalPredictor> make_categorical_predictor(
    ImputeEngine engine, const std::vector<Geocode>& locations,
    const std::vector<int>& labels, int n_classes, const ImputeConfig& cfg) {
  if (engine == ImputeEngine::NeighborMajority)
    return std::make_unique<MajorityPredictor>(locations, labels, n_classes,
                                               cfg.k);
  return std::make_unique<MlpClassPredictor>(locations, labels, n_classes, cfg);
}

}  // namespace

Inventory impute(const Inventory& inv, const std::string& attribute,
                 ImputeEngine engine, const ImputeConfig& cfg) {
  const AttributeKind kind = require_kind(inv, attribute);
  check_engine_kind(engine, kind, attribute);

  std::vector<BuildingRecord> records = inv.records();
  std::vector<size_t> targets;  // records to fill
  for (size_t i = 0; i < records.size(); ++i)
    if (records[i].geocode && !records[i].attributes.count(attribute))
      targets.push_back(i);

  const ImputeMethod method = engine == ImputeEngine::Kriging
                                  ? ImputeMethod::Kriging
                              : engine == ImputeEngine::NeuralNet
                                  ? ImputeMethod::NeuralNet
                                  : ImputeMethod::NeighborMajority;

  if (kind == AttributeKind::Numeric) {
    const KnownNumeric known = collect_known_numeric(inv, attribute);
    check_min_known(known.samples.size(), cfg.min_known, attribute);
    if (targets.empty()) return inv;
    const auto predictor = make_numeric_predictor(engine, known.samples, cfg, true);

    std::vector<std::pair<double, double>> predictions(targets.size());
    parallel_for(targets.size(), cfg.jobs, [&](size_t t) {
      predictions[t] = predictor->predict(*records[targets[t]].geocode);
    });
    for (size_t t = 0; t < targets.size(); ++t) {
      records[targets[t]].attributes[attribute] =
          Attribute{NumericValue{predictions[t].first, std::nullopt},
                    ImputedSource{method, predictions[t].second}};
    }
  } else {
    const KnownCategorical known = collect_known_categorical(inv, attribute);
    check_min_known(known.labels.size(), cfg.min_known, attribute);
    if (targets.empty()) return inv;
    const auto predictor = make_categorical_predictor(
        engine, known.locations, known.labels,
        static_cast<int>(known.vocab.size()), cfg);

    std::vector<std::pair<int, double>> predictions(targets.size());
    parallel_for(targets.size(), cfg.jobs, [&](size_t t) {
      predictions[t] = predictor->predict(*records[targets[t]].geocode);
    });
    for (size_t t = 0; t < targets.size(); ++t) {
      records[targets[t]].attributes[attribute] = Attribute{
          CategoricalValue{known.vocab[static_cast<size_t>(predictions[t].first)]},
          ImputedSource{method, predictions[t].second}};
    }
  }
  return Inventory(std::move(records), inv.schema());
}

nlohmann::json CrossValidationReport::to_json() const {
  nlohmann::json j;
  j["attribute"] = attribute;
  j["engine"] = to_string(engine);
  j["folds"] = folds;
  j["seed"] = seed;
  nlohmann::json metrics = nlohmann::json::object();
  if (rmse) metrics["rmse"] = *rmse;
  if (mae) metrics["mae"] = *mae;
  if (classification) {
    metrics["accuracy"] = classification->accuracy;
    metrics["precision"] = classification->precision;
    metrics["recall"] = classification->recall;
    metrics["f1"] = classification->f1;
  }
  j["metrics"] = std::move(metrics);
  return j;
}

CrossValidationReport cross_validate(const Inventory& inv,
                                     const std::string& attribute,
                                     ImputeEngine engine, const ImputeConfig& cfg,
                                     int folds) {
  if (folds < 2) throw Error("cross_validate: folds must be >= 2");
  const AttributeKind kind = require_kind(inv, attribute);
  check_engine_kind(engine, kind, attribute);

  CrossValidationReport report;
  report.attribute = attribute;
  report.engine = engine;
  report.folds = folds;
  report.seed = cfg.seed;

  if (kind == AttributeKind::Numeric) {
    const KnownNumeric known = collect_known_numeric(inv, attribute);
    const size_t n = known.samples.size();
    check_min_known(n, cfg.min_known, attribute);
    if (static_cast<size_t>(folds) > n)
      throw Error("cross_validate: fold with zero test records (folds=" +
                  std::to_string(folds) + ", known=" + std::to_string(n) + ")");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(cfg.seed);
    rng.shuffle(order);

    double sq_sum = 0.0, abs_sum = 0.0;
    for (int fold = 0; fold < folds; ++fold) {
      std::vector<SpatialSample> train;
      std::vector<size_t> test;
      for (size_t pos = 0; pos < n; ++pos) {
        if (static_cast<int>(pos % static_cast<size_t>(folds)) == fold)
          test.push_back(order[pos]);
        else
          train.push_back(known.samples[order[pos]]);
      }
      const auto predictor = make_numeric_predictor(engine, train, cfg, false);
      for (size_t idx : test) {
        const double pred = predictor->predict(known.samples[idx].location).first;
        const double err = pred - known.samples[idx].value;
        sq_sum += err * err;
        abs_sum += std::abs(err);
      }
    }
    report.rmse = std::sqrt(sq_sum / static_cast<double>(n));
    report.mae = abs_sum / static_cast<double>(n);
  } else {
    const KnownCategorical known = collect_known_categorical(inv, attribute);
    const size_t n = known.labels.size();
    check_min_known(n, cfg.min_known, attribute);
    if (static_cast<size_t>(folds) > n)
      throw Error("cross_validate: fold with zero test records (folds=" +
                  std::to_string(folds) + ", known=" + std::to_string(n) + ")");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(cfg.seed);
    rng.shuffle(order);

    std::vector<int> predictions(n, -1);
    for (int fold = 0; fold < folds; ++fold) {
      std::vector<Geocode> train_loc;
      std::vector<int> train_labels;
      std::vector<size_t> test;
      for (size_t pos = 0; pos < n; ++pos) {
        if (static_cast<int>(pos % static_cast<size_t>(folds)) == fold) {
          test.push_back(order[pos]);
        } else {
          train_loc.push_back(known.locations[order[pos]]);
          train_labels.push_back(known.labels[order[pos]]);
        }
      }
      const auto predictor = make_categorical_predictor(
          engine, train_loc, train_labels, static_cast<int>(known.vocab.size()),
          cfg);
      for (size_t idx : test)
        predictions[idx] = predictor->predict(known.locations[idx]).first;
    }
    report.classification = compute_metrics(predictions, known.labels);
  }
  return report;
}

}  // namespace bimkit
