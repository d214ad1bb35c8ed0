#include "bimkit/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "bimkit/rng.hpp"

namespace bimkit {

size_t LabeledSet::count_of(int label) const {
  size_t n = 0;
  for (const auto& item : items)
    if (item.label == label) ++n;
  return n;
}

double cross_entropy(std::span<const double> probs, int label) {
  if (label < 0 || label >= static_cast<int>(probs.size()))
    throw Error("cross_entropy: label out of range");
  return -std::log(std::max(probs[static_cast<size_t>(label)], 1e-12));
}

LabeledSet balance(const LabeledSet& set, uint64_t seed) {
  size_t n0 = 0, n1 = 0;
  for (const auto& item : set.items) (item.label == 1 ? n1 : n0)++;
  if (n0 == 0 || n1 == 0)
    throw Error("balance: both classes must be present");
  if (n0 == n1) return set;

  const int majority = n0 > n1 ? 0 : 1;
  const size_t keep = std::min(n0, n1);

  std::vector<size_t> majority_idx;
  for (size_t i = 0; i < set.items.size(); ++i)
    if (set.items[i].label == majority) majority_idx.push_back(i);
  Rng rng(seed);
  rng.shuffle(majority_idx);
  majority_idx.resize(keep);
  std::unordered_set<size_t> kept(majority_idx.begin(), majority_idx.end());

  LabeledSet out;
  out.items.reserve(2 * keep);
  for (size_t i = 0; i < set.items.size(); ++i)
    if (set.items[i].label != majority || kept.count(i))
      out.items.push_back(set.items[i]);
  return out;
}

namespace {

void check_uniform_features(const std::vector<std::vector<double>>& x) {
  for (const auto& f : x)
    if (f.size() != x[0].size())
      throw Error("feature dimensions are not uniform");
}

std::pair<std::vector<std::vector<double>>, std::vector<int>> to_xy(
    const LabeledSet& set) {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  x.reserve(set.items.size());
  y.reserve(set.items.size());
  for (const auto& item : set.items) {
    x.push_back(item.features);
    y.push_back(item.label);
  }
  check_uniform_features(x);
  return {std::move(x), std::move(y)};
}

}  // namespace

std::vector<LossEntry> two_stage_finetune(MlpModel& model,
                                          const std::vector<std::vector<double>>& x,
                                          const std::vector<int>& y,
                                          const TrainHyper& hyper,
                                          int stage1_epochs, int stage2_epochs,
                                          uint64_t seed) {
  std::vector<LossEntry> trace;

  TrainOptions stage1;
  stage1.learning_rate = hyper.learning_rate;
  stage1.epochs = stage1_epochs;
  stage1.batch_size = hyper.batch_size;
  stage1.seed = seed;
  stage1.layer_trainable.assign(model.layer_count(), 0);
  stage1.layer_trainable.back() = 1;
  auto t1 = mlp_train_classifier(model, x, y, stage1, "stage1");
  trace.insert(trace.end(), t1.begin(), t1.end());

  TrainOptions stage2 = stage1;
  stage2.epochs = stage2_epochs;
  stage2.seed = seed + 1;
  stage2.layer_trainable.clear();
  auto t2 = mlp_train_classifier(model, x, y, stage2, "stage2");
  trace.insert(trace.end(), t2.begin(), t2.end());
  return trace;
}

MlpModel train_seed(const LabeledSet& dm, const TrainHyper& hyper, uint64_t seed,
                    std::vector<LossEntry>* trace) {
  if (dm.items.empty()) throw Error("train_seed: empty labeled set");
  if (dm.count_of(0) == 0 || dm.count_of(1) == 0)
    throw Error("train_seed: need examples of both classes");

  auto [x, y] = to_xy(dm);
  std::vector<int> layers;
  layers.push_back(static_cast<int>(x[0].size()));
  for (int h : hyper.hidden_layers) layers.push_back(h);
  layers.push_back(2);

  MlpModel model = mlp_init(layers, hyper.activation, OutputKind::SoftMax, seed);
  auto t = two_stage_finetune(model, x, y, hyper, hyper.schedule.stage1_epochs,
                              hyper.schedule.stage2_epochs, seed);
  if (trace) *trace = std::move(t);
  return model;
}

PseudoLabelResult pseudo_label(const MlpModel& fp, const UnlabeledPool& pool,
                               double tau, int round) {
  if (!(tau > 0.5 && tau <= 1.0))
    throw Error("pseudo_label: tau must be in (0.5, 1]");

  PseudoLabelResult result;
  for (const auto& item : pool.items) {
    const auto probs = mlp_predict(fp, item.features);
    const auto it = std::max_element(probs.begin(), probs.end());
    const double conf = *it;
    if (conf >= tau) {
      LabeledItem labeled;
      labeled.id = item.id;
      labeled.features = item.features;
      labeled.label = static_cast<int>(it - probs.begin());
      labeled.origin = PseudoOrigin{round, conf};
      result.accepted.push_back(std::move(labeled));
    } else {
      result.remaining.items.push_back(item);
    }
  }
  return result;
}

Metrics compute_metrics(std::span<const int> predictions,
                        std::span<const int> labels, int positive_class) {
  if (predictions.size() != labels.size())
    throw Error("metrics: predictions and labels differ in length");
  if (predictions.empty()) throw Error("metrics: empty input");

  Metrics m;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const bool pred_pos = predictions[i] == positive_class;
    const bool is_pos = labels[i] == positive_class;
    if (pred_pos && is_pos) ++m.tp;
    else if (pred_pos && !is_pos) ++m.fp;
    else if (!pred_pos && is_pos) ++m.fn;
    else ++m.tn;
  }
  const double n = static_cast<double>(predictions.size());
  m.accuracy = static_cast<double>(m.tp + m.tn) / n;
  if (m.tp + m.fp > 0) m.precision = static_cast<double>(m.tp) / (m.tp + m.fp);
  else m.zero_division = true;
  if (m.tp + m.fn > 0) m.recall = static_cast<double>(m.tp) / (m.tp + m.fn);
  else m.zero_division = true;
  if (m.precision + m.recall > 0.0)
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  else
    m.zero_division = true;
  return m;
}

nlohmann::json metrics_to_json(const Metrics& m) {
  return nlohmann::json{{"accuracy", m.accuracy}, {"precision", m.precision},
                        {"recall", m.recall},     {"f1", m.f1},
                        {"tp", m.tp},             {"fp", m.fp},
                        {"fn", m.fn},             {"tn", m.tn},
                        {"zero_division", m.zero_division}};
}

namespace {

Metrics evaluate(const MlpModel& model, const LabeledSet& eval_set) {
  std::vector<int> preds;
  std::vector<int> labels;
  preds.reserve(eval_set.items.size());
  for (const auto& item : eval_set.items) {
    const auto probs = mlp_predict(model, item.features);
    preds.push_back(static_cast<int>(
        std::max_element(probs.begin(), probs.end()) - probs.begin()));
    labels.push_back(item.label);
  }
  return compute_metrics(preds, labels);
}

}  // namespace

SelfTrainResult self_train_loop(const LabeledSet& seed_set,
                                const UnlabeledPool& pool,
                                const SelfTrainConfig& cfg,
                                const std::optional<LabeledSet>& eval_set) {
  if (!(cfg.confidence_threshold > 0.5 && cfg.confidence_threshold <= 1.0))
    throw Error("self_train_loop: tau must be in (0.5, 1]");
  if (cfg.max_rounds < 1) throw Error("self_train_loop: max_rounds must be >= 1");
  {
    std::unordered_set<std::string> labeled_ids;
    for (const auto& item : seed_set.items) labeled_ids.insert(item.id);
    for (const auto& item : pool.items)
      if (labeled_ids.count(item.id))
        throw Error("self_train_loop: pool id '" + item.id +
                    "' already appears in the labeled set");
  }

  SelfTrainResult result;
  result.labeled = seed_set;
  UnlabeledPool remaining = pool;

  for (int round = 1; round <= cfg.max_rounds; ++round) {
    const uint64_t round_seed = cfg.seed + 1000ULL * static_cast<uint64_t>(round);
    const LabeledSet train_set =
        cfg.balance ? balance(result.labeled, round_seed) : result.labeled;
    result.model = train_seed(train_set, cfg.hyper, round_seed);

    auto labeled = pseudo_label(result.model, remaining,
                                cfg.confidence_threshold, round);

    RoundReport report;
    report.round = round;
    report.accepted = labeled.accepted.size();
    double conf_sum = 0.0;
    for (const auto& item : labeled.accepted)
      conf_sum += std::get<PseudoOrigin>(item.origin).confidence;
    report.mean_confidence =
        labeled.accepted.empty() ? 0.0 : conf_sum / labeled.accepted.size();

    for (auto& item : labeled.accepted)
      result.labeled.items.push_back(std::move(item));
    remaining = std::move(labeled.remaining);

    report.labeled_count = result.labeled.items.size();
    if (eval_set) report.eval = evaluate(result.model, *eval_set);
    result.rounds.push_back(report);

    if (report.accepted == 0) break;
  }
  return result;
}

}  // namespace bimkit
