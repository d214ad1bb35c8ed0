#ifndef BIMKIT_SELFTRAIN_HPP
#define BIMKIT_SELFTRAIN_HPP

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bimkit/mlp.hpp"

namespace bimkit {

// Origin of a label: hand-annotated by the expert, or accepted from the
// model's own confident predictions during a self-training round.
struct ExpertOrigin {
  bool operator==(const ExpertOrigin&) const = default;
};
struct PseudoOrigin {
  int round = 0;
  double confidence = 0.0;
  bool operator==(const PseudoOrigin&) const = default;
};
using LabelOrigin = std::variant<ExpertOrigin, PseudoOrigin>;

struct LabeledItem {
  std::string id;
  std::vector<double> features;
  int label = 0;  // 0 = negative, 1 = positive (soft-story) class
  LabelOrigin origin = ExpertOrigin{};
};

struct LabeledSet {
  std::vector<LabeledItem> items;
  size_t count_of(int label) const;
  size_t feature_dim() const { return items.empty() ? 0 : items[0].features.size(); }
};

struct UnlabeledItem {
  std::string id;
  std::vector<double> features;
};

struct UnlabeledPool {
  std::vector<UnlabeledItem> items;
};

// -log(p_label) with a 1e-12 floor inside the log; the one-hot cross-entropy
// of a single prediction.
double cross_entropy(std::span<const double> probs, int label);

// Random undersampling of the majority class down to the minority count.
// Minority items are all retained; selection is deterministic in the seed.
// Throws Error when a class is absent.
LabeledSet balance(const LabeledSet& set, uint64_t seed);

struct FinetuneSchedule {
  int stage1_epochs = 30;  // output layer only, earlier layers frozen
  int stage2_epochs = 70;  // all layers
};

struct TrainHyper {
  std::vector<int> hidden_layers{16};
  double learning_rate = 0.1;
  int batch_size = 0;
  Activation activation = Activation::ReLU;
  FinetuneSchedule schedule;
};

// Stage 1 trains only the final layer (all earlier gradients masked), stage 2
// trains everything. Trace entries are tagged "stage1" / "stage2".
std::vector<LossEntry> two_stage_finetune(MlpModel& model,
                                          const std::vector<std::vector<double>>& x,
                                          const std::vector<int>& y,
                                          const TrainHyper& hyper,
                                          int stage1_epochs, int stage2_epochs,
                                          uint64_t seed);

// Seed classifier f_p: fresh Xavier init + the two-stage schedule on D_m.
MlpModel train_seed(const LabeledSet& dm, const TrainHyper& hyper, uint64_t seed,
                    std::vector<LossEntry>* trace = nullptr);

struct PseudoLabelResult {
  std::vector<LabeledItem> accepted;  // origin = PseudoOrigin
  UnlabeledPool remaining;
};

// Accepts an item iff its max class probability >= tau; the label is the
// argmax and the confidence is recorded. accepted + remaining partition the
// pool. Requires tau in (0.5, 1].
PseudoLabelResult pseudo_label(const MlpModel& fp, const UnlabeledPool& pool,
                               double tau, int round);

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0, fp = 0, fn = 0, tn = 0;
  bool zero_division = false;  // a P/R/F1 denominator was zero
};

// accuracy = (TP+TN)/N, P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R);
// zero denominators yield 0 with the zero_division flag. Throws Error on
// length mismatch or empty input.
Metrics compute_metrics(std::span<const int> predictions,
                        std::span<const int> labels, int positive_class = 1);

nlohmann::json metrics_to_json(const Metrics& m);

struct SelfTrainConfig {
  double confidence_threshold = 0.9;  // tau, must be in (0.5, 1]
  int max_rounds = 3;
  bool balance = true;
  uint64_t seed = 0;
  TrainHyper hyper;
};

struct RoundReport {
  int round = 0;
  size_t labeled_count = 0;   // after merging this round's acceptances
  size_t accepted = 0;
  double mean_confidence = 0.0;  // over this round's acceptances
  std::optional<Metrics> eval;
};

struct SelfTrainResult {
  MlpModel model;
  LabeledSet labeled;
  std::vector<RoundReport> rounds;
};

// Per round: optional balance -> train -> pseudo_label -> merge acceptances.
// Stops at max_rounds or on a round that accepts nothing. Expert labels are
// never modified. Deterministic in cfg.seed.
SelfTrainResult self_train_loop(const LabeledSet& seed_set,
                                const UnlabeledPool& pool,
                                const SelfTrainConfig& cfg,
                                const std::optional<LabeledSet>& eval_set = {});

}  // namespace bimkit

#endif
