#ifndef BIMKIT_MLP_HPP
#define BIMKIT_MLP_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bimkit/errors.hpp"

namespace bimkit {

enum class Activation { ReLU, Tanh };
enum class OutputKind { SoftMax, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// Small dense feed-forward network. weights[l] maps layer l activations to
// layer l+1 pre-activations, stored row-major (out x in). The last layer has
// no hidden activation; OutputKind decides softmax vs identity.
struct MlpModel {
  std::vector<int> layer_sizes;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  Activation hidden_activation = Activation::ReLU;
  OutputKind output = OutputKind::SoftMax;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  size_t layer_count() const { return weights.size(); }

  size_t parameter_count() const;
  std::vector<double> flatten_parameters() const;
  void set_parameters(std::span<const double> theta);
};

// Xavier-uniform weights, zero biases, deterministic in the seed.
MlpModel mlp_init(std::vector<int> layer_sizes, Activation hidden,
                  OutputKind output, uint64_t seed);

// Per-layer gradients in the same shapes as weights/biases.
struct MlpGradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

struct TrainOptions {
  double learning_rate = 0.05;
  int epochs = 100;
  int batch_size = 0;  // 0 (or >= n) means full batch
  uint64_t seed = 0;   // mini-batch shuffle seed
  // Per weight-layer trainable mask; empty means all layers train. Frozen
  // layers keep their parameters bitwise intact.
  std::vector<uint8_t> layer_trainable;
};

struct LossEntry {
  std::string stage;  // "train", "stage1", "stage2"
  double loss = 0.0;
};

// Forward pass; returns class probabilities (simplex point) for SoftMax
// output, raw values for Identity. Throws Error on dimension mismatch.
std::vector<double> mlp_predict(const MlpModel& model, std::span<const double> x);

// Mean cross-entropy over the dataset, with a 1e-12 probability floor.
double classification_loss(const MlpModel& model,
                           const std::vector<std::vector<double>>& x,
                           const std::vector<int>& y);
// Mean over samples of mean squared error over output dims.
double regression_loss(const MlpModel& model,
                       const std::vector<std::vector<double>>& x,
                       const std::vector<std::vector<double>>& y);

// Analytic gradients of the mean batch loss; exposed so finite-difference
// checks can compare against them.
MlpGradients classification_gradients(const MlpModel& model,
                                      const std::vector<std::vector<double>>& x,
                                      const std::vector<int>& y);
MlpGradients regression_gradients(const MlpModel& model,
                                  const std::vector<std::vector<double>>& x,
                                  const std::vector<std::vector<double>>& y);

// Mini-batch gradient descent. Appends one entry per epoch (full-dataset
// loss after the epoch) to the returned trace, tagged with `stage`.
// epochs = 0 leaves the model untouched. Throws DivergedError when the loss
// turns non-finite.
std::vector<LossEntry> mlp_train_classifier(MlpModel& model,
                                            const std::vector<std::vector<double>>& x,
                                            const std::vector<int>& y,
                                            const TrainOptions& opt,
                                            const std::string& stage = "train");
std::vector<LossEntry> mlp_train_regressor(MlpModel& model,
                                           const std::vector<std::vector<double>>& x,
                                           const std::vector<std::vector<double>>& y,
                                           const TrainOptions& opt,
                                           const std::string& stage = "train");

nlohmann::json mlp_to_json(const MlpModel& model);
MlpModel mlp_from_json(const nlohmann::json& j);

}  // namespace bimkit

#endif
