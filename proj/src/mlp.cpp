#include "bimkit/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bimkit/rng.hpp"

namespace bimkit {

namespace {
constexpr double kProbFloor = 1e-12;
}

std::string to_string(Activation a) {
  return a == Activation::ReLU ? "relu" : "tanh";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  throw Error("unknown activation: " + s);
}

size_t MlpModel::parameter_count() const {
  size_t n = 0;
  for (size_t l = 0; l < weights.size(); ++l)
    n += weights[l].size() + biases[l].size();
  return n;
}

std::vector<double> MlpModel::flatten_parameters() const {
  std::vector<double> theta;
  theta.reserve(parameter_count());
  for (size_t l = 0; l < weights.size(); ++l) {
    theta.insert(theta.end(), weights[l].begin(), weights[l].end());
    theta.insert(theta.end(), biases[l].begin(), biases[l].end());
  }
  return theta;
}

void MlpModel::set_parameters(std::span<const double> theta) {
  if (theta.size() != parameter_count())
    throw Error("set_parameters: wrong parameter count");
  size_t pos = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    std::copy_n(theta.begin() + pos, weights[l].size(), weights[l].begin());
    pos += weights[l].size();
    std::copy_n(theta.begin() + pos, biases[l].size(), biases[l].begin());
    pos += biases[l].size();
  }
}

MlpModel mlp_init(std::vector<int> layer_sizes, Activation hidden,
                  OutputKind output, uint64_t seed) {
  if (layer_sizes.size() < 2) throw Error("mlp_init: need at least 2 layers");
  for (int s : layer_sizes)
    if (s < 1) throw Error("mlp_init: layer sizes must be >= 1");

  MlpModel m;
  m.layer_sizes = std::move(layer_sizes);
  m.hidden_activation = hidden;
  m.output = output;
  Rng rng(seed);
  for (size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
    const int fan_in = m.layer_sizes[l];
    const int fan_out = m.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> w(static_cast<size_t>(fan_in) * fan_out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(fan_out, 0.0);
  }
  return m;
}

namespace {

double activate(Activation a, double v) {
  return a == Activation::ReLU ? std::max(0.0, v) : std::tanh(v);
}

double activate_grad(Activation a, double post) {
  // Both ReLU and tanh derivatives are expressible from the activation value.
  return a == Activation::ReLU ? (post > 0.0 ? 1.0 : 0.0) : 1.0 - post * post;
}

void softmax_inplace(std::vector<double>& z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

// Forward pass keeping every layer's activations (needed by backprop).
std::vector<std::vector<double>> forward_all(const MlpModel& m,
                                             std::span<const double> x) {
  std::vector<std::vector<double>> acts;
  acts.reserve(m.layer_sizes.size());
  acts.emplace_back(x.begin(), x.end());
  for (size_t l = 0; l < m.layer_count(); ++l) {
    const int in = m.layer_sizes[l];
    const int out = m.layer_sizes[l + 1];
    std::vector<double> z(m.biases[l]);
    const auto& prev = acts.back();
    for (int o = 0; o < out; ++o) {
      const double* wrow = &m.weights[l][static_cast<size_t>(o) * in];
      double acc = z[o];
      for (int i = 0; i < in; ++i) acc += wrow[i] * prev[i];
      z[o] = acc;
    }
    const bool last = (l + 1 == m.layer_count());
    if (!last)
      for (auto& v : z) v = activate(m.hidden_activation, v);
    else if (m.output == OutputKind::SoftMax)
      softmax_inplace(z);
    acts.push_back(std::move(z));
  }
  return acts;
}

MlpGradients zero_gradients(const MlpModel& m) {
  MlpGradients g;
  g.weights.reserve(m.layer_count());
  g.biases.reserve(m.layer_count());
  for (size_t l = 0; l < m.layer_count(); ++l) {
    g.weights.emplace_back(m.weights[l].size(), 0.0);
    g.biases.emplace_back(m.biases[l].size(), 0.0);
  }
  return g;
}

// Backprop for one sample given d(loss)/d(pre-activation of output layer).
void accumulate_backprop(const MlpModel& m,
                         const std::vector<std::vector<double>>& acts,
                         std::vector<double> delta, MlpGradients& grads) {
  for (size_t l = m.layer_count(); l-- > 0;) {
    const int in = m.layer_sizes[l];
    const int out = m.layer_sizes[l + 1];
    const auto& prev = acts[l];
    for (int o = 0; o < out; ++o) {
      grads.biases[l][o] += delta[o];
      double* grow = &grads.weights[l][static_cast<size_t>(o) * in];
      for (int i = 0; i < in; ++i) grow[i] += delta[o] * prev[i];
    }
    if (l == 0) break;
    std::vector<double> prev_delta(in, 0.0);
    for (int i = 0; i < in; ++i) {
      double acc = 0.0;
      for (int o = 0; o < out; ++o)
        acc += m.weights[l][static_cast<size_t>(o) * in + i] * delta[o];
      prev_delta[i] = acc * activate_grad(m.hidden_activation, prev[i]);
    }
    delta = std::move(prev_delta);
  }
}

void check_input(const MlpModel& m, size_t dim) {
  if (dim != static_cast<size_t>(m.input_dim()))
    throw Error("mlp: feature length " + std::to_string(dim) +
                " does not match model input " + std::to_string(m.input_dim()));
}

template <typename MakeDelta>
MlpGradients gradients_impl(const MlpModel& m,
                            const std::vector<std::vector<double>>& x,
                            MakeDelta make_delta) {
  MlpGradients grads = zero_gradients(m);
  const double inv_n = 1.0 / static_cast<double>(x.size());
  for (size_t s = 0; s < x.size(); ++s) {
    check_input(m, x[s].size());
    const auto acts = forward_all(m, x[s]);
    accumulate_backprop(m, acts, make_delta(s, acts.back(), inv_n), grads);
  }
  return grads;
}

}  // namespace

std::vector<double> mlp_predict(const MlpModel& model, std::span<const double> x) {
  check_input(model, x.size());
  return forward_all(model, x).back();
}

double classification_loss(const MlpModel& model,
                           const std::vector<std::vector<double>>& x,
                           const std::vector<int>& y) {
  if (x.size() != y.size()) throw Error("classification_loss: size mismatch");
  if (x.empty()) throw Error("classification_loss: empty dataset");
  double total = 0.0;
  for (size_t s = 0; s < x.size(); ++s) {
    const auto probs = mlp_predict(model, x[s]);
    if (y[s] < 0 || y[s] >= static_cast<int>(probs.size()))
      throw Error("classification_loss: label out of range");
    total += -std::log(std::max(probs[static_cast<size_t>(y[s])], kProbFloor));
  }
  return total / static_cast<double>(x.size());
}

double regression_loss(const MlpModel& model,
                       const std::vector<std::vector<double>>& x,
                       const std::vector<std::vector<double>>& y) {
  if (x.size() != y.size()) throw Error("regression_loss: size mismatch");
  if (x.empty()) throw Error("regression_loss: empty dataset");
  double total = 0.0;
  for (size_t s = 0; s < x.size(); ++s) {
    const auto out = mlp_predict(model, x[s]);
    if (out.size() != y[s].size()) throw Error("regression_loss: target dim mismatch");
    double se = 0.0;
    for (size_t d = 0; d < out.size(); ++d) {
      const double diff = out[d] - y[s][d];
      se += diff * diff;
    }
    total += se / static_cast<double>(out.size());
  }
  return total / static_cast<double>(x.size());
}

MlpGradients classification_gradients(const MlpModel& model,
                                      const std::vector<std::vector<double>>& x,
                                      const std::vector<int>& y) {
  if (x.size() != y.size()) throw Error("classification_gradients: size mismatch");
  if (model.output != OutputKind::SoftMax)
    throw Error("classification_gradients: model output must be SoftMax");
  return gradients_impl(
      model, x,
      [&](size_t s, const std::vector<double>& probs, double inv_n) {
        // Softmax + cross-entropy: d(loss)/d(logits) = p - onehot.
        std::vector<double> delta(probs);
        for (auto& v : delta) v *= inv_n;
        delta[static_cast<size_t>(y[s])] -= inv_n;
        return delta;
      });
}

MlpGradients regression_gradients(const MlpModel& model,
                                  const std::vector<std::vector<double>>& x,
                                  const std::vector<std::vector<double>>& y) {
  if (x.size() != y.size()) throw Error("regression_gradients: size mismatch");
  if (model.output != OutputKind::Identity)
    throw Error("regression_gradients: model output must be Identity");
  return gradients_impl(
      model, x,
      [&](size_t s, const std::vector<double>& out, double inv_n) {
        std::vector<double> delta(out.size());
        const double scale = 2.0 * inv_n / static_cast<double>(out.size());
        for (size_t d = 0; d < out.size(); ++d)
          delta[d] = scale * (out[d] - y[s][d]);
        return delta;
      });
}

namespace {

template <typename GradFn, typename LossFn>
std::vector<LossEntry> train_impl(MlpModel& model, size_t n,
                                  const TrainOptions& opt, GradFn grad_for,
                                  LossFn full_loss, const std::string& stage) {
  if (n == 0) throw Error("mlp_train: empty dataset");
  if (!opt.layer_trainable.empty() &&
      opt.layer_trainable.size() != model.layer_count())
    throw Error("mlp_train: layer_trainable mask size mismatch");
  if (opt.epochs < 0) throw Error("mlp_train: negative epochs");

  std::vector<LossEntry> trace;
  if (opt.epochs == 0) return trace;

  auto trainable = [&](size_t l) {
    return opt.layer_trainable.empty() || opt.layer_trainable[l] != 0;
  };

  const size_t batch =
      (opt.batch_size <= 0 || static_cast<size_t>(opt.batch_size) >= n)
          ? n
          : static_cast<size_t>(opt.batch_size);

  Rng rng(opt.seed);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    if (batch < n) rng.shuffle(order);
    for (size_t start = 0; start < n; start += batch) {
      const size_t end = std::min(n, start + batch);
      const MlpGradients grads = grad_for(order, start, end);
      for (size_t l = 0; l < model.layer_count(); ++l) {
        if (!trainable(l)) continue;
        for (size_t i = 0; i < model.weights[l].size(); ++i)
          model.weights[l][i] -= opt.learning_rate * grads.weights[l][i];
        for (size_t i = 0; i < model.biases[l].size(); ++i)
          model.biases[l][i] -= opt.learning_rate * grads.biases[l][i];
      }
    }
    const double loss = full_loss();
    if (!std::isfinite(loss))
      throw DivergedError("mlp_train: loss diverged at epoch " +
                          std::to_string(epoch + 1) +
                          "; try a smaller learning rate");
    trace.push_back({stage, loss});
  }
  return trace;
}

}  // namespace

std::vector<LossEntry> mlp_train_classifier(MlpModel& model,
                                            const std::vector<std::vector<double>>& x,
                                            const std::vector<int>& y,
                                            const TrainOptions& opt,
                                            const std::string& stage) {
  if (x.size() != y.size()) throw Error("mlp_train_classifier: size mismatch");
  return train_impl(
      model, x.size(), opt,
      [&](const std::vector<size_t>& order, size_t start, size_t end) {
        std::vector<std::vector<double>> bx(end - start);
        std::vector<int> by(end - start);
        for (size_t i = start; i < end; ++i) {
          bx[i - start] = x[order[i]];
          by[i - start] = y[order[i]];
        }
        return classification_gradients(model, bx, by);
      },
      [&] { return classification_loss(model, x, y); }, stage);
}

std::vector<LossEntry> mlp_train_regressor(MlpModel& model,
                                           const std::vector<std::vector<double>>& x,
                                           const std::vector<std::vector<double>>& y,
                                           const TrainOptions& opt,
                                           const std::string& stage) {
  if (x.size() != y.size()) throw Error("mlp_train_regressor: size mismatch");
  return train_impl(
      model, x.size(), opt,
      [&](const std::vector<size_t>& order, size_t start, size_t end) {
        std::vector<std::vector<double>> bx(end - start);
        std::vector<std::vector<double>> by(end - start);
        for (size_t i = start; i < end; ++i) {
          bx[i - start] = x[order[i]];
          by[i - start] = y[order[i]];
        }
        return regression_gradients(model, bx, by);
      },
      [&] { return regression_loss(model, x, y); }, stage);
}

nlohmann::json mlp_to_json(const MlpModel& model) {
  nlohmann::json j;
  j["layer_sizes"] = model.layer_sizes;
  j["hidden_activation"] = to_string(model.hidden_activation);
  j["output"] = model.output == OutputKind::SoftMax ? "softmax" : "identity";
  j["weights"] = model.weights;
  j["biases"] = model.biases;
  return j;
}

MlpModel mlp_from_json(const nlohmann::json& j) {
  MlpModel m;
  m.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  m.hidden_activation = activation_from_string(j.at("hidden_activation"));
  const std::string out = j.at("output");
  if (out == "softmax")
    m.output = OutputKind::SoftMax;
  else if (out == "identity")
    m.output = OutputKind::Identity;
  else
    throw Error("unknown output kind: " + out);
  m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
  m.biases = j.at("biases").get<std::vector<std::vector<double>>>();
  if (m.weights.size() + 1 != m.layer_sizes.size() ||
      m.biases.size() != m.weights.size())
    throw Error("mlp_from_json: inconsistent layer shapes");
  for (size_t l = 0; l < m.weights.size(); ++l) {
    const size_t expect_w = static_cast<size_t>(m.layer_sizes[l]) *
                            static_cast<size_t>(m.layer_sizes[l + 1]);
    if (m.weights[l].size() != expect_w ||
        m.biases[l].size() != static_cast<size_t>(m.layer_sizes[l + 1]))
      throw Error("mlp_from_json: layer " + std::to_string(l) + " shape mismatch");
  }
  return m;
}

}  // namespace bimkit
