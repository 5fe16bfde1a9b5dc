#include "posegrid/trainer.hpp"

#include <cmath>
#include <random>
#include <string>

#include "posegrid/error.hpp"

namespace posegrid {
namespace {

// Forward pass of one grid, keeping what backprop needs.
struct Activations {
  FeatureGrid hidden;  // post-tanh, empty without a hidden layer
  FeatureGrid out;
};

FeatureGrid apply_tanh(FeatureGrid g) {
  for (double& x : g.data()) x = std::tanh(x);
  return g;
}

Activations forward(const FeatureGrid& raw, const Embedding& e) {
  Activations a;
  if (e.hidden) {
    a.hidden = apply_tanh(embed(raw, *e.hidden));
    a.out = embed(a.hidden, e.output);
  } else {
    a.out = embed(raw, e.output);
  }
  return a;
}

// Accumulates dL/dW, dL/db of `layer` from upstream cell gradients and layer
// inputs; returns dL/dinput when requested.
void backprop_layer(const LinearEmbedding& layer, const FeatureGrid& input, const FeatureGrid& upstream,
                    double* grad_w, double* grad_b, FeatureGrid* grad_input) {
  for (std::size_t l = 0; l < input.cells(); ++l) {
    const auto x = input.cell(l);
    const auto g = upstream.cell(l);
    for (std::size_t o = 0; o < layer.c_out; ++o) {
      if (g[o] == 0.0) continue;
      grad_b[o] += g[o];
      double* row = grad_w + o * layer.c_in;
      for (std::size_t i = 0; i < layer.c_in; ++i) row[i] += g[o] * x[i];
    }
    if (grad_input) {
      auto gi = grad_input->cell(l);
      for (std::size_t i = 0; i < layer.c_in; ++i) {
        double s = 0.0;
        for (std::size_t o = 0; o < layer.c_out; ++o) s += layer.weight[o * layer.c_in + i] * g[o];
        gi[i] = s;
      }
    }
  }
}

std::size_t layer_size(const LinearEmbedding& l) { return l.weight.size() + l.bias.size(); }

}  // namespace

LinearEmbedding LinearEmbedding::identity(std::size_t channels) {
  LinearEmbedding e{channels, channels, std::vector<double>(channels * channels, 0.0),
                    std::vector<double>(channels, 0.0)};
  for (std::size_t i = 0; i < channels; ++i) e.weight[i * channels + i] = 1.0;
  return e;
}

LinearEmbedding LinearEmbedding::random(std::size_t c_in, std::size_t c_out, std::uint64_t seed) {
  if (c_in == 0 || c_out == 0) throw Error(Errc::parameter, "embedding channels must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(c_in)));
  LinearEmbedding e{c_in, c_out, std::vector<double>(c_in * c_out), std::vector<double>(c_out, 0.0)};
  for (double& w : e.weight) w = normal(rng);
  return e;
}

void LinearEmbedding::validate() const {
  if (c_in == 0 || c_out == 0) throw Error(Errc::parameter, "embedding channels must be positive");
  if (weight.size() != c_in * c_out || bias.size() != c_out) {
    throw Error(Errc::dimension, "embedding parameter arrays do not match its channel counts");
  }
  for (double x : weight)
    if (!std::isfinite(x)) throw Error(Errc::validation, "non-finite embedding weight");
  for (double x : bias)
    if (!std::isfinite(x)) throw Error(Errc::validation, "non-finite embedding bias");
}

std::size_t Embedding::parameter_count() const noexcept {
  return (hidden ? layer_size(*hidden) : 0) + layer_size(output);
}

std::vector<double> Embedding::parameters() const {
  std::vector<double> p;
  p.reserve(parameter_count());
  auto append = [&](const LinearEmbedding& l) {
    p.insert(p.end(), l.weight.begin(), l.weight.end());
    p.insert(p.end(), l.bias.begin(), l.bias.end());
  };
  if (hidden) append(*hidden);
  append(output);
  return p;
}

void Embedding::set_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) throw Error(Errc::dimension, "parameter vector has the wrong length");
  std::size_t at = 0;
  auto take = [&](LinearEmbedding& l) {
    for (double& w : l.weight) w = values[at++];
    for (double& b : l.bias) b = values[at++];
  };
  if (hidden) take(*hidden);
  take(output);
}

FeatureGrid embed(const FeatureGrid& raw, const LinearEmbedding& layer) {
  if (raw.channels() != layer.c_in) {
    throw Error(Errc::dimension, "grid has " + std::to_string(raw.channels()) + " channels, embedding expects " +
                                     std::to_string(layer.c_in));
  }
  FeatureGrid out(raw.height(), raw.width(), layer.c_out);
  for (std::size_t l = 0; l < raw.cells(); ++l) {
    const auto x = raw.cell(l);
    auto y = out.cell(l);
    for (std::size_t o = 0; o < layer.c_out; ++o) {
      const double* row = layer.weight.data() + o * layer.c_in;
      double s = layer.bias[o];
      for (std::size_t i = 0; i < layer.c_in; ++i) s += row[i] * x[i];
      y[o] = s;
    }
  }
  return out;
}

FeatureGrid embed(const FeatureGrid& raw, const Embedding& embedding) { return forward(raw, embedding).out; }

void TrainConfig::validate() const {
  if (batch_pairs < 2) throw Error(Errc::batch_size, "batch needs at least 2 pairs");
  if (!(learning_rate >= 0.0)) throw Error(Errc::parameter, "learning rate must be non-negative");
  if (!(tau > 0.0)) throw Error(Errc::parameter, "temperature must be positive");
  if (c_out == 0) throw Error(Errc::parameter, "embedding needs at least one output channel");
}

Embedding initial_embedding(std::size_t c_in, const TrainConfig& config) {
  Embedding e;
  if (config.hidden_channels > 0) {
    e.hidden = LinearEmbedding::random(c_in, config.hidden_channels, config.seed);
    e.output = LinearEmbedding::random(config.hidden_channels, config.c_out, config.seed ^ 0x9e3779b97f4a7c15ULL);
  } else {
    e.output = LinearEmbedding::random(c_in, config.c_out, config.seed);
  }
  return e;
}

void check_batch_contract(std::span<const TrainingPair> batch, double angle_thresh_deg) {
  if (batch.size() < 2) throw Error(Errc::batch_size, "batch needs at least 2 pairs");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const bool positive = is_positive_pair(batch[i].query_label, batch[k].template_label, angle_thresh_deg);
      if (i == k && !positive) {
        throw Error(Errc::batch_contract, "pair " + std::to_string(i) + " is not a positive pair");
      }
      if (i != k && positive) {
        throw Error(Errc::batch_contract, "query " + std::to_string(i) + " is positive with template " +
                                              std::to_string(k) + "; batch pairs must be mutually negative");
      }
    }
  }
}

ObjectiveGradient objective_and_gradient(std::span<const TrainingPair> batch, const Embedding& embedding,
                                         double tau) {
  if (embedding.hidden) embedding.hidden->validate();
  embedding.output.validate();
  const std::size_t n = batch.size();
  std::vector<Activations> q_act, t_act;
  std::vector<FeatureGrid> q_out, t_out;
  std::vector<BinaryMask> masks;
  q_act.reserve(n);
  t_act.reserve(n);
  for (const auto& pair : batch) {
    q_act.push_back(forward(pair.raw_query, embedding));
    t_act.push_back(forward(pair.raw_template, embedding));
    q_out.push_back(q_act.back().out);
    t_out.push_back(t_act.back().out);
    masks.push_back(pair.mask);
  }
  const FeatureGradients fg = loss_grad_features(q_out, t_out, masks, tau);

  ObjectiveGradient result;
  result.loss = fg.loss;
  result.gradient.assign(embedding.parameter_count(), 0.0);
  const std::size_t hidden_size = embedding.hidden ? layer_size(*embedding.hidden) : 0;
  double* out_w = result.gradient.data() + hidden_size;
  double* out_b = out_w + embedding.output.weight.size();

  auto backprop_grid = [&](const FeatureGrid& raw, const Activations& act, const FeatureGrid& upstream) {
    if (!embedding.hidden) {
      backprop_layer(embedding.output, raw, upstream, out_w, out_b, nullptr);
      return;
    }
    FeatureGrid grad_hidden(raw.height(), raw.width(), embedding.hidden->c_out);
    backprop_layer(embedding.output, act.hidden, upstream, out_w, out_b, &grad_hidden);
    // tanh' = 1 - tanh^2
    auto gh = grad_hidden.data();
    const auto h = act.hidden.data();
    for (std::size_t i = 0; i < gh.size(); ++i) gh[i] *= 1.0 - h[i] * h[i];
    double* hid_w = result.gradient.data();
    double* hid_b = hid_w + embedding.hidden->weight.size();
    backprop_layer(*embedding.hidden, raw, grad_hidden, hid_w, hid_b, nullptr);
  };
  // Fixed accumulation order: queries then templates, in batch order.
  for (std::size_t i = 0; i < n; ++i) backprop_grid(batch[i].raw_query, q_act[i], fg.query_grads[i]);
  for (std::size_t i = 0; i < n; ++i) backprop_grid(batch[i].raw_template, t_act[i], fg.template_grads[i]);
  return result;
}

StepResult train_step(std::span<const TrainingPair> batch, const Embedding& embedding, const TrainConfig& config) {
  if (!(config.learning_rate >= 0.0)) throw Error(Errc::parameter, "learning rate must be non-negative");
  if (!(config.tau > 0.0)) throw Error(Errc::parameter, "temperature must be positive");
  check_batch_contract(batch, config.angle_thresh_deg);
  const ObjectiveGradient og = objective_and_gradient(batch, embedding, config.tau);
  StepResult result{embedding, og.loss};
  if (config.learning_rate > 0.0) {
    std::vector<double> params = embedding.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= config.learning_rate * og.gradient[i];
    result.embedding.set_parameters(params);
  }
  return result;
}

}  // namespace posegrid
