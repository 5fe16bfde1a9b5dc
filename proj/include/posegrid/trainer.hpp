#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "posegrid/feature_grid.hpp"
#include "posegrid/losses.hpp"

namespace posegrid {

/// Per-cell affine map: out = W * cell + b, W is c_out x c_in row-major.
struct LinearEmbedding {
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  static LinearEmbedding identity(std::size_t channels);
  /// Gaussian weights with std 1/sqrt(c_in), zero bias.
  static LinearEmbedding random(std::size_t c_in, std::size_t c_out, std::uint64_t seed);

  void validate() const;
  friend bool operator==(const LinearEmbedding&, const LinearEmbedding&) = default;
};

/// One linear layer, or two with a tanh between them when `hidden` is set
/// (hidden is applied first).
struct Embedding {
  std::optional<LinearEmbedding> hidden;
  LinearEmbedding output;

  std::size_t c_in() const noexcept { return hidden ? hidden->c_in : output.c_in; }
  std::size_t c_out() const noexcept { return output.c_out; }
  std::size_t parameter_count() const noexcept;
  /// Flat parameter view in (hidden W, hidden b, output W, output b) order.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);

  friend bool operator==(const Embedding&, const Embedding&) = default;
};

/// Throws Errc::dimension on a channel mismatch.
FeatureGrid embed(const FeatureGrid& raw, const LinearEmbedding& layer);
FeatureGrid embed(const FeatureGrid& raw, const Embedding& embedding);

inline constexpr std::size_t kEmbeddingChannels = 16;
inline constexpr std::size_t kRawChannels = 8;

struct TrainConfig {
  std::size_t batch_pairs = 8;
  double learning_rate = 0.1;
  std::size_t steps = 200;
  double tau = kDefaultTau;
  std::uint64_t seed = 1;
  double angle_thresh_deg = kPositiveAngleDeg;
  std::size_t c_out = kEmbeddingChannels;
  /// Adds a tanh hidden layer of this width when non-zero.
  std::size_t hidden_channels = 0;

  void validate() const;
};

Embedding initial_embedding(std::size_t c_in, const TrainConfig& config);

struct TrainingPair {
  FeatureGrid raw_query;
  FeatureGrid raw_template;
  BinaryMask mask;  // template visibility
  PairLabel query_label;
  PairLabel template_label;
};

/// Checks every pair is positive and every cross combination negative;
/// throws Errc::batch_contract otherwise, Errc::batch_size for N < 2.
void check_batch_contract(std::span<const TrainingPair> batch, double angle_thresh_deg = kPositiveAngleDeg);

struct ObjectiveGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // matches Embedding::parameters()
};

/// InfoNCE of the embedded batch and its gradient w.r.t. the embedding
/// parameters. Does not check the batch contract.
ObjectiveGradient objective_and_gradient(std::span<const TrainingPair> batch, const Embedding& embedding,
                                         double tau = kDefaultTau);

struct StepResult {
  Embedding embedding;
  double loss = 0.0;  // before the update
};

/// One full-batch gradient-descent step.
StepResult train_step(std::span<const TrainingPair> batch, const Embedding& embedding, const TrainConfig& config);

}  // namespace posegrid
