#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "posegrid/feature_grid.hpp"
#include "posegrid/viewsphere.hpp"

namespace posegrid {

/// Square matrix of batch similarities; entry (i, k) compares query i with
/// template k, so positives sit on the diagonal.
class SimMatrix {
 public:
  SimMatrix() = default;
  explicit SimMatrix(std::size_t n) : n_(n), values_(n * n, 0.0) {}
  SimMatrix(std::size_t n, std::vector<double> values);

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t k) const { return values_[i * n_ + k]; }
  double& operator()(std::size_t i, std::size_t k) { return values_[i * n_ + k]; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

struct PairLabel {
  std::uint32_t object_id = 0;
  Viewpoint viewpoint;
};

inline constexpr double kPositiveAngleDeg = 5.0;
inline constexpr double kDefaultTau = 0.1;

/// Same object and view directions strictly closer than the threshold.
bool is_positive_pair(const PairLabel& a, const PairLabel& b, double angle_thresh_deg = kPositiveAngleDeg);

/// Which terms the InfoNCE denominator sums over. `all` includes the positive
/// (the standard, bounded form and the default); `negatives_only` drops k == i.
enum class InfoNceDenominator { all, negatives_only };

/// -sum_i log(exp(s_ii / tau) / D_i), evaluated with a max-shifted log-sum-exp.
/// Throws Errc::parameter for tau <= 0 and Errc::batch_size for N < 2.
double infonce_loss(const SimMatrix& s, double tau = kDefaultTau,
                    InfoNceDenominator denominator = InfoNceDenominator::all);

/// dL/ds_ik for the loss above.
SimMatrix infonce_grad_sim(const SimMatrix& s, double tau = kDefaultTau,
                           InfoNceDenominator denominator = InfoNceDenominator::all);

struct FeatureGradients {
  double loss = 0.0;
  SimMatrix similarities;
  std::vector<FeatureGrid> query_grads;     // one per query, same shape as input
  std::vector<FeatureGrid> template_grads;  // one per template
  /// Set when a zero-norm cell sat inside a mask; its gradient is zero.
  bool zero_cell_encountered = false;
};

/// Exact gradient of the InfoNCE loss over masked local-cosine similarities
/// with respect to every raw (unnormalized) cell. masks[k] belongs to
/// templates[k] and is used for every comparison against template k.
FeatureGradients loss_grad_features(std::span<const FeatureGrid> queries, std::span<const FeatureGrid> templates,
                                    std::span<const BinaryMask> masks, double tau = kDefaultTau,
                                    InfoNceDenominator denominator = InfoNceDenominator::all);

/// Batch similarity matrix with the masked similarity per entry.
SimMatrix similarity_matrix(std::span<const FeatureGrid> queries, std::span<const FeatureGrid> templates,
                            std::span<const BinaryMask> masks);

/// `separation` pushes negatives away: max(0, 1 - d_neg / (d_pos + m)), and is
/// the default. `as_printed` is max(0, 1 - d_pos / (d_neg + m)).
enum class TripletForm { separation, as_printed };

inline constexpr double kHarnessMargin = 0.01;

/// Throws Errc::parameter on negative distances or margin <= 0.
double triplet_loss(double d_pos, double d_neg, double margin, TripletForm form = TripletForm::separation);

/// Sum of positive-pair distances.
double pairwise_loss(std::span<const double> d_pos);

}  // namespace posegrid
