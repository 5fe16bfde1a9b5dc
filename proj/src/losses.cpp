#include "posegrid/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "posegrid/error.hpp"

namespace posegrid {
namespace {

void check_loss_args(const SimMatrix& s, double tau) {
  if (!(tau > 0.0)) throw Error(Errc::parameter, "temperature must be positive");
  if (s.size() < 2) throw Error(Errc::batch_size, "InfoNCE needs at least 2 pairs, got " + std::to_string(s.size()));
}

bool in_denominator(std::size_t i, std::size_t k, InfoNceDenominator d) {
  return d == InfoNceDenominator::all || i != k;
}

// log sum_k exp(s_ik / tau) over the denominator terms of row i.
double row_logsumexp(const SimMatrix& s, std::size_t i, double tau, InfoNceDenominator d) {
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (in_denominator(i, k, d)) peak = std::max(peak, s(i, k) / tau);
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (in_denominator(i, k, d)) acc += std::exp(s(i, k) / tau - peak);
  }
  return peak + std::log(acc);
}

// Unit cells and norms of a raw grid; zero cells get norm 0.
struct UnitGrid {
  FeatureGrid unit;
  std::vector<double> norms;
};

UnitGrid to_unit(const FeatureGrid& g) {
  UnitGrid out{g, std::vector<double>(g.cells(), 0.0)};
  for (std::size_t l = 0; l < g.cells(); ++l) {
    auto c = out.unit.cell(l);
    double n2 = 0.0;
    for (double x : c) n2 += x * x;
    const double n = std::sqrt(n2);
    if (n < kZeroCellNorm) {
      std::fill(c.begin(), c.end(), 0.0);
    } else {
      out.norms[l] = n;
      for (double& x : c) x /= n;
    }
  }
  return out;
}

double unit_dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

SimMatrix sims_from_units(std::span<const UnitGrid> uq, std::span<const UnitGrid> ut,
                          std::span<const BinaryMask> masks) {
  const std::size_t n = uq.size();
  SimMatrix s(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      double sum = 0.0;
      for (std::size_t l = 0; l < masks[k].size(); ++l) {
        if (masks[k][l]) sum += unit_dot(uq[i].unit.cell(l), ut[k].unit.cell(l));
      }
      s(i, k) = sum / static_cast<double>(masks[k].popcount());
    }
  }
  return s;
}

// out += weight * (I - u u^T) v / norm, the derivative of cos(x, .) w.r.t. x
// where u = x / |x| and v is the other unit vector.
void accumulate_cosine_grad(std::span<double> out, std::span<const double> u, std::span<const double> v,
                            double norm, double weight) {
  const double uv = unit_dot(u, v);
  const double w = weight / norm;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * (v[k] - uv * u[k]);
}

void check_batch(std::span<const FeatureGrid> queries, std::span<const FeatureGrid> templates,
                 std::span<const BinaryMask> masks) {
  if (queries.size() != templates.size() || queries.size() != masks.size()) {
    throw Error(Errc::batch_size, "batch needs equal numbers of queries, templates and masks");
  }
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (!queries[i].same_shape(queries[0]) || !templates[i].same_shape(queries[0])) {
      throw Error(Errc::dimension, "all grids in a batch must share one shape");
    }
    if (masks[i].height() != queries[0].height() || masks[i].width() != queries[0].width()) {
      throw Error(Errc::dimension, "mask " + std::to_string(i) + " does not match the grid shape");
    }
    if (masks[i].popcount() == 0) throw Error(Errc::empty_mask, "mask " + std::to_string(i) + " is empty");
  }
}

}  // namespace

SimMatrix::SimMatrix(std::size_t n, std::vector<double> values) : n_(n), values_(std::move(values)) {
  if (values_.size() != n * n) throw Error(Errc::dimension, "similarity matrix needs n*n values");
  if (!std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); })) {
    throw Error(Errc::validation, "similarity matrix contains non-finite values");
  }
}

bool is_positive_pair(const PairLabel& a, const PairLabel& b, double angle_thresh_deg) {
  return a.object_id == b.object_id && below_threshold(pose_error_deg(a.viewpoint, b.viewpoint), angle_thresh_deg);
}

double infonce_loss(const SimMatrix& s, double tau, InfoNceDenominator denominator) {
  check_loss_args(s, tau);
  double loss = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) loss += row_logsumexp(s, i, tau, denominator) - s(i, i) / tau;
  return loss;
}

SimMatrix infonce_grad_sim(const SimMatrix& s, double tau, InfoNceDenominator denominator) {
  check_loss_args(s, tau);
  const std::size_t n = s.size();
  SimMatrix grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lse = row_logsumexp(s, i, tau, denominator);
    for (std::size_t k = 0; k < n; ++k) {
      const double softmax = in_denominator(i, k, denominator) ? std::exp(s(i, k) / tau - lse) : 0.0;
      grad(i, k) = (softmax - (i == k ? 1.0 : 0.0)) / tau;
    }
  }
  return grad;
}

SimMatrix similarity_matrix(std::span<const FeatureGrid> queries, std::span<const FeatureGrid> templates,
                            std::span<const BinaryMask> masks) {
  check_batch(queries, templates, masks);
  const std::size_t n = queries.size();
  std::vector<UnitGrid> uq, ut;
  for (std::size_t i = 0; i < n; ++i) {
    uq.push_back(to_unit(queries[i]));
    ut.push_back(to_unit(templates[i]));
  }
  return sims_from_units(uq, ut, masks);
}

FeatureGradients loss_grad_features(std::span<const FeatureGrid> queries, std::span<const FeatureGrid> templates,
                                    std::span<const BinaryMask> masks, double tau, InfoNceDenominator denominator) {
  check_batch(queries, templates, masks);
  const std::size_t n = queries.size();
  if (n < 2) throw Error(Errc::batch_size, "InfoNCE needs at least 2 pairs");

  std::vector<UnitGrid> uq, ut;
  uq.reserve(n);
  ut.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    uq.push_back(to_unit(queries[i]));
    ut.push_back(to_unit(templates[i]));
  }

  FeatureGradients out;
  out.similarities = sims_from_units(uq, ut, masks);
  out.loss = infonce_loss(out.similarities, tau, denominator);
  const SimMatrix g = infonce_grad_sim(out.similarities, tau, denominator);

  const auto& shape = queries[0];
  for (std::size_t i = 0; i < n; ++i) {
    out.query_grads.emplace_back(shape.height(), shape.width(), shape.channels());
    out.template_grads.emplace_back(shape.height(), shape.width(), shape.channels());
  }

  for (std::size_t k = 0; k < n; ++k) {
    const double inv_area = 1.0 / static_cast<double>(masks[k].popcount());
    for (std::size_t l = 0; l < masks[k].size(); ++l) {
      if (!masks[k][l]) continue;
      const double t_norm = ut[k].norms[l];
      if (t_norm == 0.0) out.zero_cell_encountered = true;
      for (std::size_t i = 0; i < n; ++i) {
        const double q_norm = uq[i].norms[l];
        if (q_norm == 0.0) {
          out.zero_cell_encountered = true;
          continue;
        }
        if (t_norm == 0.0) continue;
        const double w = g(i, k) * inv_area;
        accumulate_cosine_grad(out.query_grads[i].cell(l), uq[i].unit.cell(l), ut[k].unit.cell(l), q_norm, w);
        accumulate_cosine_grad(out.template_grads[k].cell(l), ut[k].unit.cell(l), uq[i].unit.cell(l), t_norm, w);
      }
    }
  }
  return out;
}

double triplet_loss(double d_pos, double d_neg, double margin, TripletForm form) {
  if (!(d_pos >= 0.0) || !(d_neg >= 0.0)) throw Error(Errc::parameter, "distances must be non-negative");
  if (!(margin > 0.0)) throw Error(Errc::parameter, "margin must be positive");
  const double ratio = form == TripletForm::separation ? d_neg / (d_pos + margin) : d_pos / (d_neg + margin);
  return std::max(0.0, 1.0 - ratio);
}

double pairwise_loss(std::span<const double> d_pos) {
  double sum = 0.0;
  for (double d : d_pos) {
    if (!(d >= 0.0)) throw Error(Errc::parameter, "distances must be non-negative");
    sum += d;
  }
  return sum;
}

}  // namespace posegrid
