#pragma once

// Test helpers and independent reference oracles. Oracles here are written
// from the definitions with plain loops and deliberately share no code with
// the library's implementations.

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "posegrid/error.hpp"
#include "posegrid/feature_grid.hpp"

#define EXPECT_ERRC(stmt, errc)                                                         \
  do {                                                                                  \
    try {                                                                               \
      stmt;                                                                             \
      ADD_FAILURE() << "expected posegrid::Error(" << posegrid::to_string(errc) << ")"; \
    } catch (const posegrid::Error& e_) {                                               \
      EXPECT_EQ(e_.code(), errc) << e_.what();                                          \
    }                                                                                   \
  } while (0)

namespace testing_support {

inline posegrid::FeatureGrid random_grid(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t c,
                                         double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  posegrid::FeatureGrid g(h, w, c);
  for (double& x : g.data()) x = normal(rng);
  return g;
}

/// Random mask with at least one set cell.
inline posegrid::BinaryMask random_mask(std::mt19937_64& rng, std::size_t h, std::size_t w, double p = 0.6) {
  std::bernoulli_distribution coin(p);
  posegrid::BinaryMask m(h, w);
  for (std::size_t l = 0; l < h * w; ++l) m.set(l, coin(rng));
  if (m.popcount() == 0) m.set(rng() % (h * w), true);
  return m;
}

/// Cosine of cell (r, c) by explicit loops; 0 for near-zero cells.
inline double oracle_cell_cosine(const posegrid::FeatureGrid& a, const posegrid::FeatureGrid& b, std::size_t r,
                                 std::size_t c) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.channels(); ++k) {
    const double x = a.data()[(r * a.width() + c) * a.channels() + k];
    const double y = b.data()[(r * b.width() + c) * b.channels() + k];
    ab += x * y;
    aa += x * x;
    bb += y * y;
  }
  if (std::sqrt(aa) < 1e-12 || std::sqrt(bb) < 1e-12) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

/// Naive triple-loop masked similarity with optional occlusion threshold.
inline double oracle_similarity(const posegrid::FeatureGrid& q, const posegrid::FeatureGrid& t,
                                const posegrid::BinaryMask& m, bool occlusion, double delta) {
  double sum = 0.0;
  double area = 0.0;
  for (std::size_t r = 0; r < q.height(); ++r) {
    for (std::size_t c = 0; c < q.width(); ++c) {
      if (!m.at(r, c)) continue;
      area += 1.0;
      const double s = oracle_cell_cosine(q, t, r, c);
      if (occlusion && !(s > delta)) continue;
      sum += s;
    }
  }
  return sum / area;
}

/// Central difference of f along every coordinate of x.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Max over i of |a_i - b_i| / max(|a_i|, |b_i|, floor).
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("posegrid_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
