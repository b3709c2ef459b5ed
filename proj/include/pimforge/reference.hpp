#pragma once

// Independent reference implementations used to cross-check the optimized
// paths. Nothing here shares code with the modules it verifies: convolution
// is plain nested loops over integers, projection optimality is subset
// enumeration, gradients come from central differences.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "pimforge/sparsity.hpp"
#include "pimforge/tensor.hpp"

namespace pimforge::reference {

// Plain integer cross-correlation (valid padding).
inline IntVolume int_conv2d(const IntVolume& input, const IntTensor4& weights,
                            std::size_t stride) {
  const LayerShape& s = weights.shape;
  if (input.channels != s.channels) {
    throw ConfigError("reference conv: input channels do not match weights");
  }
  if (input.height < s.kernel_h || input.width < s.kernel_w) {
    throw ConfigError("reference conv: kernel larger than input");
  }
  const std::size_t out_h = (input.height - s.kernel_h) / stride + 1;
  const std::size_t out_w = (input.width - s.kernel_w) / stride + 1;
  IntVolume out(s.filters, out_h, out_w);
  for (std::size_t f = 0; f < s.filters; ++f) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        std::int64_t acc = 0;
        for (std::size_t c = 0; c < s.channels; ++c) {
          for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
              acc += input.at(c, oy * stride + ky, ox * stride + kx) * weights.at(f, c, ky, kx);
            }
          }
        }
        out.at(f, oy, ox) = acc;
      }
    }
  }
  return out;
}

inline std::int64_t int_dot(const std::vector<std::int64_t>& a,
                            const std::vector<std::int64_t>& b) {
  std::int64_t acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Number of k-subsets of n, saturating instead of overflowing.
inline std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    const std::uint64_t num = n - k + i;
    if (result > std::numeric_limits<std::uint64_t>::max() / num) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    result = result * num / i;
  }
  return result;
}

// Smallest squared Frobenius distance from w to any tensor with at most
// `budget` nonzero groups, by enumerating every support subset. On each
// support the optimal point copies the slice, so the distance is the energy
// of the dropped groups.
//
// Enumeration explodes combinatorially; callers gate on enumerable_supports().
inline double brute_force_min_sq_distance(const Tensor4& w, const SparsityConstraint& c) {
  const std::vector<GroupScore> scores = group_scores(w, c.kind);
  const std::size_t n = scores.size();
  const std::size_t k = c.budget;
  double total = 0.0;
  for (const GroupScore& g : scores) total += g.score;

  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(k);
  // lexicographic k-combinations of {0..n-1}
  for (std::size_t i = 0; i < k; ++i) pick[i] = i;
  while (true) {
    double kept = 0.0;
    for (std::size_t g : pick) kept += scores[g].score;
    best = std::min(best, total - kept);
    std::size_t i = k;
    while (i > 0) {
      --i;
      if (pick[i] != i + n - k) break;
      if (i == 0) return best;
    }
    ++pick[i];
    for (std::size_t j = i + 1; j < k; ++j) pick[j] = pick[j - 1] + 1;
  }
}

inline bool enumerable_supports(std::size_t groups, std::size_t budget,
                                std::uint64_t limit = 200000) {
  return binomial(groups, budget) <= limit;
}

// Exchange certificate for top-k optimality: swapping any kept group for any
// dropped group must not increase the total kept energy. For this separable
// objective the single-swap condition is equivalent to global optimality.
inline bool exchange_optimal(const Tensor4& w, const Tensor4& projected,
                             const SparsityConstraint& c, double tol = 1e-9) {
  const std::vector<GroupScore> w_scores = group_scores(w, c.kind);
  const std::vector<GroupScore> p_scores = group_scores(projected, c.kind);
  std::vector<std::size_t> kept;
  std::vector<std::size_t> dropped;
  for (std::size_t g = 0; g < p_scores.size(); ++g) {
    if (p_scores[g].score != 0.0) {
      kept.push_back(g);
    } else {
      dropped.push_back(g);
    }
  }
  if (kept.size() > c.budget) return false;
  double min_kept = std::numeric_limits<double>::infinity();
  for (std::size_t g : kept) min_kept = std::min(min_kept, w_scores[g].score);
  // groups that were dropped only because the budget was exhausted
  if (kept.size() == c.budget) {
    for (std::size_t g : dropped) {
      if (w_scores[g].score > min_kept + tol) return false;
    }
  } else {
    // spare budget: every dropped group must carry (near) zero energy
    for (std::size_t g : dropped) {
      if (w_scores[g].score > tol) return false;
    }
  }
  return true;
}

// Central finite differences of a scalar function over a parameter vector.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> params,
    double eps = 1e-5) {
  std::vector<double> grad(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + eps;
    const double hi = f(params);
    params[i] = saved - eps;
    const double lo = f(params);
    params[i] = saved;
    grad[i] = (hi - lo) / (2.0 * eps);
  }
  return grad;
}

}  // namespace pimforge::reference
