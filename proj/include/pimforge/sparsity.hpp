#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pimforge/tensor.hpp"

namespace pimforge {

enum class GroupKind { Filter, Channel, Kernel };

inline const char* group_kind_name(GroupKind k) {
  switch (k) {
    case GroupKind::Filter: return "filter";
    case GroupKind::Channel: return "channel";
    case GroupKind::Kernel: return "kernel";
  }
  return "?";
}

inline std::size_t group_count(const LayerShape& shape, GroupKind kind) {
  switch (kind) {
    case GroupKind::Filter: return shape.filters;
    case GroupKind::Channel: return shape.channels;
    case GroupKind::Kernel: return shape.kernel_count();
  }
  return 0;
}

// Structured sparsity constraint: at most `budget` nonzero groups of `kind`.
struct SparsityConstraint {
  GroupKind kind = GroupKind::Filter;
  std::size_t budget = 1;

  SparsityConstraint() = default;
  SparsityConstraint(GroupKind k, std::size_t b) : kind(k), budget(b) {
    if (budget < 1) {
      // a zero budget kills the layer entirely; delete the layer instead
      throw ConfigError("sparsity constraint budget must be >= 1");
    }
  }

  void validate_for(const LayerShape& shape) const {
    const std::size_t groups = group_count(shape, kind);
    if (budget > groups) {
      throw ConfigError(std::string(group_kind_name(kind)) + " budget " +
                        std::to_string(budget) + " exceeds group count " +
                        std::to_string(groups));
    }
  }

  bool operator==(const SparsityConstraint&) const = default;
};

struct GroupScore {
  std::size_t group_index = 0;
  double score = 0.0;  // squared Frobenius norm of the group slice
};

namespace detail {

// Group index of element (f, c): f for Filter, c for Channel, f*C + c for Kernel.
inline std::size_t group_of(GroupKind kind, std::size_t f, std::size_t c, std::size_t channels) {
  switch (kind) {
    case GroupKind::Filter: return f;
    case GroupKind::Channel: return c;
    case GroupKind::Kernel: return f * channels + c;
  }
  return 0;
}

}  // namespace detail

// One squared-norm score per group: F scores for Filter, C for Channel,
// F*C for Kernel. Squared norms are compared directly; no square root.
inline std::vector<GroupScore> group_scores(const Tensor4& w, GroupKind kind) {
  const LayerShape& s = w.shape();
  std::vector<GroupScore> scores(group_count(s, kind));
  for (std::size_t g = 0; g < scores.size(); ++g) scores[g].group_index = g;
  for (std::size_t f = 0; f < s.filters; ++f) {
    for (std::size_t c = 0; c < s.channels; ++c) {
      const std::size_t g = detail::group_of(kind, f, c, s.channels);
      double acc = 0.0;
      for (std::size_t h = 0; h < s.kernel_h; ++h) {
        for (std::size_t x = 0; x < s.kernel_w; ++x) {
          const double v = w.at(f, c, h, x);
          acc += v * v;
        }
      }
      scores[g].score += acc;
    }
  }
  return scores;
}

inline bool is_feasible(const Tensor4& w, const SparsityConstraint& c) {
  c.validate_for(w.shape());
  const LayerShape& s = w.shape();
  std::vector<char> nonzero(group_count(s, c.kind), 0);
  for (std::size_t f = 0; f < s.filters; ++f) {
    for (std::size_t ch = 0; ch < s.channels; ++ch) {
      const std::size_t g = detail::group_of(c.kind, f, ch, s.channels);
      if (nonzero[g]) continue;
      for (std::size_t h = 0; h < s.kernel_h && !nonzero[g]; ++h) {
        for (std::size_t x = 0; x < s.kernel_w; ++x) {
          if (w.at(f, ch, h, x) != 0.0) {
            nonzero[g] = 1;
            break;
          }
        }
      }
    }
  }
  std::size_t count = 0;
  for (char v : nonzero) count += v;
  return count <= c.budget;
}

// Indices of the `budget` groups with the largest scores. Ties at the budget
// boundary keep the smaller group index, which makes golden tests stable.
inline std::vector<std::size_t> top_groups(std::span<const GroupScore> scores,
                                           std::size_t budget) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a].score != scores[b].score) return scores[a].score > scores[b].score;
    return a < b;
  });
  order.resize(std::min(budget, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

// Per-element keep mask (1 = kept) covering whole groups selected by the
// top-k rule applied to w's group scores.
inline std::vector<std::uint8_t> keep_mask(const Tensor4& w, const SparsityConstraint& c) {
  c.validate_for(w.shape());
  const LayerShape& s = w.shape();
  const std::vector<GroupScore> scores = group_scores(w, c.kind);
  const std::vector<std::size_t> kept = top_groups(scores, c.budget);
  std::vector<char> keep_group(scores.size(), 0);
  for (std::size_t g : kept) keep_group[g] = 1;
  std::vector<std::uint8_t> mask(w.size(), 0);
  for (std::size_t f = 0; f < s.filters; ++f) {
    for (std::size_t ch = 0; ch < s.channels; ++ch) {
      if (!keep_group[detail::group_of(c.kind, f, ch, s.channels)]) continue;
      for (std::size_t h = 0; h < s.kernel_h; ++h) {
        for (std::size_t x = 0; x < s.kernel_w; ++x) {
          mask[w.offset(f, ch, h, x)] = 1;
        }
      }
    }
  }
  return mask;
}

// Euclidean projection onto the constraint set: the groups with the `budget`
// largest squared Frobenius norms are copied verbatim, the rest are zeroed.
inline Tensor4 project(const Tensor4& w, const SparsityConstraint& c) {
  const std::vector<std::uint8_t> mask = keep_mask(w, c);
  Tensor4 out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) {
    out[i] = mask[i] ? w[i] : 0.0;
  }
  return out;
}

// Elementwise AND of the per-constraint keep masks, each obtained from an
// independent projection of w. Projections are never composed sequentially.
inline std::vector<std::uint8_t> combined_mask(const Tensor4& w,
                                               std::span<const SparsityConstraint> constraints) {
  std::vector<std::uint8_t> mask(w.size(), 1);
  for (const SparsityConstraint& c : constraints) {
    const std::vector<std::uint8_t> m = keep_mask(w, c);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] &= m[i];
  }
  return mask;
}

inline Tensor4 apply_mask(const Tensor4& w, std::span<const std::uint8_t> mask) {
  Tensor4 out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = mask[i] ? w[i] : 0.0;
  return out;
}

}  // namespace pimforge
