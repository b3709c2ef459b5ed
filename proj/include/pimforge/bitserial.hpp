#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pimforge/tensor.hpp"

namespace pimforge {

// Operation counts of the bit-serial datapath.
//
// and_row_ops counts row-pair selections: one per (input bit row, weight bit
// row) pair, covering a whole kernel footprint in parallel. and_cell_ops is
// the same count multiplied by the cells each row holds. Both are "logical"
// counts: the engine never skips, skipping is a layout decision.
struct BitConvTrace {
  std::uint64_t and_row_ops = 0;
  std::uint64_t and_cell_ops = 0;
  std::uint64_t bitcounts = 0;
  std::uint64_t shift_accums = 0;
  std::uint64_t input_writes = 0;  // input-tile loads into the input sub-array

  BitConvTrace& operator+=(const BitConvTrace& o) {
    and_row_ops += o.and_row_ops;
    and_cell_ops += o.and_cell_ops;
    bitcounts += o.bitcounts;
    shift_accums += o.shift_accums;
    input_writes += o.input_writes;
    return *this;
  }
  bool operator==(const BitConvTrace&) const = default;
};

// Sign-magnitude fixed-point operands split into per-bit boolean planes.
// Plane m holds bit m of every element's magnitude; planes are packed into
// 64-bit words in element order so a bitcount is a population count over
// machine words. Rows of a sub-array are exactly these planes.
class BitPlanes {
 public:
  BitPlanes() = default;

  static BitPlanes decompose(std::span<const std::int64_t> x, unsigned bits, bool is_signed) {
    if (bits < 1 || bits > 62) throw ConfigError("bit plane count must be in [1, 62]");
    BitPlanes bp;
    bp.elems_ = x.size();
    bp.bits_ = bits;
    bp.signed_ = is_signed;
    bp.words_ = (x.size() + 63) / 64;
    bp.planes_.assign(static_cast<std::size_t>(bits) * bp.words_, 0);
    if (is_signed) bp.sign_.assign(bp.words_, 0);
    const std::int64_t limit = std::int64_t{1} << bits;
    for (std::size_t e = 0; e < x.size(); ++e) {
      std::int64_t v = x[e];
      if (v < 0) {
        if (!is_signed) {
          throw RangeError("element " + std::to_string(e) + " is negative in an unsigned plane");
        }
        bp.sign_[e / 64] |= std::uint64_t{1} << (e % 64);
        v = -v;
      }
      if (v >= limit) {
        throw RangeError("element " + std::to_string(e) + " magnitude " + std::to_string(v) +
                         " does not fit in " + std::to_string(bits) + " bits");
      }
      for (unsigned m = 0; m < bits; ++m) {
        if ((v >> m) & 1) {
          bp.planes_[m * bp.words_ + e / 64] |= std::uint64_t{1} << (e % 64);
        }
      }
    }
    return bp;
  }

  unsigned bits() const { return bits_; }
  std::size_t elems() const { return elems_; }
  std::size_t words() const { return words_; }
  bool has_sign() const { return signed_; }

  std::span<const std::uint64_t> plane(unsigned m) const {
    return {planes_.data() + static_cast<std::size_t>(m) * words_, words_};
  }
  std::span<const std::uint64_t> sign_words() const { return sign_; }

  bool plane_bit(unsigned m, std::size_t e) const {
    return (planes_[m * words_ + e / 64] >> (e % 64)) & 1;
  }
  bool sign_bit(std::size_t e) const {
    return signed_ && ((sign_[e / 64] >> (e % 64)) & 1);
  }

  std::vector<std::int64_t> recompose() const {
    std::vector<std::int64_t> out(elems_, 0);
    for (std::size_t e = 0; e < elems_; ++e) {
      std::int64_t v = 0;
      for (unsigned m = 0; m < bits_; ++m) {
        if (plane_bit(m, e)) v |= std::int64_t{1} << m;
      }
      out[e] = sign_bit(e) ? -v : v;
    }
    return out;
  }

 private:
  std::size_t elems_ = 0;
  std::size_t words_ = 0;
  unsigned bits_ = 0;
  bool signed_ = false;
  std::vector<std::uint64_t> planes_;  // plane-major [bits_][words_]
  std::vector<std::uint64_t> sign_;
};

// Exact integer dot product over one kernel footprint:
//
//   sum over (m, n) of 2^(m+n) * bitcount(plane_m(i) AND plane_n(w))
//
// Signs are sign-magnitude: elements are partitioned by sign product and the
// negative-product partial sum is subtracted, so the AND/bitcount datapath
// itself only ever sees magnitude planes.
inline std::int64_t bitwise_dot(const BitPlanes& i, const BitPlanes& w,
                                BitConvTrace* trace = nullptr) {
  if (i.elems() != w.elems()) {
    throw ConfigError("bitwise_dot: operand element counts differ (" +
                      std::to_string(i.elems()) + " vs " + std::to_string(w.elems()) + ")");
  }
  const std::size_t words = i.words();
  // sign-product mask: 1 where exactly one operand is negative
  std::vector<std::uint64_t> neg_mask;
  const bool any_sign = i.has_sign() || w.has_sign();
  if (any_sign) {
    neg_mask.assign(words, 0);
    for (std::size_t k = 0; k < words; ++k) {
      const std::uint64_t si = i.has_sign() ? i.sign_words()[k] : 0;
      const std::uint64_t sw = w.has_sign() ? w.sign_words()[k] : 0;
      neg_mask[k] = si ^ sw;
    }
  }
  std::int64_t result = 0;
  for (unsigned m = 0; m < i.bits(); ++m) {
    const auto pi = i.plane(m);
    for (unsigned n = 0; n < w.bits(); ++n) {
      const auto pw = w.plane(n);
      std::int64_t pos = 0;
      std::int64_t neg = 0;
      for (std::size_t k = 0; k < words; ++k) {
        const std::uint64_t a = pi[k] & pw[k];
        if (any_sign) {
          neg += std::popcount(a & neg_mask[k]);
          pos += std::popcount(a & ~neg_mask[k]);
        } else {
          pos += std::popcount(a);
        }
      }
      result += (std::int64_t{1} << (m + n)) * (pos - neg);
      if (trace) {
        trace->and_row_ops += 1;
        trace->and_cell_ops += i.elems();
        trace->bitcounts += 1;
        trace->shift_accums += 1;
      }
    }
  }
  return result;
}

namespace detail {

inline void check_bit_range(std::span<const std::int64_t> xs, unsigned bits, bool is_signed,
                            const std::string& what) {
  const std::int64_t limit = std::int64_t{1} << bits;
  for (std::size_t e = 0; e < xs.size(); ++e) {
    const std::int64_t v = xs[e];
    if (v < 0 && !is_signed) {
      throw RangeError(what + " element " + std::to_string(e) + " is negative");
    }
    const std::int64_t mag = v < 0 ? -v : v;
    if (mag >= limit) {
      throw RangeError(what + " element " + std::to_string(e) + " magnitude " +
                       std::to_string(mag) + " does not fit in " + std::to_string(bits) +
                       " bits");
    }
  }
}

}  // namespace detail

// Exact integer cross-correlation computed bit-serially. Inputs are unsigned
// (post-ReLU); weights may be signed, `bits_w` counts magnitude bits. One
// input tile is loaded per (kernel position, channel), which the trace
// charges as an input write.
inline IntVolume bitwise_conv2d(const IntVolume& input, const IntTensor4& weights,
                                std::size_t stride, unsigned bits_in, unsigned bits_w,
                                bool signed_weights, BitConvTrace* trace = nullptr) {
  const LayerShape& s = weights.shape;
  if (input.channels != s.channels) {
    throw ConfigError("bitwise_conv2d: input channels " + std::to_string(input.channels) +
                      " do not match weight channels " + std::to_string(s.channels));
  }
  if (input.height < s.kernel_h || input.width < s.kernel_w) {
    throw ConfigError("bitwise_conv2d: kernel larger than input");
  }
  detail::check_bit_range(input.values, bits_in, false, "input");
  detail::check_bit_range(weights.values, bits_w, signed_weights, "weight");

  // one bit-plane sub-array per (filter, channel) kernel
  std::vector<BitPlanes> kernel_planes;
  kernel_planes.reserve(s.filters * s.channels);
  const std::size_t ke = s.kernel_elems();
  std::vector<std::int64_t> scratch(ke);
  for (std::size_t f = 0; f < s.filters; ++f) {
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
          scratch[ky * s.kernel_w + kx] = weights.at(f, c, ky, kx);
        }
      }
      kernel_planes.push_back(BitPlanes::decompose(scratch, bits_w, signed_weights));
    }
  }

  const std::size_t out_h = (input.height - s.kernel_h) / stride + 1;
  const std::size_t out_w = (input.width - s.kernel_w) / stride + 1;
  IntVolume out(s.filters, out_h, out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      for (std::size_t c = 0; c < s.channels; ++c) {
        for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
          for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
            scratch[ky * s.kernel_w + kx] = input.at(c, oy * stride + ky, ox * stride + kx);
          }
        }
        const BitPlanes tile = BitPlanes::decompose(scratch, bits_in, false);
        if (trace) trace->input_writes += 1;
        for (std::size_t f = 0; f < s.filters; ++f) {
          out.at(f, oy, ox) += bitwise_dot(tile, kernel_planes[f * s.channels + c], trace);
        }
      }
    }
  }
  return out;
}

// Minimal accumulator width that cannot overflow: full operand product width
// plus carry room for `elements` summands plus a sign bit.
inline unsigned accumulator_width(unsigned bits_in, unsigned bits_w, std::size_t elements) {
  if (bits_in < 1 || bits_w < 1 || elements < 1) {
    throw ConfigError("accumulator_width: arguments must be positive");
  }
  const unsigned carry = static_cast<unsigned>(std::bit_width(elements - 1));
  return bits_in + bits_w + carry + 1;
}

}  // namespace pimforge
