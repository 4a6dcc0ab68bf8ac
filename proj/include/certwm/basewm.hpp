#pragma once

// The pluggable base-decoder contract and a reference spread-spectrum
// encoder/decoder. The reference decoder is deliberately linear: with
// orthonormal patterns the per-bit behavior under isotropic Gaussian noise
// has a closed form, which gives every Monte-Carlo estimator in the toolkit
// an exact analytic oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "certwm/core.hpp"
#include "certwm/errors.hpp"
#include "certwm/rng.hpp"
#include "certwm/stats.hpp"

namespace certwm {

// m unit-norm, pairwise-orthogonal carrier patterns of image shape.
class PatternBank {
 public:
  PatternBank() = default;
  PatternBank(std::uint64_t seed, ImageShape shape,
              std::vector<std::vector<double>> patterns)
      : seed_(seed), shape_(shape), patterns_(std::move(patterns)) {}

  std::uint64_t seed() const { return seed_; }
  const ImageShape& shape() const { return shape_; }
  std::size_t bit_count() const { return patterns_.size(); }
  std::span<const double> pattern(std::size_t i) const { return patterns_[i]; }

 private:
  std::uint64_t seed_ = 0;
  ImageShape shape_;
  std::vector<std::vector<double>> patterns_;
};

struct SpreadSpectrumConfig {
  double strength = 0.25;        // per-bit embedding amplitude, pixel units
  std::uint64_t pattern_seed = 42;

  void validate() const {
    if (!(strength > 0.0)) throw DomainError("embed strength must be > 0");
  }
};

// Deterministic orthonormal bank: seeded Gaussian draws, modified
// Gram-Schmidt with one re-orthogonalization pass.
inline PatternBank gen_patterns(std::uint64_t seed, std::size_t m,
                                ImageShape shape) {
  std::size_t dim = shape.pixel_count();
  if (m == 0) throw ShapeTooSmall("pattern bank needs m >= 1");
  if (m > dim)
    throw ShapeTooSmall("watermark length exceeds image dimensionality");

  std::vector<std::vector<double>> pats(m, std::vector<double>(dim));
  for (std::size_t i = 0; i < m; ++i) {
    CounterRng rng(seed, 0x7061747465726eULL /* "pattern" */, i);
    rng.fill_gaussian(pats[i], 1.0);
  }
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < m; ++i) {
      auto& p = pats[i];
      for (std::size_t k = 0; k < i; ++k) {
        const auto& q = pats[k];
        double proj = std::inner_product(p.begin(), p.end(), q.begin(), 0.0);
        for (std::size_t d = 0; d < dim; ++d) p[d] -= proj * q[d];
      }
      double norm =
          std::sqrt(std::inner_product(p.begin(), p.end(), p.begin(), 0.0));
      if (norm < 1e-12)
        throw ShapeTooSmall("degenerate pattern draw; choose another seed");
      for (auto& v : p) v /= norm;
    }
  }
  return PatternBank(seed, shape, std::move(pats));
}

// Mean-centered projections Z_i = <x - 0.5, p_i>; a blank mid-gray image is
// maximally uncertain. The input may lie outside [0,1] (noisy decodes do).
inline std::vector<double> ss_logits(const ImageShape& shape,
                                     std::span<const double> pixels,
                                     const PatternBank& bank) {
  if (!(shape == bank.shape()) || pixels.size() != shape.pixel_count())
    throw ShapeMismatch("image shape does not match pattern bank");
  std::vector<double> z(bank.bit_count());
  for (std::size_t i = 0; i < bank.bit_count(); ++i) {
    auto p = bank.pattern(i);
    double acc = 0.0;
    for (std::size_t d = 0; d < pixels.size(); ++d)
      acc += (pixels[d] - 0.5) * p[d];
    z[i] = acc;
  }
  return z;
}

inline std::vector<double> ss_logits(const ImageTensor& x,
                                     const PatternBank& bank) {
  return ss_logits(x.shape(), x.pixels(), bank);
}

// x + strength * sum_i (2 w_t[i] - 1) p_i, clamped back into [0,1].
// strength 0 degenerates to the identity.
inline ImageTensor embed(const ImageTensor& x, const Watermark& wt,
                         const PatternBank& bank,
                         const SpreadSpectrumConfig& cfg) {
  if (cfg.strength < 0.0) throw DomainError("embed strength must be >= 0");
  if (wt.size() != bank.bit_count())
    throw LengthMismatch("watermark length does not match pattern bank");
  if (!(x.shape() == bank.shape()))
    throw ShapeMismatch("image shape does not match pattern bank");
  std::vector<double> out(x.pixels().begin(), x.pixels().end());
  for (std::size_t i = 0; i < wt.size(); ++i) {
    double s = wt[i] ? cfg.strength : -cfg.strength;
    auto p = bank.pattern(i);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += s * p[d];
  }
  return ImageTensor(x.shape(), std::move(out));  // ctor clamps
}

// Exact Pr(decode(x + eps)[i] = 1) for eps ~ N(0, sigma^2 I): the projection
// <eps, p_i> is N(0, sigma^2) because the pattern has unit norm.
inline double analytic_bit_probability(const ImageTensor& x, std::size_t i,
                                       double sigma, const PatternBank& bank) {
  if (i >= bank.bit_count()) throw DomainError("bit index out of range");
  if (!(sigma > 0.0)) throw DomainError("sigma must be > 0");
  double z = ss_logits(x, bank)[i];
  return std_normal_cdf(z / sigma);
}

// Indices of the k' largest logits; ties break toward the lower index.
// Returned ascending.
inline std::vector<std::size_t> topk_labels(std::span<const double> logits,
                                            std::size_t k_prime) {
  if (k_prime < 1 || k_prime > logits.size())
    throw DomainError("k' must lie in [1, m]");
  std::vector<std::size_t> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return logits[a] > logits[b];
                   });
  order.resize(k_prime);
  std::sort(order.begin(), order.end());
  return order;
}

// Behavioral contract of a base decoder D: m finite logits per image, with
// decode(x)[i] = 1 iff logit i > 0 (ties -> 0).
class BitDecoder {
 public:
  virtual ~BitDecoder() = default;
  virtual std::size_t bit_count() const = 0;
  virtual std::vector<double> logits(const ImageShape& shape,
                                     std::span<const double> pixels) const = 0;

  Watermark decode(const ImageShape& shape,
                   std::span<const double> pixels) const {
    auto z = logits(shape, pixels);
    std::vector<std::uint8_t> bits(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) bits[i] = z[i] > 0.0 ? 1 : 0;
    return Watermark(std::move(bits));
  }
  Watermark decode(const ImageTensor& x) const {
    return decode(x.shape(), x.pixels());
  }
};

// Decoder that additionally exposes logit gradients with respect to the
// image, as required by the white-box attacks. accumulate_loss_gradient adds
// sum_i coeff[i] * dZ_i/dx into grad.
class GradientBitDecoder : public BitDecoder {
 public:
  virtual void accumulate_loss_gradient(const ImageShape& shape,
                                        std::span<const double> pixels,
                                        std::span<const double> coeff,
                                        std::span<double> grad) const = 0;
};

class ReferenceDecoder final : public GradientBitDecoder {
 public:
  explicit ReferenceDecoder(PatternBank bank) : bank_(std::move(bank)) {}

  std::size_t bit_count() const override { return bank_.bit_count(); }

  std::vector<double> logits(const ImageShape& shape,
                             std::span<const double> pixels) const override {
    return ss_logits(shape, pixels, bank_);
  }

  // Z_i is linear in the image, so dZ_i/dx = p_i independent of x.
  void accumulate_loss_gradient(const ImageShape& shape,
                                std::span<const double> /*pixels*/,
                                std::span<const double> coeff,
                                std::span<double> grad) const override {
    if (coeff.size() != bank_.bit_count() ||
        grad.size() != shape.pixel_count() || !(shape == bank_.shape()))
      throw ShapeMismatch("gradient buffer does not match pattern bank");
    for (std::size_t i = 0; i < coeff.size(); ++i) {
      if (coeff[i] == 0.0) continue;
      auto p = bank_.pattern(i);
      for (std::size_t d = 0; d < grad.size(); ++d)
        grad[d] += coeff[i] * p[d];
    }
  }

  const PatternBank& bank() const { return bank_; }

 private:
  PatternBank bank_;
};

}  // namespace certwm
