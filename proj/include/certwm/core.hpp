#pragma once

// Domain types for bitstring image watermarking: watermarks, images,
// perturbations, and the threshold detector decision rule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "certwm/errors.hpp"

namespace certwm {

// An m-bit watermark. Immutable after construction; every element is 0 or 1.
class Watermark {
 public:
  Watermark() = default;
  explicit Watermark(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto& b : bits_) b = b ? 1 : 0;
  }

  std::size_t size() const { return bits_.size(); }
  std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  // Number of ones, |w|_1.
  std::size_t ones() const {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

  // Indices i with w[i] = 1 (0-based), ascending.
  std::vector<std::size_t> one_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i]) idx.push_back(i);
    return idx;
  }

  Watermark flipped() const {
    std::vector<std::uint8_t> f(bits_.size());
    for (std::size_t i = 0; i < bits_.size(); ++i) f[i] = bits_[i] ? 0 : 1;
    return Watermark(std::move(f));
  }

  bool operator==(const Watermark& o) const { return bits_ == o.bits_; }

 private:
  std::vector<std::uint8_t> bits_;
};

struct ImageShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  bool operator==(const ImageShape&) const = default;
};

// C x H x W image with values in [0,1]. Construction clamps; noisy copies used
// as decoder inputs are plain buffers (see smoothing), never an ImageTensor,
// so the Gaussian noise reaches the decoder unclamped.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(ImageShape shape, std::vector<double> data)
      : shape_(shape), data_(std::move(data)) {
    if (shape_.channels <= 0 || shape_.height <= 0 || shape_.width <= 0)
      throw ShapeMismatch("image dimensions must be positive");
    if (data_.size() != shape_.pixel_count())
      throw ShapeMismatch("pixel buffer does not match shape");
    for (auto& v : data_) {
      if (!std::isfinite(v)) throw DomainError("non-finite pixel value");
      v = std::clamp(v, 0.0, 1.0);
    }
  }

  static ImageTensor filled(ImageShape shape, double value) {
    return ImageTensor(shape, std::vector<double>(shape.pixel_count(), value));
  }

  const ImageShape& shape() const { return shape_; }
  std::span<const double> pixels() const { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::size_t size() const { return data_.size(); }

 private:
  ImageShape shape_;
  std::vector<double> data_;
};

// An additive perturbation with its cached l2 norm.
class Perturbation {
 public:
  Perturbation() = default;
  explicit Perturbation(std::vector<double> delta) : delta_(std::move(delta)) {
    double s = 0.0;
    for (double v : delta_) s += v * v;
    l2_norm_ = std::sqrt(s);
  }

  std::span<const double> delta() const { return delta_; }
  double l2_norm() const { return l2_norm_; }
  std::size_t size() const { return delta_.size(); }

 private:
  std::vector<double> delta_;
  double l2_norm_ = 0.0;
};

enum class DetectorMode { single_tailed, double_tailed };

struct DetectorConfig {
  double tau = 0.83;
  DetectorMode mode = DetectorMode::double_tailed;

  void validate() const {
    if (!(tau > 0.5 && tau <= 1.0))
      throw DomainError("detector tau must lie in (0.5, 1]");
  }
};

// Fraction of bits of w that match wt.
inline double bitwise_accuracy(const Watermark& w, const Watermark& wt) {
  if (w.size() != wt.size() || w.size() == 0)
    throw LengthMismatch("watermarks must have equal nonzero length");
  std::size_t matches = 0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] == wt[i]) ++matches;
  return static_cast<double>(matches) / static_cast<double>(w.size());
}

// Threshold decision. The double-tailed detector also flags ba <= 1 - tau,
// which defeats bit-inversion evasion.
inline bool detect(double ba, const DetectorConfig& cfg) {
  cfg.validate();
  if (ba >= cfg.tau) return true;
  if (cfg.mode == DetectorMode::double_tailed && ba <= 1.0 - cfg.tau)
    return true;
  return false;
}

}  // namespace certwm
