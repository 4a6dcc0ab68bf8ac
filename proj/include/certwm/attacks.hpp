#pragma once

// Removal/forgery attacks: quality-factor block-DCT compression, a
// query-based black-box boundary walk, projected-gradient white-box descent,
// and its smoothing-aware adaptive variant.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "certwm/basewm.hpp"
#include "certwm/core.hpp"
#include "certwm/errors.hpp"
#include "certwm/rng.hpp"

namespace certwm {

struct AttackBudget {
  double R = 0.0;               // l2 cap for gradient attacks
  int n_iter = 500;
  double learning_rate = 0.01;
  long query_budget = 0;        // black-box oracle calls for refinement
  double epsilon_stop = 0.05;   // stop once BA(w, w_T) >= 1 - epsilon_stop
  int N_prime = 100;            // adaptive smoothing sample count
  std::uint64_t seed = 1;

  void validate() const {
    if (R < 0.0 || n_iter < 1 || !(learning_rate > 0.0) || query_budget < 0 ||
        !(epsilon_stop > 0.0 && epsilon_stop < 1.0) || N_prime < 1)
      throw DomainError("invalid attack budget");
  }
};

struct AttackOutcome {
  Perturbation delta;
  double final_ba = 0.0;   // BA of the decoded watermark against the target
  long queries_used = 0;
  bool success = false;
};

enum class AttackGoal { removal, forgery };

namespace detail {

// Standard luminance quantization table (natural order).
inline const int kLumaQuant[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

struct Dct8 {
  double basis[8][8];  // basis[u][i] = c(u) * cos((2i+1) u pi / 16) / 2
  Dct8() {
    for (int u = 0; u < 8; ++u) {
      double cu = u == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
      for (int i = 0; i < 8; ++i)
        basis[u][i] = 0.5 * cu * std::cos((2 * i + 1) * u * M_PI / 16.0);
    }
  }
};

inline const Dct8& dct8() {
  static const Dct8 tables;
  return tables;
}

}  // namespace detail

// Lossy block-transform distortion at quality factor Q in [1,100]: per
// channel, 8x8 DCT on the 255-scaled level-shifted block, quantization by
// the scaled luminance table, dequantization and inverse transform. No
// entropy coding, subsampling or color transform; this models the
// quantization distortion only.
inline ImageTensor quality_compress(const ImageTensor& x, int Q) {
  if (Q < 1 || Q > 100) throw DomainError("quality factor must be in [1,100]");
  const int scale = Q < 50 ? 5000 / Q : 200 - 2 * Q;
  int qtab[64];
  for (int i = 0; i < 64; ++i)
    qtab[i] = std::max(1, (detail::kLumaQuant[i] * scale + 50) / 100);

  const ImageShape shape = x.shape();
  const int ph = (shape.height + 7) / 8 * 8;
  const int pw = (shape.width + 7) / 8 * 8;
  const auto& t = detail::dct8();

  std::vector<double> out(x.pixels().begin(), x.pixels().end());
  std::vector<double> plane(static_cast<std::size_t>(ph) * pw);
  for (int c = 0; c < shape.channels; ++c) {
    const std::size_t base =
        static_cast<std::size_t>(c) * shape.height * shape.width;
    // Pad by edge replication.
    for (int i = 0; i < ph; ++i) {
      int si = std::min(i, shape.height - 1);
      for (int j = 0; j < pw; ++j) {
        int sj = std::min(j, shape.width - 1);
        plane[static_cast<std::size_t>(i) * pw + j] =
            x[base + static_cast<std::size_t>(si) * shape.width + sj] * 255.0 -
            128.0;
      }
    }
    double blk[8][8], tmp[8][8];
    for (int bi = 0; bi < ph; bi += 8) {
      for (int bj = 0; bj < pw; bj += 8) {
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j)
            blk[i][j] = plane[static_cast<std::size_t>(bi + i) * pw + bj + j];
        // F = B * blk * B^T, quantize, f = B^T * F * B.
        for (int u = 0; u < 8; ++u)
          for (int j = 0; j < 8; ++j) {
            double s = 0.0;
            for (int i = 0; i < 8; ++i) s += t.basis[u][i] * blk[i][j];
            tmp[u][j] = s;
          }
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int j = 0; j < 8; ++j) s += tmp[u][j] * t.basis[v][j];
            int q = qtab[u * 8 + v];
            blk[u][v] = std::round(s / q) * q;
          }
        for (int i = 0; i < 8; ++i)
          for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int u = 0; u < 8; ++u) s += t.basis[u][i] * blk[u][v];
            tmp[i][v] = s;
          }
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j) {
            double s = 0.0;
            for (int v = 0; v < 8; ++v) s += tmp[i][v] * t.basis[v][j];
            plane[static_cast<std::size_t>(bi + i) * pw + bj + j] = s;
          }
      }
    }
    for (int i = 0; i < shape.height; ++i)
      for (int j = 0; j < shape.width; ++j)
        out[base + static_cast<std::size_t>(i) * shape.width + j] = std::clamp(
            (plane[static_cast<std::size_t>(i) * pw + j] + 128.0) / 255.0, 0.0,
            1.0);
  }
  return ImageTensor(shape, std::move(out));
}

// A detection query: true iff the (base or smoothed) detector flags the
// pixels as watermarked.
using DetectionOracle =
    std::function<bool(const ImageShape&, std::span<const double>)>;

namespace detail {

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

inline double l2_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace detail

// Query-based boundary attack. `init` must already sit on the adversarial
// side (removal: misdetected as non-watermarked; forgery: detected as
// watermarked). Binary search along the segment to x locates the boundary;
// random orthogonal steps with contraction then walk it inward. The best
// adversarial point seen so far is returned, so the perturbation norm is
// nonincreasing in the query budget.
inline AttackOutcome blackbox_attack(const ImageTensor& x,
                                     const DetectionOracle& oracle,
                                     AttackGoal goal, const ImageTensor& init,
                                     const AttackBudget& budget) {
  budget.validate();
  if (!(x.shape() == init.shape()))
    throw ShapeMismatch("init image shape does not match target");
  const std::size_t n = x.size();
  long queries = 0;
  auto adversarial = [&](std::span<const double> p) {
    ++queries;
    bool detected = oracle(x.shape(), p);
    return goal == AttackGoal::removal ? !detected : detected;
  };

  std::vector<double> best(init.pixels().begin(), init.pixels().end());
  if (!adversarial(best))
    throw InitNotAdversarial(
        "init image is not on the adversarial side of the detector");

  auto base = x.pixels();
  auto remaining = [&] { return budget.query_budget - (queries - 1); };

  // Phase 1: bisect the segment best -> x down to the decision boundary.
  {
    std::vector<double> lo(best);                     // adversarial end
    std::vector<double> hi(base.begin(), base.end()); // non-adversarial end
    std::vector<double> mid(n);
    while (remaining() > 0 && detail::l2_dist(lo, hi) > 1e-4) {
      for (std::size_t i = 0; i < n; ++i) mid[i] = 0.5 * (lo[i] + hi[i]);
      if (adversarial(mid))
        lo = mid;
      else
        hi = mid;
    }
    best = lo;
  }

  // Phase 2: orthogonal jitter plus contraction toward x.
  CounterRng rng(budget.seed, 0x626c61636bULL /* "black" */, 0);
  double step_orth = 0.1, step_in = 0.02;
  std::vector<double> cand(n), dir(n);
  while (remaining() > 0) {
    double dist = detail::l2_dist(best, base);
    if (dist < 1e-9) break;
    for (std::size_t i = 0; i < n; ++i) dir[i] = rng.next_gaussian();
    // Remove the radial component, scale to step_orth * dist.
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += dir[i] * (best[i] - base[i]);
    dot /= dist * dist;
    for (std::size_t i = 0; i < n; ++i) dir[i] -= dot * (best[i] - base[i]);
    double dn = detail::l2_norm(dir);
    if (dn < 1e-12) continue;
    double s = step_orth * dist / dn;
    double contract = 1.0 - step_in;
    for (std::size_t i = 0; i < n; ++i) {
      double p = best[i] + s * dir[i];
      cand[i] = base[i] + contract * (p - base[i]);
    }
    if (detail::l2_dist(cand, base) >= dist) continue;  // numeric guard
    if (adversarial(cand)) {
      best = cand;
      step_in = std::min(0.5, step_in * 1.3);
    } else {
      step_in = std::max(1e-4, step_in * 0.6);
      step_orth = std::max(1e-3, step_orth * 0.95);
    }
  }

  AttackOutcome out;
  std::vector<double> delta(n);
  for (std::size_t i = 0; i < n; ++i) delta[i] = best[i] - base[i];
  out.delta = Perturbation(std::move(delta));
  out.queries_used = queries;
  out.success = true;  // best is validated adversarial by construction
  out.final_ba = std::numeric_limits<double>::quiet_NaN();
  return out;
}

namespace detail {

// d loss / d logit for the mean per-bit logistic loss against target bits.
inline void logistic_loss_coeffs(std::span<const double> z,
                                 const Watermark& target,
                                 std::span<double> coeff) {
  const double m = static_cast<double>(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    double y = target[i] ? 1.0 : -1.0;
    coeff[i] = -y / (1.0 + std::exp(y * z[i])) / m;  // -y * sigmoid(-y z) / m
  }
}

inline void project_l2(std::vector<double>& delta, double R) {
  double n = l2_norm(delta);
  if (n > R) {
    double s = R / std::max(n, 1e-300);
    for (auto& v : delta) v *= s;
  }
}

}  // namespace detail

// Projected gradient descent on the mean logistic loss of the decoder logits
// against the target watermark, stopping early once the decoded watermark is
// within epsilon_stop of the target.
inline AttackOutcome whitebox_attack(const ImageTensor& x,
                                     const GradientBitDecoder& decoder,
                                     const Watermark& w_target,
                                     const AttackBudget& budget) {
  budget.validate();
  const std::size_t n = x.size();
  const std::size_t m = decoder.bit_count();
  if (w_target.size() != m)
    throw LengthMismatch("target watermark does not match decoder");

  std::vector<double> delta(n, 0.0), point(n), grad(n), coeff(m);
  auto base = x.pixels();
  double ba = 0.0;
  for (int it = 0; it < budget.n_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) point[i] = base[i] + delta[i];
    auto z = decoder.logits(x.shape(), point);
    detail::logistic_loss_coeffs(z, w_target, coeff);
    std::fill(grad.begin(), grad.end(), 0.0);
    decoder.accumulate_loss_gradient(x.shape(), point, coeff, grad);
    for (std::size_t i = 0; i < n; ++i)
      delta[i] -= budget.learning_rate * grad[i];
    detail::project_l2(delta, budget.R);
    for (std::size_t i = 0; i < n; ++i) point[i] = base[i] + delta[i];
    ba = bitwise_accuracy(decoder.decode(x.shape(), point), w_target);
    if (ba >= 1.0 - budget.epsilon_stop) break;
  }

  AttackOutcome out;
  out.delta = Perturbation(std::move(delta));
  out.final_ba = ba;
  out.queries_used = 0;
  out.success = ba >= 1.0 - budget.epsilon_stop;
  return out;
}

// Algorithm "Smooth_noise": of N' sampled Gaussian noises, return the one
// whose decoded BA against w_target is the (lower) median; ties resolve to
// the earliest sample index. The chosen noise is regenerated from its
// counter rather than stored.
inline std::vector<double> smooth_noise(const ImageTensor& x,
                                        const BitDecoder& decoder,
                                        const Watermark& w_target, double sigma,
                                        int N_prime, std::uint64_t seed) {
  if (N_prime < 1) throw DomainError("N' must be >= 1");
  if (!(sigma > 0.0)) throw DomainError("sigma must be > 0");
  const std::size_t n = x.size();
  auto base = x.pixels();
  std::vector<double> noisy(n);
  std::vector<double> bas(N_prime);
  for (int j = 0; j < N_prime; ++j) {
    CounterRng rng(seed, 0x736d6f6f7468ULL /* "smooth" */, j);
    for (std::size_t i = 0; i < n; ++i)
      noisy[i] = base[i] + sigma * rng.next_gaussian();
    bas[j] = bitwise_accuracy(decoder.decode(x.shape(), noisy), w_target);
  }
  std::vector<double> sorted(bas);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double median = sorted[static_cast<std::size_t>(N_prime) / 2];
  int pick = 0;
  for (int j = 0; j < N_prime; ++j)
    if (bas[j] == median) {
      pick = j;
      break;
    }
  std::vector<double> noise(n);
  CounterRng rng(seed, 0x736d6f6f7468ULL, pick);
  rng.fill_gaussian(noise, sigma);
  return noise;
}

// Smoothing-aware white-box attack: each iteration evaluates the loss
// gradient at x + eps' + delta with eps' drawn by smooth_noise, and the stop
// test decodes at x + eps* + delta with a fresh draw.
inline AttackOutcome adaptive_whitebox_attack(const ImageTensor& x,
                                              const GradientBitDecoder& decoder,
                                              const Watermark& w_target,
                                              double sigma,
                                              const AttackBudget& budget) {
  budget.validate();
  if (!(sigma > 0.0)) throw DomainError("sigma must be > 0");
  const std::size_t n = x.size();
  const std::size_t m = decoder.bit_count();
  if (w_target.size() != m)
    throw LengthMismatch("target watermark does not match decoder");

  std::vector<double> delta(n, 0.0), point(n), grad(n), coeff(m);
  auto base = x.pixels();
  double ba = 0.0;
  for (int it = 0; it < budget.n_iter; ++it) {
    auto eps = smooth_noise(x, decoder, w_target, sigma, budget.N_prime,
                            budget.seed + 2 * it);
    for (std::size_t i = 0; i < n; ++i) point[i] = base[i] + eps[i] + delta[i];
    auto z = decoder.logits(x.shape(), point);
    detail::logistic_loss_coeffs(z, w_target, coeff);
    std::fill(grad.begin(), grad.end(), 0.0);
    decoder.accumulate_loss_gradient(x.shape(), point, coeff, grad);
    for (std::size_t i = 0; i < n; ++i)
      delta[i] -= budget.learning_rate * grad[i];
    detail::project_l2(delta, budget.R);

    auto eps_star = smooth_noise(x, decoder, w_target, sigma, budget.N_prime,
                                 budget.seed + 2 * it + 1);
    for (std::size_t i = 0; i < n; ++i)
      point[i] = base[i] + eps_star[i] + delta[i];
    ba = bitwise_accuracy(decoder.decode(x.shape(), point), w_target);
    if (ba >= 1.0 - budget.epsilon_stop) break;
  }

  AttackOutcome out;
  out.delta = Perturbation(std::move(delta));
  out.final_ba = ba;
  out.queries_used = 0;
  out.success = ba >= 1.0 - budget.epsilon_stop;
  return out;
}

}  // namespace certwm
