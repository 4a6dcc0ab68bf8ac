#pragma once

// Certified bitwise-accuracy bounds for the three smoothing methods:
// per-bit radii for majority voting, the guaranteed-overlap search for
// label-count smoothing, and order-statistic bounds for median smoothing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "certwm/core.hpp"
#include "certwm/errors.hpp"
#include "certwm/smoothing.hpp"
#include "certwm/stats.hpp"

namespace certwm {

// Certified interval for one image at one radius: the smoothed decode's
// bitwise accuracy stays inside [ba_lower, ba_upper] for every perturbation
// with l2 norm below radius, with probability >= confidence.
struct CertifiedInterval {
  double ba_lower = 0.0;
  double ba_upper = 1.0;
  double radius = 0.0;
  double confidence = 0.0;
  SmoothingMethod method = SmoothingMethod::regression;
};

// Per-bit certificate: the smoothed bit provably keeps `value` under any
// perturbation smaller than `radius`.
struct BitCertificate {
  double p_lower = 0.0;  // confidence lower bound on the majority probability
  double radius = 0.0;
  std::uint8_t value = 0;
};

// Confidence bounds on per-label membership probabilities, each sequence
// sorted descending as the overlap search expects.
struct LabelProbBounds {
  std::vector<double> lower_for_ones;   // p-lower for target-side labels
  std::vector<double> upper_for_zeros;  // p-upper for complement labels
};

// sigma * Phi^-1(p_lower) when the bound clears 1/2; an uncertified bit gets
// radius 0 rather than the negative value the formula would produce.
inline double certified_radius_bit(double p_lower, double sigma) {
  if (!(p_lower >= 0.0 && p_lower <= 1.0))
    throw DomainError("p_lower must lie in [0,1]");
  if (!(sigma > 0.0)) throw DomainError("sigma must be > 0");
  if (p_lower <= 0.5) return 0.0;
  if (p_lower == 1.0) return std::numeric_limits<double>::infinity();
  return sigma * std_normal_inv_cdf(p_lower);
}

// Simultaneous per-bit certificates from one batch: Clopper-Pearson lower
// bounds at level alpha/m on the agreement probability with the majority
// bit, valid jointly with probability >= 1 - alpha (Bonferroni).
inline std::vector<BitCertificate> estimate_bit_certificates(
    const NoisyDecodeBatch& batch, const Watermark& bits, double alpha,
    double sigma) {
  const std::size_t m = batch.m();
  if (bits.size() != m) throw LengthMismatch("bits do not match batch");
  if (batch.N < 1) throw DomainError("empty batch");
  ConfidenceLevel level(alpha, static_cast<int>(m));
  std::vector<BitCertificate> certs(m);
  for (std::size_t i = 0; i < m; ++i) {
    long successes =
        bits[i] ? batch.bit_counts[i] : batch.N - batch.bit_counts[i];
    BitCertificate& c = certs[i];
    c.value = bits[i];
    c.p_lower =
        clopper_pearson_lower(successes, batch.N, level.per_test_alpha());
    c.radius = certified_radius_bit(c.p_lower, sigma);
  }
  return certs;
}

// Theorem bounds for majority-vote smoothing: bits certified at radius >= R
// contribute their match/mismatch with w_t; everything else is assumed
// worst-case.
inline CertifiedInterval certify_multiclass(
    const Watermark& bits, std::span<const BitCertificate> certs,
    const Watermark& wt, double R, double confidence = 0.0) {
  const std::size_t m = wt.size();
  if (bits.size() != m || certs.size() != m)
    throw LengthMismatch("certificate count does not match watermark");
  double matched = 0.0, mismatched = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (certs[i].radius < R) continue;
    if (bits[i] == wt[i])
      matched += 1.0;
    else
      mismatched += 1.0;
  }
  CertifiedInterval out;
  out.ba_lower = matched / static_cast<double>(m);
  out.ba_upper = 1.0 - mismatched / static_cast<double>(m);
  out.radius = R;
  out.confidence = confidence;
  out.method = SmoothingMethod::multi_class;
  return out;
}

namespace detail {

// Phi(Phi^-1(p) + shift) with the degenerate ends pinned.
inline double gaussian_shifted_prob(double p, double shift) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  return std_normal_cdf(std_normal_inv_cdf(p) + shift);
}

// Largest e' in {1..min(d,k)} whose guaranteed-overlap condition holds; the
// comparison is kept strictly ">". lower_in holds confidence lower bounds
// for the d target-side labels sorted descending, upper_out the upper bounds
// for the complement labels sorted descending (indices past the end read as
// 0: fewer complement labels than slots means the overlap is set-theoretic).
inline int guaranteed_overlap_count(std::span<const double> lower_in,
                                    std::span<const double> upper_out,
                                    std::size_t k, std::size_t k_prime,
                                    double R, double sigma) {
  if (lower_in.empty()) return 0;
  if (k < 1 || k_prime < 1) throw DomainError("k and k' must be >= 1");
  if (!(sigma > 0.0)) throw DomainError("sigma must be > 0");
  if (R < 0.0) throw DomainError("R must be >= 0");

  const double shift = R / sigma;
  const std::size_t d = lower_in.size();
  auto upper_at = [&](std::size_t l) {  // 1-based, 0 past the end
    return l <= upper_out.size() ? upper_out[l - 1] : 0.0;
  };

  int best = 0;
  for (std::size_t e = 1; e <= std::min(d, k); ++e) {
    const std::size_t eta = d - e + 1;
    const std::size_t mu = k - e + 1;

    double lhs = gaussian_shifted_prob(lower_in[e - 1], -shift);
    double ps = 0.0;
    for (std::size_t u = 1; u <= eta; ++u) {
      ps += lower_in[e + u - 2];  // p_S_u = sum_{l=e}^{e+u-1} lower_in[l]
      lhs = std::max(lhs, static_cast<double>(k_prime) / u *
                              gaussian_shifted_prob(ps / k_prime, -shift));
    }

    double rhs = gaussian_shifted_prob(upper_at(mu), shift);
    double pt = 0.0;
    for (std::size_t v = 1; v <= mu; ++v) {
      pt += upper_at(mu - v + 1);  // p_T_v = sum_{l=mu-v+1}^{mu} upper_out[l]
      rhs = std::min(rhs, static_cast<double>(k_prime) / v *
                              gaussian_shifted_prob(pt / k_prime, shift));
    }

    if (lhs > rhs) best = static_cast<int>(e);
  }
  return best;
}

}  // namespace detail

// Guaranteed count of smoothed top-k labels landing in L (ones of w_t).
inline int solve_e_lower(const LabelProbBounds& bounds, std::size_t k,
                         std::size_t k_prime, double R, double sigma) {
  return detail::guaranteed_overlap_count(bounds.lower_for_ones,
                                          bounds.upper_for_zeros, k, k_prime,
                                          R, sigma);
}

// Mirror search with L and Y\L exchanged: the caller supplies bounds whose
// "ones" side carries the complement labels' lower bounds (complementary
// Clopper-Pearson sides), and the guaranteed count refers to labels landing
// in Y\L.
inline int solve_e_upper(const LabelProbBounds& bounds, std::size_t k,
                         std::size_t k_prime, double R, double sigma) {
  return detail::guaranteed_overlap_count(bounds.lower_for_ones,
                                          bounds.upper_for_zeros, k, k_prime,
                                          R, sigma);
}

// Both direction's bound sets from one batch, each side at level alpha/m.
// .first drives solve_e_lower (p-lower on L, p-upper on Y\L); .second drives
// solve_e_upper (p-lower on Y\L, p-upper on L).
inline std::pair<LabelProbBounds, LabelProbBounds> estimate_label_bounds(
    const NoisyDecodeBatch& batch, const Watermark& wt, double alpha) {
  const std::size_t m = batch.m();
  if (wt.size() != m) throw LengthMismatch("watermark does not match batch");
  ConfidenceLevel level(alpha, static_cast<int>(m));
  const double a = level.per_test_alpha();

  LabelProbBounds lo_dir, up_dir;
  for (std::size_t i = 0; i < m; ++i) {
    long n_i = batch.label_counts[i];
    if (wt[i]) {
      lo_dir.lower_for_ones.push_back(clopper_pearson_lower(n_i, batch.N, a));
      up_dir.upper_for_zeros.push_back(clopper_pearson_upper(n_i, batch.N, a));
    } else {
      lo_dir.upper_for_zeros.push_back(clopper_pearson_upper(n_i, batch.N, a));
      up_dir.lower_for_ones.push_back(clopper_pearson_lower(n_i, batch.N, a));
    }
  }
  auto desc = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end(), std::greater<double>());
  };
  desc(lo_dir.lower_for_ones);
  desc(lo_dir.upper_for_zeros);
  desc(up_dir.lower_for_ones);
  desc(up_dir.upper_for_zeros);
  return {std::move(lo_dir), std::move(up_dir)};
}

// Theorem bounds for label-count smoothing, clamped into [0,1].
inline CertifiedInterval certify_multilabel(int e_lower, int e_upper,
                                            const Watermark& wt, std::size_t k,
                                            double R = 0.0,
                                            double confidence = 0.0) {
  const double m = static_cast<double>(wt.size());
  const double d = static_cast<double>(wt.ones());
  CertifiedInterval out;
  out.ba_lower =
      std::clamp(1.0 - (d + static_cast<double>(k) - 2.0 * e_lower) / m, 0.0,
                 1.0);
  out.ba_upper =
      std::clamp(1.0 - (d - static_cast<double>(k) + 2.0 * e_upper) / m, 0.0,
                 1.0);
  out.radius = R;
  out.confidence = confidence;
  out.method = SmoothingMethod::multi_label;
  return out;
}

// Order-statistic bounds for median smoothing. ba_samples are stored
// descending, so the j-th smallest sample sits at index N - j; l*/h* index
// order statistics counted from the bottom. Abstain maps to the vacuous
// bound.
inline CertifiedInterval certify_regression(const NoisyDecodeBatch& batch,
                                            double alpha, double sigma,
                                            double R) {
  if (batch.N < 1) throw DomainError("empty batch");
  auto idx = order_stat_indices(batch.N, alpha, R, sigma);
  CertifiedInterval out;
  out.ba_lower =
      idx.l_star ? batch.ba_samples[static_cast<std::size_t>(batch.N -
                                                             *idx.l_star)]
                 : 0.0;
  out.ba_upper =
      idx.h_star ? batch.ba_samples[static_cast<std::size_t>(batch.N -
                                                             *idx.h_star)]
                 : 1.0;
  out.radius = R;
  out.confidence = 1.0 - alpha;
  out.method = SmoothingMethod::regression;
  return out;
}

// Convenience wrapper: certified interval for one batch under the chosen
// smoothing method.
inline CertifiedInterval certify_batch(const NoisyDecodeBatch& batch,
                                       const Watermark& wt,
                                       SmoothingMethod method, double alpha,
                                       double sigma, double R, std::size_t k,
                                       std::size_t k_prime) {
  switch (method) {
    case SmoothingMethod::multi_class: {
      Watermark bits = smoothed_bits_multiclass(batch);
      auto certs = estimate_bit_certificates(batch, bits, alpha, sigma);
      return certify_multiclass(bits, certs, wt, R, 1.0 - alpha);
    }
    case SmoothingMethod::multi_label: {
      auto [lo_dir, up_dir] = estimate_label_bounds(batch, wt, alpha);
      int e_lo = solve_e_lower(lo_dir, k, k_prime, R, sigma);
      int e_up = solve_e_upper(up_dir, k, k_prime, R, sigma);
      return certify_multilabel(e_lo, e_up, wt, k, R, 1.0 - alpha);
    }
    case SmoothingMethod::regression:
      return certify_regression(batch, alpha, sigma, R);
  }
  throw DomainError("unknown smoothing method");
}

// Smoothed-decoder bitwise accuracy estimate for detection (no bounds).
inline double smoothed_ba_estimate(const NoisyDecodeBatch& batch,
                                   const Watermark& wt, SmoothingMethod method,
                                   std::size_t k) {
  switch (method) {
    case SmoothingMethod::multi_class:
      return bitwise_accuracy(smoothed_bits_multiclass(batch), wt);
    case SmoothingMethod::multi_label:
      return bitwise_accuracy(smoothed_bits_multilabel(batch, k), wt);
    case SmoothingMethod::regression:
      return smoothed_ba_regression(batch);
  }
  throw DomainError("unknown smoothing method");
}

}  // namespace certwm
