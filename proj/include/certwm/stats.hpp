#pragma once

// Statistical primitives backing the certification math: standard-normal
// CDF/quantile, regularized incomplete beta and its inverse, the partial
// binomial sum, Clopper-Pearson bounds, Bonferroni level splitting, and the
// order-statistic index search.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>

#include "certwm/errors.hpp"

namespace certwm {

// Overall failure probability alpha split across simultaneous tests
// (Bonferroni), so the joint confidence is >= 1 - alpha.
struct ConfidenceLevel {
  double alpha = 0.001;
  int num_tests = 1;

  ConfidenceLevel() = default;
  ConfidenceLevel(double a, int tests) : alpha(a), num_tests(tests) {
    if (!(alpha > 0.0 && alpha < 1.0))
      throw DomainError("alpha must lie in (0,1)");
    if (tests < 1) throw DomainError("num_tests must be >= 1");
    if (!(per_test_alpha() > 0.0 && per_test_alpha() < 1.0))
      throw DomainError("per-test alpha out of range");
  }
  double per_test_alpha() const { return alpha / num_tests; }
};

inline double std_normal_cdf(double x) {
  if (!std::isfinite(x)) throw DomainError("std_normal_cdf: non-finite x");
  return 0.5 * std::erfc(-x * M_SQRT1_2);
}

inline double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

// Inverse standard-normal CDF. Acklam's rational approximation polished with
// two Halley steps against std_normal_cdf; good to ~1 ulp over (0,1).
inline double std_normal_inv_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("std_normal_inv_cdf: p must lie in (0,1)");

  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley refinement; skipped in the far tail where exp(x^2/2) overflows.
  for (int it = 0; it < 2 && std::abs(x) < 37.0; ++it) {
    double e = std_normal_cdf(x) - p;
    double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

namespace detail {

// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_cont_frac(double a, double b, double x) {
  constexpr int kMaxIter = 400;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;

  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0 && b > 0.0))
    throw DomainError("incomplete beta: shape parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                 a * std::log(x) + b * std::log1p(-x);
  double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0))
    return bt * detail::beta_cont_frac(a, b, x) / a;
  return 1.0 - bt * detail::beta_cont_frac(b, a, 1.0 - x) / b;
}

// q-th quantile of Beta(a, b): solves I_x(a, b) = q. Bisection bracket with
// Newton steps inside it; terminates at |I_x - q| <= 1e-12 or a collapsed
// bracket, comfortably inside the 1e-10 target.
inline double beta_quantile(double q, double a, double b) {
  if (!(q > 0.0 && q < 1.0))
    throw DomainError("beta_quantile: q must lie in (0,1)");
  if (!(a > 0.0 && b > 0.0))
    throw DomainError("beta_quantile: shape parameters must be positive");

  // Closed forms when one shape parameter is 1.
  if (b == 1.0) return std::pow(q, 1.0 / a);
  if (a == 1.0) return -std::expm1(std::log1p(-q) / b);

  double lo = 0.0, hi = 1.0;
  double x = a / (a + b);
  double ln_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  for (int it = 0; it < 200; ++it) {
    double f = regularized_incomplete_beta(x, a, b) - q;
    if (std::abs(f) <= 1e-12) break;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    double ln_pdf =
        (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - ln_beta;
    double step = f * std::exp(-ln_pdf);
    double x_new = x - step;
    if (!(x_new > lo && x_new < hi)) x_new = 0.5 * (lo + hi);
    if (x_new == x) break;
    x = x_new;
    if (hi - lo < 1e-16) break;
  }
  return x;
}

// Partial binomial sum  sum_{i=1}^{j} C(N,i) q^i (1-q)^{N-i}.  The sum starts
// at i = 1, not i = 0; the certification index search depends on exactly this
// form. Terms are assembled in log space and accumulated with compensation.
inline double binom_cdf_partial(long j, long N, double q) {
  if (N < 1 || j < 0 || j > N)
    throw DomainError("binom_cdf_partial: need 0 <= j <= N, N >= 1");
  if (!(q >= 0.0 && q <= 1.0))
    throw DomainError("binom_cdf_partial: q must lie in [0,1]");
  if (j == 0 || q == 0.0) return 0.0;
  if (q == 1.0) return j == N ? 1.0 : 0.0;

  double ln_q = std::log(q);
  double ln_1q = std::log1p(-q);
  double lg_n1 = std::lgamma(static_cast<double>(N) + 1.0);
  double sum = 0.0, comp = 0.0;  // Kahan
  for (long i = 1; i <= j; ++i) {
    double ln_term = lg_n1 - std::lgamma(static_cast<double>(i) + 1.0) -
                     std::lgamma(static_cast<double>(N - i) + 1.0) +
                     i * ln_q + (N - i) * ln_1q;
    double term = std::exp(ln_term);
    double y = term - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return std::min(sum, 1.0);
}

// One-sided Clopper-Pearson lower bound for a binomial proportion at
// per-test level alpha:  Beta(alpha; s, N - s + 1),  with the degenerate
// s = 0 case pinned to 0.
inline double clopper_pearson_lower(long successes, long N,
                                    double per_test_alpha) {
  if (N < 1 || successes < 0 || successes > N)
    throw DomainError("clopper_pearson_lower: need 0 <= successes <= N");
  if (!(per_test_alpha > 0.0 && per_test_alpha < 1.0))
    throw DomainError("clopper_pearson_lower: alpha must lie in (0,1)");
  if (successes == 0) return 0.0;
  return beta_quantile(per_test_alpha, static_cast<double>(successes),
                       static_cast<double>(N - successes) + 1.0);
}

// Mirror of the lower bound: upper(s) = 1 - lower(N - s). Equals the
// standard Beta(1 - alpha; s + 1, N - s) form and returns 1 when s = N.
inline double clopper_pearson_upper(long successes, long N,
                                    double per_test_alpha) {
  if (N < 1 || successes < 0 || successes > N)
    throw DomainError("clopper_pearson_upper: need 0 <= successes <= N");
  if (successes == N) return 1.0;
  return 1.0 - clopper_pearson_lower(N - successes, N, per_test_alpha);
}

// Order-statistic indices for regression-smoothing bounds.
//   l* = largest j in {1..N} with binom_cdf_partial(j, N, Phi(-R/sigma)) <= alpha
//   h* = smallest j in {1..N} with binom_cdf_partial(j, N, Phi(R/sigma)) >= 1 - alpha
// Abstain (nullopt) when no index qualifies; callers map it to the vacuous
// [0,1] interval so certification never overclaims.
struct OrderStatIndices {
  std::optional<long> l_star;
  std::optional<long> h_star;
};

inline OrderStatIndices order_stat_indices(long N, double alpha, double R,
                                           double sigma) {
  if (N < 1) throw DomainError("order_stat_indices: N must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("order_stat_indices: alpha must lie in (0,1)");
  if (R < 0.0 || !(sigma > 0.0))
    throw DomainError("order_stat_indices: need R >= 0 and sigma > 0");

  // Both searches walk the cumulative sum once; the partial sum is
  // nondecreasing in j so the first crossing settles each index.
  auto scan = [N](double q, double threshold,
                  bool want_last_below) -> std::optional<long> {
    if (q == 0.0) {
      // Partial sum is identically 0.
      if (want_last_below) return 0.0 <= threshold ? std::optional<long>(N)
                                                   : std::nullopt;
      return 0.0 >= threshold ? std::optional<long>(1) : std::nullopt;
    }
    if (q == 1.0) {
      // Partial sum is 0 for j < N and 1 at j = N.
      if (want_last_below) {
        if (1.0 <= threshold) return N;
        return N >= 2 ? std::optional<long>(N - 1) : std::nullopt;
      }
      return 1.0 >= threshold ? std::optional<long>(N) : std::nullopt;
    }
    double ln_q = std::log(q);
    double ln_1q = std::log1p(-q);
    double lg_n1 = std::lgamma(static_cast<double>(N) + 1.0);
    double sum = 0.0, comp = 0.0;
    for (long i = 1; i <= N; ++i) {
      double ln_term = lg_n1 - std::lgamma(static_cast<double>(i) + 1.0) -
                       std::lgamma(static_cast<double>(N - i) + 1.0) +
                       i * ln_q + (N - i) * ln_1q;
      double y = std::exp(ln_term) - comp;
      double t = sum + y;
      comp = (t - sum) - y;
      sum = t;
      if (want_last_below) {
        if (sum > threshold) return i == 1 ? std::nullopt
                                           : std::optional<long>(i - 1);
      } else {
        if (sum >= threshold) return i;
      }
    }
    return want_last_below ? std::optional<long>(N) : std::nullopt;
  };

  OrderStatIndices out;
  out.l_star = scan(std_normal_cdf(-R / sigma), alpha, true);
  out.h_star = scan(std_normal_cdf(R / sigma), 1.0 - alpha, false);
  return out;
}

}  // namespace certwm
