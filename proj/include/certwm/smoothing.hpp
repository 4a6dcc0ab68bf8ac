#pragma once

// Noise sampling and the three smoothed-decoder point estimators: per-bit
// majority vote, label-count top-k, and bitwise-accuracy median.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "certwm/basewm.hpp"
#include "certwm/core.hpp"
#include "certwm/errors.hpp"
#include "certwm/rng.hpp"

namespace certwm {

enum class SmoothingMethod { multi_class, multi_label, regression };

inline const char* to_string(SmoothingMethod m) {
  switch (m) {
    case SmoothingMethod::multi_class: return "multi_class";
    case SmoothingMethod::multi_label: return "multi_label";
    case SmoothingMethod::regression: return "regression";
  }
  return "?";
}

struct SmoothingConfig {
  double sigma = 0.1;
  long N = 10000;
  std::uint64_t master_seed = 1;
  SmoothingMethod method = SmoothingMethod::regression;
  std::size_t k = 0;        // multi-label output size; 0 = |w_t|_1
  std::size_t k_prime = 0;  // base top-k' size; 0 = same as k

  std::size_t effective_k(const Watermark& wt) const {
    return k == 0 ? wt.ones() : k;
  }
  std::size_t effective_k_prime(const Watermark& wt) const {
    return k_prime == 0 ? effective_k(wt) : k_prime;
  }
  void validate(std::size_t m) const {
    if (!(sigma > 0.0)) throw DomainError("sigma must be > 0");
    if (N < 1) throw DomainError("N must be >= 1");
    if (k > m || k_prime > m) throw DomainError("k and k' must be <= m");
  }
};

// Per-noise-sample decode results for one image. bit_counts[i] counts
// samples decoding bit i as 1; label_counts[i] counts samples whose top-k'
// logit set contains label i; ba_samples holds the N bitwise accuracies
// sorted descending. Raw per-sample bits are retained for N <= 1000 so unit
// tests can cross-check the aggregates by brute force.
struct NoisyDecodeBatch {
  std::uint64_t image_id = 0;
  long N = 0;
  double sigma = 0.0;
  std::vector<long> bit_counts;
  std::vector<long> label_counts;
  std::vector<double> ba_samples;
  std::vector<std::vector<std::uint8_t>> raw_bits;  // empty when N > 1000

  std::size_t m() const { return bit_counts.size(); }
};

namespace detail {

inline void run_chunked(long total, int threads,
                        const std::function<void(long, long)>& work) {
  if (threads <= 1 || total < 2) {
    work(0, total);
    return;
  }
  int t = std::min<long>(threads, total);
  std::vector<std::thread> pool;
  pool.reserve(t);
  long chunk = (total + t - 1) / t;
  std::exception_ptr err;
  std::mutex err_mu;
  for (int w = 0; w < t; ++w) {
    long lo = w * chunk;
    long hi = std::min(total, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        work(lo, hi);
      } catch (...) {
        std::lock_guard<std::mutex> g(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace detail

// Decodes all N noisy copies of the given pixels and fills bit counts, label
// counts and the sorted BA samples in one pass. Counter-based seeding makes
// the result byte-identical for any thread count. The pixels may already
// carry a perturbation and lie outside [0,1]; the decoder sees pixel + noise
// exactly.
inline NoisyDecodeBatch collect_batch_raw(const ImageShape& shape,
                                          std::span<const double> pixels,
                                          const BitDecoder& decoder,
                                          const Watermark& wt,
                                          const SmoothingConfig& cfg,
                                          std::uint64_t image_id,
                                          int threads = 1) {
  const std::size_t m = decoder.bit_count();
  if (wt.size() != m)
    throw LengthMismatch("watermark length does not match decoder");
  if (pixels.size() != shape.pixel_count())
    throw ShapeMismatch("pixel buffer does not match shape");
  cfg.validate(m);
  const std::size_t k_prime = cfg.effective_k_prime(wt);
  if (k_prime < 1 || k_prime > m) throw DomainError("k' must lie in [1, m]");

  NoisyDecodeBatch batch;
  batch.image_id = image_id;
  batch.N = cfg.N;
  batch.sigma = cfg.sigma;
  batch.bit_counts.assign(m, 0);
  batch.label_counts.assign(m, 0);
  batch.ba_samples.assign(cfg.N, 0.0);
  const bool keep_raw = cfg.N <= 1000;
  if (keep_raw) batch.raw_bits.assign(cfg.N, {});

  std::mutex merge_mu;
  detail::run_chunked(cfg.N, threads, [&](long lo, long hi) {
    std::vector<long> bit_acc(m, 0), label_acc(m, 0);
    std::vector<double> noisy(pixels.size());
    auto base = pixels;
    for (long j = lo; j < hi; ++j) {
      CounterRng rng(cfg.master_seed, image_id, static_cast<std::uint64_t>(j));
      for (std::size_t d = 0; d < noisy.size(); ++d)
        noisy[d] = base[d] + cfg.sigma * rng.next_gaussian();
      std::vector<double> z;
      try {
        z = decoder.logits(shape, noisy);
      } catch (const DecodeSampleError&) {
        throw;
      } catch (const std::exception& e) {
        throw DecodeSampleError(static_cast<std::size_t>(j), e.what());
      }
      if (z.size() != m)
        throw DecodeSampleError(static_cast<std::size_t>(j),
                                "decoder returned wrong logit count");
      std::size_t matches = 0;
      std::vector<std::uint8_t> bits(keep_raw ? m : 0);
      for (std::size_t i = 0; i < m; ++i) {
        std::uint8_t b = z[i] > 0.0 ? 1 : 0;
        bit_acc[i] += b;
        if (b == wt[i]) ++matches;
        if (keep_raw) bits[i] = b;
      }
      for (std::size_t lbl : topk_labels(z, k_prime)) ++label_acc[lbl];
      batch.ba_samples[j] =
          static_cast<double>(matches) / static_cast<double>(m);
      if (keep_raw) batch.raw_bits[j] = std::move(bits);
    }
    std::lock_guard<std::mutex> g(merge_mu);
    for (std::size_t i = 0; i < m; ++i) {
      batch.bit_counts[i] += bit_acc[i];
      batch.label_counts[i] += label_acc[i];
    }
  });

  std::sort(batch.ba_samples.begin(), batch.ba_samples.end(),
            std::greater<double>());
  return batch;
}

inline NoisyDecodeBatch collect_batch(const ImageTensor& x,
                                      const BitDecoder& decoder,
                                      const Watermark& wt,
                                      const SmoothingConfig& cfg,
                                      std::uint64_t image_id,
                                      int threads = 1) {
  return collect_batch_raw(x.shape(), x.pixels(), decoder, wt, cfg, image_id,
                           threads);
}

// Majority vote per bit; an exact tie resolves to 0 (a tied bit has no
// certifiable margin anyway).
inline Watermark smoothed_bits_multiclass(const NoisyDecodeBatch& batch) {
  if (batch.N < 1) throw DomainError("empty batch");
  std::vector<std::uint8_t> bits(batch.m());
  for (std::size_t i = 0; i < batch.m(); ++i)
    bits[i] = 2 * batch.bit_counts[i] > batch.N ? 1 : 0;
  return Watermark(std::move(bits));
}

// Bit i = 1 iff i is among the k largest label counts (ties -> lower index).
inline Watermark smoothed_bits_multilabel(const NoisyDecodeBatch& batch,
                                          std::size_t k) {
  if (k < 1 || k > batch.m()) throw DomainError("k must lie in [1, m]");
  std::vector<double> counts(batch.label_counts.begin(),
                             batch.label_counts.end());
  std::vector<std::uint8_t> bits(batch.m(), 0);
  for (std::size_t lbl : topk_labels(counts, k)) bits[lbl] = 1;
  return Watermark(std::move(bits));
}

// Median of the per-sample bitwise accuracies; an even N takes the smaller
// central value, which is conservative toward non-detection.
inline double smoothed_ba_regression(const NoisyDecodeBatch& batch) {
  if (batch.N < 1) throw DomainError("empty batch");
  return batch.ba_samples[static_cast<std::size_t>(batch.N) / 2];
}

}  // namespace certwm
