#pragma once

// Experiment orchestration: config files, synthetic corpora, SSIM, the
// certified (CFNR/CFPR) and empirical (FNR/FPR) evaluation loops, and
// CSV/JSON emission.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "certwm/attacks.hpp"
#include "certwm/basewm.hpp"
#include "certwm/certify.hpp"
#include "certwm/core.hpp"
#include "certwm/errors.hpp"
#include "certwm/extdecoder.hpp"
#include "certwm/imageio.hpp"
#include "certwm/smoothing.hpp"

namespace certwm {

struct ExperimentConfig {
  std::size_t m = 30;
  double sigma = 0.1;
  long N = 10000;
  double tau = 0.83;
  double alpha = 0.001;
  std::size_t k = 0;        // 0 = |w_t|_1
  std::size_t k_prime = 0;  // 0 = k
  std::uint64_t master_seed = 1;
  std::vector<SmoothingMethod> methods = {SmoothingMethod::regression};
  DetectorMode detector = DetectorMode::double_tailed;
  std::vector<double> R_grid = {0.0, 0.05, 0.1, 0.15, 0.2};

  std::string watermarked_dir;
  std::string nonwatermarked_dir;
  std::string images_dir;

  std::vector<std::string> decoder_command;  // empty = reference decoder
  double embed_strength = 0.25;
  std::uint64_t pattern_seed = 42;

  // Empirical mode.
  long N_empirical = 100;          // smoothing samples per detection query
  bool smoothed_detector = true;   // false = attack the base detector
  std::string attack = "whitebox"; // jpeg | blackbox | whitebox | adaptive
  AttackGoal attack_goal = AttackGoal::removal;
  AttackBudget budget;
  int jpeg_quality = 50;
  double forgery_tau = 0.63;       // black-box forgery runs use this tau

  int threads = 1;
  bool report_runtime = false;

  DetectorConfig detector_config() const { return {tau, detector}; }

  // Ground-truth watermark, drawn uniformly from the master seed.
  Watermark ground_truth() const {
    std::vector<std::uint8_t> bits(m);
    CounterRng rng(master_seed, 0x7774ULL /* "wt" */, 0);
    for (auto& b : bits) b = rng.next_u64() & 1;
    return Watermark(std::move(bits));
  }

  std::size_t effective_k(const Watermark& wt) const {
    return k == 0 ? wt.ones() : k;
  }
  std::size_t effective_k_prime(const Watermark& wt) const {
    return k_prime == 0 ? effective_k(wt) : k_prime;
  }

  SmoothingConfig smoothing(SmoothingMethod method, long samples) const {
    SmoothingConfig s;
    s.sigma = sigma;
    s.N = samples;
    s.master_seed = master_seed;
    s.method = method;
    s.k = k;
    s.k_prime = k_prime;
    return s;
  }

  void validate() const {
    if (m < 1) throw ConfigError("m must be >= 1");
    if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
    if (N < 1 || N_empirical < 1) throw ConfigError("N must be >= 1");
    if (!(tau > 0.5 && tau <= 1.0)) throw ConfigError("tau must be in (0.5,1]");
    if (!(alpha > 0.0 && alpha < 1.0))
      throw ConfigError("alpha must be in (0,1)");
    if (k > m || k_prime > m) throw ConfigError("k and k' must be <= m");
    if (!std::is_sorted(R_grid.begin(), R_grid.end()))
      throw ConfigError("R_grid must be sorted ascending");
    for (double r : R_grid)
      if (r < 0.0) throw ConfigError("R_grid entries must be >= 0");
    if (methods.empty()) throw ConfigError("at least one smoothing method");
    for (const auto* dir :
         {&watermarked_dir, &nonwatermarked_dir, &images_dir})
      if (!dir->empty() && !std::filesystem::exists(*dir))
        throw ConfigError("path does not exist: " + *dir);
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

inline SmoothingMethod parse_method(const std::string& name) {
  if (name == "multi_class") return SmoothingMethod::multi_class;
  if (name == "multi_label") return SmoothingMethod::multi_label;
  if (name == "regression") return SmoothingMethod::regression;
  throw ConfigError("unknown smoothing method: " + name);
}

}  // namespace detail

// Plain-text config: one `key = value` per line, `#` comments, lists
// comma-separated.
inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    try {
      if (key == "m") cfg.m = std::stoul(value);
      else if (key == "sigma") cfg.sigma = std::stod(value);
      else if (key == "N") cfg.N = std::stol(value);
      else if (key == "tau") cfg.tau = std::stod(value);
      else if (key == "alpha") cfg.alpha = std::stod(value);
      else if (key == "k") cfg.k = std::stoul(value);
      else if (key == "k_prime") cfg.k_prime = std::stoul(value);
      else if (key == "master_seed") cfg.master_seed = std::stoull(value);
      else if (key == "method") {
        cfg.methods.clear();
        for (const auto& name : detail::split(value, ','))
          cfg.methods.push_back(detail::parse_method(name));
      } else if (key == "detector") {
        if (value == "single_tailed") cfg.detector = DetectorMode::single_tailed;
        else if (value == "double_tailed") cfg.detector = DetectorMode::double_tailed;
        else throw ConfigError("unknown detector mode: " + value);
      } else if (key == "R_grid") {
        cfg.R_grid.clear();
        for (const auto& r : detail::split(value, ','))
          cfg.R_grid.push_back(std::stod(r));
      }
      else if (key == "watermarked_dir") cfg.watermarked_dir = value;
      else if (key == "nonwatermarked_dir") cfg.nonwatermarked_dir = value;
      else if (key == "images_dir") cfg.images_dir = value;
      else if (key == "decoder.command") {
        cfg.decoder_command.clear();
        std::istringstream cs(value);
        std::string tok;
        while (cs >> tok) cfg.decoder_command.push_back(tok);
      }
      else if (key == "embed.strength") cfg.embed_strength = std::stod(value);
      else if (key == "pattern_seed") cfg.pattern_seed = std::stoull(value);
      else if (key == "N_empirical") cfg.N_empirical = std::stol(value);
      else if (key == "smoothed_detector") cfg.smoothed_detector = value == "true";
      else if (key == "attack") cfg.attack = value;
      else if (key == "attack.goal") {
        if (value == "removal") cfg.attack_goal = AttackGoal::removal;
        else if (value == "forgery") cfg.attack_goal = AttackGoal::forgery;
        else throw ConfigError("unknown attack goal: " + value);
      }
      else if (key == "attack.R") cfg.budget.R = std::stod(value);
      else if (key == "attack.n_iter") cfg.budget.n_iter = std::stoi(value);
      else if (key == "attack.learning_rate") cfg.budget.learning_rate = std::stod(value);
      else if (key == "attack.query_budget") cfg.budget.query_budget = std::stol(value);
      else if (key == "attack.epsilon_stop") cfg.budget.epsilon_stop = std::stod(value);
      else if (key == "attack.n_prime") cfg.budget.N_prime = std::stoi(value);
      else if (key == "attack.seed") cfg.budget.seed = std::stoull(value);
      else if (key == "attack.jpeg_quality") cfg.jpeg_quality = std::stoi(value);
      else if (key == "forgery_tau") cfg.forgery_tau = std::stod(value);
      else if (key == "threads") cfg.threads = std::stoi(value);
      else if (key == "report_runtime") cfg.report_runtime = value == "true";
      else throw ConfigError("unknown key: " + key);
    } catch (const std::invalid_argument&) {
      throw ConfigError("line " + std::to_string(lineno) + ": bad value for " + key);
    } catch (const std::out_of_range&) {
      throw ConfigError("line " + std::to_string(lineno) + ": value out of range for " + key);
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  auto cfg = parse_config_text(ss.str());
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Synthetic corpus: seeded smooth random fields around mid-gray.

inline ImageTensor gen_synthetic_image(ImageShape shape, std::uint64_t seed,
                                       std::uint64_t index,
                                       double amplitude = 0.18) {
  std::size_t n = shape.pixel_count();
  std::vector<double> field(n);
  CounterRng rng(seed, 0x73796e7468ULL /* "synth" */, index);
  for (auto& v : field) v = rng.next_gaussian();

  // Separable box blur per channel, two passes.
  int radius = std::max(1, std::min(shape.height, shape.width) / 8);
  std::vector<double> tmp(n);
  std::size_t hw = static_cast<std::size_t>(shape.height) * shape.width;
  for (int pass = 0; pass < 2; ++pass) {
    for (int c = 0; c < shape.channels; ++c) {
      double* plane = field.data() + c * hw;
      double* scratch = tmp.data() + c * hw;
      for (int i = 0; i < shape.height; ++i)
        for (int j = 0; j < shape.width; ++j) {
          double s = 0.0;
          int cnt = 0;
          for (int d = -radius; d <= radius; ++d) {
            int jj = j + d;
            if (jj < 0 || jj >= shape.width) continue;
            s += plane[static_cast<std::size_t>(i) * shape.width + jj];
            ++cnt;
          }
          scratch[static_cast<std::size_t>(i) * shape.width + j] = s / cnt;
        }
      for (int j = 0; j < shape.width; ++j)
        for (int i = 0; i < shape.height; ++i) {
          double s = 0.0;
          int cnt = 0;
          for (int d = -radius; d <= radius; ++d) {
            int ii = i + d;
            if (ii < 0 || ii >= shape.height) continue;
            s += scratch[static_cast<std::size_t>(ii) * shape.width + j];
            ++cnt;
          }
          plane[static_cast<std::size_t>(i) * shape.width + j] = s;
        }
    }
  }
  double mean = 0.0;
  for (double v : field) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : field) var += (v - mean) * (v - mean);
  double sd = std::sqrt(var / n);
  if (sd < 1e-12) sd = 1.0;
  std::vector<double> pixels(n);
  for (std::size_t i = 0; i < n; ++i)
    pixels[i] = std::clamp(0.5 + amplitude * (field[i] - mean) / sd, 0.0, 1.0);
  return ImageTensor(shape, std::move(pixels));
}

// ---------------------------------------------------------------------------
// SSIM with 8x8 uniform sliding windows, C1 = 0.01^2, C2 = 0.03^2 on the
// [0,1] range, sample (unbiased) covariance, averaged over channels and
// window positions.

inline double ssim(const ImageTensor& x, const ImageTensor& y) {
  if (!(x.shape() == y.shape())) throw ShapeMismatch("ssim: shapes differ");
  const ImageShape& s = x.shape();
  const int win = std::min({8, s.height, s.width});
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const double n = static_cast<double>(win) * win;
  const double cov_norm = n > 1 ? n / (n - 1.0) : 1.0;

  double total = 0.0;
  long windows = 0;
  std::size_t hw = static_cast<std::size_t>(s.height) * s.width;
  for (int c = 0; c < s.channels; ++c) {
    for (int i = 0; i + win <= s.height; ++i)
      for (int j = 0; j + win <= s.width; ++j) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (int a = 0; a < win; ++a)
          for (int b = 0; b < win; ++b) {
            std::size_t idx = c * hw +
                              static_cast<std::size_t>(i + a) * s.width + j + b;
            double vx = x[idx], vy = y[idx];
            sx += vx;
            sy += vy;
            sxx += vx * vx;
            syy += vy * vy;
            sxy += vx * vy;
          }
        double mx = sx / n, my = sy / n;
        double vx = (sxx / n - mx * mx) * cov_norm;
        double vy = (syy / n - my * my) * cov_norm;
        double vxy = (sxy / n - mx * my) * cov_norm;
        total += (2 * mx * my + c1) * (2 * vxy + c2) /
                 ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++windows;
      }
  }
  return windows > 0 ? total / windows : 1.0;
}

// ---------------------------------------------------------------------------
// Result rows and emission.

struct EvalRow {
  double R = std::numeric_limits<double>::quiet_NaN();
  double cfnr = std::numeric_limits<double>::quiet_NaN();
  double cfpr = std::numeric_limits<double>::quiet_NaN();
  double fnr = std::numeric_limits<double>::quiet_NaN();
  double fpr = std::numeric_limits<double>::quiet_NaN();
  double tau = 0.0;
  double sigma = 0.0;
  long N = 0;
  double alpha = 0.0;
  std::string method;
  double runtime_seconds = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::string sig6(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

enum class ResultFormat { csv, json };

inline void emit_results(const std::vector<EvalRow>& rows, ResultFormat format,
                         std::ostream& out) {
  if (format == ResultFormat::csv) {
    out << "R,CFNR,CFPR,FNR,FPR,tau,sigma,N,alpha,method,runtime_seconds\n";
    for (const auto& r : rows) {
      out << detail::sig6(r.R) << ',' << detail::sig6(r.cfnr) << ','
          << detail::sig6(r.cfpr) << ',' << detail::sig6(r.fnr) << ','
          << detail::sig6(r.fpr) << ',' << detail::sig6(r.tau) << ','
          << detail::sig6(r.sigma) << ',' << r.N << ','
          << detail::sig6(r.alpha) << ',' << r.method << ','
          << detail::sig6(r.runtime_seconds) << '\n';
    }
    return;
  }
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  auto put = [](nlohmann::ordered_json& o, const char* key, double v) {
    if (std::isnan(v))
      o[key] = nullptr;
    else
      o[key] = std::strtod(detail::sig6(v).c_str(), nullptr);
  };
  for (const auto& r : rows) {
    nlohmann::ordered_json o;
    put(o, "R", r.R);
    put(o, "CFNR", r.cfnr);
    put(o, "CFPR", r.cfpr);
    put(o, "FNR", r.fnr);
    put(o, "FPR", r.fpr);
    put(o, "tau", r.tau);
    put(o, "sigma", r.sigma);
    o["N"] = r.N;
    put(o, "alpha", r.alpha);
    o["method"] = r.method;
    put(o, "runtime_seconds", r.runtime_seconds);
    arr.push_back(std::move(o));
  }
  out << arr.dump(2) << '\n';
}

inline void emit_results(const std::vector<EvalRow>& rows, ResultFormat format,
                         const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IOError("cannot write " + path);
  emit_results(rows, format, out);
  if (!out) throw IOError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Dataset plumbing.

using NamedImage = std::pair<std::string, ImageTensor>;

inline std::vector<NamedImage> load_image_dir(const std::string& dir) {
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm" || ext == ".imgf32")
      names.push_back(entry.path().string());
  }
  std::sort(names.begin(), names.end());
  std::vector<NamedImage> out;
  out.reserve(names.size());
  for (const auto& p : names)
    out.emplace_back(std::filesystem::path(p).filename().string(),
                     load_image(p));
  return out;
}

// Builds the configured base decoder for a corpus shape. The reference
// decoder derives from the pattern bank; an external command becomes a
// subprocess bridge.
inline std::unique_ptr<BitDecoder> make_decoder(const ExperimentConfig& cfg,
                                                ImageShape shape) {
  if (!cfg.decoder_command.empty())
    return std::make_unique<ExternalDecoder>(cfg.decoder_command, cfg.m);
  return std::make_unique<ReferenceDecoder>(
      gen_patterns(cfg.pattern_seed, cfg.m, shape));
}

// ---------------------------------------------------------------------------
// Certified evaluation. One batch per image, reused across the whole R grid
// and across methods (noisy decodes do not depend on R).

struct CertifiedEvalResult {
  std::vector<EvalRow> rows;
  // intervals[image][method][r] for callers that need per-image data.
  std::vector<std::vector<std::vector<CertifiedInterval>>> watermarked;
  std::vector<std::vector<std::vector<CertifiedInterval>>> nonwatermarked;
};

inline CertifiedEvalResult eval_certified_full(
    const std::vector<NamedImage>& watermarked,
    const std::vector<NamedImage>& nonwatermarked, const BitDecoder& decoder,
    const ExperimentConfig& cfg) {
  if (watermarked.empty() || nonwatermarked.empty())
    throw ConfigError("certified evaluation needs nonempty image sets");
  cfg.validate();
  const Watermark wt = cfg.ground_truth();
  const std::size_t k = cfg.effective_k(wt);
  const std::size_t k_prime = cfg.effective_k_prime(wt);
  auto t0 = std::chrono::steady_clock::now();

  auto certify_set = [&](const std::vector<NamedImage>& images) {
    std::vector<std::vector<std::vector<CertifiedInterval>>> result(
        images.size());
    detail::run_chunked(
        static_cast<long>(images.size()), cfg.threads, [&](long lo, long hi) {
          for (long idx = lo; idx < hi; ++idx) {
            const auto& [name, img] = images[idx];
            auto batch = collect_batch(
                img, decoder, wt,
                cfg.smoothing(cfg.methods.front(), cfg.N), fnv1a64(name), 1);
            auto& per_method = result[idx];
            per_method.resize(cfg.methods.size());
            for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
              per_method[mi].reserve(cfg.R_grid.size());
              for (double R : cfg.R_grid)
                per_method[mi].push_back(
                    certify_batch(batch, wt, cfg.methods[mi], cfg.alpha,
                                  cfg.sigma, R, k, k_prime));
            }
          }
        });
    return result;
  };

  CertifiedEvalResult out;
  out.watermarked = certify_set(watermarked);
  out.nonwatermarked = certify_set(nonwatermarked);

  double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  for (std::size_t ri = 0; ri < cfg.R_grid.size(); ++ri) {
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
      long fn = 0, fp = 0;
      for (const auto& per_method : out.watermarked)
        if (per_method[mi][ri].ba_lower < cfg.tau) ++fn;
      for (const auto& per_method : out.nonwatermarked)
        if (per_method[mi][ri].ba_upper >= cfg.tau) ++fp;
      EvalRow row;
      row.R = cfg.R_grid[ri];
      row.cfnr = static_cast<double>(fn) / watermarked.size();
      row.cfpr = static_cast<double>(fp) / nonwatermarked.size();
      row.tau = cfg.tau;
      row.sigma = cfg.sigma;
      row.N = cfg.N;
      row.alpha = cfg.alpha;
      row.method = to_string(cfg.methods[mi]);
      if (cfg.report_runtime) row.runtime_seconds = seconds;
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

inline std::vector<EvalRow> eval_certified(
    const std::vector<NamedImage>& watermarked,
    const std::vector<NamedImage>& nonwatermarked, const BitDecoder& decoder,
    const ExperimentConfig& cfg) {
  return eval_certified_full(watermarked, nonwatermarked, decoder, cfg).rows;
}

// ---------------------------------------------------------------------------
// Empirical evaluation under one attack.

namespace detail {

// BA of the (base or smoothed) decode of raw pixels against w_t. Pixels may
// lie outside [0,1]; the decoder sees them exactly as given.
inline double detector_ba(const ImageShape& shape,
                          std::span<const double> pixels,
                          const BitDecoder& decoder, const Watermark& wt,
                          const ExperimentConfig& cfg, std::uint64_t noise_key) {
  if (!cfg.smoothed_detector)
    return bitwise_accuracy(decoder.decode(shape, pixels), wt);

  const std::size_t m = decoder.bit_count();
  const std::size_t k_prime = cfg.effective_k_prime(wt);
  NoisyDecodeBatch batch;
  batch.image_id = noise_key;
  batch.N = cfg.N_empirical;
  batch.sigma = cfg.sigma;
  batch.bit_counts.assign(m, 0);
  batch.label_counts.assign(m, 0);
  batch.ba_samples.assign(cfg.N_empirical, 0.0);
  std::vector<double> noisy(pixels.size());
  for (long j = 0; j < cfg.N_empirical; ++j) {
    CounterRng rng(cfg.master_seed, noise_key, static_cast<std::uint64_t>(j));
    for (std::size_t d = 0; d < noisy.size(); ++d)
      noisy[d] = pixels[d] + cfg.sigma * rng.next_gaussian();
    auto z = decoder.logits(shape, noisy);
    std::size_t matches = 0;
    for (std::size_t i = 0; i < m; ++i) {
      std::uint8_t b = z[i] > 0.0 ? 1 : 0;
      batch.bit_counts[i] += b;
      if (b == wt[i]) ++matches;
    }
    for (std::size_t lbl : topk_labels(z, k_prime)) ++batch.label_counts[lbl];
    batch.ba_samples[j] = static_cast<double>(matches) / m;
  }
  std::sort(batch.ba_samples.begin(), batch.ba_samples.end(),
            std::greater<double>());
  return smoothed_ba_estimate(batch, wt, cfg.methods.front(),
                              cfg.effective_k(wt));
}

inline double observed_ba(const ImageTensor& x, std::span<const double> delta,
                          const BitDecoder& decoder, const Watermark& wt,
                          const ExperimentConfig& cfg, std::uint64_t noise_key) {
  std::vector<double> pixels(x.pixels().begin(), x.pixels().end());
  for (std::size_t i = 0; i < pixels.size() && i < delta.size(); ++i)
    pixels[i] += delta[i];
  return detector_ba(x.shape(), pixels, decoder, wt, cfg, noise_key);
}

}  // namespace detail

// Runs the configured attack against every image and aggregates FNR
// (removal) or FPR (forgery) under the configured detector.
inline std::vector<EvalRow> eval_empirical(const std::vector<NamedImage>& images,
                                           const BitDecoder& decoder,
                                           const ExperimentConfig& cfg) {
  if (images.empty()) throw ConfigError("empirical evaluation needs images");
  cfg.validate();
  cfg.budget.validate();
  const Watermark wt = cfg.ground_truth();
  DetectorConfig det = cfg.detector_config();
  if (cfg.attack == "blackbox" && cfg.attack_goal == AttackGoal::forgery)
    det.tau = cfg.forgery_tau;
  auto t0 = std::chrono::steady_clock::now();

  const auto* grad_decoder = dynamic_cast<const GradientBitDecoder*>(&decoder);
  if ((cfg.attack == "whitebox" || cfg.attack == "adaptive") && !grad_decoder)
    throw ConfigError("white-box attacks need a decoder with gradient access");

  std::vector<int> detected(images.size(), 0);
  detail::run_chunked(
      static_cast<long>(images.size()), cfg.threads, [&](long lo, long hi) {
        for (long idx = lo; idx < hi; ++idx) {
          const auto& [name, img] = images[idx];
          std::uint64_t image_id = fnv1a64(name);
          AttackBudget budget = cfg.budget;
          budget.seed = cfg.master_seed ^ image_id;

          // Target watermark: removal draws uniformly at random; forgery
          // uses the ground truth.
          Watermark w_target = wt;
          if (cfg.attack_goal == AttackGoal::removal) {
            std::vector<std::uint8_t> bits(cfg.m);
            CounterRng rng(budget.seed, 0x746172676574ULL /* "target" */, 0);
            for (auto& b : bits) b = rng.next_u64() & 1;
            w_target = Watermark(std::move(bits));
          }

          std::vector<double> delta(img.size(), 0.0);
          if (cfg.attack == "jpeg") {
            auto compressed = quality_compress(img, cfg.jpeg_quality);
            for (std::size_t i = 0; i < delta.size(); ++i)
              delta[i] = compressed[i] - img[i];
          } else if (cfg.attack == "whitebox") {
            auto out = whitebox_attack(img, *grad_decoder, w_target, budget);
            delta.assign(out.delta.delta().begin(), out.delta.delta().end());
          } else if (cfg.attack == "adaptive") {
            auto out = adaptive_whitebox_attack(img, *grad_decoder, w_target,
                                                cfg.sigma, budget);
            delta.assign(out.delta.delta().begin(), out.delta.delta().end());
          } else if (cfg.attack == "blackbox") {
            DetectionOracle oracle = [&](const ImageShape& shape,
                                         std::span<const double> pixels) {
              double ba = detail::detector_ba(shape, pixels, decoder, wt, cfg,
                                              image_id ^ 0x04ac1eULL);
              return detect(ba, det);
            };
            try {
              ImageTensor init = [&] {
                if (cfg.attack_goal == AttackGoal::forgery) {
                  // Attacker-collected watermarked exemplar.
                  auto* ref = dynamic_cast<const ReferenceDecoder*>(&decoder);
                  if (!ref)
                    throw ConfigError(
                        "black-box forgery needs the reference decoder to "
                        "synthesize a watermarked exemplar");
                  return embed(img, wt, ref->bank(),
                               {cfg.embed_strength, cfg.pattern_seed});
                }
                // Removal: sweep the quality factor down until misdetection.
                for (int Q = 99; Q >= 1; --Q) {
                  auto candidate = quality_compress(img, Q);
                  if (!oracle(candidate.shape(), candidate.pixels()))
                    return candidate;
                }
                throw InitNotAdversarial(
                    "no quality factor evades the detector");
              }();
              auto out =
                  blackbox_attack(img, oracle, cfg.attack_goal, init, budget);
              delta.assign(out.delta.delta().begin(), out.delta.delta().end());
            } catch (const InitNotAdversarial&) {
              // Attack failed to start; the unperturbed image stands.
            }
          } else {
            throw ConfigError("unknown attack: " + cfg.attack);
          }

          double ba =
              detail::observed_ba(img, delta, decoder, wt, cfg, image_id);
          detected[idx] = detect(ba, det) ? 1 : 0;
        }
      });

  long det_count = 0;
  for (int d : detected) det_count += d;
  EvalRow row;
  if (cfg.attack == "whitebox" || cfg.attack == "adaptive")
    row.R = cfg.budget.R;
  if (cfg.attack_goal == AttackGoal::removal)
    row.fnr = 1.0 - static_cast<double>(det_count) / images.size();
  else
    row.fpr = static_cast<double>(det_count) / images.size();
  row.tau = det.tau;
  row.sigma = cfg.sigma;
  row.N = cfg.smoothed_detector ? cfg.N_empirical : 0;
  row.alpha = cfg.alpha;
  row.method = cfg.smoothed_detector ? to_string(cfg.methods.front()) : "base";
  if (cfg.report_runtime)
    row.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
  return {row};
}

}  // namespace certwm
