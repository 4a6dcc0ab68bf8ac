#pragma once

// Command-line surface. Subcommands: embed, detect, certify, eval-certified,
// eval-empirical, attack, gen-synthetic. Exit codes: 0 success, 1 usage
// error, 2 runtime error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "certwm/harness.hpp"

namespace certwm {

namespace detail {

inline ResultFormat format_for(const std::string& path) {
  return path.size() > 5 && path.substr(path.size() - 5) == ".json"
             ? ResultFormat::json
             : ResultFormat::csv;
}

inline ImageShape common_shape(const std::vector<NamedImage>& images) {
  if (images.empty()) throw ConfigError("image set is empty");
  ImageShape shape = images.front().second.shape();
  for (const auto& [name, img] : images)
    if (!(img.shape() == shape))
      throw ConfigError("images must share one shape; " + name + " differs");
  return shape;
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"certwm: certifiably robust bitstring image watermarking"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 0;
  app.add_option("--config", config_path, "experiment config file")
      ->expected(1);
  app.add_option_function<std::uint64_t>(
         "--seed", [&](std::uint64_t v) { seed = v; seed_given = true; },
         "override master_seed");
  app.add_option("--threads", threads, "worker threads");
  app.add_option("--out", out_path, "output file or directory");
  app.fallthrough();

  auto* cmd_gen = app.add_subcommand("gen-synthetic",
                                     "generate a synthetic image corpus");
  int gen_count = 20, gen_w = 32, gen_h = 32, gen_c = 1;
  double gen_amplitude = 0.18;
  cmd_gen->add_option("--count", gen_count, "number of images");
  cmd_gen->add_option("--width", gen_w, "image width");
  cmd_gen->add_option("--height", gen_h, "image height");
  cmd_gen->add_option("--channels", gen_c, "channel count (1 or 3)");
  cmd_gen->add_option("--amplitude", gen_amplitude, "field amplitude");

  auto* cmd_embed = app.add_subcommand("embed", "watermark a directory");
  std::string embed_in;
  cmd_embed->add_option("--in", embed_in, "input image directory")->required();

  auto* cmd_detect = app.add_subcommand("detect", "detect one image");
  std::string detect_image;
  bool detect_smoothed = false;
  cmd_detect->add_option("--image", detect_image, "image path")->required();
  cmd_detect->add_flag("--smoothed", detect_smoothed,
                       "use the smoothed decoder");

  auto* cmd_certify =
      app.add_subcommand("certify", "per-image certified intervals");
  std::string certify_in;
  cmd_certify->add_option("--in", certify_in, "input image directory")
      ->required();

  app.add_subcommand("eval-certified",
                     "CFNR/CFPR over the configured datasets");
  app.add_subcommand("eval-empirical",
                     "FNR/FPR under the configured attack");

  auto* cmd_attack = app.add_subcommand("attack", "attack a single image");
  std::string attack_image;
  cmd_attack->add_option("--image", attack_image, "image path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (seed_given) cfg.master_seed = seed;
    if (threads > 0) cfg.threads = threads;
    cfg.validate();

    if (app.got_subcommand("gen-synthetic")) {
      if (out_path.empty()) throw ConfigError("gen-synthetic needs --out DIR");
      if (gen_c != 1 && gen_c != 3)
        throw ConfigError("channels must be 1 or 3");
      std::filesystem::create_directories(out_path);
      for (int i = 0; i < gen_count; ++i) {
        auto img = gen_synthetic_image({gen_c, gen_h, gen_w}, cfg.master_seed,
                                       static_cast<std::uint64_t>(i),
                                       gen_amplitude);
        char name[32];
        std::snprintf(name, sizeof name, "synth_%05d.pgm", i);
        save_image((std::filesystem::path(out_path) / name).string(), img);
      }
      std::cout << "wrote " << gen_count << " images to " << out_path << "\n";
      return 0;
    }

    if (app.got_subcommand("embed")) {
      if (out_path.empty()) throw ConfigError("embed needs --out DIR");
      auto images = load_image_dir(embed_in);
      ImageShape shape = detail::common_shape(images);
      auto bank = gen_patterns(cfg.pattern_seed, cfg.m, shape);
      Watermark wt = cfg.ground_truth();
      SpreadSpectrumConfig ss{cfg.embed_strength, cfg.pattern_seed};
      std::filesystem::create_directories(out_path);
      double ssim_sum = 0.0;
      for (const auto& [name, img] : images) {
        auto marked = embed(img, wt, bank, ss);
        ssim_sum += ssim(img, marked);
        save_image((std::filesystem::path(out_path) / name).string(), marked);
      }
      std::cout << "embedded " << images.size() << " images, mean_ssim="
                << detail::sig6(ssim_sum / images.size()) << "\n";
      return 0;
    }

    if (app.got_subcommand("detect")) {
      auto img = load_image(detect_image);
      auto decoder = make_decoder(cfg, img.shape());
      Watermark wt = cfg.ground_truth();
      double ba;
      if (detect_smoothed) {
        auto batch = collect_batch(img, *decoder, wt,
                                   cfg.smoothing(cfg.methods.front(), cfg.N),
                                   fnv1a64(detect_image), cfg.threads);
        ba = smoothed_ba_estimate(batch, wt, cfg.methods.front(),
                                  cfg.effective_k(wt));
      } else {
        ba = bitwise_accuracy(decoder->decode(img), wt);
      }
      bool hit = detect(ba, cfg.detector_config());
      std::cout << (hit ? "watermarked" : "non-watermarked")
                << " ba=" << detail::sig6(ba) << "\n";
      return 0;
    }

    if (app.got_subcommand("certify")) {
      if (out_path.empty()) throw ConfigError("certify needs --out FILE");
      auto images = load_image_dir(certify_in);
      ImageShape shape = detail::common_shape(images);
      auto decoder = make_decoder(cfg, shape);
      Watermark wt = cfg.ground_truth();
      std::size_t k = cfg.effective_k(wt), kp = cfg.effective_k_prime(wt);

      std::vector<std::string> lines(images.size());
      detail::run_chunked(
          static_cast<long>(images.size()), cfg.threads, [&](long lo, long hi) {
            for (long i = lo; i < hi; ++i) {
              const auto& [name, img] = images[i];
              auto batch = collect_batch(
                  img, *decoder, wt,
                  cfg.smoothing(cfg.methods.front(), cfg.N), fnv1a64(name), 1);
              std::string block;
              for (auto method : cfg.methods) {
                double est = smoothed_ba_estimate(batch, wt, method, k);
                for (double R : cfg.R_grid) {
                  auto iv = certify_batch(batch, wt, method, cfg.alpha,
                                          cfg.sigma, R, k, kp);
                  block += name;
                  block += ',';
                  block += to_string(method);
                  block += ',';
                  block += detail::sig6(R) + ',' + detail::sig6(est) + ',' +
                           detail::sig6(iv.ba_lower) + ',' +
                           detail::sig6(iv.ba_upper) + '\n';
                }
              }
              lines[i] = std::move(block);
            }
          });
      std::ofstream out(out_path, std::ios::trunc);
      if (!out) throw IOError("cannot write " + out_path);
      out << "image,method,R,ba_estimate,ba_lower,ba_upper\n";
      for (const auto& l : lines) out << l;
      std::cout << "certified " << images.size() << " images\n";
      return 0;
    }

    if (app.got_subcommand("eval-certified")) {
      if (out_path.empty()) throw ConfigError("eval-certified needs --out");
      if (cfg.watermarked_dir.empty() || cfg.nonwatermarked_dir.empty())
        throw ConfigError(
            "config must set watermarked_dir and nonwatermarked_dir");
      auto wm = load_image_dir(cfg.watermarked_dir);
      auto nwm = load_image_dir(cfg.nonwatermarked_dir);
      ImageShape shape = detail::common_shape(wm);
      detail::common_shape(nwm);
      auto decoder = make_decoder(cfg, shape);
      auto rows = eval_certified(wm, nwm, *decoder, cfg);
      emit_results(rows, detail::format_for(out_path), out_path);
      std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
      return 0;
    }

    if (app.got_subcommand("eval-empirical")) {
      if (out_path.empty()) throw ConfigError("eval-empirical needs --out");
      if (cfg.images_dir.empty())
        throw ConfigError("config must set images_dir");
      auto images = load_image_dir(cfg.images_dir);
      ImageShape shape = detail::common_shape(images);
      auto decoder = make_decoder(cfg, shape);
      auto rows = eval_empirical(images, *decoder, cfg);
      emit_results(rows, detail::format_for(out_path), out_path);
      std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
      return 0;
    }

    if (app.got_subcommand("attack")) {
      auto img = load_image(attack_image);
      auto decoder = make_decoder(cfg, img.shape());
      Watermark wt = cfg.ground_truth();
      std::uint64_t image_id = fnv1a64(attack_image);
      ExperimentConfig one = cfg;
      one.images_dir.clear();
      std::vector<NamedImage> set;
      set.emplace_back(attack_image, img);
      double ba_before =
          detail::observed_ba(img, std::vector<double>(img.size(), 0.0),
                              *decoder, wt, one, image_id);
      auto rows = eval_empirical(set, *decoder, one);
      nlohmann::ordered_json report;
      report["attack"] = cfg.attack;
      report["goal"] =
          cfg.attack_goal == AttackGoal::removal ? "removal" : "forgery";
      report["ba_before"] = ba_before;
      report["detected_before"] = detect(ba_before, cfg.detector_config());
      report["detected_after"] =
          cfg.attack_goal == AttackGoal::removal ? rows[0].fnr == 0.0
                                                 : rows[0].fpr == 1.0;
      if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::trunc);
        out << report.dump(2) << "\n";
      }
      std::cout << report.dump(2) << "\n";
      return 0;
    }

    throw ConfigError("no subcommand handler");
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace certwm
