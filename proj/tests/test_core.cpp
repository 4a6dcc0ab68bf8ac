#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "certwm/core.hpp"

using namespace certwm;

namespace {

Watermark random_mark(std::mt19937_64& gen, std::size_t m) {
  std::vector<std::uint8_t> bits(m);
  for (auto& b : bits) b = gen() & 1;
  return Watermark(std::move(bits));
}

}  // namespace

TEST_CASE("bitwise accuracy", "[core]") {
  Watermark a({1, 1, 0, 0});
  Watermark b({1, 0, 1, 0});
  CHECK(bitwise_accuracy(a, a) == 1.0);
  CHECK(bitwise_accuracy(a, a.flipped()) == 0.0);
  CHECK(bitwise_accuracy(a, b) == 0.5);

  CHECK_THROWS_AS(bitwise_accuracy(a, Watermark({1, 0})), LengthMismatch);
  CHECK_THROWS_AS(bitwise_accuracy(Watermark(std::vector<std::uint8_t>{}),
                                   Watermark(std::vector<std::uint8_t>{})),
                  LengthMismatch);

  // Complement identity and symmetry over random pairs.
  std::mt19937_64 gen(7);
  for (int t = 0; t < 200; ++t) {
    std::size_t m = 1 + gen() % 40;
    Watermark w = random_mark(gen, m);
    Watermark wt = random_mark(gen, m);
    CHECK(bitwise_accuracy(w, wt) + bitwise_accuracy(w.flipped(), wt) == 1.0);
    CHECK(bitwise_accuracy(w, wt) == bitwise_accuracy(wt, w));
  }
}

TEST_CASE("detector decision rule", "[core]") {
  DetectorConfig single{0.83, DetectorMode::single_tailed};
  DetectorConfig dbl{0.83, DetectorMode::double_tailed};

  CHECK(detect(0.83, single));
  CHECK(detect(0.10, dbl));
  CHECK_FALSE(detect(0.50, single));
  CHECK_FALSE(detect(0.50, dbl));
  CHECK_FALSE(detect(0.10, single));

  // Double-tailed is invariant under ba -> 1 - ba.
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    double ba = unif(gen);
    CHECK(detect(ba, dbl) == detect(1.0 - ba, dbl));
  }

  CHECK_THROWS_AS(detect(0.9, DetectorConfig{0.5, DetectorMode::single_tailed}),
                  DomainError);
}

TEST_CASE("image tensor invariants", "[core]") {
  CHECK_THROWS_AS(ImageTensor({0, 4, 4}, std::vector<double>(0)),
                  ShapeMismatch);
  CHECK_THROWS_AS(ImageTensor({1, 2, 2}, std::vector<double>(3, 0.5)),
                  ShapeMismatch);
  CHECK_THROWS_AS(ImageTensor({1, 1, 1}, {std::nan("")}), DomainError);

  // Out-of-range values clamp on construction.
  ImageTensor img({1, 1, 3}, {-0.5, 0.25, 1.5});
  CHECK(img[0] == 0.0);
  CHECK(img[1] == 0.25);
  CHECK(img[2] == 1.0);
}

TEST_CASE("perturbation caches its norm", "[core]") {
  Perturbation p(std::vector<double>{3.0, 4.0});
  CHECK(p.l2_norm() == Catch::Approx(5.0).epsilon(1e-12));
  CHECK(Perturbation(std::vector<double>(10, 0.0)).l2_norm() == 0.0);
}
