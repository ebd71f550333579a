#include <cmath>

#include "doctest.h"
#include "latentwarp/metrics.hpp"
#include "latentwarp/random.hpp"
#include "oracles.hpp"

using namespace latentwarp;

namespace {

Image random_image(int h, int w, std::uint64_t seed) {
  Image img(3, h, w);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = hash_uniform({seed, i});
  return img;
}

Image perturbed(const Image& a, double amount, std::uint64_t seed) {
  Image b = a;
  for (std::size_t i = 0; i < b.size(); ++i)
    b.data()[i] = std::clamp(b.data()[i] + amount * (hash_uniform({seed, i}) - 0.5), 0.0, 1.0);
  return b;
}

}  // namespace

TEST_CASE("psnr matches the direct formula") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Image a = random_image(24, 20, seed);
    const Image b = perturbed(a, 0.2, seed + 50);
    CHECK(std::abs(psnr(a, b) - oracle::psnr(a, b)) < 1e-9);
  }
  Image a(3, 4, 4, 0.0), b(3, 4, 4, 0.1);
  CHECK(psnr(a, b) == doctest::Approx(20.0));
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK_THROWS_AS(psnr(a, Image(3, 4, 5)), std::invalid_argument);
  Image out_of_range(3, 4, 4, 1.5);
  CHECK_THROWS_AS(psnr(a, out_of_range), std::invalid_argument);
}

TEST_CASE("ssim matches the literal windowed formula") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Image a = random_image(23, 31, seed);
    const Image b = perturbed(a, 0.4, seed + 100);
    CHECK(std::abs(ssim(a, b) - oracle::ssim(a, b)) < 1e-6);
  }
  const Image a = random_image(16, 16, 9);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(ssim(Image(3, 8, 8), Image(3, 8, 8)), std::invalid_argument);
}

TEST_CASE("luminance weights") {
  Image px(3, 1, 1);
  px(0, 0, 0) = 1.0;
  CHECK(luminance(px)(0, 0, 0) == doctest::Approx(0.299));
  px(0, 0, 0) = 0.0;
  px(1, 0, 0) = 1.0;
  CHECK(luminance(px)(0, 0, 0) == doctest::Approx(0.587));
  Grid gray(1, 2, 2, 0.3);
  CHECK(luminance(gray) == gray);
}

TEST_CASE("constant sequence reports the cap and unit ssim") {
  const Image a = random_image(16, 16, 3);
  const auto report = sequence_consistency({a, a, a, a});
  CHECK(report.frame_count == 4);
  CHECK(report.psnr.size() == 3);
  CHECK(report.mean_psnr == 100.0);
  CHECK(report.mean_ssim == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.to_text().find("(4 frames)") != std::string::npos);
  const auto changing = sequence_consistency({a, perturbed(a, 0.3, 1)});
  CHECK(changing.mean_psnr < 100.0);
  CHECK(changing.mean_ssim < 1.0);
  CHECK_THROWS_AS(sequence_consistency({a}), std::invalid_argument);
}
