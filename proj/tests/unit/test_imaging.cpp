#include <doctest.h>

#include <cmath>
#include <fstream>

#include "bubbleview/error.hpp"
#include "bubbleview/imaging.hpp"
#include "bubbleview/maps.hpp"
#include "fixtures.hpp"

using namespace bubbleview;

TEST_CASE("sigma 0 is the identity") {
  std::mt19937_64 rng(1);
  const auto img = fixture::random_image(17, 11, 3, rng);
  CHECK(gaussian_blur(img, 0.0) == img);
}

TEST_CASE("impulse response equals the normalized kernel") {
  Image img(41, 41, 1);
  img.at(20, 20) = 1.0;
  const auto out = gaussian_blur(img, 2.0);
  const auto t = oracle::taps(2.0);
  const int r = static_cast<int>(t.size() / 2);
  double worst = 0.0;
  for (int y = 0; y < 41; ++y)
    for (int x = 0; x < 41; ++x) {
      const int dx = x - 20, dy = y - 20;
      const double want = (std::abs(dx) <= r && std::abs(dy) <= r) ? t[dx + r] * t[dy + r] : 0.0;
      worst = std::max(worst, std::abs(out.at(x, y) - want));
    }
  CHECK(worst <= 1e-9);
}

TEST_CASE("blur preserves the mean away from borders") {
  std::mt19937_64 rng(2);
  Image img(80, 80, 1);
  for (int y = 20; y < 60; ++y)
    for (int x = 20; x < 60; ++x) img.at(x, y) = fixture::random_image(1, 1, 1, rng).pixels[0];
  const auto out = gaussian_blur(img, 3.0);
  double a = 0, b = 0;
  for (double v : img.pixels) a += v;
  for (double v : out.pixels) b += v;
  CHECK(std::abs(a - b) / img.pixels.size() <= 1e-6);
}

TEST_CASE("separable blur matches direct 2-D convolution") {
  std::mt19937_64 rng(3);
  for (double sigma : {0.7, 1.5, 4.0}) {
    const auto img = fixture::random_image(64, 64, 1, rng);
    const auto out = gaussian_blur(img, sigma);
    const auto ref = oracle::convolve_direct({64, 64, img.pixels}, sigma);
    double worst = 0;
    for (std::size_t i = 0; i < ref.v.size(); ++i) worst = std::max(worst, std::abs(out.pixels[i] - ref.v[i]));
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("blur commutes with horizontal mirroring exactly") {
  std::mt19937_64 rng(4);
  for (int w : {31, 32}) {
    const auto img = fixture::random_image(w, 23, 3, rng);
    CHECK(gaussian_blur(mirror_horizontal(img), 2.5) == mirror_horizontal(gaussian_blur(img, 2.5)));
  }
}

TEST_CASE("blur rejects invalid images and negative sigma") {
  Image bad(4, 4, 1);
  bad.pixels[3] = 1.5;
  CHECK_THROWS_AS(gaussian_blur(bad, 1.0), ValidationError);
  CHECK_THROWS_AS(gaussian_blur(Image(4, 4, 2), 1.0), ValidationError);
  CHECK_THROWS_AS(gaussian_blur(Image(4, 4, 1), -1.0), ValidationError);
}

TEST_CASE("composite_bubble disk boundary is inclusive") {
  const Image blurred(24, 24, 1, 0.25), original(24, 24, 1, 0.75);
  const auto out = composite_bubble(blurred, original, 10, 10, 3);
  CHECK(out.at(10, 13) == 0.75);
  CHECK(out.at(10, 14) == 0.25);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      const bool inside = (x - 10) * (x - 10) + (y - 10) * (y - 10) <= 9;
      CHECK(out.at(x, y) == (inside ? 0.75 : 0.25));
    }
}

TEST_CASE("composite_bubble full and empty coverage, idempotence, errors") {
  std::mt19937_64 rng(5);
  const auto a = fixture::random_image(20, 15, 3, rng), b = fixture::random_image(20, 15, 3, rng);
  CHECK(composite_bubble(a, b, 3, 4, 100.0) == b);
  CHECK(composite_bubble(a, b, 3.5, 4.5, 0.2) == a);
  const auto once = composite_bubble(a, b, 9, 7, 5);
  CHECK(composite_bubble(once, b, 9, 7, 5) == once);
  CHECK_THROWS_AS(composite_bubble(a, fixture::random_image(21, 15, 3, rng), 1, 1, 2), Error);
  CHECK_THROWS_AS(composite_bubble(a, b, 20, 3, 2), Error);
  CHECK_THROWS_AS(composite_bubble(a, b, -1, 3, 2), Error);
}

TEST_CASE("render_heatmap") {
  std::mt19937_64 rng(6);
  const auto base = fixture::random_image(12, 9, 3, rng);
  AttentionMap m(12, 9, Normalization::raw, 1.0);
  const auto gray = to_grayscale(base);

  const auto zero = render_heatmap(m, base, 0.0);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 12; ++x)
      for (int c = 0; c < 3; ++c) CHECK(zero.at(x, y, c) == doctest::Approx(gray.at(x, y)).epsilon(1e-12));

  const auto flat = render_heatmap(m, Image(12, 9, 3, 0.0), 1.0);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 12 * 9; ++i) CHECK(flat.pixels[i * 3 + c] == flat.pixels[c]);

  AttentionMap peak(12, 9);
  peak.at(7, 2) = 5.0;
  peak.at(1, 1) = 1.0;
  const auto hot = render_heatmap(peak, Image(12, 9, 3, 0.0), 1.0);
  double rgb[3];
  heat_color(1.0, rgb);
  for (int c = 0; c < 3; ++c) CHECK(hot.at(7, 2, c) == doctest::Approx(rgb[c]));
  CHECK_THROWS_AS(render_heatmap(AttentionMap(11, 9), base, 0.5), Error);
}

TEST_CASE("heat ramp is monotone per channel") {
  double prev[3] = {-1, -1, -1};
  for (int i = 0; i <= 100; ++i) {
    double rgb[3];
    heat_color(i / 100.0, rgb);
    for (int c = 0; c < 3; ++c) {
      CHECK(rgb[c] >= prev[c]);
      prev[c] = rgb[c];
    }
  }
}

TEST_CASE("downscale to max dimension") {
  std::mt19937_64 rng(7);
  const auto img = fixture::random_image(1000, 600, 3, rng);
  const auto small = downscale_to_max_dimension(img, 500);
  CHECK(small.width == 500);
  CHECK(small.height == 300);
  double a = 0, b = 0;
  for (double v : img.pixels) a += v;
  for (double v : small.pixels) b += v;
  CHECK(b / small.pixels.size() == doctest::Approx(a / img.pixels.size()).epsilon(1e-9));
  CHECK(downscale_to_max_dimension(small, 500) == small);
}

TEST_CASE("PNG round trip is exact at 8 bits") {
  fixture::TempDir dir;
  Image img(9, 5, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(i * 7 % 256) / 255.0;
  write_png(dir / "x.png", img);
  CHECK(read_png(dir / "x.png") == img);
  CHECK(png_dimensions(dir / "x.png") == std::pair{9, 5});
  CHECK(decode_png(encode_png(img)) == img);
  std::ofstream(dir / "bad.png") << "not a png";
  CHECK_THROWS_AS(read_png(dir / "bad.png"), Error);
}

TEST_CASE("blur cache is keyed by sigma and skips warm entries") {
  fixture::TempDir dir;
  fixture::write_stimulus(dir / "s.png", 20, 14);
  const BlurCache cache(dir / "cache");
  CHECK(cache.ensure("s", dir / "s.png", 2.0));
  CHECK_FALSE(cache.ensure("s", dir / "s.png", 2.0));
  CHECK(cache.ensure("s", dir / "s.png", 3.5));
  CHECK(cache.path_for("s", 2.0) != cache.path_for("s", 3.5));
  const auto expected = encode_png(gaussian_blur(read_png(dir / "s.png"), 2.0));
  CHECK(cache.read_bytes("s", 2.0) == expected);
}
