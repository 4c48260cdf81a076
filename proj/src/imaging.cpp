#include "bubbleview/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "bubbleview/error.hpp"
#include "bubbleview/maps.hpp"

namespace bubbleview {

Image::Image(int w, int h, int c, double fill)
    : width(w), height(h), channels(c),
      pixels(static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0) * std::max(c, 0), fill) {}

void validate_image(const Image& img) {
  std::vector<std::string> v;
  if (img.width <= 0 || img.height <= 0) v.emplace_back("image dimensions must be positive");
  if (img.channels != 1 && img.channels != 3) v.emplace_back("image must have 1 or 3 channels");
  if (v.empty() &&
      img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * img.channels)
    v.emplace_back("pixel buffer size does not match dimensions");
  if (std::any_of(img.pixels.begin(), img.pixels.end(),
                  [](double p) { return !(p >= 0.0 && p <= 1.0); }))
    v.emplace_back("pixel values must lie in [0,1]");
  if (!v.empty()) throw ValidationError(std::move(v));
}

std::vector<double> gaussian_kernel(double sigma_px) {
  if (!(sigma_px > 0.0) || !std::isfinite(sigma_px))
    throw ValidationError({"kernel sigma must be positive"});
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_px));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma_px * sigma_px));
    sum += k[i + radius];
  }
  for (auto& w : k) w /= sum;
  return k;
}

namespace {

// Taps are accumulated as w0*c + sum_k wk*(left_k + right_k) so that the
// result is bit-identical under mirroring.
void convolve_line(const double* src, std::ptrdiff_t stride, int n,
                   std::span<const double> kernel, double* dst) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const double* w = kernel.data() + radius;
  auto sample = [&](int i) { return src[std::clamp(i, 0, n - 1) * stride]; };
  for (int i = 0; i < n; ++i) {
    double acc = w[0] * sample(i);
    for (int k = 1; k <= radius; ++k) acc += w[k] * (sample(i - k) + sample(i + k));
    dst[i] = acc;
  }
}

}  // namespace

void convolve_plane(std::span<double> plane, int width, int height,
                    std::span<const double> kernel) {
  if (kernel.size() % 2 != 1) throw ValidationError({"kernel length must be odd"});
  if (plane.size() != static_cast<std::size_t>(width) * height)
    throw Error(ErrorCode::dimension_mismatch, "plane size does not match dimensions");

  std::vector<double> line(std::max(width, height));
  for (int y = 0; y < height; ++y) {
    double* row = plane.data() + static_cast<std::size_t>(y) * width;
    convolve_line(row, 1, width, kernel, line.data());
    std::copy_n(line.data(), width, row);
  }
  for (int x = 0; x < width; ++x) {
    double* col = plane.data() + x;
    convolve_line(col, width, height, kernel, line.data());
    for (int y = 0; y < height; ++y) col[static_cast<std::size_t>(y) * width] = line[y];
  }
}

Image gaussian_blur(const Image& img, double sigma_px) {
  validate_image(img);
  if (sigma_px == 0.0) return img;
  const auto kernel = gaussian_kernel(sigma_px);

  Image out = img;
  std::vector<double> plane(static_cast<std::size_t>(img.width) * img.height);
  for (int c = 0; c < img.channels; ++c) {
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = img.pixels[i * img.channels + c];
    convolve_plane(plane, img.width, img.height, kernel);
    for (std::size_t i = 0; i < plane.size(); ++i)
      out.pixels[i * img.channels + c] = std::clamp(plane[i], 0.0, 1.0);
  }
  return out;
}

Image composite_bubble(const Image& blurred, const Image& original,
                       double center_x, double center_y, double radius_px) {
  if (blurred.width != original.width || blurred.height != original.height ||
      blurred.channels != original.channels)
    throw Error(ErrorCode::dimension_mismatch, "blurred and original images differ in shape");
  if (!(center_x >= 0.0 && center_x < blurred.width && center_y >= 0.0 && center_y < blurred.height))
    throw Error(ErrorCode::out_of_bounds, "bubble center outside image");
  if (!(radius_px > 0.0)) throw ValidationError({"bubble radius must be positive"});

  Image out = blurred;
  const double r2 = radius_px * radius_px;
  const int y0 = std::max(0, static_cast<int>(std::floor(center_y - radius_px)));
  const int y1 = std::min(blurred.height - 1, static_cast<int>(std::ceil(center_y + radius_px)));
  const int x0 = std::max(0, static_cast<int>(std::floor(center_x - radius_px)));
  const int x1 = std::min(blurred.width - 1, static_cast<int>(std::ceil(center_x + radius_px)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - center_x, dy = y - center_y;
      if (dx * dx + dy * dy > r2) continue;
      for (int c = 0; c < out.channels; ++c) out.at(x, y, c) = original.at(x, y, c);
    }
  }
  return out;
}

Image to_grayscale(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(x, y) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
  return out;
}

void heat_color(double v, double rgb[3]) {
  v = std::clamp(v, 0.0, 1.0);
  rgb[0] = std::clamp(3.0 * v, 0.0, 1.0);
  rgb[1] = std::clamp(3.0 * v - 1.0, 0.0, 1.0);
  rgb[2] = std::clamp(3.0 * v - 2.0, 0.0, 1.0);
}

Image render_heatmap(const AttentionMap& map, const Image& base, double alpha) {
  if (map.width() != base.width || map.height() != base.height)
    throw Error(ErrorCode::dimension_mismatch, "heatmap and base image differ in size");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError({"alpha must lie in [0,1]"});

  const Image gray = to_grayscale(base);
  const double peak = map.max_value();
  Image out(base.width, base.height, 3);
  double rgb[3];
  for (int y = 0; y < base.height; ++y) {
    for (int x = 0; x < base.width; ++x) {
      const double v = peak > 0.0 ? std::max(map.at(x, y), 0.0) / peak : 0.0;
      heat_color(v, rgb);
      const double g = gray.at(x, y);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = (1.0 - alpha) * g + alpha * rgb[c];
    }
  }
  return out;
}

Image mirror_horizontal(const Image& img) {
  Image out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(img.width - 1 - x, y, c) = img.at(x, y, c);
  return out;
}

namespace {

// Area-weighted 1-D resampling matrix from n_in to n_out samples.
std::vector<std::vector<std::pair<int, double>>> area_weights(int n_in, int n_out) {
  std::vector<std::vector<std::pair<int, double>>> w(n_out);
  const double scale = static_cast<double>(n_in) / n_out;
  for (int o = 0; o < n_out; ++o) {
    const double lo = o * scale, hi = (o + 1) * scale;
    for (int i = static_cast<int>(std::floor(lo)); i < std::min(n_in, static_cast<int>(std::ceil(hi))); ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) w[o].emplace_back(i, overlap / scale);
    }
  }
  return w;
}

}  // namespace

Image downscale_to_max_dimension(const Image& img, int max_dim) {
  validate_image(img);
  if (max_dim < 1) throw ValidationError({"max dimension must be positive"});
  const int longest = std::max(img.width, img.height);
  if (longest <= max_dim) return img;

  const double s = static_cast<double>(max_dim) / longest;
  const int w = std::clamp(static_cast<int>(std::lround(img.width * s)), 1, max_dim);
  const int h = std::clamp(static_cast<int>(std::lround(img.height * s)), 1, max_dim);
  const auto wx = area_weights(img.width, w);
  const auto wy = area_weights(img.height, h);

  Image tmp(w, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (auto [i, wt] : wx[x]) acc += wt * img.at(i, y, c);
        tmp.at(x, y, c) = acc;
      }
  Image out(w, h, img.channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (auto [i, wt] : wy[y]) acc += wt * tmp.at(x, i, c);
        out.at(x, y, c) = std::clamp(acc, 0.0, 1.0);
      }
  return out;
}

std::string sigma_token(double sigma_px) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", sigma_px);
  return buf;
}

BlurCache::BlurCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path BlurCache::path_for(const std::string& image_id, double sigma_px) const {
  return dir_ / ("sigma_" + sigma_token(sigma_px)) / (image_id + ".png");
}

bool BlurCache::contains(const std::string& image_id, double sigma_px) const {
  return std::filesystem::exists(path_for(image_id, sigma_px));
}

bool BlurCache::ensure(const std::string& image_id, const std::filesystem::path& source,
                       double sigma_px) const {
  const auto target = path_for(image_id, sigma_px);
  if (std::filesystem::exists(target)) return false;
  std::filesystem::create_directories(target.parent_path());

  const auto bytes = encode_png(gaussian_blur(read_png(source), sigma_px));
  std::random_device rd;
  auto tmp = target;
  tmp += ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
  return true;
}

std::vector<std::uint8_t> BlurCache::read_bytes(const std::string& image_id, double sigma_px) const {
  const auto p = path_for(image_id, sigma_px);
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "no cached blur for " + image_id + " at sigma " + sigma_token(sigma_px));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace bubbleview
