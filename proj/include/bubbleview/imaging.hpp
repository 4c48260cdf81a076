#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace bubbleview {

class AttentionMap;

/// Row-major, interleaved-channel image with values in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> pixels;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0);

  double& at(int x, int y, int c = 0) { return pixels[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return pixels[index(x, y, c)]; }

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }

  bool operator==(const Image&) const = default;
};

/// Throws ValidationError if dimensions, channel count or value range are off.
void validate_image(const Image& img);

/// Normalized Gaussian taps, radius ceil(3 sigma). sigma must be > 0.
std::vector<double> gaussian_kernel(double sigma_px);

/// Separable convolution of one plane with `kernel` (odd length, centered),
/// replicating edge pixels. Values are not clamped.
void convolve_plane(std::span<double> plane, int width, int height,
                    std::span<const double> kernel);

/// sigma 0 returns the input unchanged.
Image gaussian_blur(const Image& img, double sigma_px);

Image composite_bubble(const Image& blurred, const Image& original,
                       double center_x, double center_y, double radius_px);

Image to_grayscale(const Image& img);

/// Fixed "hot" ramp: black -> red -> yellow -> white, monotone per channel.
void heat_color(double v, double rgb[3]);

/// 3-channel overlay of the max-normalized map on a grayscale copy of `base`.
Image render_heatmap(const AttentionMap& map, const Image& base, double alpha);

Image mirror_horizontal(const Image& img);

/// Area-averaging downscale so that max(width, height) <= max_dim.
/// Images already small enough are returned unchanged.
Image downscale_to_max_dimension(const Image& img, int max_dim);

// 8-bit PNG I/O. Alpha is dropped; gray+alpha becomes gray.
Image read_png(const std::filesystem::path& path);
Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Image& img);
void write_png(const std::filesystem::path& path, const Image& img);
/// Reads only the header.
std::pair<int, int> png_dimensions(const std::filesystem::path& path);

/// On-disk cache of blurred stimuli keyed by (image id, sigma).
class BlurCache {
 public:
  explicit BlurCache(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path path_for(const std::string& image_id, double sigma_px) const;
  bool contains(const std::string& image_id, double sigma_px) const;

  /// Blurs `source` into the cache unless already present. Returns true if
  /// work was done. Writes are atomic (temp file + rename).
  bool ensure(const std::string& image_id, const std::filesystem::path& source, double sigma_px) const;

  std::vector<std::uint8_t> read_bytes(const std::string& image_id, double sigma_px) const;

 private:
  std::filesystem::path dir_;
};

/// Canonical sigma token used in cache file names, e.g. "40" or "2.5".
std::string sigma_token(double sigma_px);

}  // namespace bubbleview
