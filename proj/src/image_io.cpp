#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "bubbleview/error.hpp"
#include "bubbleview/imaging.hpp"

namespace bubbleview {

namespace {

struct PngImage {
  png_image img;
  PngImage() {
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&img); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

Image finish_read(PngImage& png, const std::string& what) {
  const bool color = (png.img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(png.img));
  if (!png_image_finish_read(&png.img, nullptr, buf.data(), 0, nullptr))
    throw Error(ErrorCode::io, what + ": " + png.img.message);

  Image out(static_cast<int>(png.img.width), static_cast<int>(png.img.height), color ? 3 : 1);
  for (std::size_t i = 0; i < buf.size(); ++i) out.pixels[i] = buf[i] / 255.0;
  return out;
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.img, path.c_str()))
    throw Error(ErrorCode::io, path.string() + ": " + png.img.message);
  return finish_read(png, path.string());
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  PngImage png;
  if (!png_image_begin_read_from_memory(&png.img, bytes.data(), bytes.size()))
    throw Error(ErrorCode::io, std::string("png decode: ") + png.img.message);
  return finish_read(png, "png decode");
}

std::pair<int, int> png_dimensions(const std::filesystem::path& path) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.img, path.c_str()))
    throw Error(ErrorCode::io, path.string() + ": " + png.img.message);
  return {static_cast<int>(png.img.width), static_cast<int>(png.img.height)};
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  validate_image(img);
  std::vector<png_byte> raw(img.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    raw[i] = static_cast<png_byte>(std::lround(img.pixels[i] * 255.0));

  PngImage png;
  png.img.width = static_cast<png_uint_32>(img.width);
  png.img.height = static_cast<png_uint_32>(img.height);
  png.img.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png.img, nullptr, &size, 0, raw.data(), 0, nullptr))
    throw Error(ErrorCode::io, std::string("png encode: ") + png.img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png.img, out.data(), &size, 0, raw.data(), 0, nullptr))
    throw Error(ErrorCode::io, std::string("png encode: ") + png.img.message);
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "short write to " + path.string());
}

}  // namespace bubbleview
