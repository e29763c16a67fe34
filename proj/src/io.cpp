#include "stainform/io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <string>

#include "stainform/error.hpp"

namespace stainform {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

RawPng read_png_raw(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  struct Guard {
    png_image* img;
    ~Guard() { png_image_free(img); }
  } guard{&image};

  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw FormatError(path.string() + ": " + image.message);
  if (image.format & PNG_FORMAT_FLAG_LINEAR)
    throw FormatError(path.string() + ": 16-bit PNG is not supported");
  if (image.format & PNG_FORMAT_FLAG_ALPHA)
    throw FormatError(path.string() + ": PNG with alpha is not supported");

  RawPng out;
  out.channels = (image.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  image.format = out.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.data.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr))
    throw FormatError(path.string() + ": " + image.message);
  return out;
}

void write_png_raw(const std::filesystem::path& path, const RawPng& raw) {
  if (raw.channels != 1 && raw.channels != 3) throw Error("PNG writer expects 1 or 3 channels");
  if (raw.data.size() != static_cast<std::size_t>(raw.width) * raw.height * raw.channels)
    throw Error("PNG writer: data length does not match dimensions");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raw.width);
  image.height = static_cast<png_uint_32>(raw.height);
  image.format = raw.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, raw.data.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(path.string() + ": " + msg);
  }
}

Image read_png(const std::filesystem::path& path) {
  RawPng raw = read_png_raw(path);
  if (raw.channels == 3) return Image(raw.width, raw.height, std::move(raw.data));
  std::vector<std::uint8_t> rgb(raw.data.size() * 3);
  for (std::size_t i = 0; i < raw.data.size(); ++i)
    rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = raw.data[i];
  return Image(raw.width, raw.height, std::move(rgb));
}

void write_png(const std::filesystem::path& path, const Image& image) {
  RawPng raw;
  raw.width = image.width();
  raw.height = image.height();
  raw.channels = 3;
  raw.data.assign(image.data().begin(), image.data().end());
  write_png_raw(path, raw);
}

namespace {

// Reads one whitespace-delimited PPM header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

int ppm_int(std::istream& in, const std::filesystem::path& path, const char* field) {
  const std::string tok = ppm_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": bad PPM " + field + " '" + tok + "'");
  }
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  if (ppm_token(in) != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)");
  const int width = ppm_int(in, path, "width");
  const int height = ppm_int(in, path, "height");
  const int maxval = ppm_int(in, path, "maxval");
  if (width < 1 || height < 1) throw FormatError(path.string() + ": PPM dimensions must be positive");
  if (maxval != 255) throw FormatError(path.string() + ": only maxval 255 is supported");
  // ppm_token consumed exactly one whitespace byte after maxval.
  std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height * 3);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (static_cast<std::size_t>(in.gcount()) != data.size())
    throw FormatError(path.string() + ": truncated PPM payload, expected " +
                      std::to_string(data.size()) + " bytes, got " + std::to_string(in.gcount()));
  return Image(width, height, std::move(data));
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data().data()),
            static_cast<std::streamsize>(image.data().size()));
  if (!out) throw Error("write failed: " + path.string());
}

Image read_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".ppm") return read_ppm(path);
  if (ext == ".png") return read_png(path);
  throw Error(path.string() + ": unsupported image extension");
}

void write_image(const std::filesystem::path& path, const Image& image) {
  const std::string ext = lower_extension(path);
  if (ext == ".ppm") return write_ppm(path, image);
  if (ext == ".png") return write_png(path, image);
  throw Error(path.string() + ": unsupported image extension");
}

bool is_image_path(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".png" || ext == ".ppm";
}

}  // namespace stainform
