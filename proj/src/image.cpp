#include "stainform/image.hpp"

#include "stainform/error.hpp"

namespace stainform {

Image::Image(int width, int height)
    : Image(width, height,
            std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * kChannels, 0)) {}

Image::Image(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 1 || height < 1) throw Error("image dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(width) * height * kChannels)
    throw Error("image data length does not match width*height*3");
}

FloatImage::FloatImage(int width, int height, float fill)
    : width_(width),
      height_(height),
      data_(static_cast<std::size_t>(width) * height * kChannels, fill) {
  if (width < 1 || height < 1) throw Error("image dimensions must be positive");
}

FloatImage to_float(const Image& image) {
  FloatImage out(image.width(), image.height());
  auto src = image.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]) / 255.0f;
  return out;
}

Image to_8bit(const FloatImage& image) {
  Image out(image.width(), image.height());
  auto src = image.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = quantize(src[i]);
  return out;
}

}  // namespace stainform
