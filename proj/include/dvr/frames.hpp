#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dvr/error.hpp"

namespace dvr {

struct FrameShape {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t frame_size() const { return height * width * channels; }
  std::size_t size() const { return frames * frame_size(); }
  bool operator==(const FrameShape&) const = default;
};

/// Ordered stack of equally sized frames, stored frame-major, row-major,
/// channel-minor. `T` is `std::uint8_t` for stored clips and `float` for
/// normalized (0..1) data.
template <typename T>
class Frames {
 public:
  using value_type = T;

  Frames() = default;

  Frames(FrameShape shape, double fps)
      : Frames(shape, fps, std::vector<T>(shape.size())) {}

  Frames(FrameShape shape, double fps, std::vector<T> pixels)
      : shape_(shape), fps_(fps), pixels_(std::move(pixels)) {
    if (shape.frames == 0 || shape.height == 0 || shape.width == 0 ||
        shape.channels == 0) {
      throw InvalidArgument("frame sequence dimensions must all be >= 1");
    }
    if (!(fps > 0.0)) throw InvalidArgument("frame sequence fps must be > 0");
    if (pixels_.size() != shape.size()) {
      throw InvalidArgument("pixel buffer size does not match frame shape");
    }
  }

  const FrameShape& shape() const { return shape_; }
  std::size_t frames() const { return shape_.frames; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t channels() const { return shape_.channels; }
  double fps() const { return fps_; }
  double duration_seconds() const {
    return static_cast<double>(shape_.frames) / fps_;
  }
  bool empty() const { return pixels_.empty(); }

  std::span<const T> pixels() const { return pixels_; }
  std::span<T> pixels() { return pixels_; }

  std::span<const T> frame(std::size_t i) const {
    return std::span<const T>(pixels_).subspan(i * shape_.frame_size(),
                                               shape_.frame_size());
  }
  std::span<T> frame(std::size_t i) {
    return std::span<T>(pixels_).subspan(i * shape_.frame_size(),
                                         shape_.frame_size());
  }

  T at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) const {
    return pixels_[index(f, y, x, c)];
  }
  T& at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) {
    return pixels_[index(f, y, x, c)];
  }

  std::size_t index(std::size_t f, std::size_t y, std::size_t x,
                    std::size_t c) const {
    return ((f * shape_.height + y) * shape_.width + x) * shape_.channels + c;
  }

  bool operator==(const Frames&) const = default;

 private:
  FrameShape shape_{};
  double fps_ = 0.0;
  std::vector<T> pixels_;
};

using FrameSequence = Frames<std::uint8_t>;
using RealFrames = Frames<float>;

/// Selects frames [first, first + count) with the given stride.
template <typename T>
Frames<T> select_frames(const Frames<T>& seq, std::size_t first,
                        std::size_t count, std::size_t stride, double fps) {
  if (count == 0 || stride == 0 ||
      first + (count - 1) * stride >= seq.frames()) {
    throw InvalidArgument("frame selection out of range");
  }
  FrameShape shape = seq.shape();
  shape.frames = count;
  std::vector<T> out;
  out.reserve(shape.size());
  for (std::size_t i = 0; i < count; ++i) {
    auto f = seq.frame(first + i * stride);
    out.insert(out.end(), f.begin(), f.end());
  }
  return Frames<T>(shape, fps, std::move(out));
}

}  // namespace dvr
