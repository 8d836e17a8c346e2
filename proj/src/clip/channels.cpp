#include "dvr/clipstore.hpp"

namespace dvr {
namespace {

template <typename T>
void require_rgb(const Frames<T>& seq, const char* op) {
  if (seq.channels() != 3) {
    throw InvalidArgument(std::string(op) + " requires 3 channels (R,G,B), got " +
                          std::to_string(seq.channels()));
  }
}

template <typename T, typename F>
Frames<T> map_pixels_to_single(const Frames<T>& seq, F&& fn) {
  FrameShape shape = seq.shape();
  shape.channels = 1;
  std::vector<T> out(shape.size());
  auto in = seq.pixels();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = fn(in[3 * i], in[3 * i + 1], in[3 * i + 2]);
  }
  return Frames<T>(shape, seq.fps(), std::move(out));
}

template <typename T>
std::vector<double> trace_of(const Frames<T>& seq) {
  if (seq.channels() != 1) {
    throw InvalidArgument("mean_pixel_trace requires a single-channel sequence");
  }
  std::vector<double> trace(seq.frames());
  const double n = static_cast<double>(seq.shape().frame_size());
  for (std::size_t f = 0; f < seq.frames(); ++f) {
    double sum = 0.0;
    for (T v : seq.frame(f)) sum += static_cast<double>(v);
    trace[f] = sum / n;
  }
  return trace;
}

}  // namespace

FrameSequence extract_red(const FrameSequence& seq) {
  require_rgb(seq, "extract_red");
  return map_pixels_to_single(seq, [](std::uint8_t r, std::uint8_t, std::uint8_t) { return r; });
}

RealFrames extract_red(const RealFrames& seq) {
  require_rgb(seq, "extract_red");
  return map_pixels_to_single(seq, [](float r, float, float) { return r; });
}

FrameSequence extract_gray(const FrameSequence& seq) {
  require_rgb(seq, "extract_gray");
  // Integer weights (21, 72, 7)/100 keep the half-up rounding exact.
  return map_pixels_to_single(seq, [](std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const unsigned v = 21u * r + 72u * g + 7u * b;
    return static_cast<std::uint8_t>((v + 50u) / 100u);
  });
}

RealFrames extract_gray(const RealFrames& seq) {
  require_rgb(seq, "extract_gray");
  return map_pixels_to_single(seq, [](float r, float g, float b) {
    return 0.21f * r + 0.72f * g + 0.07f * b;
  });
}

std::vector<double> mean_pixel_trace(const FrameSequence& seq) { return trace_of(seq); }
std::vector<double> mean_pixel_trace(const RealFrames& seq) { return trace_of(seq); }

RealFrames normalize(const FrameSequence& seq) {
  std::vector<float> out(seq.pixels().size());
  auto in = seq.pixels();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(in[i]) / 255.0f;
  return RealFrames(seq.shape(), seq.fps(), std::move(out));
}

}  // namespace dvr
