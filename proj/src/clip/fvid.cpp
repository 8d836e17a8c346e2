#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "dvr/clipstore.hpp"

namespace dvr {
namespace {

constexpr std::array<char, 4> kMagic = {'F', 'V', 'I', 'D'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument(std::string("FVID ") + what +
                          " exceeds the 32-bit unsigned range");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void write_clip(const FrameSequence& seq, const std::filesystem::path& path) {
  if (seq.empty() || seq.frames() == 0) {
    throw InvalidArgument("cannot write an empty frame sequence");
  }
  std::string header;
  header.reserve(kFvidHeaderBytes);
  header.append(kMagic.data(), kMagic.size());
  header.push_back(static_cast<char>(kFvidVersion));
  put_u32(header, checked_u32(seq.frames(), "n_frames"));
  put_u32(header, checked_u32(seq.height(), "height"));
  put_u32(header, checked_u32(seq.width(), "width"));
  put_u32(header, checked_u32(seq.channels(), "channels"));
  put_u32(header, std::bit_cast<std::uint32_t>(static_cast<float>(seq.fps())));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  auto px = seq.pixels();
  out.write(reinterpret_cast<const char*>(px.data()),
            static_cast<std::streamsize>(px.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

FrameSequence read_clip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  std::array<unsigned char, kFvidHeaderBytes> h{};
  in.read(reinterpret_cast<char*>(h.data()), h.size());
  if (in.gcount() != static_cast<std::streamsize>(h.size())) {
    throw FormatError(path.string() + ": truncated FVID header");
  }
  if (std::memcmp(h.data(), kMagic.data(), kMagic.size()) != 0) {
    throw FormatError(path.string() + ": bad magic bytes (expected FVID)");
  }
  if (h[4] != kFvidVersion) {
    throw FormatError(path.string() + ": unsupported FVID version " +
                      std::to_string(h[4]));
  }
  FrameShape shape{get_u32(&h[5]), get_u32(&h[9]), get_u32(&h[13]),
                   get_u32(&h[17])};
  const float fps = std::bit_cast<float>(get_u32(&h[21]));

  std::vector<std::uint8_t> payload(shape.size());
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload.size()) {
    throw FormatError(path.string() + ": truncated payload (declared " +
                      std::to_string(payload.size()) + " bytes, found " +
                      std::to_string(in.gcount()) + ")");
  }
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw FormatError(path.string() + ": trailing bytes after payload");
  }
  try {
    return FrameSequence(shape, fps, std::move(payload));
  } catch (const InvalidArgument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace dvr
