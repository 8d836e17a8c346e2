#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dvr/frames.hpp"

namespace dvr {

// ---------------------------------------------------------------------------
// FVID clip files
//
// Little-endian layout:
//   "FVID" | version u8 (=1) | n_frames u32 | height u32 | width u32 |
//   channels u32 | fps f32 | payload (n_frames*height*width*channels bytes,
//   frame-major, row-major, channel-minor)
// ---------------------------------------------------------------------------

inline constexpr std::uint8_t kFvidVersion = 1;
inline constexpr std::size_t kFvidHeaderBytes = 25;

void write_clip(const FrameSequence& seq, const std::filesystem::path& path);
FrameSequence read_clip(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

enum class Split { unassigned, train, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct ClipRecord {
  std::string clip_id;
  std::string subject_id;
  std::filesystem::path path;
  double fps = 0.0;
  std::size_t n_frames = 0;
  double duration_s = 0.0;
  double hr_bpm = 0.0;
  double rr_brpm = 0.0;
  bool quality_pass = false;
  Split split = Split::unassigned;
};

class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<ClipRecord> records);

  const std::vector<ClipRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Appends a record; throws if the clip id is already present.
  void add(ClipRecord record);
  const ClipRecord& at(const std::string& clip_id) const;
  const ClipRecord* find(const std::string& clip_id) const;

  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

 private:
  std::vector<ClipRecord> records_;
};

inline constexpr const char* kCatalogHeader =
    "clip_id,subject_id,path,fps,n_frames,duration_s,hr_bpm,rr_brpm,"
    "quality_pass,split";

/// Writes the catalog as comma-separated text. Relative clip paths are
/// written as-is; they are resolved against the catalog's directory on load.
void save_catalog(const Catalog& catalog, const std::filesystem::path& path);

/// Loads a catalog and checks that every clip file is readable.
Catalog load_catalog(const std::filesystem::path& path,
                     bool check_files = true);

/// Path of a record resolved against the directory of its catalog file.
std::filesystem::path resolve_clip_path(const std::filesystem::path& catalog,
                                        const ClipRecord& record);

// ---------------------------------------------------------------------------
// Channel extraction
// ---------------------------------------------------------------------------

/// Red channel of an R,G,B sequence.
FrameSequence extract_red(const FrameSequence& seq);
RealFrames extract_red(const RealFrames& seq);

/// GRAY = 0.21 R + 0.72 G + 0.07 B, rounded half-up on 8-bit data.
FrameSequence extract_gray(const FrameSequence& seq);
RealFrames extract_gray(const RealFrames& seq);

/// Per-frame arithmetic mean over all pixels of a single-channel sequence.
std::vector<double> mean_pixel_trace(const FrameSequence& seq);
std::vector<double> mean_pixel_trace(const RealFrames& seq);

/// Scales 8-bit pixels to [0, 1].
RealFrames normalize(const FrameSequence& seq);

}  // namespace dvr
