#pragma once

#include <random>

#include "dvr/frames.hpp"

namespace dvr {

struct AugmentConfig {
  double p_vflip = 0.5;
  double p_hflip = 0.5;
  int rotation_limit_deg = 90;  ///< L
  double zoom = 0.5;            ///< z
  double vshift = 0.5;          ///< v
  double hshift = 0.5;          ///< h
  double brightness_lo = 0.1;   ///< b1
  double brightness_hi = 1.0;   ///< b2

  void validate() const;
  /// Every transform disabled.
  static AugmentConfig none();
};

/// One draw of the seven transform parameters, shared by all frames of a sequence.
struct AugmentSample {
  bool vflip = false;
  bool hflip = false;
  int rotation_deg = 0;
  double zoom_factor = 0.0;  ///< scale is 1 + zoom_factor
  double vshift = 0.0;       ///< fraction of the height; negative moves the focus down
  double hshift = 0.0;       ///< fraction of the width; negative moves the focus left
  double brightness = 1.0;

  bool operator==(const AugmentSample&) const = default;
};

AugmentSample draw_sample(const AugmentConfig& cfg, std::mt19937_64& rng);

/// Applies one sample identically to every frame of a single-channel,
/// real-valued (0..1) sequence. Order: vflip, hflip, rotation, zoom, vshift,
/// hshift, brightness. Uncovered pixels take the nearest valid pixel.
RealFrames apply(const AugmentSample& sample, const RealFrames& seq);

}  // namespace dvr
