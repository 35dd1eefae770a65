#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "agopbench/tensor.hpp"

namespace agopbench {

inline constexpr std::size_t kImageSide = 8;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;

/// Ground-truth mask: 1 on signal pixels, 0 elsewhere, row-major.
using PixelMask = std::array<std::uint8_t, kImagePixels>;

std::size_t mask_popcount(const PixelMask& mask);

/// One benchmark instance. Image values are generated in double precision but
/// quantized to f32 at creation so a dataset file round-trips bit-exactly.
struct Sample {
  Tensor image;  // [1,8,8]
  int label = 0;
  PixelMask mask{};
};

enum class Scenario { kLinear, kMultiplicative, kTransRot, kXor };
enum class Background { kUncorrelated, kCorrelated };

Scenario parse_scenario(const std::string& name);
Background parse_background(const std::string& name);
std::string scenario_name(Scenario s);
std::string background_name(Background b);

struct ScenarioSpec {
  Scenario scenario = Scenario::kLinear;
  Background background = Background::kUncorrelated;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double alpha = 0.18;
  /// Multiplicative modulation strength; signal pixels are scaled by
  /// 1 + alpha * kappa. The default is negative (factor 0.1): signal pixels
  /// are suppressed toward zero rather than amplified, so the class evidence
  /// is a quiet region. Gradient magnitude still marks those pixels, but
  /// input-times-gradient methods score near-zero on them by construction.
  double kappa = -5.0;
  /// When correlated: true ties the background template sign to the label
  /// (training condition); false draws it independently (evaluation
  /// condition, which is what makes the cue spurious).
  bool spurious_aligned = true;
  /// Test hook: suppress the noise term entirely.
  bool zero_noise = false;
};

/// A tetromino as row/column offsets from its bounding-box top-left corner.
using PatternOffsets = std::vector<std::pair<int, int>>;

/// The two 4-pixel class shapes: first = T (class 0), second = L (class 1).
std::pair<PatternOffsets, PatternOffsets> tetromino_patterns();

/// Rotates a pattern by 90 degrees clockwise and re-normalizes offsets so the
/// bounding box starts at (0,0).
PatternOffsets rotate_pattern(const PatternOffsets& p);

/// Synthesizes `spec.n` samples, exactly half per class, deterministically
/// from `spec.seed`.
std::vector<Sample> generate_dataset(const ScenarioSpec& spec);

void write_dataset(const std::string& path, const std::vector<Sample>& samples);
std::vector<Sample> read_dataset(const std::string& path);

/// Per-pixel mean image of a sample set; the deletion/insertion baseline.
Tensor mean_image(const std::vector<Sample>& samples);

}  // namespace agopbench
