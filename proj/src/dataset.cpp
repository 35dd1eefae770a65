#include "agopbench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "binio.hpp"

namespace agopbench {

namespace {

constexpr char kMagic[] = "XTRB1";
constexpr std::uint8_t kVersion = 1;

// Fixed-position scenarios anchor the pattern's bounding box here. Row/col 1
// keeps the shape off the image border.
constexpr int kFixedAnchorRow = 1;
constexpr int kFixedAnchorCol = 1;

// Disjoint anchor sites for the xor scenario. Placement dodges two spatial
// biases a chance-level model cannot help having: central pixels sit under
// more conv windows (so gradient magnitude and the AGOP diagonal both bulge
// in the middle), and GradCAM's 3x3->8x8 upsample concentrates its top
// pixels around nine anchor points. These sites cap the overlap between the
// mask and any single anchor's footprint at two pixels and put only one
// mask pixel inside the high-coverage interior.
constexpr int kXorSiteA[2] = {1, 1};
constexpr int kXorSiteB[2] = {4, 6};

// Amplitude of the class-conditional background template, relative to alpha.
// Above 1 so the spurious cue carries a larger margin than the signal and
// shortcut learning wins; at test time the template sign is decorrelated
// from the label, which is what collapses accuracy to chance.
constexpr double kTemplateGain = 10.0;

// Per-pixel standard deviation of the background noise. Near 1/sqrt(64), so
// the noise image has roughly unit L2 norm and alpha is a meaningful mixing
// ratio against the unit-norm pattern; tuned so the trained model lands in
// the 80-94% accuracy band on the additive scenarios. Translation/rotation
// runs quieter: the two shapes differ in a single pixel at their closest
// alignment, so the per-pixel contrast must be higher for the task to stay
// solvable at all once position and orientation are unknown.
double noise_sigma(Scenario s) {
  switch (s) {
    case Scenario::kTransRot: return 0.03;
    default: return 0.1;
  }
}

// Extra attenuation on the xor pattern amplitude. The xor scenario is a
// control: the task must stay out of reach so every attribution method
// degrades to chance. At desk scale the two sites cover an eighth of the
// image, and with the pattern at full amplitude the optimizer develops
// measurable gradient sensitivity at the site pixels without ever
// converting it into accuracy, which defeats the point of the control.
// Riding the pattern twenty-fold below the noise floor keeps the trained
// model genuinely indifferent to the sites.
constexpr double kXorPatternGain = 0.05;

// Global amplitude applied to every finished image. Class structure and
// signal-to-noise are scale-invariant, but at the raw sub-unit scale the
// first conv layer starts bias-dominated and some seeds never escape the
// constant-logit basin.
constexpr double kInputGain = 16.0;

std::vector<std::size_t> place(const PatternOffsets& pattern, int anchor_row, int anchor_col) {
  std::vector<std::size_t> pixels;
  pixels.reserve(pattern.size());
  for (const auto& [dr, dc] : pattern) {
    const int r = anchor_row + dr;
    const int c = anchor_col + dc;
    if (r < 0 || c < 0 || r >= static_cast<int>(kImageSide) || c >= static_cast<int>(kImageSide)) {
      throw ParamError("pattern placement out of bounds at (" + std::to_string(r) + "," +
                       std::to_string(c) + ")");
    }
    pixels.push_back(static_cast<std::size_t>(r) * kImageSide + static_cast<std::size_t>(c));
  }
  return pixels;
}

std::pair<int, int> pattern_extent(const PatternOffsets& p) {
  int h = 0, w = 0;
  for (const auto& [r, c] : p) {
    h = std::max(h, r + 1);
    w = std::max(w, c + 1);
  }
  return {h, w};
}

// Class-signed background template: a coarse 2x2 checkerboard upsampled to
// 8x8 (4x4 blocks), scaled to unit L2 norm.
double checker_template(std::size_t pix) {
  const std::size_t r = pix / kImageSide, c = pix % kImageSide;
  const double sign = ((r / 4 + c / 4) % 2 == 0) ? 1.0 : -1.0;
  return sign / std::sqrt(static_cast<double>(kImagePixels));
}

void quantize_f32(Tensor& image) {
  for (double& v : image.data) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace

std::size_t mask_popcount(const PixelMask& mask) {
  std::size_t n = 0;
  for (std::uint8_t b : mask) n += b ? 1 : 0;
  return n;
}

Scenario parse_scenario(const std::string& name) {
  if (name == "linear") return Scenario::kLinear;
  if (name == "multiplicative") return Scenario::kMultiplicative;
  if (name == "transrot") return Scenario::kTransRot;
  if (name == "xor") return Scenario::kXor;
  throw ParamError("unknown scenario \"" + name +
                   "\" (expected linear|multiplicative|transrot|xor)");
}

Background parse_background(const std::string& name) {
  if (name == "uncorrelated") return Background::kUncorrelated;
  if (name == "correlated") return Background::kCorrelated;
  throw ParamError("unknown background \"" + name + "\" (expected uncorrelated|correlated)");
}

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kLinear: return "linear";
    case Scenario::kMultiplicative: return "multiplicative";
    case Scenario::kTransRot: return "transrot";
    case Scenario::kXor: return "xor";
  }
  return "?";
}

std::string background_name(Background b) {
  return b == Background::kUncorrelated ? "uncorrelated" : "correlated";
}

std::pair<PatternOffsets, PatternOffsets> tetromino_patterns() {
  PatternOffsets t = {{0, 0}, {0, 1}, {0, 2}, {1, 1}};
  PatternOffsets l = {{0, 0}, {1, 0}, {2, 0}, {2, 1}};
  return {t, l};
}

PatternOffsets rotate_pattern(const PatternOffsets& p) {
  const auto [h, w] = pattern_extent(p);
  (void)w;
  PatternOffsets out;
  out.reserve(p.size());
  for (const auto& [r, c] : p) out.emplace_back(c, h - 1 - r);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Sample> generate_dataset(const ScenarioSpec& spec) {
  if (spec.n < 2) throw ParamError("dataset size must be >= 2, got " + std::to_string(spec.n));
  if (spec.n % 2 != 0) throw ParamError("dataset size must be even for exact class balance, got " + std::to_string(spec.n));
  if (!(spec.alpha > 0.0 && spec.alpha <= 1.0)) {
    throw ParamError("alpha must lie in (0,1], got " + std::to_string(spec.alpha));
  }

  const auto [pattern_t, pattern_l] = tetromino_patterns();
  const double alpha = spec.alpha;
  const double sigma = spec.zero_noise ? 0.0 : noise_sigma(spec.scenario);
  // Patterns carry 4 pixels; unit L2 norm puts 1/2 on each.
  const double pattern_amp = 1.0 / std::sqrt(static_cast<double>(pattern_t.size()));

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> rot_dist(0, 3);
  std::uniform_int_distribution<int> coin(0, 1);

  std::vector<Sample> samples;
  samples.reserve(spec.n);
  for (std::size_t s = 0; s < spec.n; ++s) {
    Sample sample;
    sample.label = static_cast<int>(s % 2);
    sample.image = Tensor::zeros({1, kImageSide, kImageSide});
    Tensor& img = sample.image;

    for (std::size_t p = 0; p < kImagePixels; ++p) img.data[p] = sigma * gauss(rng);

    if (spec.background == Background::kCorrelated) {
      const double tmpl_sign =
          spec.spurious_aligned ? (sample.label == 1 ? 1.0 : -1.0) : (coin(rng) == 1 ? 1.0 : -1.0);
      for (std::size_t p = 0; p < kImagePixels; ++p) {
        img.data[p] += kTemplateGain * alpha * tmpl_sign * checker_template(p);
      }
    }

    const PatternOffsets& class_pattern = sample.label == 0 ? pattern_t : pattern_l;
    switch (spec.scenario) {
      case Scenario::kLinear: {
        const auto pixels = place(class_pattern, kFixedAnchorRow, kFixedAnchorCol);
        for (std::size_t p = 0; p < kImagePixels; ++p) img.data[p] *= 1.0 - alpha;
        for (std::size_t p : pixels) {
          img.data[p] += alpha * pattern_amp;
          sample.mask[p] = 1;
        }
        break;
      }
      case Scenario::kMultiplicative: {
        const auto pixels = place(class_pattern, kFixedAnchorRow, kFixedAnchorCol);
        const double factor = 1.0 + alpha * spec.kappa;
        for (std::size_t p : pixels) {
          img.data[p] *= factor;
          sample.mask[p] = 1;
        }
        break;
      }
      case Scenario::kTransRot: {
        PatternOffsets rotated = class_pattern;
        const int turns = rot_dist(rng);
        for (int t = 0; t < turns; ++t) rotated = rotate_pattern(rotated);
        const auto [bh, bw] = pattern_extent(rotated);
        std::uniform_int_distribution<int> row_dist(0, static_cast<int>(kImageSide) - bh);
        std::uniform_int_distribution<int> col_dist(0, static_cast<int>(kImageSide) - bw);
        const int ar = row_dist(rng);
        const int ac = col_dist(rng);
        const auto pixels = place(rotated, ar, ac);
        for (std::size_t p = 0; p < kImagePixels; ++p) img.data[p] *= 1.0 - alpha;
        for (std::size_t p : pixels) {
          img.data[p] += alpha * pattern_amp;
          sample.mask[p] = 1;
        }
        break;
      }
      case Scenario::kXor: {
        // Label fixes the sign parity; the pair (s_a, s_b) is then uniform
        // over the two consistent combinations.
        const double sign_a = coin(rng) == 1 ? 1.0 : -1.0;
        const double sign_b = sample.label == 1 ? -sign_a : sign_a;
        const auto pixels_a = place(pattern_t, kXorSiteA[0], kXorSiteA[1]);
        const auto pixels_b = place(pattern_l, kXorSiteB[0], kXorSiteB[1]);
        for (std::size_t p = 0; p < kImagePixels; ++p) img.data[p] *= 1.0 - alpha;
        for (std::size_t p : pixels_a) {
          img.data[p] += kXorPatternGain * alpha * sign_a * pattern_amp;
          sample.mask[p] = 1;
        }
        for (std::size_t p : pixels_b) {
          img.data[p] += kXorPatternGain * alpha * sign_b * pattern_amp;
          sample.mask[p] = 1;
        }
        break;
      }
    }

    for (double& v : img.data) v *= kInputGain;
    quantize_f32(img);
    samples.push_back(std::move(sample));
  }
  return samples;
}

void write_dataset(const std::string& path, const std::vector<Sample>& samples) {
  std::string buf;
  buf.reserve(18 + samples.size() * (kImagePixels * 4 + 1 + kImagePixels));
  binio::put_bytes(buf, kMagic, 5);
  binio::put_u8(buf, kVersion);
  binio::put_u32(buf, static_cast<std::uint32_t>(samples.size()));
  binio::put_u32(buf, kImageSide);
  binio::put_u32(buf, kImageSide);
  for (const Sample& s : samples) {
    for (double v : s.image.data) binio::put_f32(buf, static_cast<float>(v));
    binio::put_u8(buf, static_cast<std::uint8_t>(s.label));
    for (std::uint8_t m : s.mask) binio::put_u8(buf, m);
  }
  binio::write_file_atomic(path, buf);
}

std::vector<Sample> read_dataset(const std::string& path) {
  binio::Reader r(binio::read_file(path), "dataset " + path);
  r.expect_magic(kMagic);
  const std::uint8_t version = r.u8("version");
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  const std::uint32_t n = r.u32("sample count");
  const std::uint32_t h = r.u32("height");
  const std::uint32_t w = r.u32("width");
  if (h != kImageSide || w != kImageSide) {
    r.fail("unsupported image size " + std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t expected = 18 + static_cast<std::size_t>(n) * (kImagePixels * 4 + 1 + kImagePixels);
  if (r.total() != expected) {
    throw FormatError("dataset " + path + ": file length " + std::to_string(r.total()) +
                          " does not match header-implied length " + std::to_string(expected),
                      r.offset());
  }
  std::vector<Sample> samples(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Sample& s = samples[i];
    s.image = Tensor::zeros({1, kImageSide, kImageSide});
    for (std::size_t p = 0; p < kImagePixels; ++p) {
      s.image.data[p] = static_cast<double>(r.f32("image"));
    }
    const std::uint8_t label = r.u8("label");
    if (label > 1) r.fail("label out of range: " + std::to_string(label));
    s.label = label;
    for (std::size_t p = 0; p < kImagePixels; ++p) s.mask[p] = r.u8("mask") ? 1 : 0;
  }
  return samples;
}

Tensor mean_image(const std::vector<Sample>& samples) {
  if (samples.empty()) throw ParamError("mean_image: empty sample set");
  Tensor mean = Tensor::zeros({1, kImageSide, kImageSide});
  for (const Sample& s : samples) {
    for (std::size_t p = 0; p < kImagePixels; ++p) mean.data[p] += s.image.data[p];
  }
  for (double& v : mean.data) v /= static_cast<double>(samples.size());
  return mean;
}

}  // namespace agopbench
