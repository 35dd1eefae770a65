#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "agopbench/dataset.hpp"
#include "agopbench/errors.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace agopbench;

namespace {

ScenarioSpec base_spec(Scenario sc, std::size_t n = 200, std::uint64_t seed = 42) {
  ScenarioSpec spec;
  spec.scenario = sc;
  spec.n = n;
  spec.seed = seed;
  return spec;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("agopbench_test_" + name);
}

// Ridge-regression linear probe: fits w on half the samples, reports accuracy
// on the other half. Plain Gauss-Jordan on the 65x65 normal equations.
double linear_probe_accuracy(const std::vector<Sample>& samples) {
  const std::size_t d = kImagePixels + 1;  // pixels + intercept
  const std::size_t half = samples.size() / 2;
  std::vector<std::vector<double>> a(d, std::vector<double>(d, 0.0));
  std::vector<double> b(d, 0.0);
  auto features = [](const Sample& s) {
    std::vector<double> x = s.image.data;
    x.push_back(1.0);
    return x;
  };
  for (std::size_t i = 0; i < half; ++i) {
    const auto x = features(samples[i]);
    const double y = samples[i].label == 1 ? 1.0 : -1.0;
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) a[r][c] += x[r] * x[c];
      b[r] += x[r] * y;
    }
  }
  for (std::size_t r = 0; r < d; ++r) a[r][r] += 1e-3;
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < d; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    const double diag = a[col][col];
    for (std::size_t c = 0; c < d; ++c) a[col][c] /= diag;
    b[col] /= diag;
    for (std::size_t r = 0; r < d; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::size_t hits = 0;
  for (std::size_t i = half; i < samples.size(); ++i) {
    const auto x = features(samples[i]);
    double score = 0.0;
    for (std::size_t j = 0; j < d; ++j) score += b[j] * x[j];
    const int pred = score > 0 ? 1 : 0;
    hits += pred == samples[i].label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size() - half);
}

}  // namespace

TEST_CASE("tetromino patterns are 4-pixel shapes, distinct under rotation") {
  const auto [t, l] = tetromino_patterns();
  CHECK(t.size() == 4);
  CHECK(l.size() == 4);
  PatternOffsets rot = l;
  for (int turns = 0; turns < 4; ++turns) {
    PatternOffsets sorted_t = t, sorted_rot = rot;
    std::sort(sorted_t.begin(), sorted_t.end());
    std::sort(sorted_rot.begin(), sorted_rot.end());
    CHECK(sorted_t != sorted_rot);
    rot = rotate_pattern(rot);
  }
  // Four quarter turns restore the original offsets.
  PatternOffsets full = t;
  for (int turns = 0; turns < 4; ++turns) full = rotate_pattern(full);
  PatternOffsets a = t, b2 = full;
  std::sort(a.begin(), a.end());
  std::sort(b2.begin(), b2.end());
  CHECK(a == b2);
}

TEST_CASE("rotate_pattern maps the T shape as expected") {
  const auto [t, l] = tetromino_patterns();
  (void)l;
  PatternOffsets once = rotate_pattern(t);
  std::sort(once.begin(), once.end());
  // T = {(0,0),(0,1),(0,2),(1,1)} turned clockwise: the stem points left.
  const PatternOffsets want = {{0, 1}, {1, 0}, {1, 1}, {2, 1}};
  CHECK(once == want);
}

TEST_CASE("spec validation rejects bad parameters") {
  CHECK_THROWS_AS((void)generate_dataset(base_spec(Scenario::kLinear, 7)), ParamError);
  CHECK_THROWS_AS((void)generate_dataset(base_spec(Scenario::kLinear, 0)), ParamError);
  ScenarioSpec bad_alpha = base_spec(Scenario::kLinear);
  bad_alpha.alpha = 0.0;
  CHECK_THROWS_AS((void)generate_dataset(bad_alpha), ParamError);
  bad_alpha.alpha = 1.5;
  CHECK_THROWS_AS((void)generate_dataset(bad_alpha), ParamError);
  CHECK_THROWS_AS((void)parse_scenario("cubic"), ParamError);
  CHECK_THROWS_AS((void)parse_background("striped"), ParamError);
}

TEST_CASE("scenario and background names round-trip") {
  for (const char* name : {"linear", "multiplicative", "transrot", "xor"}) {
    CHECK(scenario_name(parse_scenario(name)) == name);
  }
  for (const char* name : {"uncorrelated", "correlated"}) {
    CHECK(background_name(parse_background(name)) == name);
  }
}

TEST_CASE("generation is balanced, deterministic, and seed-sensitive") {
  for (Scenario sc :
       {Scenario::kLinear, Scenario::kMultiplicative, Scenario::kTransRot, Scenario::kXor}) {
    CAPTURE(scenario_name(sc));
    const auto a = generate_dataset(base_spec(sc));
    const auto b = generate_dataset(base_spec(sc));
    REQUIRE(a.size() == 200);
    std::size_t ones = 0;
    for (const auto& s : a) ones += static_cast<std::size_t>(s.label);
    CHECK(ones == 100);
    bool identical = true;
    for (std::size_t i = 0; i < a.size(); ++i) {
      identical = identical && a[i].image.data == b[i].image.data && a[i].label == b[i].label &&
                  a[i].mask == b[i].mask;
    }
    CHECK(identical);
    const auto c = generate_dataset(base_spec(sc, 200, 43));
    CHECK(a[0].image.data != c[0].image.data);
  }
}

TEST_CASE("image values survive f32 quantization exactly") {
  const auto samples = generate_dataset(base_spec(Scenario::kLinear, 10));
  for (const auto& s : samples) {
    for (double v : s.image.data) {
      CHECK(static_cast<double>(static_cast<float>(v)) == v);
    }
  }
}

TEST_CASE("zero-noise linear image is exactly the masked pattern") {
  ScenarioSpec spec = base_spec(Scenario::kLinear, 4);
  spec.alpha = 1.0;
  spec.zero_noise = true;
  const auto samples = generate_dataset(spec);
  for (const auto& s : samples) {
    CHECK(mask_popcount(s.mask) == 4);
    for (std::size_t p = 0; p < kImagePixels; ++p) {
      if (s.mask[p]) {
        CHECK(s.image.data[p] > 0.0);
      } else {
        CHECK(s.image.data[p] == 0.0);
      }
    }
  }
  // The two classes mark different pixel sets.
  CHECK(samples[0].label != samples[1].label);
  CHECK(samples[0].mask != samples[1].mask);
}

TEST_CASE("fixed-position masks are constant per class; transrot masks move") {
  const auto lin = generate_dataset(base_spec(Scenario::kLinear));
  PixelMask mask_by_class[2] = {};
  bool seen[2] = {false, false};
  for (const auto& s : lin) {
    if (!seen[s.label]) {
      mask_by_class[s.label] = s.mask;
      seen[s.label] = true;
    }
    CHECK(s.mask == mask_by_class[s.label]);
    CHECK(mask_popcount(s.mask) == 4);
  }

  const auto tr = generate_dataset(base_spec(Scenario::kTransRot, 1000));
  std::set<PixelMask> distinct;
  for (const auto& s : tr) {
    CHECK(mask_popcount(s.mask) == 4);
    distinct.insert(s.mask);
  }
  // Placement and orientation vary, so far more than the two fixed masks.
  CHECK(distinct.size() > 20);
}

TEST_CASE("multiplicative scenario suppresses exactly the masked pixels") {
  ScenarioSpec spec = base_spec(Scenario::kMultiplicative, 50);
  ScenarioSpec ref_spec = spec;
  ref_spec.kappa = 0.0;  // factor 1: identical background, no modulation
  const auto mod = generate_dataset(spec);
  const auto ref = generate_dataset(ref_spec);
  const double factor = 1.0 + spec.alpha * spec.kappa;
  REQUIRE(factor == doctest::Approx(0.1));
  for (std::size_t i = 0; i < mod.size(); ++i) {
    CHECK(mod[i].mask == ref[i].mask);
    for (std::size_t p = 0; p < kImagePixels; ++p) {
      const double want = ref[i].image.data[p] * (mod[i].mask[p] ? factor : 1.0);
      CHECK(mod[i].image.data[p] ==
            doctest::Approx(want).epsilon(1e-6));  // f32 quantization slack
    }
  }
}

TEST_CASE("xor scenario: 8-pixel masks at two fixed sites, label from signs") {
  ScenarioSpec spec = base_spec(Scenario::kXor, 200);
  spec.zero_noise = true;
  const auto samples = generate_dataset(spec);
  const PixelMask whole_mask = samples[0].mask;
  CHECK(mask_popcount(whole_mask) == 8);
  for (const auto& s : samples) {
    CHECK(s.mask == whole_mask);  // same two sites for every sample
    // Recover the two site signs from the noise-free image: site A lives in
    // the top-left quadrant, site B in the bottom-right.
    double sign_a = 0.0, sign_b = 0.0;
    for (std::size_t p = 0; p < kImagePixels; ++p) {
      if (!s.mask[p]) {
        CHECK(s.image.data[p] == 0.0);
        continue;
      }
      const std::size_t row = p / kImageSide;
      (row < 4 ? sign_a : sign_b) += s.image.data[p];
    }
    CHECK(sign_a != 0.0);
    CHECK(sign_b != 0.0);
    const int want = (sign_a > 0) != (sign_b > 0) ? 1 : 0;
    CHECK(s.label == want);
  }
}

TEST_CASE("xor resists a linear probe while linear does not") {
  const auto hard = generate_dataset(base_spec(Scenario::kXor, 2000));
  const double xor_acc = linear_probe_accuracy(hard);
  CHECK(xor_acc > 0.40);
  CHECK(xor_acc < 0.60);

  const auto easy = generate_dataset(base_spec(Scenario::kLinear, 2000));
  CHECK(linear_probe_accuracy(easy) > 0.75);
}

TEST_CASE("correlated background is class-aligned only when requested") {
  ScenarioSpec spec = base_spec(Scenario::kLinear, 400);
  spec.background = Background::kCorrelated;
  const auto aligned = generate_dataset(spec);
  spec.spurious_aligned = false;
  spec.seed = 43;
  const auto shuffled = generate_dataset(spec);

  // Project each image onto the coarse checkerboard and correlate the sign
  // with the label.
  auto template_hit_rate = [](const std::vector<Sample>& samples) {
    std::size_t hits = 0;
    for (const auto& s : samples) {
      double proj = 0.0;
      for (std::size_t p = 0; p < kImagePixels; ++p) {
        const std::size_t r = p / kImageSide, c = p % kImageSide;
        const double cell = ((r / 4 + c / 4) % 2 == 0) ? 1.0 : -1.0;
        proj += cell * s.image.data[p];
      }
      const int pred = proj > 0 ? 0 : 1;
      hits += pred == s.label ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
  };
  const double rate_aligned = template_hit_rate(aligned);
  const double rate_shuffled = template_hit_rate(shuffled);
  // Aligned: the template sign is the label (up to a global sign convention).
  CHECK(std::abs(rate_aligned - 0.5) > 0.45);
  CHECK(std::abs(rate_shuffled - 0.5) < 0.1);

  // The ground-truth mask still marks the tetromino, not the background.
  for (const auto& s : aligned) CHECK(mask_popcount(s.mask) == 4);
}

TEST_CASE("dataset file round-trip is bit-exact") {
  const auto path = temp_file("roundtrip.xtrb");
  const auto samples = generate_dataset(base_spec(Scenario::kTransRot, 10));
  write_dataset(path.string(), samples);
  const auto back = read_dataset(path.string());
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i].image.data == samples[i].image.data);
    CHECK(back[i].label == samples[i].label);
    CHECK(back[i].mask == samples[i].mask);
  }
  CHECK(std::filesystem::file_size(path) == 18 + 10 * (256 + 1 + 64));
  std::filesystem::remove(path);
}

TEST_CASE("malformed dataset files are rejected") {
  const auto path = temp_file("malformed.xtrb");
  const auto samples = generate_dataset(base_spec(Scenario::kLinear, 4));
  write_dataset(path.string(), samples);

  SUBCASE("corrupted magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.put('Z');
    f.close();
    CHECK_THROWS_AS((void)read_dataset(path.string()), FormatError);
  }
  SUBCASE("truncated payload") {
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
    CHECK_THROWS_AS((void)read_dataset(path.string()), FormatError);
  }
  SUBCASE("trailing bytes") {
    std::ofstream f(path, std::ios::app | std::ios::binary);
    f << "extra";
    f.close();
    CHECK_THROWS_AS((void)read_dataset(path.string()), FormatError);
  }
  SUBCASE("out-of-range label byte") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(18 + 256);  // first sample's label byte
    f.put(static_cast<char>(7));
    f.close();
    CHECK_THROWS_AS((void)read_dataset(path.string()), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS((void)read_dataset((path.string() + ".nope")), IoError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("mean_image averages per pixel") {
  std::vector<Sample> samples(2);
  samples[0].image = Tensor::full({1, 8, 8}, 1.0);
  samples[1].image = Tensor::full({1, 8, 8}, 3.0);
  const Tensor mean = mean_image(samples);
  CHECK(mean.shape == std::vector<std::size_t>{1, 8, 8});
  for (double v : mean.data) CHECK(v == doctest::Approx(2.0));
  CHECK_THROWS_AS((void)mean_image({}), ParamError);
}
