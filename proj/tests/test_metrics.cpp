#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "agopbench/errors.hpp"
#include "agopbench/metrics.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace agopbench;
using namespace agopbench::testutil;

namespace {

PixelMask make_mask(std::initializer_list<std::size_t> pixels) {
  PixelMask m{};
  for (std::size_t p : pixels) m[p] = 1;
  return m;
}

Tensor map_of(std::vector<double> values) { return Tensor({8, 8}, std::move(values)); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_CASE("saliency order sorts descending with row-major tie breaks") {
  std::vector<double> v(64, 0.0);
  v[10] = 3.0;
  v[3] = 2.0;
  v[40] = 2.0;  // tie with pixel 3; pixel 3 must come first
  const auto order = saliency_order(map_of(v));
  CHECK(order[0] == 10);
  CHECK(order[1] == 3);
  CHECK(order[2] == 40);
  // The zero plateau keeps row-major order.
  CHECK(order[3] == 0);
  CHECK(order[4] == 1);
  CHECK(order.back() == 63);

  CHECK_THROWS_AS((void)saliency_order(Tensor::zeros({3, 3})), ShapeError);
}

TEST_CASE("pointing game hits iff the peak pixel is masked") {
  std::vector<double> v(64, 0.0);
  v[20] = 5.0;
  CHECK(pointing_game(map_of(v), make_mask({20, 21})) == 1);
  CHECK(pointing_game(map_of(v), make_mask({21, 22})) == 0);

  // A constant map resolves to pixel 0 by the tie rule.
  const Tensor flat = Tensor::full({8, 8}, 1.0);
  CHECK(pointing_game(flat, make_mask({0})) == 1);
  CHECK(pointing_game(flat, make_mask({1, 2, 3})) == 0);

  CHECK_THROWS_AS((void)pointing_game(flat, PixelMask{}), ParamError);
}

TEST_CASE("miou is intersection over union of the top-k set") {
  // k = 4 mask; map ranks two mask pixels into the top 4.
  std::vector<double> v(64, 0.0);
  v[0] = 9.0;   // in mask
  v[1] = 8.0;   // in mask
  v[30] = 7.0;  // out
  v[31] = 6.0;  // out
  v[2] = 5.0;   // in mask but rank 5
  const PixelMask mask = make_mask({0, 1, 2, 3});
  CHECK(miou(map_of(v), mask) == doctest::Approx(2.0 / 6.0));  // I/(2k-I) = 2/(8-2)

  // Perfect and zero overlap.
  std::vector<double> hit(64, 0.0);
  for (std::size_t p : {0, 1, 2, 3}) hit[p] = 1.0;
  CHECK(miou(map_of(hit), mask) == doctest::Approx(1.0));
  std::vector<double> miss(64, 0.0);
  for (std::size_t p : {60, 61, 62, 63}) miss[p] = 1.0;
  CHECK(miou(map_of(miss), mask) == doctest::Approx(0.0));

  CHECK_THROWS_AS((void)miou(map_of(v), PixelMask{}), ParamError);
}

TEST_CASE("order-based metrics are invariant under monotone transforms") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const PixelMask mask = make_mask({9, 10, 11, 18});
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> v(64);
    for (double& x : v) x = uni(rng);
    std::vector<double> w(64);
    for (std::size_t i = 0; i < 64; ++i) w[i] = std::exp(3.0 * v[i]);  // strictly increasing
    CHECK(saliency_order(map_of(v)) == saliency_order(map_of(w)));
    CHECK(miou(map_of(v), mask) == miou(map_of(w), mask));
    CHECK(pointing_game(map_of(v), mask) == pointing_game(map_of(w), mask));
  }
}

TEST_CASE("energy_gt is the in-mask mass fraction") {
  std::vector<double> v(64, 1.0);
  v[5] = 37.0;
  const PixelMask mask = make_mask({5});
  CHECK(energy_gt(map_of(v), mask) == doctest::Approx(37.0 / (63.0 + 37.0)));
  CHECK_THROWS_AS((void)energy_gt(Tensor::zeros({8, 8}), mask), ParamError);
  CHECK_THROWS_AS((void)energy_gt(map_of(v), PixelMask{}), ParamError);
}

TEST_CASE("deletion and insertion curves follow the linear closed form") {
  std::vector<double> w(64, 0.0);
  w[5] = 1.0;
  const LinearModel model = make_linear_model(w);

  Tensor image = Tensor::zeros({1, 8, 8});
  image.data[5] = 2.0;
  const Tensor baseline = Tensor::zeros({1, 8, 8});

  // Map ranks pixel 5 first, then a fixed strict order over the rest.
  std::vector<double> v(64);
  for (std::size_t i = 0; i < 64; ++i) v[i] = -static_cast<double>(i);
  v[5] = 1.0;
  const Tensor map = map_of(v);

  const double p_clean = sigmoid(4.0);  // logit gap 2*w.x = 4 for class 0
  const auto del = deletion_curve(model, image, map, baseline);
  REQUIRE(del.size() == 65);
  CHECK(del[0] == doctest::Approx(p_clean).epsilon(1e-12));
  for (std::size_t i = 1; i < del.size(); ++i) {
    CHECK(del[i] == doctest::Approx(0.5).epsilon(1e-12));  // evidence gone after step 1
  }
  CHECK(deletion_auc(model, image, map, baseline) ==
        doctest::Approx((p_clean + 64 * 0.5) / 65.0).epsilon(1e-12));

  const auto ins = insertion_curve(model, image, map, baseline);
  REQUIRE(ins.size() == 65);
  CHECK(ins[0] == doctest::Approx(0.5).epsilon(1e-12));
  for (std::size_t i = 1; i < ins.size(); ++i) {
    CHECK(ins[i] == doctest::Approx(p_clean).epsilon(1e-12));
  }
  CHECK(insertion_auc(model, image, map, baseline) ==
        doctest::Approx((0.5 + 64 * p_clean) / 65.0).epsilon(1e-12));

  Tensor bad = Tensor::zeros({1, 4, 4});
  CHECK_THROWS_AS((void)deletion_curve(model, image, map, bad), ShapeError);
}

TEST_CASE("insertion is deletion run from the other endpoint") {
  std::mt19937_64 rng(2);
  std::vector<double> w(64);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (double& x : w) x = uni(rng);
  const LinearModel model = make_linear_model(w);

  // Pick image and baseline with the same predicted class so both directions
  // track the same softmax entry.
  Tensor image = random_image(rng);
  Tensor baseline = Tensor::zeros({1, 8, 8});
  double dot = 0.0;
  for (std::size_t p = 0; p < 64; ++p) dot += w[p] * image.data[p];
  if (dot < 0.0)
    for (double& x : image.data) x = -x;
  const Tensor map = random_tensor({8, 8}, rng);

  const auto ins = insertion_curve(model, image, map, baseline);
  const auto del_rev = deletion_curve(model, baseline, map, image);
  REQUIRE(ins.size() == del_rev.size());
  for (std::size_t i = 0; i < ins.size(); ++i) {
    CHECK(ins[i] == doctest::Approx(del_rev[i]).epsilon(1e-12));
  }
}

TEST_CASE("curve_auc is the arithmetic mean") {
  CHECK(curve_auc({1.0, 0.0, 0.5, 0.5}) == doctest::Approx(0.5));
  CHECK_THROWS_AS((void)curve_auc({}), ParamError);
}

TEST_CASE("expected random IoU matches brute force enumeration") {
  // d=6, k=2: enumerate all C(6,2)=15 top-2 selections against a 2-pixel mask.
  double acc = 0.0;
  int count = 0;
  for (int a = 0; a < 6; ++a) {
    for (int b = a + 1; b < 6; ++b) {
      int inter = (a < 2 ? 1 : 0) + (b < 2 ? 1 : 0);
      acc += static_cast<double>(inter) / static_cast<double>(4 - inter);
      ++count;
    }
  }
  CHECK(count == 15);
  CHECK(expected_random_iou(6, 2) == doctest::Approx(acc / 15.0).epsilon(1e-12));

  // d=64, k=4 via direct binomial coefficients.
  auto choose = [](double n, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
    return r;
  };
  double e = 0.0;
  for (int i = 0; i <= 4; ++i) {
    const double p = choose(4, i) * choose(60, 4 - i) / choose(64, 4);
    e += p * static_cast<double>(i) / static_cast<double>(8 - i);
  }
  CHECK(expected_random_iou(64, 4) == doctest::Approx(e).epsilon(1e-10));

  CHECK_THROWS_AS((void)expected_random_iou(64, 0), ParamError);
  CHECK_THROWS_AS((void)expected_random_iou(4, 5), ParamError);
}

TEST_CASE("random maps land on the closed-form PG and mIoU levels") {
  const PixelMask mask = make_mask({9, 10, 11, 18});
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double pg_sum = 0.0, miou_sum = 0.0;
  const int trials = 5000;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> v(64);
    for (double& x : v) x = uni(rng);
    const Tensor m = map_of(v);
    pg_sum += pointing_game(m, mask);
    miou_sum += miou(m, mask);
  }
  CHECK(pg_sum / trials == doctest::Approx(4.0 / 64.0).epsilon(0.15));
  CHECK(std::abs(pg_sum / trials - 4.0 / 64.0) <= 0.01);
  CHECK(std::abs(miou_sum / trials - expected_random_iou(64, 4)) <= 0.005);
}

TEST_CASE("evaluate_suite aggregates per-method means") {
  // Dataset of 4 samples with pixel-0 evidence and mask {0,1}.
  std::vector<double> w(64, 0.0);
  w[0] = 1.0;
  const LinearModel model = make_linear_model(w);
  std::vector<Sample> data;
  for (int i = 0; i < 4; ++i) {
    Sample s;
    s.image = Tensor::zeros({1, 8, 8});
    s.image.data[0] = (i % 2 == 0) ? 1.5 : -1.5;
    s.label = i % 2;
    s.mask = make_mask({0, 9});
    data.push_back(std::move(s));
  }
  const Tensor baseline = Tensor::zeros({1, 8, 8});

  SuiteConfig config;
  config.methods = {Method::kVanillaGrad, Method::kAgopLocal, Method::kRandom};
  config.seed = 9;
  config.scenario = "linear";
  config.background = "uncorrelated";
  const auto records = evaluate_suite(model, nullptr, data, baseline, config);
  REQUIRE(records.size() == 3);

  const EvalRecord& vg = records[0];
  CHECK(vg.method == "vanilla_grad");
  CHECK(vg.scenario == "linear");
  CHECK(vg.background == "uncorrelated");
  CHECK(vg.n == 4);
  CHECK(vg.seed == 9);
  // |grad| = |w| peaks at pixel 0 inside the mask on every sample; the tie
  // rule fills the rest of the top-2 with pixel 1, which is unmasked.
  CHECK(vg.pg == doctest::Approx(1.0));
  CHECK(vg.miou == doctest::Approx(1.0 / 3.0));
  CHECK(vg.energy_gt == doctest::Approx(1.0));  // all mass on pixel 0

  // AGOP-Local repeats VanillaGrad exactly, metric for metric.
  const EvalRecord& al = records[1];
  CHECK(al.method == "agop_local");
  CHECK(al.pg == vg.pg);
  CHECK(al.miou == vg.miou);
  CHECK(al.energy_gt == vg.energy_gt);
  CHECK(al.deletion_auc == vg.deletion_auc);
  CHECK(al.insertion_auc == vg.insertion_auc);

  // Random differs between suite seeds.
  SuiteConfig config2 = config;
  config2.seed = 10;
  const auto records2 = evaluate_suite(model, nullptr, data, baseline, config2);
  CHECK(records2[2].method == "random");
  CHECK(records[2].energy_gt != records2[2].energy_gt);

  SUBCASE("diag-requiring methods reject a null diag") {
    SuiteConfig bad = config;
    bad.methods = {Method::kAgopGlobal};
    CHECK_THROWS_AS((void)evaluate_suite(model, nullptr, data, baseline, bad), ParamError);
  }
  SUBCASE("empty dataset and empty method list are rejected") {
    CHECK_THROWS_AS((void)evaluate_suite(model, nullptr, {}, baseline, config), ParamError);
    SuiteConfig none = config;
    none.methods = {};
    CHECK_THROWS_AS((void)evaluate_suite(model, nullptr, data, baseline, none), ParamError);
  }
}

TEST_CASE("all-zero maps contribute zero energy instead of failing the suite") {
  // A zero-weight model yields all-zero vanilla maps.
  const LinearModel model = make_linear_model(std::vector<double>(64, 0.0));
  std::vector<Sample> data(2);
  for (auto& s : data) {
    s.image = Tensor::full({1, 8, 8}, 1.0);
    s.mask = make_mask({0});
  }
  SuiteConfig config;
  config.methods = {Method::kVanillaGrad};
  const auto records =
      evaluate_suite(model, nullptr, data, Tensor::zeros({1, 8, 8}), config);
  CHECK(records[0].energy_gt == 0.0);
  CHECK(records[0].pg == 1.0);  // tie rule points at pixel 0, which is masked
  CHECK(records[0].deletion_auc == doctest::Approx(0.5));
  CHECK(records[0].insertion_auc == doctest::Approx(0.5));
}

TEST_CASE("report CSV round-trips and rejects malformed input") {
  const auto path = std::filesystem::temp_directory_path() / "agopbench_test_report.csv";
  std::vector<EvalRecord> records(2);
  records[0] = {"vanilla_grad", "linear", "uncorrelated", 0.5, 0.25, 0.125, 0.75, 0.625, 1.5, 2000, 7};
  records[1] = {"random", "xor", "correlated", 0.0625, 0.03125, 0.0625, 0.5, 0.5, 0.25, 500, 11};
  write_report_csv(path.string(), records);

  const auto back = read_report_csv(path.string());
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].method == records[i].method);
    CHECK(back[i].scenario == records[i].scenario);
    CHECK(back[i].background == records[i].background);
    CHECK(back[i].pg == records[i].pg);
    CHECK(back[i].miou == records[i].miou);
    CHECK(back[i].energy_gt == records[i].energy_gt);
    CHECK(back[i].deletion_auc == records[i].deletion_auc);
    CHECK(back[i].insertion_auc == records[i].insertion_auc);
    CHECK(back[i].ms_per_sample == records[i].ms_per_sample);
    CHECK(back[i].n == records[i].n);
    CHECK(back[i].seed == records[i].seed);
  }

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "method,scenario,background,pg,miou,energy_gt,deletion,insertion,ms_per_sample,n,seed");
  in.close();

  auto write_text = [&](const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    f << text;
  };
  SUBCASE("wrong header") {
    write_text("method,scenario\nx,y\n");
    CHECK_THROWS_AS((void)read_report_csv(path.string()), FormatError);
  }
  SUBCASE("missing fields carry the line number") {
    write_text(
        "method,scenario,background,pg,miou,energy_gt,deletion,insertion,ms_per_sample,n,seed\n"
        "vanilla_grad,linear,uncorrelated,0.5\n");
    try {
      (void)read_report_csv(path.string());
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("non-numeric field") {
    write_text(
        "method,scenario,background,pg,miou,energy_gt,deletion,insertion,ms_per_sample,n,seed\n"
        "vanilla_grad,linear,uncorrelated,zzz,0,0,0,0,0,1,1\n");
    CHECK_THROWS_AS((void)read_report_csv(path.string()), FormatError);
  }
  SUBCASE("empty file") {
    write_text("");
    CHECK_THROWS_AS((void)read_report_csv(path.string()), FormatError);
  }
  SUBCASE("missing file") {
    std::filesystem::remove(path);
    CHECK_THROWS_AS((void)read_report_csv(path.string()), IoError);
  }
  std::filesystem::remove(path);
}
