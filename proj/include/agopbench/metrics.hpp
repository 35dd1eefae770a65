#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agopbench/agop.hpp"
#include "agopbench/attribution.hpp"
#include "agopbench/dataset.hpp"
#include "agopbench/model.hpp"

namespace agopbench {

/// Per-method aggregate over one dataset.
struct EvalRecord {
  std::string method;
  std::string scenario;
  std::string background;
  double pg = 0.0;
  double miou = 0.0;
  double energy_gt = 0.0;
  double deletion_auc = 0.0;
  double insertion_auc = 0.0;
  double ms_per_sample = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

/// Pixel indices by descending map value, ties by first row-major index.
/// Shared ordering for mIoU binarization and the deletion/insertion curves.
std::vector<std::size_t> saliency_order(const Tensor& map);

/// 1 iff the map's peak pixel lies inside the mask.
int pointing_game(const Tensor& map, const PixelMask& mask);

/// IoU of the top-k pixels (k = popcount(mask)) against the mask.
double miou(const Tensor& map, const PixelMask& mask);

/// Fraction of total attribution mass inside the mask.
double energy_gt(const Tensor& map, const PixelMask& mask);

/// 65-point softmax-probability curves for the clean input's predicted class
/// as pixels are replaced with (deletion) or revealed from (insertion) the
/// baseline image, in saliency order.
std::vector<double> deletion_curve(const AttributionModel& model, const Tensor& image,
                                   const Tensor& map, const Tensor& baseline);
std::vector<double> insertion_curve(const AttributionModel& model, const Tensor& image,
                                    const Tensor& map, const Tensor& baseline);

/// Arithmetic mean of the curve points.
double curve_auc(const std::vector<double>& curve);

double deletion_auc(const AttributionModel& model, const Tensor& image, const Tensor& map,
                    const Tensor& baseline);
double insertion_auc(const AttributionModel& model, const Tensor& image, const Tensor& map,
                     const Tensor& baseline);

/// Exact E[IoU] of a uniformly random top-k selection against a k-pixel mask
/// in d pixels: E[I/(2k-I)] with I hypergeometric.
double expected_random_iou(std::size_t d, std::size_t k);

struct SuiteConfig {
  std::vector<Method> methods;
  std::uint64_t seed = 0;
  std::string scenario;
  std::string background;
};

/// Per-method means over the dataset. Random and SmoothGrad are seeded per
/// sample index from the suite seed; the baseline image is the training-set
/// pixel mean. All-zero maps contribute 0 to the energy mean (their mass
/// ratio is undefined; the substitution is reported behavior, not an error).
std::vector<EvalRecord> evaluate_suite(const AttributionModel& model, const AgopDiagonal* diag,
                                       const std::vector<Sample>& dataset, const Tensor& baseline,
                                       const SuiteConfig& config);

void write_report_csv(const std::string& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_report_csv(const std::string& path);

}  // namespace agopbench
