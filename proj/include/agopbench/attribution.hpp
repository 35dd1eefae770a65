#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agopbench/agop.hpp"
#include "agopbench/model.hpp"
#include "agopbench/tensor.hpp"

namespace agopbench {

/// Non-negative per-pixel relevance scores for one prediction.
struct SaliencyMap {
  Tensor values;  // [8,8]
  std::string method;
  double ms_elapsed = 0.0;  // wall-clock for the attribution call itself
};

enum class Method {
  kVanillaGrad,
  kIntegratedGradients,
  kSmoothGrad,
  kGradCam,
  kGradCamPp,
  kAgopLocal,
  kAgopWeighted,
  kAgopGlobal,
  kRandom,
};

Method parse_method(const std::string& name);
std::string method_name(Method m);
const std::vector<Method>& all_methods();
bool method_needs_diag(Method m);

SaliencyMap vanilla_grad(const AttributionModel& model, const Tensor& image);

/// Right-endpoint Riemann sum over the straight path from the zero baseline,
/// k = 1..steps; the signed per-pixel values before the absolute value are
/// exposed for completeness checks.
std::vector<double> integrated_gradients_signed(const AttributionModel& model, const Tensor& image,
                                                std::size_t steps);
SaliencyMap integrated_gradients(const AttributionModel& model, const Tensor& image,
                                 std::size_t steps = 50);

/// Mean gradient over k Gaussian-perturbed copies; the explained class is
/// fixed from the clean input's argmax so perturbations cannot flip it.
SaliencyMap smoothgrad(const AttributionModel& model, const Tensor& image, std::size_t k = 50,
                       double sigma = 0.15, std::uint64_t seed = 0);

SaliencyMap gradcam(const AttributionModel& model, const Tensor& image);
SaliencyMap gradcam_pp(const AttributionModel& model, const Tensor& image);

SaliencyMap agop_local(const AttributionModel& model, const Tensor& image);
SaliencyMap agop_weighted(const AttributionModel& model, const Tensor& image,
                          const AgopDiagonal& diag);
SaliencyMap agop_global(const AgopDiagonal& diag);

SaliencyMap random_baseline(std::uint64_t seed);

/// Dispatch by method; diag may be null for methods that do not use it.
SaliencyMap compute_attribution(Method m, const AttributionModel& model, const Tensor& image,
                                const AgopDiagonal* diag, std::uint64_t seed);

/// Corner-aligned bilinear resize of a [H,W] map.
Tensor bilinear_upsample(const Tensor& in, std::size_t out_h, std::size_t out_w);

/// Decorrelates per-sample seeds derived from one run seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

/// 8-bit binary PGM, min-max scaled per map.
void write_pgm(const std::string& path, const Tensor& map);

}  // namespace agopbench
