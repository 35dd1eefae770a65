#include "agopbench/attribution.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "agopbench/dataset.hpp"
#include "agopbench/errors.hpp"
#include "binio.hpp"

namespace agopbench {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::size_t argmax_logit(const std::vector<double>& logits) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.size(); ++c) {
    if (logits[c] > logits[best]) best = c;
  }
  return best;
}

Tensor abs_map(const std::vector<double>& grad) {
  Tensor t = Tensor::zeros({kImageSide, kImageSide});
  for (std::size_t i = 0; i < kImagePixels; ++i) t.data[i] = std::abs(grad[i]);
  return t;
}

void check_diag_dim(const AgopDiagonal& diag) {
  if (diag.values.size() != kImagePixels) {
    throw ParamError("diag dimension " + std::to_string(diag.values.size()) + ", expected " +
                     std::to_string(kImagePixels));
  }
}

/// Shared CAM core. plusplus selects the alpha-weighted channel importances
/// of GradCAM++ (Chattopadhay et al., WACV 2018, eq. 19 with the power-series
/// approximation alpha = g^2 / (2 g^2 + sum(A) g^3), alpha = 0 where that
/// denominator vanishes); otherwise plain spatial-mean weights.
SaliencyMap cam_common(const AttributionModel& model, const Tensor& image, bool plusplus,
                       Method method) {
  const auto t0 = Clock::now();
  Tape tape;
  const TraceHandles h = model.trace(tape, image);
  if (!h.gradcam_target) throw ParamError("model exposes no CAM target layer");
  const std::size_t pred = argmax_logit(tape.value(h.logits).data);
  const Gradients g = tape.backward(tape.pick(h.logits, pred));
  const Tensor& act = tape.value(*h.gradcam_target);
  const Tensor& grad = g.at(*h.gradcam_target);
  const std::size_t ch = act.shape[0], fh = act.shape[1], fw = act.shape[2];
  const std::size_t spatial = fh * fw;

  std::vector<double> weights(ch, 0.0);
  for (std::size_t c = 0; c < ch; ++c) {
    if (!plusplus) {
      double mean = 0.0;
      for (std::size_t p = 0; p < spatial; ++p) mean += grad.data[c * spatial + p];
      weights[c] = mean / static_cast<double>(spatial);
      continue;
    }
    double act_sum = 0.0;
    for (std::size_t p = 0; p < spatial; ++p) act_sum += act.data[c * spatial + p];
    double w = 0.0;
    for (std::size_t p = 0; p < spatial; ++p) {
      const double gv = grad.data[c * spatial + p];
      const double denom = 2.0 * gv * gv + act_sum * gv * gv * gv;
      const double alpha = denom != 0.0 ? gv * gv / denom : 0.0;
      w += alpha * std::max(gv, 0.0);
    }
    weights[c] = w;
  }

  Tensor cam = Tensor::zeros({fh, fw});
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t p = 0; p < spatial; ++p) cam.data[p] += weights[c] * act.data[c * spatial + p];
  }
  for (double& v : cam.data) v = std::max(v, 0.0);

  SaliencyMap out;
  out.values = bilinear_upsample(cam, kImageSide, kImageSide);
  out.method = method_name(method);
  out.ms_elapsed = ms_since(t0);
  return out;
}

}  // namespace

Method parse_method(const std::string& name) {
  for (Method m : all_methods()) {
    if (method_name(m) == name) return m;
  }
  std::string valid;
  for (Method m : all_methods()) {
    if (!valid.empty()) valid += "|";
    valid += method_name(m);
  }
  throw ParamError("unknown method \"" + name + "\" (expected " + valid + ")");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::kVanillaGrad: return "vanilla_grad";
    case Method::kIntegratedGradients: return "integrated_gradients";
    case Method::kSmoothGrad: return "smoothgrad";
    case Method::kGradCam: return "gradcam";
    case Method::kGradCamPp: return "gradcam_pp";
    case Method::kAgopLocal: return "agop_local";
    case Method::kAgopWeighted: return "agop_weighted";
    case Method::kAgopGlobal: return "agop_global";
    case Method::kRandom: return "random";
  }
  return "?";
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> kAll = {
      Method::kVanillaGrad, Method::kIntegratedGradients, Method::kSmoothGrad,
      Method::kGradCam,     Method::kGradCamPp,           Method::kAgopLocal,
      Method::kAgopWeighted, Method::kAgopGlobal,         Method::kRandom,
  };
  return kAll;
}

bool method_needs_diag(Method m) {
  return m == Method::kAgopWeighted || m == Method::kAgopGlobal;
}

SaliencyMap vanilla_grad(const AttributionModel& model, const Tensor& image) {
  const auto t0 = Clock::now();
  Tape tape;
  const TraceHandles h = model.trace(tape, image);
  const std::size_t pred = argmax_logit(tape.value(h.logits).data);
  const Gradients g = tape.backward(tape.pick(h.logits, pred));
  SaliencyMap out;
  out.values = abs_map(g.at(h.input).data);
  out.method = method_name(Method::kVanillaGrad);
  out.ms_elapsed = ms_since(t0);
  return out;
}

std::vector<double> integrated_gradients_signed(const AttributionModel& model, const Tensor& image,
                                                std::size_t steps) {
  if (steps < 1) throw ParamError("integrated_gradients: steps must be >= 1");
  const std::size_t pred = argmax_logit(model.forward_logits(image));
  std::vector<double> grad_sum(image.size(), 0.0);
  for (std::size_t k = 1; k <= steps; ++k) {
    Tensor scaled = image;
    const double t = static_cast<double>(k) / static_cast<double>(steps);
    for (double& v : scaled.data) v *= t;
    const std::vector<double> g = input_gradient(model, scaled, pred);
    for (std::size_t i = 0; i < g.size(); ++i) grad_sum[i] += g[i];
  }
  std::vector<double> signed_ig(image.size());
  for (std::size_t i = 0; i < signed_ig.size(); ++i) {
    signed_ig[i] = image.data[i] * grad_sum[i] / static_cast<double>(steps);
  }
  return signed_ig;
}

SaliencyMap integrated_gradients(const AttributionModel& model, const Tensor& image,
                                 std::size_t steps) {
  const auto t0 = Clock::now();
  const std::vector<double> signed_ig = integrated_gradients_signed(model, image, steps);
  SaliencyMap out;
  out.values = abs_map(signed_ig);
  out.method = method_name(Method::kIntegratedGradients);
  out.ms_elapsed = ms_since(t0);
  return out;
}

SaliencyMap smoothgrad(const AttributionModel& model, const Tensor& image, std::size_t k,
                       double sigma, std::uint64_t seed) {
  if (k < 1) throw ParamError("smoothgrad: k must be >= 1");
  if (sigma < 0.0) throw ParamError("smoothgrad: sigma must be >= 0");
  const auto t0 = Clock::now();
  const std::size_t pred = argmax_logit(model.forward_logits(image));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> grad_sum(image.size(), 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    Tensor noisy = image;
    if (sigma > 0.0) {
      for (double& v : noisy.data) v += sigma * gauss(rng);
    }
    const std::vector<double> g = input_gradient(model, noisy, pred);
    for (std::size_t j = 0; j < g.size(); ++j) grad_sum[j] += g[j];
  }
  for (double& v : grad_sum) v /= static_cast<double>(k);
  SaliencyMap out;
  out.values = abs_map(grad_sum);
  out.method = method_name(Method::kSmoothGrad);
  out.ms_elapsed = ms_since(t0);
  return out;
}

SaliencyMap gradcam(const AttributionModel& model, const Tensor& image) {
  return cam_common(model, image, false, Method::kGradCam);
}

SaliencyMap gradcam_pp(const AttributionModel& model, const Tensor& image) {
  return cam_common(model, image, true, Method::kGradCamPp);
}

SaliencyMap agop_local(const AttributionModel& model, const Tensor& image) {
  const auto t0 = Clock::now();
  const std::size_t pred = argmax_logit(model.forward_logits(image));
  SaliencyMap out;
  out.values = abs_map(input_gradient(model, image, pred));
  out.method = method_name(Method::kAgopLocal);
  out.ms_elapsed = ms_since(t0);
  return out;
}

SaliencyMap agop_weighted(const AttributionModel& model, const Tensor& image,
                          const AgopDiagonal& diag) {
  check_diag_dim(diag);
  const double max_diag = *std::max_element(diag.values.begin(), diag.values.end());
  if (!(max_diag > 0.0)) throw ParamError("agop_weighted: all-zero diag cannot be normalized");
  const auto t0 = Clock::now();
  Tape tape;
  const TraceHandles h = model.trace(tape, image);
  const std::size_t pred = argmax_logit(tape.value(h.logits).data);
  const Gradients g = tape.backward(tape.pick(h.logits, pred));
  SaliencyMap out;
  out.values = abs_map(g.at(h.input).data);
  for (std::size_t i = 0; i < kImagePixels; ++i) {
    out.values.data[i] *= std::sqrt(diag.values[i] / max_diag);
  }
  out.method = method_name(Method::kAgopWeighted);
  out.ms_elapsed = ms_since(t0);
  return out;
}

SaliencyMap agop_global(const AgopDiagonal& diag) {
  check_diag_dim(diag);
  const auto t0 = Clock::now();
  SaliencyMap out;
  out.values = Tensor({kImageSide, kImageSide}, diag.values);
  out.method = method_name(Method::kAgopGlobal);
  out.ms_elapsed = ms_since(t0);
  return out;
}

SaliencyMap random_baseline(std::uint64_t seed) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  SaliencyMap out;
  out.values = Tensor::zeros({kImageSide, kImageSide});
  for (double& v : out.values.data) v = dist(rng);
  out.method = method_name(Method::kRandom);
  out.ms_elapsed = ms_since(t0);
  return out;
}

SaliencyMap compute_attribution(Method m, const AttributionModel& model, const Tensor& image,
                                const AgopDiagonal* diag, std::uint64_t seed) {
  if (method_needs_diag(m) && diag == nullptr) {
    throw ParamError("method " + method_name(m) + " requires an AGOP diag");
  }
  switch (m) {
    case Method::kVanillaGrad: return vanilla_grad(model, image);
    case Method::kIntegratedGradients: return integrated_gradients(model, image);
    case Method::kSmoothGrad: return smoothgrad(model, image, 50, 0.15, seed);
    case Method::kGradCam: return gradcam(model, image);
    case Method::kGradCamPp: return gradcam_pp(model, image);
    case Method::kAgopLocal: return agop_local(model, image);
    case Method::kAgopWeighted: return agop_weighted(model, image, *diag);
    case Method::kAgopGlobal: return agop_global(*diag);
    case Method::kRandom: return random_baseline(seed);
  }
  throw ParamError("unhandled method");
}

Tensor bilinear_upsample(const Tensor& in, std::size_t out_h, std::size_t out_w) {
  if (in.rank() != 2) throw ShapeError("bilinear_upsample: expected a rank-2 map");
  const std::size_t ih = in.shape[0], iw = in.shape[1];
  Tensor out = Tensor::zeros({out_h, out_w});
  for (std::size_t i = 0; i < out_h; ++i) {
    const double sy = out_h > 1 && ih > 1
                          ? static_cast<double>(i) * static_cast<double>(ih - 1) / static_cast<double>(out_h - 1)
                          : 0.0;
    const std::size_t y0 = std::min(static_cast<std::size_t>(sy), ih - 1);
    const std::size_t y1 = std::min(y0 + 1, ih - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t j = 0; j < out_w; ++j) {
      const double sx = out_w > 1 && iw > 1
                            ? static_cast<double>(j) * static_cast<double>(iw - 1) / static_cast<double>(out_w - 1)
                            : 0.0;
      const std::size_t x0 = std::min(static_cast<std::size_t>(sx), iw - 1);
      const std::size_t x1 = std::min(x0 + 1, iw - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = in.data[y0 * iw + x0] * (1.0 - fx) + in.data[y0 * iw + x1] * fx;
      const double bot = in.data[y1 * iw + x0] * (1.0 - fx) + in.data[y1 * iw + x1] * fx;
      out.data[i * out_w + j] = top * (1.0 - fy) + bot * fy;
    }
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the combined state.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void write_pgm(const std::string& path, const Tensor& map) {
  if (map.size() != kImagePixels) throw ShapeError("write_pgm: expected an 8x8 map");
  const double lo = *std::min_element(map.data.begin(), map.data.end());
  const double hi = *std::max_element(map.data.begin(), map.data.end());
  std::string buf = "P5\n8 8\n255\n";
  for (double v : map.data) {
    const double scaled = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    buf.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(scaled * 255.0))));
  }
  binio::write_file_atomic(path, buf);
}

}  // namespace agopbench
