#include "agopbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "agopbench/errors.hpp"

namespace agopbench {

namespace {

void check_map(const Tensor& map) {
  if (map.size() != kImagePixels) {
    throw ShapeError("saliency map has " + std::to_string(map.size()) + " values, expected " +
                     std::to_string(kImagePixels));
  }
}

void check_mask(const PixelMask& mask) {
  if (mask_popcount(mask) == 0) throw ParamError("ground-truth mask is empty");
}

double predicted_class_prob(const AttributionModel& model, const Tensor& image, std::size_t cls) {
  const std::vector<double> logits = model.forward_logits(image);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return std::exp(logits[cls] - mx) / z;
}

std::vector<double> masking_curve(const AttributionModel& model, const Tensor& image,
                                  const Tensor& map, const Tensor& baseline, bool deletion) {
  check_map(map);
  if (!image.same_shape(baseline)) throw ShapeError("baseline shape differs from image");
  const std::size_t cls = static_cast<std::size_t>(predict(model, image));
  const std::vector<std::size_t> order = saliency_order(map);
  Tensor work = deletion ? image : baseline;
  const Tensor& source = deletion ? baseline : image;
  std::vector<double> curve;
  curve.reserve(kImagePixels + 1);
  curve.push_back(predicted_class_prob(model, work, cls));
  for (std::size_t p : order) {
    work.data[p] = source.data[p];
    curve.push_back(predicted_class_prob(model, work, cls));
  }
  return curve;
}

double log_choose(std::size_t n, std::size_t k) {
  return std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(k + 1)) -
         std::lgamma(static_cast<double>(n - k + 1));
}

}  // namespace

std::vector<std::size_t> saliency_order(const Tensor& map) {
  check_map(map);
  std::vector<std::size_t> order(kImagePixels);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&map](std::size_t a, std::size_t b) { return map.data[a] > map.data[b]; });
  return order;
}

int pointing_game(const Tensor& map, const PixelMask& mask) {
  check_map(map);
  check_mask(mask);
  return mask[saliency_order(map)[0]] ? 1 : 0;
}

double miou(const Tensor& map, const PixelMask& mask) {
  check_map(map);
  check_mask(mask);
  const std::size_t k = mask_popcount(mask);
  const std::vector<std::size_t> order = saliency_order(map);
  std::size_t inter = 0;
  for (std::size_t i = 0; i < k; ++i) inter += mask[order[i]] ? 1 : 0;
  return static_cast<double>(inter) / static_cast<double>(2 * k - inter);
}

double energy_gt(const Tensor& map, const PixelMask& mask) {
  check_map(map);
  check_mask(mask);
  double inside = 0.0, total = 0.0;
  for (std::size_t p = 0; p < kImagePixels; ++p) {
    total += map.data[p];
    if (mask[p]) inside += map.data[p];
  }
  if (!(total > 0.0)) throw ParamError("energy_gt: all-zero map has no mass");
  return inside / total;
}

std::vector<double> deletion_curve(const AttributionModel& model, const Tensor& image,
                                   const Tensor& map, const Tensor& baseline) {
  return masking_curve(model, image, map, baseline, true);
}

std::vector<double> insertion_curve(const AttributionModel& model, const Tensor& image,
                                    const Tensor& map, const Tensor& baseline) {
  return masking_curve(model, image, map, baseline, false);
}

double curve_auc(const std::vector<double>& curve) {
  if (curve.empty()) throw ParamError("curve_auc: empty curve");
  return std::accumulate(curve.begin(), curve.end(), 0.0) / static_cast<double>(curve.size());
}

double deletion_auc(const AttributionModel& model, const Tensor& image, const Tensor& map,
                    const Tensor& baseline) {
  return curve_auc(deletion_curve(model, image, map, baseline));
}

double insertion_auc(const AttributionModel& model, const Tensor& image, const Tensor& map,
                     const Tensor& baseline) {
  return curve_auc(insertion_curve(model, image, map, baseline));
}

double expected_random_iou(std::size_t d, std::size_t k) {
  if (k == 0 || k > d) throw ParamError("expected_random_iou: need 0 < k <= d");
  double e = 0.0;
  for (std::size_t i = 0; i <= k; ++i) {
    if (d - k < k - i) continue;
    const double logp = log_choose(k, i) + log_choose(d - k, k - i) - log_choose(d, k);
    e += std::exp(logp) * static_cast<double>(i) / static_cast<double>(2 * k - i);
  }
  return e;
}

std::vector<EvalRecord> evaluate_suite(const AttributionModel& model, const AgopDiagonal* diag,
                                       const std::vector<Sample>& dataset, const Tensor& baseline,
                                       const SuiteConfig& config) {
  if (dataset.empty()) throw ParamError("evaluate_suite: empty dataset");
  if (config.methods.empty()) throw ParamError("evaluate_suite: no methods requested");
  for (Method m : config.methods) {
    if (method_needs_diag(m) && diag == nullptr) {
      throw ParamError("method " + method_name(m) + " requires an AGOP diag");
    }
  }
  std::vector<EvalRecord> records;
  records.reserve(config.methods.size());
  const double n = static_cast<double>(dataset.size());
  for (Method m : config.methods) {
    EvalRecord rec;
    rec.method = method_name(m);
    rec.scenario = config.scenario;
    rec.background = config.background;
    rec.n = dataset.size();
    rec.seed = config.seed;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const Sample& s = dataset[i];
      const SaliencyMap map =
          compute_attribution(m, model, s.image, diag, mix_seed(config.seed, i));
      rec.ms_per_sample += map.ms_elapsed;
      rec.pg += pointing_game(map.values, s.mask);
      rec.miou += miou(map.values, s.mask);
      const double mass = std::accumulate(map.values.data.begin(), map.values.data.end(), 0.0);
      if (mass > 0.0) rec.energy_gt += energy_gt(map.values, s.mask);
      rec.deletion_auc += deletion_auc(model, s.image, map.values, baseline);
      rec.insertion_auc += insertion_auc(model, s.image, map.values, baseline);
    }
    rec.pg /= n;
    rec.miou /= n;
    rec.energy_gt /= n;
    rec.deletion_auc /= n;
    rec.insertion_auc /= n;
    rec.ms_per_sample /= n;
    records.push_back(std::move(rec));
  }
  return records;
}

void write_report_csv(const std::string& path, const std::vector<EvalRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "method,scenario,background,pg,miou,energy_gt,deletion,insertion,ms_per_sample,n,seed\n";
  f << std::setprecision(6);
  for (const EvalRecord& r : records) {
    f << r.method << ',' << r.scenario << ',' << r.background << ',' << r.pg << ',' << r.miou
      << ',' << r.energy_gt << ',' << r.deletion_auc << ',' << r.insertion_auc << ','
      << r.ms_per_sample << ',' << r.n << ',' << r.seed << '\n';
  }
  if (!f) throw IoError("write failure on " + path);
}

std::vector<EvalRecord> read_report_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path + " for reading");
  std::string line;
  if (!std::getline(f, line)) throw FormatError("report " + path + ": empty file");
  const std::string kHeader =
      "method,scenario,background,pg,miou,energy_gt,deletion,insertion,ms_per_sample,n,seed";
  if (line != kHeader) throw FormatError("report " + path + " line 1: unexpected header");
  std::vector<EvalRecord> records;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 11) {
      throw FormatError("report " + path + " line " + std::to_string(lineno) + ": expected 11 fields, got " +
                        std::to_string(fields.size()));
    }
    try {
      EvalRecord r;
      r.method = fields[0];
      r.scenario = fields[1];
      r.background = fields[2];
      r.pg = std::stod(fields[3]);
      r.miou = std::stod(fields[4]);
      r.energy_gt = std::stod(fields[5]);
      r.deletion_auc = std::stod(fields[6]);
      r.insertion_auc = std::stod(fields[7]);
      r.ms_per_sample = std::stod(fields[8]);
      r.n = static_cast<std::size_t>(std::stoull(fields[9]));
      r.seed = std::stoull(fields[10]);
      records.push_back(std::move(r));
    } catch (const std::exception&) {
      throw FormatError("report " + path + " line " + std::to_string(lineno) + ": malformed numeric field");
    }
  }
  return records;
}

}  // namespace agopbench
