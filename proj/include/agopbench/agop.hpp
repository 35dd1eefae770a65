#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agopbench/dataset.hpp"
#include "agopbench/model.hpp"
#include "agopbench/train.hpp"

namespace agopbench {

/// Mean of elementwise-squared input-gradients of the predicted-class logit,
/// diag(M)[j] = (1/n) sum_s (d f_yhat(s) / d x_j)^2.
struct AgopDiagonal {
  std::vector<double> values;
  std::uint64_t n_acc = 0;
  std::uint64_t step = 0;
  bool only_correct = true;
};

/// Running sum of squared gradient vectors; the pure-arithmetic core of the
/// hook, shared by the post-hoc path.
class AgopAccumulator {
 public:
  explicit AgopAccumulator(std::size_t d);

  void add(const std::vector<double>& grad);
  std::uint64_t n_acc() const { return n_; }
  std::size_t dim() const { return sum_.size(); }

  /// Current mean; errors if nothing was accumulated.
  std::vector<double> mean() const;

 private:
  std::vector<double> sum_;
  std::uint64_t n_ = 0;
};

/// Training-time hook: per sample, predicts from a fresh forward pass of the
/// current model, optionally skips misclassified samples, and accumulates the
/// squared gradient of the predicted logit w.r.t. the input. Never touches
/// model parameters.
class AgopHook : public TrainHook {
 public:
  /// snapshot_dir empty keeps snapshots in memory only.
  explicit AgopHook(bool only_correct, std::string snapshot_dir = "");

  void observe(const AttributionModel& model, const std::vector<const Sample*>& batch) override;
  void snapshot(std::size_t step) override;

  /// Seals the hook and returns the mean. Further observe/finalize errors.
  AgopDiagonal finalize(std::size_t step);

  const std::vector<AgopDiagonal>& snapshots() const { return snapshots_; }
  std::uint64_t n_acc() const { return acc_.n_acc(); }

 private:
  AgopDiagonal current(std::size_t step) const;

  AgopAccumulator acc_;
  bool only_correct_;
  std::string snapshot_dir_;
  bool finalized_ = false;
  std::vector<AgopDiagonal> snapshots_;
};

/// One full pass at a fixed model; same math as running the hook over the
/// dataset, and the brute-force oracle for it.
AgopDiagonal posthoc_diag(const AttributionModel& model, const std::vector<Sample>& dataset,
                          bool only_correct);

/// Gradient of logit `cls` w.r.t. the input image, flattened row-major.
std::vector<double> input_gradient(const AttributionModel& model, const Tensor& image,
                                   std::size_t cls);

std::string snapshot_filename(std::size_t step);

void write_diag(const std::string& path, const AgopDiagonal& diag);
AgopDiagonal read_diag(const std::string& path);

}  // namespace agopbench
