#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agopbench/dataset.hpp"
#include "agopbench/model.hpp"

namespace agopbench {

struct TrainConfig {
  std::size_t epochs = 100;
  double lr0 = 1e-3;
  double weight_decay = 1e-4;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t snapshot_every = 100;
  bool only_correct = true;

  void validate() const;
};

/// Cosine annealing from lr0 at step 0 to 0 at total_steps.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

/// Classic Adam with L2 folded into the gradient (not decoupled).
/// beta1=0.9, beta2=0.999, eps=1e-8, bias correction on.
class AdamState {
 public:
  explicit AdamState(const std::vector<Tensor*>& params);

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, double lr,
            double weight_decay);

  std::size_t t() const { return t_; }

 private:
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t t_ = 0;
};

/// Observer driven by the training loop. observe() runs after the forward
/// pass that produced the batch predictions and before the optimizer step;
/// snapshot() fires on the configured step cadence. Implementations must not
/// touch model parameters.
class TrainHook {
 public:
  virtual ~TrainHook() = default;
  virtual void observe(const AttributionModel& model, const std::vector<const Sample*>& batch) = 0;
  virtual void snapshot(std::size_t step) = 0;
};

struct EpochStats {
  std::size_t epoch;  // 1-based
  double train_acc;
  double test_acc;
  double lr;  // at the epoch's last optimizer step
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t total_steps = 0;
};

/// Runs the full optimization loop in place. The parameter trajectory does
/// not depend on whether a hook is attached.
TrainResult train(Cnn8by8& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& test_set, const TrainConfig& config,
                  TrainHook* hook = nullptr);

double evaluate_accuracy(const AttributionModel& model, const std::vector<Sample>& dataset);

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace agopbench
