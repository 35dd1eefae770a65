#include "agopbench/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "agopbench/errors.hpp"

namespace agopbench {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ParamError("epochs must be >= 1");
  if (!(lr0 > 0.0)) throw ParamError("lr0 must be positive");
  if (weight_decay < 0.0) throw ParamError("weight_decay must be non-negative");
  if (batch_size < 1) throw ParamError("batch_size must be >= 1");
  if (snapshot_every < 1) throw ParamError("snapshot_every must be >= 1");
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
  if (total_steps == 0) throw ParamError("cosine_lr: total_steps must be positive");
  if (step > total_steps) throw ParamError("cosine_lr: step exceeds total_steps");
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * (1.0 + std::cos(std::numbers::pi * frac)) / 2.0;
}

AdamState::AdamState(const std::vector<Tensor*>& params) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor* p : params) {
    m_.push_back(Tensor::zeros(p->shape));
    v_.push_back(Tensor::zeros(p->shape));
  }
}

void AdamState::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                     double lr, double weight_decay) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("adam_step: parameter/gradient count mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (!p.same_shape(grads[i])) throw ShapeError("adam_step: gradient shape mismatch");
    for (std::size_t j = 0; j < p.data.size(); ++j) {
      const double g = grads[i].data[j] + weight_decay * p.data[j];
      m_[i].data[j] = kBeta1 * m_[i].data[j] + (1.0 - kBeta1) * g;
      v_[i].data[j] = kBeta2 * v_[i].data[j] + (1.0 - kBeta2) * g * g;
      const double mhat = m_[i].data[j] / bc1;
      const double vhat = v_[i].data[j] / bc2;
      p.data[j] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

TrainResult train(Cnn8by8& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& test_set, const TrainConfig& config,
                  TrainHook* hook) {
  config.validate();
  if (train_set.empty() || test_set.empty()) throw ParamError("train: datasets must be nonempty");

  const std::size_t n = train_set.size();
  const std::size_t batches_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.epochs * batches_per_epoch;

  std::vector<Tensor*> params = model.parameters();
  AdamState adam(params);
  std::mt19937_64 rng(config.seed);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.total_steps = total_steps;
  result.history.reserve(config.epochs);

  std::size_t step = 0;
  double last_lr = config.lr0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(begin + config.batch_size, n);
      const std::size_t bsz = end - begin;

      // One tape for the batch: parameters enter once, each sample's loss is
      // chained into a mean, and a single backward yields summed gradients.
      Tape tape;
      const std::vector<Tape::NodeId> pnodes = model.param_leaves(tape);
      Tape::NodeId loss_sum = 0;
      bool have_loss = false;
      std::vector<const Sample*> batch;
      batch.reserve(bsz);
      for (std::size_t i = begin; i < end; ++i) {
        const Sample& s = train_set[order[i]];
        batch.push_back(&s);
        const TraceHandles h = model.trace_with_params(tape, s.image, pnodes);
        const Tape::NodeId loss = tape.cross_entropy_loss(h.logits, static_cast<std::size_t>(s.label));
        loss_sum = have_loss ? tape.add(loss_sum, loss) : loss;
        have_loss = true;
      }
      const Tape::NodeId loss_mean = tape.scale(loss_sum, 1.0 / static_cast<double>(bsz));
      if (!std::isfinite(tape.value(loss_mean).data[0])) {
        throw StateError("training diverged (non-finite loss) at step " + std::to_string(step + 1));
      }
      const Gradients grads = tape.backward(loss_mean);

      if (hook) {
        try {
          hook->observe(model, batch);
        } catch (const std::exception& e) {
          throw StateError("AGOP hook failed at step " + std::to_string(step + 1) + ": " + e.what());
        }
      }

      last_lr = cosine_lr(step, total_steps, config.lr0);
      std::vector<Tensor> pgrads;
      pgrads.reserve(pnodes.size());
      for (Tape::NodeId id : pnodes) pgrads.push_back(grads.at(id));
      adam.step(params, pgrads, last_lr, config.weight_decay);
      ++step;

      if (hook && step % config.snapshot_every == 0) {
        try {
          hook->snapshot(step);
        } catch (const std::exception& e) {
          throw StateError("AGOP snapshot failed at step " + std::to_string(step) + ": " + e.what());
        }
      }
    }
    result.history.push_back({epoch, evaluate_accuracy(model, train_set),
                              evaluate_accuracy(model, test_set), last_lr});
  }
  return result;
}

double evaluate_accuracy(const AttributionModel& model, const std::vector<Sample>& dataset) {
  if (dataset.empty()) throw ParamError("evaluate_accuracy: empty dataset");
  std::size_t correct = 0;
  for (const Sample& s : dataset) {
    if (predict(model, s.image) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "epoch,train_acc,test_acc,lr\n";
  f.precision(10);
  for (const EpochStats& e : history) {
    f << e.epoch << ',' << e.train_acc << ',' << e.test_acc << ',' << e.lr << '\n';
  }
  if (!f) throw IoError("write failure on " + path);
}

}  // namespace agopbench
