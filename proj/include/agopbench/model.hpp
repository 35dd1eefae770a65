#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "agopbench/autograd.hpp"
#include "agopbench/tensor.hpp"

namespace agopbench {

/// Node handles into a tape holding one forward pass.
struct TraceHandles {
  Tape::NodeId input;
  Tape::NodeId logits;
  /// Feature-map node for CAM-style methods; absent for models without a
  /// designated spatial layer.
  std::optional<Tape::NodeId> gradcam_target;
};

/// A classifier whose forward pass can be recorded on a tape, so attribution
/// methods can differentiate logits w.r.t. the input image.
class AttributionModel {
 public:
  virtual ~AttributionModel() = default;

  /// Records the forward pass for one [1,8,8] image and returns the handles.
  virtual TraceHandles trace(Tape& tape, const Tensor& image) const = 0;

  /// Logit vector for one image. The default records a throwaway tape;
  /// concrete models may override with a cheaper direct evaluation.
  virtual std::vector<double> forward_logits(const Tensor& image) const;
};

/// Argmax prediction, ties toward the lower class index.
int predict(const AttributionModel& model, const Tensor& image);

struct ConvBlock {
  Tensor kernel;  // [c_out, c_in, kh, kw]
  Tensor bias;    // [c_out]
  std::size_t padding;
  std::size_t pool_k;
  std::size_t pool_stride;
};

/// Four conv+relu+maxpool blocks and a dense head, 280 parameters.
/// Spatial trace on a [1,8,8] input: 8 -> 6 -> 3 -> 2 -> 1 -> 1 -> 1, then a
/// 4-feature flatten into 2 logits. The first block's pooled output ([8,3,3])
/// is the CAM target layer.
class Cnn8by8 : public AttributionModel {
 public:
  std::array<ConvBlock, 4> blocks;
  Tensor dense_weight;  // [2,4]
  Tensor dense_bias;    // [2]

  TraceHandles trace(Tape& tape, const Tensor& image) const override;
  std::vector<double> forward_logits(const Tensor& image) const override;

  /// Puts every parameter on the tape as a leaf, aligned with parameters().
  std::vector<Tape::NodeId> param_leaves(Tape& tape) const;

  /// Forward pass against existing parameter leaves, so a whole batch can
  /// share them on one tape and a single backward yields summed parameter
  /// gradients. Returns the same handles as trace().
  TraceHandles trace_with_params(Tape& tape, const Tensor& image,
                                 const std::vector<Tape::NodeId>& params) const;

  /// Parameter tensors in serialization order (kernel/bias per block, then
  /// the dense pair). The optimizer walks this list.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;
};

/// Deterministic initialization: weights uniform in +-1/sqrt(fan_in), drawn
/// per tensor in serialization order; biases zero.
Cnn8by8 build_cnn8by8(std::uint64_t seed);

void save_model(const std::string& path, const Cnn8by8& model);
Cnn8by8 load_model(const std::string& path);

}  // namespace agopbench
