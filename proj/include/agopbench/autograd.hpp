#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "agopbench/tensor.hpp"

namespace agopbench {

class Tape;

/// Per-node gradients produced by one reverse sweep. Indexed by the node ids
/// of the tape that produced it; leaves that do not influence the output get
/// zero tensors of their shape.
class Gradients {
 public:
  const Tensor& at(std::size_t node) const { return grads_.at(node); }

 private:
  friend class Tape;
  std::vector<Tensor> grads_;
};

/// Records primitive applications in topological order and replays them in
/// reverse to accumulate exact gradients. One tape per forward pass; the tape
/// itself is immutable during backward, so repeated backward calls (possibly
/// from different output nodes) give identical results.
class Tape {
 public:
  using NodeId = std::size_t;

  /// Copies a tensor onto the tape as a differentiable leaf.
  NodeId leaf(Tensor value);

  /// Cross-correlation, stride 1, zero padding.
  /// input [C_in,H,W], kernel [C_out,C_in,kH,kW], bias [C_out].
  NodeId conv2d(NodeId input, NodeId kernel, NodeId bias, std::size_t padding);

  /// Max pooling with window k and the given stride; windows that would
  /// overrun are dropped. Ties within a window go to the first position in
  /// row-major order, and backward routes the gradient there.
  NodeId maxpool2d(NodeId input, std::size_t k, std::size_t stride);

  NodeId relu(NodeId input);

  /// weight [out,d] times input [d] plus bias [out].
  NodeId dense(NodeId input, NodeId weight, NodeId bias);

  /// -log softmax(logits)[label], max-subtracted for stability.
  NodeId cross_entropy_loss(NodeId logits, std::size_t label);

  /// Selects one element as a scalar (used to differentiate a single logit).
  NodeId pick(NodeId input, std::size_t index);

  NodeId sum(NodeId input);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId input, double factor);
  NodeId reshape(NodeId input, std::vector<std::size_t> new_shape);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Reverse-mode sweep from a scalar output. Does not mutate the tape.
  Gradients backward(NodeId output) const;

 private:
  enum class Op { kLeaf, kConv2d, kMaxPool, kRelu, kDense, kCrossEntropy, kPick, kSum, kAdd, kScale, kReshape };

  struct ConvAux {
    std::size_t padding;
  };
  struct PoolAux {
    std::size_t k, stride;
    std::vector<std::size_t> argmax;  // flat input index per output cell
  };
  struct CeAux {
    std::size_t label;
    std::vector<double> softmax;
  };
  struct PickAux {
    std::size_t index;
  };
  struct ScaleAux {
    double factor;
  };
  using Aux = std::variant<std::monostate, ConvAux, PoolAux, CeAux, PickAux, ScaleAux>;

  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    Aux aux;
    Tensor value;
  };

  NodeId push(Node node);
  const Tensor& operand(NodeId id, std::size_t slot) const;

  std::vector<Node> nodes_;
};

}  // namespace agopbench
