#include "agopbench/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace agopbench {

namespace {

void check_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) +
                     ", got shape " + shape_str(t.shape));
  }
}

}  // namespace

Tape::NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

const Tensor& Tape::operand(NodeId id, std::size_t slot) const {
  return nodes_.at(nodes_.at(id).inputs.at(slot)).value;
}

Tape::NodeId Tape::leaf(Tensor value) {
  return push({Op::kLeaf, {}, std::monostate{}, std::move(value)});
}

Tape::NodeId Tape::conv2d(NodeId input, NodeId kernel, NodeId bias, std::size_t padding) {
  const Tensor& in = value(input);
  const Tensor& k = value(kernel);
  const Tensor& b = value(bias);
  check_rank(in, 3, "conv2d input");
  check_rank(k, 4, "conv2d kernel");
  check_rank(b, 1, "conv2d bias");
  const std::size_t c_in = in.shape[0], h = in.shape[1], w = in.shape[2];
  const std::size_t c_out = k.shape[0], kh = k.shape[2], kw = k.shape[3];
  if (k.shape[1] != c_in) {
    throw ShapeError("conv2d channel axis mismatch: input has " + std::to_string(c_in) +
                     " channels, kernel expects " + std::to_string(k.shape[1]));
  }
  if (b.shape[0] != c_out) {
    throw ShapeError("conv2d bias axis mismatch: kernel has " + std::to_string(c_out) +
                     " output channels, bias has " + std::to_string(b.shape[0]));
  }
  if (kh > h + 2 * padding) {
    throw ShapeError("conv2d kernel height " + std::to_string(kh) +
                     " exceeds padded input height " + std::to_string(h + 2 * padding));
  }
  if (kw > w + 2 * padding) {
    throw ShapeError("conv2d kernel width " + std::to_string(kw) +
                     " exceeds padded input width " + std::to_string(w + 2 * padding));
  }
  const std::size_t oh = h + 2 * padding - kh + 1;
  const std::size_t ow = w + 2 * padding - kw + 1;

  Tensor out = Tensor::zeros({c_out, oh, ow});
  for (std::size_t co = 0; co < c_out; ++co) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = b.data[co];
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          for (std::size_t u = 0; u < kh; ++u) {
            const long long y = static_cast<long long>(i + u) - static_cast<long long>(padding);
            if (y < 0 || y >= static_cast<long long>(h)) continue;
            for (std::size_t v = 0; v < kw; ++v) {
              const long long x = static_cast<long long>(j + v) - static_cast<long long>(padding);
              if (x < 0 || x >= static_cast<long long>(w)) continue;
              acc += in.data[(ci * h + y) * w + x] * k.data[((co * c_in + ci) * kh + u) * kw + v];
            }
          }
        }
        out.at3(co, i, j) = acc;
      }
    }
  }
  return push({Op::kConv2d, {input, kernel, bias}, ConvAux{padding}, std::move(out)});
}

Tape::NodeId Tape::maxpool2d(NodeId input, std::size_t k, std::size_t stride) {
  if (k < 1) throw ParamError("maxpool2d window must be >= 1");
  if (stride < 1) throw ParamError("maxpool2d stride must be >= 1");
  const Tensor& in = value(input);
  check_rank(in, 3, "maxpool2d input");
  const std::size_t c = in.shape[0], h = in.shape[1], w = in.shape[2];
  if (k > h || k > w) {
    throw ShapeError("maxpool2d window " + std::to_string(k) + " exceeds input " +
                     shape_str(in.shape));
  }
  const std::size_t oh = (h - k) / stride + 1;
  const std::size_t ow = (w - k) / stride + 1;

  Tensor out = Tensor::zeros({c, oh, ow});
  std::vector<std::size_t> argmax(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (ch * h + i * stride) * w + j * stride;
        double best_v = in.data[best];
        for (std::size_t u = 0; u < k; ++u) {
          for (std::size_t v = 0; v < k; ++v) {
            const std::size_t idx = (ch * h + i * stride + u) * w + j * stride + v;
            if (in.data[idx] > best_v) {  // strict: ties stay at first position
              best_v = in.data[idx];
              best = idx;
            }
          }
        }
        out.at3(ch, i, j) = best_v;
        argmax[(ch * oh + i) * ow + j] = best;
      }
    }
  }
  return push({Op::kMaxPool, {input}, PoolAux{k, stride, std::move(argmax)}, std::move(out)});
}

Tape::NodeId Tape::relu(NodeId input) {
  Tensor out = value(input);
  for (double& x : out.data) x = std::max(0.0, x);
  return push({Op::kRelu, {input}, std::monostate{}, std::move(out)});
}

Tape::NodeId Tape::dense(NodeId input, NodeId weight, NodeId bias) {
  const Tensor& in = value(input);
  const Tensor& w = value(weight);
  const Tensor& b = value(bias);
  check_rank(in, 1, "dense input");
  check_rank(w, 2, "dense weight");
  check_rank(b, 1, "dense bias");
  const std::size_t d = in.shape[0], out_dim = w.shape[0];
  if (w.shape[1] != d) {
    throw ShapeError("dense input axis mismatch: weight expects " + std::to_string(w.shape[1]) +
                     ", input has " + std::to_string(d));
  }
  if (b.shape[0] != out_dim) {
    throw ShapeError("dense bias axis mismatch: weight yields " + std::to_string(out_dim) +
                     ", bias has " + std::to_string(b.shape[0]));
  }
  Tensor out = Tensor::zeros({out_dim});
  for (std::size_t o = 0; o < out_dim; ++o) {
    double acc = b.data[o];
    for (std::size_t i = 0; i < d; ++i) acc += w.data[o * d + i] * in.data[i];
    out.data[o] = acc;
  }
  return push({Op::kDense, {input, weight, bias}, std::monostate{}, std::move(out)});
}

Tape::NodeId Tape::cross_entropy_loss(NodeId logits, std::size_t label) {
  const Tensor& l = value(logits);
  check_rank(l, 1, "cross_entropy logits");
  const std::size_t n = l.shape[0];
  if (label >= n) {
    throw ParamError("cross_entropy label " + std::to_string(label) + " out of range for " +
                     std::to_string(n) + " classes");
  }
  const double m = *std::max_element(l.data.begin(), l.data.end());
  double z = 0.0;
  std::vector<double> soft(n);
  for (std::size_t i = 0; i < n; ++i) {
    soft[i] = std::exp(l.data[i] - m);
    z += soft[i];
  }
  for (double& s : soft) s /= z;
  const double loss = std::log(z) + m - l.data[label];
  return push({Op::kCrossEntropy, {logits}, CeAux{label, std::move(soft)}, Tensor::scalar(loss)});
}

Tape::NodeId Tape::pick(NodeId input, std::size_t index) {
  const Tensor& in = value(input);
  if (index >= in.size()) {
    throw ParamError("pick index " + std::to_string(index) + " out of range for size " +
                     std::to_string(in.size()));
  }
  return push({Op::kPick, {input}, PickAux{index}, Tensor::scalar(in.data[index])});
}

Tape::NodeId Tape::sum(NodeId input) {
  const Tensor& in = value(input);
  double acc = 0.0;
  for (double x : in.data) acc += x;
  return push({Op::kSum, {input}, std::monostate{}, Tensor::scalar(acc)});
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) {
    throw ShapeError("add shape mismatch: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += tb.data[i];
  return push({Op::kAdd, {a, b}, std::monostate{}, std::move(out)});
}

Tape::NodeId Tape::scale(NodeId input, double factor) {
  Tensor out = value(input);
  for (double& x : out.data) x *= factor;
  return push({Op::kScale, {input}, ScaleAux{factor}, std::move(out)});
}

Tape::NodeId Tape::reshape(NodeId input, std::vector<std::size_t> new_shape) {
  const Tensor& in = value(input);
  if (shape_numel(new_shape) != in.size()) {
    throw ShapeError("reshape to " + shape_str(new_shape) + " changes element count of " +
                     shape_str(in.shape));
  }
  Tensor out(std::move(new_shape), in.data);
  return push({Op::kReshape, {input}, std::monostate{}, std::move(out)});
}

Gradients Tape::backward(NodeId output) const {
  if (output >= nodes_.size()) throw ParamError("backward: unknown node id");
  if (nodes_[output].value.size() != 1) {
    throw StateError("backward requires a scalar output, got shape " +
                     shape_str(nodes_[output].value.shape));
  }
  Gradients g;
  g.grads_.reserve(nodes_.size());
  for (const Node& n : nodes_) g.grads_.push_back(Tensor::zeros(n.value.shape));
  g.grads_[output].data[0] = 1.0;

  for (std::size_t idx = output + 1; idx-- > 0;) {
    const Node& node = nodes_[idx];
    const Tensor& up = g.grads_[idx];
    switch (node.op) {
      case Op::kLeaf:
        break;
      case Op::kConv2d: {
        const auto& aux = std::get<ConvAux>(node.aux);
        const Tensor& in = operand(idx, 0);
        const Tensor& k = operand(idx, 1);
        Tensor& din = g.grads_[node.inputs[0]];
        Tensor& dk = g.grads_[node.inputs[1]];
        Tensor& db = g.grads_[node.inputs[2]];
        const std::size_t c_in = in.shape[0], h = in.shape[1], w = in.shape[2];
        const std::size_t c_out = k.shape[0], kh = k.shape[2], kw = k.shape[3];
        const std::size_t oh = node.value.shape[1], ow = node.value.shape[2];
        for (std::size_t co = 0; co < c_out; ++co) {
          for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
              const double u_grad = up.at3(co, i, j);
              if (u_grad == 0.0) continue;
              db.data[co] += u_grad;
              for (std::size_t ci = 0; ci < c_in; ++ci) {
                for (std::size_t u = 0; u < kh; ++u) {
                  const long long y = static_cast<long long>(i + u) - static_cast<long long>(aux.padding);
                  if (y < 0 || y >= static_cast<long long>(h)) continue;
                  for (std::size_t v = 0; v < kw; ++v) {
                    const long long x = static_cast<long long>(j + v) - static_cast<long long>(aux.padding);
                    if (x < 0 || x >= static_cast<long long>(w)) continue;
                    const std::size_t in_idx = (ci * h + y) * w + x;
                    const std::size_t k_idx = ((co * c_in + ci) * kh + u) * kw + v;
                    din.data[in_idx] += u_grad * k.data[k_idx];
                    dk.data[k_idx] += u_grad * in.data[in_idx];
                  }
                }
              }
            }
          }
        }
        break;
      }
      case Op::kMaxPool: {
        const auto& aux = std::get<PoolAux>(node.aux);
        Tensor& din = g.grads_[node.inputs[0]];
        for (std::size_t cell = 0; cell < node.value.size(); ++cell) {
          din.data[aux.argmax[cell]] += up.data[cell];
        }
        break;
      }
      case Op::kRelu: {
        const Tensor& in = operand(idx, 0);
        Tensor& din = g.grads_[node.inputs[0]];
        for (std::size_t i = 0; i < in.size(); ++i) {
          if (in.data[i] > 0.0) din.data[i] += up.data[i];
        }
        break;
      }
      case Op::kDense: {
        const Tensor& in = operand(idx, 0);
        const Tensor& w = operand(idx, 1);
        Tensor& din = g.grads_[node.inputs[0]];
        Tensor& dw = g.grads_[node.inputs[1]];
        Tensor& db = g.grads_[node.inputs[2]];
        const std::size_t d = in.shape[0], out_dim = w.shape[0];
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double u_grad = up.data[o];
          db.data[o] += u_grad;
          for (std::size_t i = 0; i < d; ++i) {
            din.data[i] += u_grad * w.data[o * d + i];
            dw.data[o * d + i] += u_grad * in.data[i];
          }
        }
        break;
      }
      case Op::kCrossEntropy: {
        const auto& aux = std::get<CeAux>(node.aux);
        Tensor& dl = g.grads_[node.inputs[0]];
        const double u_grad = up.data[0];
        for (std::size_t i = 0; i < aux.softmax.size(); ++i) {
          dl.data[i] += u_grad * (aux.softmax[i] - (i == aux.label ? 1.0 : 0.0));
        }
        break;
      }
      case Op::kPick: {
        const auto& aux = std::get<PickAux>(node.aux);
        g.grads_[node.inputs[0]].data[aux.index] += up.data[0];
        break;
      }
      case Op::kSum: {
        Tensor& din = g.grads_[node.inputs[0]];
        for (double& x : din.data) x += up.data[0];
        break;
      }
      case Op::kAdd: {
        Tensor& da = g.grads_[node.inputs[0]];
        Tensor& db = g.grads_[node.inputs[1]];
        for (std::size_t i = 0; i < up.size(); ++i) {
          da.data[i] += up.data[i];
          db.data[i] += up.data[i];
        }
        break;
      }
      case Op::kScale: {
        const auto& aux = std::get<ScaleAux>(node.aux);
        Tensor& din = g.grads_[node.inputs[0]];
        for (std::size_t i = 0; i < up.size(); ++i) din.data[i] += aux.factor * up.data[i];
        break;
      }
      case Op::kReshape: {
        Tensor& din = g.grads_[node.inputs[0]];
        for (std::size_t i = 0; i < up.size(); ++i) din.data[i] += up.data[i];
        break;
      }
    }
  }
  return g;
}

}  // namespace agopbench
