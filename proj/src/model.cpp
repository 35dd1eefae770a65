#include "agopbench/model.hpp"

#include <cmath>
#include <random>

#include "agopbench/errors.hpp"
#include "binio.hpp"

namespace agopbench {

namespace {

constexpr char kMagic[] = "CNN8W1";
constexpr std::uint8_t kVersion = 1;

struct BlockShape {
  std::size_t c_out, c_in, kh, kw, padding, pool_k, pool_stride;
};

// Width note: the first 3x3 filter bank must cover both tetromino shapes in
// all four orientations before the stride-2 pool throws away position, so it
// carries eight channels and most of the parameter budget.
constexpr std::array<BlockShape, 4> kBlocks = {{
    {8, 1, 3, 3, 0, 2, 2},
    {4, 8, 2, 2, 0, 2, 1},
    {6, 4, 1, 1, 0, 1, 1},
    {4, 6, 1, 1, 0, 1, 1},
}};
constexpr std::size_t kDenseOut = 2;
constexpr std::size_t kDenseIn = 4;

void fill_uniform(Tensor& t, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data) v = dist(rng);
}

}  // namespace

std::vector<double> AttributionModel::forward_logits(const Tensor& image) const {
  Tape tape;
  const TraceHandles h = trace(tape, image);
  return tape.value(h.logits).data;
}

int predict(const AttributionModel& model, const Tensor& image) {
  const std::vector<double> logits = model.forward_logits(image);
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.size(); ++c) {
    if (logits[c] > logits[best]) best = c;
  }
  return static_cast<int>(best);
}

std::vector<Tape::NodeId> Cnn8by8::param_leaves(Tape& tape) const {
  std::vector<Tape::NodeId> ids;
  for (const Tensor* t : parameters()) ids.push_back(tape.leaf(*t));
  return ids;
}

TraceHandles Cnn8by8::trace_with_params(Tape& tape, const Tensor& image,
                                        const std::vector<Tape::NodeId>& params) const {
  if (params.size() != 10) throw ParamError("expected 10 parameter leaves, got " + std::to_string(params.size()));
  TraceHandles h;
  h.input = tape.leaf(image);
  Tape::NodeId x = h.input;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const ConvBlock& blk = blocks[b];
    x = tape.conv2d(x, params[2 * b], params[2 * b + 1], blk.padding);
    x = tape.relu(x);
    x = tape.maxpool2d(x, blk.pool_k, blk.pool_stride);
    if (b == 0) h.gradcam_target = x;
  }
  x = tape.reshape(x, {kDenseIn});
  h.logits = tape.dense(x, params[8], params[9]);
  return h;
}

TraceHandles Cnn8by8::trace(Tape& tape, const Tensor& image) const {
  return trace_with_params(tape, image, param_leaves(tape));
}

std::vector<double> Cnn8by8::forward_logits(const Tensor& image) const {
  // Tape-free forward; kept in lockstep with trace() and asserted equal in
  // tests. Buffers are at most [4,8,8].
  auto conv_relu_pool = [](const Tensor& in, const ConvBlock& blk) {
    const std::size_t ci = in.shape[0], h = in.shape[1], w = in.shape[2];
    const std::size_t co = blk.kernel.shape[0], kh = blk.kernel.shape[2], kw = blk.kernel.shape[3];
    const std::size_t oh = h + 2 * blk.padding - kh + 1, ow = w + 2 * blk.padding - kw + 1;
    Tensor conv = Tensor::zeros({co, oh, ow});
    for (std::size_t oc = 0; oc < co; ++oc) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = blk.bias.data[oc];
          for (std::size_t ic = 0; ic < ci; ++ic) {
            for (std::size_t u = 0; u < kh; ++u) {
              const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i + u) - static_cast<std::ptrdiff_t>(blk.padding);
              if (r < 0 || r >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t v = 0; v < kw; ++v) {
                const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(j + v) - static_cast<std::ptrdiff_t>(blk.padding);
                if (c < 0 || c >= static_cast<std::ptrdiff_t>(w)) continue;
                acc += in.at3(ic, static_cast<std::size_t>(r), static_cast<std::size_t>(c)) *
                       blk.kernel.data[((oc * ci + ic) * kh + u) * kw + v];
              }
            }
          }
          conv.data[(oc * oh + i) * ow + j] = acc > 0.0 ? acc : 0.0;
        }
      }
    }
    const std::size_t ph = (oh - blk.pool_k) / blk.pool_stride + 1;
    const std::size_t pw = (ow - blk.pool_k) / blk.pool_stride + 1;
    Tensor pooled = Tensor::zeros({co, ph, pw});
    for (std::size_t oc = 0; oc < co; ++oc) {
      for (std::size_t i = 0; i < ph; ++i) {
        for (std::size_t j = 0; j < pw; ++j) {
          double best = conv.at3(oc, i * blk.pool_stride, j * blk.pool_stride);
          for (std::size_t u = 0; u < blk.pool_k; ++u) {
            for (std::size_t v = 0; v < blk.pool_k; ++v) {
              best = std::max(best, conv.at3(oc, i * blk.pool_stride + u, j * blk.pool_stride + v));
            }
          }
          pooled.data[(oc * ph + i) * pw + j] = best;
        }
      }
    }
    return pooled;
  };

  Tensor x = image;
  for (const ConvBlock& blk : blocks) x = conv_relu_pool(x, blk);
  std::vector<double> logits(kDenseOut);
  for (std::size_t o = 0; o < kDenseOut; ++o) {
    double acc = dense_bias.data[o];
    for (std::size_t i = 0; i < kDenseIn; ++i) acc += dense_weight.data[o * kDenseIn + i] * x.data[i];
    logits[o] = acc;
  }
  return logits;
}

std::vector<Tensor*> Cnn8by8::parameters() {
  std::vector<Tensor*> out;
  for (ConvBlock& b : blocks) {
    out.push_back(&b.kernel);
    out.push_back(&b.bias);
  }
  out.push_back(&dense_weight);
  out.push_back(&dense_bias);
  return out;
}

std::vector<const Tensor*> Cnn8by8::parameters() const {
  std::vector<const Tensor*> out;
  for (const ConvBlock& b : blocks) {
    out.push_back(&b.kernel);
    out.push_back(&b.bias);
  }
  out.push_back(&dense_weight);
  out.push_back(&dense_bias);
  return out;
}

std::size_t Cnn8by8::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

Cnn8by8 build_cnn8by8(std::uint64_t seed) {
  Cnn8by8 m;
  std::mt19937_64 rng(seed);
  for (std::size_t b = 0; b < kBlocks.size(); ++b) {
    const BlockShape& s = kBlocks[b];
    ConvBlock& blk = m.blocks[b];
    blk.kernel = Tensor::zeros({s.c_out, s.c_in, s.kh, s.kw});
    blk.bias = Tensor::zeros({s.c_out});
    blk.padding = s.padding;
    blk.pool_k = s.pool_k;
    blk.pool_stride = s.pool_stride;
    const std::size_t fan_in = s.c_in * s.kh * s.kw;
    fill_uniform(blk.kernel, fan_in, rng);
  }
  m.dense_weight = Tensor::zeros({kDenseOut, kDenseIn});
  m.dense_bias = Tensor::zeros({kDenseOut});
  fill_uniform(m.dense_weight, kDenseIn, rng);
  // Biases start at zero. With random biases the narrow late blocks can
  // start with every relu unit off across the whole input distribution,
  // leaving the logits input-independent and the network stuck at chance.
  return m;
}

void save_model(const std::string& path, const Cnn8by8& model) {
  std::string buf;
  binio::put_bytes(buf, kMagic, 6);
  binio::put_u8(buf, kVersion);
  binio::put_u32(buf, static_cast<std::uint32_t>(kBlocks.size()));
  for (const ConvBlock& b : model.blocks) {
    binio::put_u32(buf, static_cast<std::uint32_t>(b.kernel.shape[0]));
    binio::put_u32(buf, static_cast<std::uint32_t>(b.kernel.shape[1]));
    binio::put_u32(buf, static_cast<std::uint32_t>(b.kernel.shape[2]));
    binio::put_u32(buf, static_cast<std::uint32_t>(b.kernel.shape[3]));
    binio::put_u32(buf, static_cast<std::uint32_t>(b.padding));
    binio::put_u32(buf, static_cast<std::uint32_t>(b.pool_k));
    binio::put_u32(buf, static_cast<std::uint32_t>(b.pool_stride));
  }
  binio::put_u32(buf, static_cast<std::uint32_t>(model.dense_weight.shape[0]));
  binio::put_u32(buf, static_cast<std::uint32_t>(model.dense_weight.shape[1]));
  for (const Tensor* t : model.parameters()) {
    for (double v : t->data) binio::put_f64(buf, v);
  }
  binio::write_file_atomic(path, buf);
}

Cnn8by8 load_model(const std::string& path) {
  binio::Reader r(binio::read_file(path), "model " + path);
  r.expect_magic(kMagic);
  const std::uint8_t version = r.u8("version");
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  const std::uint32_t n_blocks = r.u32("block count");
  if (n_blocks != kBlocks.size()) r.fail("unexpected block count " + std::to_string(n_blocks));
  for (const BlockShape& s : kBlocks) {
    const std::uint32_t vals[7] = {r.u32("c_out"), r.u32("c_in"),   r.u32("kh"),         r.u32("kw"),
                                   r.u32("padding"), r.u32("pool_k"), r.u32("pool_stride")};
    const std::size_t want[7] = {s.c_out, s.c_in, s.kh, s.kw, s.padding, s.pool_k, s.pool_stride};
    for (int i = 0; i < 7; ++i) {
      if (vals[i] != want[i]) r.fail("layout mismatch in block descriptor");
    }
  }
  if (r.u32("dense out") != kDenseOut || r.u32("dense in") != kDenseIn) {
    r.fail("layout mismatch in dense descriptor");
  }
  Cnn8by8 m = build_cnn8by8(0);
  for (Tensor* t : m.parameters()) {
    for (double& v : t->data) v = r.f64("weights");
  }
  if (r.remaining() != 0) r.fail("trailing bytes after weights");
  return m;
}

}  // namespace agopbench
