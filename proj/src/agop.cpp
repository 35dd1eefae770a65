#include "agopbench/agop.hpp"

#include <filesystem>

#include "agopbench/errors.hpp"
#include "binio.hpp"

namespace agopbench {

namespace {

constexpr char kMagic[] = "AGOPD1";
constexpr std::uint8_t kVersion = 1;

/// Forward once, predict, and (subject to the gate) accumulate the squared
/// input-gradient of the predicted logit.
void accumulate_sample(const AttributionModel& model, const Sample& sample, bool only_correct,
                       AgopAccumulator& acc) {
  Tape tape;
  const TraceHandles h = model.trace(tape, sample.image);
  const std::vector<double>& logits = tape.value(h.logits).data;
  std::size_t pred = 0;
  for (std::size_t c = 1; c < logits.size(); ++c) {
    if (logits[c] > logits[pred]) pred = c;
  }
  if (only_correct && static_cast<int>(pred) != sample.label) return;
  const Gradients g = tape.backward(tape.pick(h.logits, pred));
  acc.add(g.at(h.input).data);
}

}  // namespace

AgopAccumulator::AgopAccumulator(std::size_t d) : sum_(d, 0.0) {
  if (d == 0) throw ParamError("AgopAccumulator: dimension must be positive");
}

void AgopAccumulator::add(const std::vector<double>& grad) {
  if (grad.size() != sum_.size()) {
    throw ShapeError("AgopAccumulator: gradient dimension " + std::to_string(grad.size()) +
                     ", expected " + std::to_string(sum_.size()));
  }
  for (std::size_t i = 0; i < grad.size(); ++i) sum_[i] += grad[i] * grad[i];
  ++n_;
}

std::vector<double> AgopAccumulator::mean() const {
  if (n_ == 0) {
    throw StateError("AGOP accumulation is empty (no correctly classified samples observed)");
  }
  std::vector<double> out(sum_);
  for (double& v : out) v /= static_cast<double>(n_);
  return out;
}

AgopHook::AgopHook(bool only_correct, std::string snapshot_dir)
    : acc_(kImagePixels), only_correct_(only_correct), snapshot_dir_(std::move(snapshot_dir)) {}

void AgopHook::observe(const AttributionModel& model, const std::vector<const Sample*>& batch) {
  if (finalized_) throw StateError("AgopHook: observe after finalize");
  for (const Sample* s : batch) accumulate_sample(model, *s, only_correct_, acc_);
}

AgopDiagonal AgopHook::current(std::size_t step) const {
  AgopDiagonal d;
  d.values = acc_.mean();
  d.n_acc = acc_.n_acc();
  d.step = step;
  d.only_correct = only_correct_;
  return d;
}

void AgopHook::snapshot(std::size_t step) {
  if (finalized_) throw StateError("AgopHook: snapshot after finalize");
  AgopDiagonal d = current(step);
  if (!snapshot_dir_.empty()) {
    write_diag((std::filesystem::path(snapshot_dir_) / snapshot_filename(step)).string(), d);
  }
  snapshots_.push_back(std::move(d));
}

AgopDiagonal AgopHook::finalize(std::size_t step) {
  if (finalized_) throw StateError("AgopHook: already finalized");
  AgopDiagonal d = current(step);
  finalized_ = true;
  return d;
}

AgopDiagonal posthoc_diag(const AttributionModel& model, const std::vector<Sample>& dataset,
                          bool only_correct) {
  if (dataset.empty()) throw ParamError("posthoc_diag: empty dataset");
  AgopAccumulator acc(kImagePixels);
  for (const Sample& s : dataset) accumulate_sample(model, s, only_correct, acc);
  AgopDiagonal d;
  d.values = acc.mean();
  d.n_acc = acc.n_acc();
  d.step = 0;
  d.only_correct = only_correct;
  return d;
}

std::vector<double> input_gradient(const AttributionModel& model, const Tensor& image,
                                   std::size_t cls) {
  Tape tape;
  const TraceHandles h = model.trace(tape, image);
  const Gradients g = tape.backward(tape.pick(h.logits, cls));
  return g.at(h.input).data;
}

std::string snapshot_filename(std::size_t step) {
  std::string digits = std::to_string(step);
  if (digits.size() < 8) digits.insert(0, 8 - digits.size(), '0');
  return "agop_step" + digits + ".diag";
}

void write_diag(const std::string& path, const AgopDiagonal& diag) {
  std::string buf;
  binio::put_bytes(buf, kMagic, 6);
  binio::put_u8(buf, kVersion);
  binio::put_u8(buf, diag.only_correct ? 1 : 0);
  binio::put_u32(buf, static_cast<std::uint32_t>(diag.values.size()));
  binio::put_u64(buf, diag.n_acc);
  binio::put_u64(buf, diag.step);
  for (double v : diag.values) binio::put_f64(buf, v);
  binio::write_file_atomic(path, buf);
}

AgopDiagonal read_diag(const std::string& path) {
  binio::Reader r(binio::read_file(path), "diag " + path);
  r.expect_magic(kMagic);
  const std::uint8_t version = r.u8("version");
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  AgopDiagonal d;
  d.only_correct = r.u8("only_correct") != 0;
  const std::uint32_t dim = r.u32("dimension");
  d.n_acc = r.u64("n_acc");
  d.step = r.u64("step");
  d.values.resize(dim);
  for (std::uint32_t i = 0; i < dim; ++i) {
    d.values[i] = r.f64("values");
    if (d.values[i] < 0.0) r.fail("negative diag value at index " + std::to_string(i));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after values");
  return d;
}

}  // namespace agopbench
