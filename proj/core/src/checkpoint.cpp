#include "kandu/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace kandu {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(std::uint8_t(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(std::uint8_t(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void floats(const std::vector<float>& v) {
    u32(std::uint32_t(v.size()));
    for (float f : v) f32(f);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(in_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<float> floats() {
    const std::size_t n = u32();
    need(n * 4);
    std::vector<float> v(n);
    for (auto& f : v) f = f32();
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw std::runtime_error("checkpoint: truncated data");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint capture_checkpoint(KanduNet<float>& model, const Adam<float>* optimizer) {
  Checkpoint c;
  c.model = model.config();
  for (auto& p : model.parameters())
    c.tensors.push_back({p.name, false, p.tensor.shape(),
                         std::vector<float>(p.tensor.data().begin(), p.tensor.data().end())});
  for (auto& b : model.buffers())
    c.tensors.push_back({b.name, true, b.tensor.shape(),
                         std::vector<float>(b.tensor.data().begin(), b.tensor.data().end())});
  if (optimizer) {
    c.optimizer_steps = optimizer->step_count();
    c.moments = optimizer->moments();
  }
  return c;
}

void restore_checkpoint(const Checkpoint& ckpt, KanduNet<float>& model, Adam<float>* optimizer) {
  std::vector<NamedTensor<float>> targets = model.parameters();
  for (auto& b : model.buffers()) targets.push_back(b);
  std::ostringstream diff;
  std::size_t problems = 0;
  if (!(ckpt.model == model.config())) {
    diff << "  model config differs (checkpoint widths/bottleneck/channels/seed vs configured)\n";
    ++problems;
  }
  const std::size_t n = std::max(targets.size(), ckpt.tensors.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= ckpt.tensors.size()) {
      diff << "  " << targets[i].name << ": missing from checkpoint\n";
      ++problems;
    } else if (i >= targets.size()) {
      diff << "  " << ckpt.tensors[i].name << ": not in model\n";
      ++problems;
    } else if (targets[i].name != ckpt.tensors[i].name ||
               targets[i].tensor.shape() != ckpt.tensors[i].shape) {
      diff << "  " << ckpt.tensors[i].name << " " << shape_str(ckpt.tensors[i].shape)
           << " in checkpoint vs " << targets[i].name << " " << shape_str(targets[i].tensor.shape())
           << " in model\n";
      ++problems;
    }
  }
  if (problems)
    throw std::runtime_error("checkpoint incompatible with model (" + std::to_string(problems) +
                             " differences):\n" + diff.str());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    auto dst = targets[i].tensor.mutable_data();
    std::copy(ckpt.tensors[i].values.begin(), ckpt.tensors[i].values.end(), dst.begin());
  }
  if (optimizer) optimizer->restore(ckpt.optimizer_steps, ckpt.moments);
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(std::uint32_t(c.model.in_channels));
  w.u32(std::uint32_t(c.model.out_channels));
  w.u32(std::uint32_t(c.model.bottleneck));
  w.u32(std::uint32_t(c.model.widths.size()));
  for (auto v : c.model.widths) w.u32(std::uint32_t(v));
  w.u64(c.model.seed);
  w.u64(c.epoch);
  w.u64(c.train_seed);
  w.f64(c.best_metric);
  w.u32(std::uint32_t(c.tensors.size()));
  for (const auto& t : c.tensors) {
    w.u32(std::uint32_t(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(t.buffer ? 1 : 0);
    w.u32(std::uint32_t(t.shape.size()));
    for (auto d : t.shape) w.u32(std::uint32_t(d));
    if (t.values.size() != shape_numel(t.shape))
      throw std::logic_error("checkpoint: record " + t.name + " has wrong value count");
    for (float f : t.values) w.f32(f);
  }
  w.u64(c.optimizer_steps);
  w.u32(std::uint32_t(c.moments.size()));
  for (const auto& m : c.moments) {
    w.floats(m.m);
    w.floats(m.v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.str(8) != std::string(kCheckpointMagic, 8))
    throw std::runtime_error("checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  Checkpoint c;
  c.model.in_channels = r.u32();
  c.model.out_channels = r.u32();
  c.model.bottleneck = r.u32();
  c.model.widths.resize(r.u32());
  for (auto& v : c.model.widths) v = r.u32();
  c.model.seed = r.u64();
  c.epoch = r.u64();
  c.train_seed = r.u64();
  c.best_metric = r.f64();
  c.tensors.resize(r.u32());
  for (auto& t : c.tensors) {
    t.name = r.str(r.u32());
    t.buffer = r.u8() != 0;
    t.shape.resize(r.u32());
    for (auto& d : t.shape) d = r.u32();
    t.values.resize(shape_numel(t.shape));
    for (auto& f : t.values) f = r.f32();
  }
  c.optimizer_steps = r.u64();
  c.moments.resize(r.u32());
  for (auto& m : c.moments) {
    m.m = r.floats();
    m.v = r.floats();
  }
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint " + path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint " + path.string() + ": write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint " + path.string() + ": cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace kandu
