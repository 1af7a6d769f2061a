#include "permubias/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "permubias/util.hpp"

namespace permubias {

namespace {

constexpr uint32_t kModelVersion = 1;
constexpr uint32_t kAdapterVersion = 1;
constexpr char kModelMagic[4] = {'P', 'B', 'M', 'C'};
constexpr char kAdapterMagic[4] = {'P', 'B', 'M', 'A'};

class Writer {
 public:
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void raw(const char* p, size_t n) { buf_.append(p, n); }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string origin) : data_(std::move(data)), origin_(std::move(origin)) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void magic(const char expect[4]) {
    need(4);
    if (std::memcmp(data_.data() + pos_, expect, 4) != 0) {
      throw ParseError(origin_ + ": wrong file magic");
    }
    pos_ += 4;
  }
  void done() const {
    if (pos_ != data_.size()) throw ParseError(origin_ + ": trailing bytes in checkpoint");
  }
  const std::string& origin() const { return origin_; }

 private:
  void need(size_t n) const {
    if (pos_ + n > data_.size()) throw ParseError(origin_ + ": truncated checkpoint");
  }
  std::string data_;
  std::string origin_;
  size_t pos_ = 0;
};

template <class T>
void write_tensor(Writer& w, const Tensor<T>& t) {
  w.u64(static_cast<uint64_t>(t.size()));
  for (T v : t.values()) w.f64(static_cast<double>(v));
}

template <class T>
Tensor<T> read_tensor(Reader& r, Shape shape, bool requires_grad = false) {
  const uint64_t count = r.u64();
  if (count != static_cast<uint64_t>(shape_numel(shape))) {
    throw ParseError(r.origin() + ": tensor size mismatch, expected " +
                     std::to_string(shape_numel(shape)) + " got " + std::to_string(count));
  }
  std::vector<T> data(count);
  for (auto& v : data) v = static_cast<T>(r.f64());
  return Tensor<T>::from_data(std::move(shape), std::move(data), requires_grad);
}

}  // namespace

template <class T>
void save_model(const Model<T>& m, const std::string& path) {
  Writer w;
  w.raw(kModelMagic, 4);
  w.u32(kModelVersion);
  w.i32(m.cfg.vocab_size);
  w.i32(m.cfg.d_model);
  w.i32(m.cfg.n_layers);
  w.i32(m.cfg.n_heads);
  w.i32(m.cfg.d_ff);
  w.i32(m.cfg.max_positions);
  w.f64(m.cfg.rms_eps);
  for_each_parameter(m, [&](const std::string&, const Tensor<T>& t) { write_tensor(w, t); });
  atomic_write_file(path, w.str());
}

template <class T>
Model<T> load_model(const std::string& path) {
  Reader r(read_file(path), path);
  r.magic(kModelMagic);
  const uint32_t version = r.u32();
  if (version != kModelVersion) {
    throw ParseError(path + ": unsupported model version " + std::to_string(version));
  }
  ModelConfig cfg;
  cfg.vocab_size = r.i32();
  cfg.d_model = r.i32();
  cfg.n_layers = r.i32();
  cfg.n_heads = r.i32();
  cfg.d_ff = r.i32();
  cfg.max_positions = r.i32();
  cfg.rms_eps = r.f64();
  cfg.validate();

  Model<T> m;
  m.cfg = cfg;
  m.positions = sinusoidal_positions<T>(cfg.max_positions, cfg.d_model);
  m.embedding = read_tensor<T>(r, {cfg.vocab_size, cfg.d_model});
  for (int l = 0; l < cfg.n_layers; ++l) {
    Layer<T> layer;
    layer.norm1_gain = read_tensor<T>(r, {cfg.d_model});
    layer.norm2_gain = read_tensor<T>(r, {cfg.d_model});
    layer.wq = read_tensor<T>(r, {cfg.d_model, cfg.d_model});
    layer.wk = read_tensor<T>(r, {cfg.d_model, cfg.d_model});
    layer.wv = read_tensor<T>(r, {cfg.d_model, cfg.d_model});
    layer.wo = read_tensor<T>(r, {cfg.d_model, cfg.d_model});
    layer.w1 = read_tensor<T>(r, {cfg.d_model, cfg.d_ff});
    layer.w2 = read_tensor<T>(r, {cfg.d_ff, cfg.d_model});
    m.layers.push_back(std::move(layer));
  }
  m.final_gain = read_tensor<T>(r, {cfg.d_model});
  m.unembed = read_tensor<T>(r, {cfg.d_model, cfg.vocab_size});
  m.logit_bias = read_tensor<T>(r, {1, cfg.vocab_size});
  r.done();
  return m;
}

template <class T>
void save_adapters(const AdapterSet<T>& set, int d_model, const std::string& path) {
  Writer w;
  w.raw(kAdapterMagic, 4);
  w.u32(kAdapterVersion);
  w.i32(static_cast<int32_t>(set.layers.size()));
  w.i32(d_model);
  w.i32(set.cfg.rank);
  w.f64(set.cfg.alpha);
  w.f64(set.cfg.dropout);
  w.f64(set.cfg.init_std);
  for_each_adapter(const_cast<AdapterSet<T>&>(set),
                   [&](const std::string&, Tensor<T>& t) { write_tensor(w, t); });
  atomic_write_file(path, w.str());
}

template <class T>
AdapterSet<T> load_adapters(const std::string& path, const ModelConfig& expect) {
  Reader r(read_file(path), path);
  r.magic(kAdapterMagic);
  const uint32_t version = r.u32();
  if (version != kAdapterVersion) {
    throw ParseError(path + ": unsupported adapter version " + std::to_string(version));
  }
  const int n_layers = r.i32();
  const int d_model = r.i32();
  if (n_layers != expect.n_layers || d_model != expect.d_model) {
    throw ValidationError(path + ": adapters were trained for a " + std::to_string(n_layers) +
                          "-layer, d_model " + std::to_string(d_model) +
                          " model, which does not match the loaded model");
  }
  AdapterSet<T> set;
  set.cfg.rank = r.i32();
  set.cfg.alpha = r.f64();
  set.cfg.dropout = r.f64();
  set.cfg.init_std = r.f64();
  set.cfg.validate();
  for (int l = 0; l < n_layers; ++l) {
    std::array<LoraAdapter<T>, kAdapterTargets> quad;
    for (int t = 0; t < kAdapterTargets; ++t) {
      quad[static_cast<size_t>(t)].a = read_tensor<T>(r, {d_model, set.cfg.rank}, true);
      quad[static_cast<size_t>(t)].b = read_tensor<T>(r, {set.cfg.rank, d_model}, true);
    }
    set.layers.push_back(std::move(quad));
  }
  r.done();
  return set;
}

template void save_model<double>(const Model<double>&, const std::string&);
template void save_model<float>(const Model<float>&, const std::string&);
template Model<double> load_model<double>(const std::string&);
template Model<float> load_model<float>(const std::string&);
template void save_adapters<double>(const AdapterSet<double>&, int, const std::string&);
template void save_adapters<float>(const AdapterSet<float>&, int, const std::string&);
template AdapterSet<double> load_adapters<double>(const std::string&, const ModelConfig&);
template AdapterSet<float> load_adapters<float>(const std::string&, const ModelConfig&);

}  // namespace permubias
