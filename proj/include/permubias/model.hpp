#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "permubias/rng.hpp"
#include "permubias/tensor.hpp"
#include "permubias/util.hpp"

namespace permubias {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 256;
  int max_positions = 512;
  double rms_eps = 1e-5;

  void validate() const {
    if (vocab_size < 2) throw ConfigError("model: vocab_size must be at least 2");
    if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 || max_positions < 1) {
      throw ConfigError("model: dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
      throw ConfigError("model: d_model " + std::to_string(d_model) +
                        " is not divisible by n_heads " + std::to_string(n_heads));
    }
  }
};

template <class T>
struct Layer {
  Tensor<T> norm1_gain, norm2_gain;
  Tensor<T> wq, wk, wv, wo;  // each [d_model x d_model]
  Tensor<T> w1;              // [d_model x d_ff]
  Tensor<T> w2;              // [d_ff x d_model]
};

// Decoder-only stack: token embedding plus fixed sinusoidal positions, then
// pre-norm blocks (RMS norm, multi-head causal attention, RMS norm, GELU
// feed-forward), a final RMS norm, and an untied unembedding. The only bias
// in the network is an output-logit offset, zero by default.
template <class T>
struct Model {
  ModelConfig cfg;
  Tensor<T> embedding;   // [vocab x d_model]
  Tensor<T> positions;   // [max_positions x d_model], fixed, never trained
  std::vector<Layer<T>> layers;
  Tensor<T> final_gain;  // [d_model]
  Tensor<T> unembed;     // [d_model x vocab]
  Tensor<T> logit_bias;  // [1 x vocab]
};

template <class T>
Tensor<T> sinusoidal_positions(int max_positions, int d_model) {
  std::vector<T> data(static_cast<size_t>(max_positions) * static_cast<size_t>(d_model));
  for (int p = 0; p < max_positions; ++p) {
    for (int k = 0; 2 * k < d_model; ++k) {
      const double rate = std::pow(10000.0, -2.0 * k / d_model);
      const double angle = p * rate;
      data[static_cast<size_t>(p * d_model + 2 * k)] = static_cast<T>(std::sin(angle));
      if (2 * k + 1 < d_model) {
        data[static_cast<size_t>(p * d_model + 2 * k + 1)] = static_cast<T>(std::cos(angle));
      }
    }
  }
  return Tensor<T>::from_data({max_positions, d_model}, std::move(data));
}

// Weight order is fixed; generation is a single deterministic stream, so one
// seed pins every parameter.
template <class T>
Model<T> random_model(const ModelConfig& cfg, uint64_t seed, double init_std = 0.02) {
  cfg.validate();
  Rng rng(seed);
  Model<T> m;
  m.cfg = cfg;
  m.embedding = Tensor<T>::randn({cfg.vocab_size, cfg.d_model}, rng, init_std);
  m.positions = sinusoidal_positions<T>(cfg.max_positions, cfg.d_model);
  for (int l = 0; l < cfg.n_layers; ++l) {
    Layer<T> layer;
    layer.norm1_gain = Tensor<T>::filled({cfg.d_model}, T(1));
    layer.norm2_gain = Tensor<T>::filled({cfg.d_model}, T(1));
    layer.wq = Tensor<T>::randn({cfg.d_model, cfg.d_model}, rng, init_std);
    layer.wk = Tensor<T>::randn({cfg.d_model, cfg.d_model}, rng, init_std);
    layer.wv = Tensor<T>::randn({cfg.d_model, cfg.d_model}, rng, init_std);
    layer.wo = Tensor<T>::randn({cfg.d_model, cfg.d_model}, rng, init_std);
    layer.w1 = Tensor<T>::randn({cfg.d_model, cfg.d_ff}, rng, init_std);
    layer.w2 = Tensor<T>::randn({cfg.d_ff, cfg.d_model}, rng, init_std);
    m.layers.push_back(std::move(layer));
  }
  m.final_gain = Tensor<T>::filled({cfg.d_model}, T(1));
  m.unembed = Tensor<T>::randn({cfg.d_model, cfg.vocab_size}, rng, init_std);
  m.logit_bias = Tensor<T>::zeros({1, cfg.vocab_size});
  return m;
}

// Visits every learned parameter in checkpoint order.
template <class T, class Fn>
void for_each_parameter(Model<T>& m, Fn&& fn) {
  fn("embedding", m.embedding);
  for (size_t l = 0; l < m.layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    fn(p + "norm1_gain", m.layers[l].norm1_gain);
    fn(p + "norm2_gain", m.layers[l].norm2_gain);
    fn(p + "wq", m.layers[l].wq);
    fn(p + "wk", m.layers[l].wk);
    fn(p + "wv", m.layers[l].wv);
    fn(p + "wo", m.layers[l].wo);
    fn(p + "w1", m.layers[l].w1);
    fn(p + "w2", m.layers[l].w2);
  }
  fn("final_gain", m.final_gain);
  fn("unembed", m.unembed);
  fn("logit_bias", m.logit_bias);
}

template <class T, class Fn>
void for_each_parameter(const Model<T>& m, Fn&& fn) {
  for_each_parameter(const_cast<Model<T>&>(m), [&](const std::string& name, Tensor<T>& t) {
    fn(name, static_cast<const Tensor<T>&>(t));
  });
}

template <class T>
int64_t parameter_count(const Model<T>& m) {
  int64_t total = 0;
  for_each_parameter(m, [&](const std::string&, const Tensor<T>& t) { total += t.size(); });
  return total;
}

template <class T>
uint64_t weight_checksum(const Model<T>& m) {
  uint64_t h = 1469598103934665603ull;
  for_each_parameter(m, [&](const std::string&, const Tensor<T>& t) {
    h ^= fnv1a_values<T>(t.values());
    h *= 1099511628211ull;
  });
  return h;
}

// ---------------------------------------------------------------------------
// Low-rank adapters on the attention projections.
// ---------------------------------------------------------------------------

struct LoraConfig {
  int rank = 1;
  double alpha = 16.0;
  double dropout = 0.05;
  double init_std = 0.01;

  void validate() const {
    if (rank < 1) throw ConfigError("adapters: rank must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("adapters: dropout must be in [0, 1)");
  }
};

// Targets, in storage order, for one layer.
enum class AdapterTarget { Query = 0, Key = 1, Value = 2, Output = 3 };
constexpr int kAdapterTargets = 4;

template <class T>
struct LoraAdapter {
  Tensor<T> a;  // [d_model x rank]
  Tensor<T> b;  // [rank x d_model]
};

template <class T>
struct AdapterSet {
  LoraConfig cfg;
  std::vector<std::array<LoraAdapter<T>, kAdapterTargets>> layers;

  double scaling() const { return cfg.alpha / cfg.rank; }
  bool empty() const { return layers.empty(); }
};

// Inert start: the A factors are zero so every adapted projection initially
// equals its base, while the nonzero B factors give A a nonzero first
// gradient.
template <class T>
AdapterSet<T> init_adapters(const ModelConfig& mcfg, const LoraConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  AdapterSet<T> set;
  set.cfg = cfg;
  for (int l = 0; l < mcfg.n_layers; ++l) {
    std::array<LoraAdapter<T>, kAdapterTargets> quad;
    for (int t = 0; t < kAdapterTargets; ++t) {
      quad[static_cast<size_t>(t)].a =
          Tensor<T>::zeros({mcfg.d_model, cfg.rank}, /*requires_grad=*/true);
      quad[static_cast<size_t>(t)].b =
          Tensor<T>::randn({cfg.rank, mcfg.d_model}, rng, cfg.init_std, /*requires_grad=*/true);
    }
    set.layers.push_back(std::move(quad));
  }
  return set;
}

template <class T, class Fn>
void for_each_adapter(AdapterSet<T>& set, Fn&& fn) {
  static const char* const kNames[kAdapterTargets] = {"wq", "wk", "wv", "wo"};
  for (size_t l = 0; l < set.layers.size(); ++l) {
    for (int t = 0; t < kAdapterTargets; ++t) {
      const std::string p = "layer" + std::to_string(l) + "." + kNames[t] + ".";
      fn(p + "a", set.layers[l][static_cast<size_t>(t)].a);
      fn(p + "b", set.layers[l][static_cast<size_t>(t)].b);
    }
  }
}

template <class T>
int64_t adapter_parameter_count(const AdapterSet<T>& set) {
  int64_t total = 0;
  for_each_adapter(const_cast<AdapterSet<T>&>(set),
                   [&](const std::string&, Tensor<T>& t) { total += t.size(); });
  return total;
}

// ---------------------------------------------------------------------------
// Forward passes.
// ---------------------------------------------------------------------------

// Cached keys and values for an already-encoded span, one pair per layer,
// each [len x d_model].
template <class T>
struct KvCache {
  int64_t len = 0;
  std::vector<std::pair<Tensor<T>, Tensor<T>>> layers;
};

// Attention weights of the final query row, captured per layer and head over
// all visible keys.
using AttentionCapture = std::vector<std::vector<std::vector<double>>>;

template <class T>
struct ForwardHooks {
  Tape<T>* tape = nullptr;
  const AdapterSet<T>* adapters = nullptr;
  bool training = false;       // enables adapter-path dropout
  Rng* dropout_rng = nullptr;  // required when training with dropout > 0
  AttentionCapture* capture = nullptr;
};

namespace detail {

template <class T>
Tensor<T> adapted_matmul(const Tensor<T>& x, const Tensor<T>& w, const AdapterSet<T>* adapters,
                         size_t layer, AdapterTarget target, const ForwardHooks<T>& hooks) {
  Tensor<T> base = matmul(x, w, hooks.tape);
  if (!adapters || adapters->empty()) return base;
  const auto& ad = adapters->layers[layer][static_cast<size_t>(target)];
  Tensor<T> xin = x;
  if (hooks.training && adapters->cfg.dropout > 0.0) {
    if (!hooks.dropout_rng) throw ContractError("forward: training with dropout needs an rng");
    xin = dropout(x, adapters->cfg.dropout, *hooks.dropout_rng, hooks.tape);
  }
  Tensor<T> low = matmul(matmul(xin, ad.a, hooks.tape), ad.b, hooks.tape);
  return add(base, scale(low, static_cast<T>(adapters->scaling()), hooks.tape), hooks.tape);
}

// One full pass over `ids` occupying positions base..base+s-1, where base is
// the length of `cache` (pass nullptr for a from-scratch pass). Returns the
// final hidden states and, when `collect` is set, the K/V rows each layer
// produced for these positions.
template <class T>
Tensor<T> run_stack(const Model<T>& m, const KvCache<T>* cache, std::span<const int> ids,
                    const ForwardHooks<T>& hooks, KvCache<T>* collect) {
  const int64_t s = static_cast<int64_t>(ids.size());
  if (s == 0) throw ContractError("forward: empty token sequence");
  const int64_t base = cache ? cache->len : 0;
  if (base + s > m.cfg.max_positions) {
    throw CapacityError("forward: sequence of length " + std::to_string(base + s) +
                        " exceeds max_positions " + std::to_string(m.cfg.max_positions));
  }
  if (cache && static_cast<int>(cache->layers.size()) != m.cfg.n_layers) {
    throw ContractError("forward: cache depth does not match the model");
  }
  const int64_t d = m.cfg.d_model;
  const int64_t n_heads = m.cfg.n_heads;
  const int64_t dh = d / n_heads;
  const T inv_sqrt_dh = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

  Tensor<T> x = add(gather_rows(m.embedding, ids, hooks.tape),
                    slice_rows(m.positions, base, s, hooks.tape), hooks.tape);
  if (hooks.capture) hooks.capture->assign(static_cast<size_t>(m.cfg.n_layers), {});

  for (size_t l = 0; l < m.layers.size(); ++l) {
    const Layer<T>& layer = m.layers[l];
    Tensor<T> xn = rms_norm(x, layer.norm1_gain, static_cast<T>(m.cfg.rms_eps), hooks.tape);
    Tensor<T> q = adapted_matmul(xn, layer.wq, hooks.adapters, l, AdapterTarget::Query, hooks);
    Tensor<T> k_new = adapted_matmul(xn, layer.wk, hooks.adapters, l, AdapterTarget::Key, hooks);
    Tensor<T> v_new = adapted_matmul(xn, layer.wv, hooks.adapters, l, AdapterTarget::Value, hooks);

    Tensor<T> k_all = cache ? concat_rows<T>({cache->layers[l].first, k_new}, hooks.tape) : k_new;
    Tensor<T> v_all = cache ? concat_rows<T>({cache->layers[l].second, v_new}, hooks.tape) : v_new;
    if (collect) collect->layers.push_back({k_new, v_new});

    std::vector<Tensor<T>> head_outs;
    head_outs.reserve(static_cast<size_t>(n_heads));
    for (int64_t h = 0; h < n_heads; ++h) {
      Tensor<T> qh = slice_cols(q, h * dh, dh, hooks.tape);
      Tensor<T> kh = slice_cols(k_all, h * dh, dh, hooks.tape);
      Tensor<T> vh = slice_cols(v_all, h * dh, dh, hooks.tape);
      Tensor<T> scores = scale(matmul(qh, transpose(kh, hooks.tape), hooks.tape), inv_sqrt_dh, hooks.tape);
      Tensor<T> att = causal_masked_softmax(scores, base, hooks.tape);
      if (hooks.capture) {
        const int64_t keys = att.dim(1);
        std::vector<double> last_row(static_cast<size_t>(keys));
        for (int64_t j = 0; j < keys; ++j) {
          last_row[static_cast<size_t>(j)] = static_cast<double>(att.at({s - 1, j}));
        }
        (*hooks.capture)[l].push_back(std::move(last_row));
      }
      head_outs.push_back(matmul(att, vh, hooks.tape));
    }
    Tensor<T> merged = concat_cols(head_outs, hooks.tape);
    Tensor<T> proj = adapted_matmul(merged, layer.wo, hooks.adapters, l, AdapterTarget::Output, hooks);
    x = add(x, proj, hooks.tape);

    Tensor<T> xf = rms_norm(x, layer.norm2_gain, static_cast<T>(m.cfg.rms_eps), hooks.tape);
    Tensor<T> ff = matmul(gelu(matmul(xf, layer.w1, hooks.tape), hooks.tape), layer.w2, hooks.tape);
    x = add(x, ff, hooks.tape);
  }
  return x;
}

}  // namespace detail

// Encodes a span from position 0 and keeps its per-layer keys and values for
// reuse by later suffix passes.
template <class T>
KvCache<T> encode_prefix(const Model<T>& m, std::span<const int> ids,
                         const ForwardHooks<T>& hooks = {}) {
  KvCache<T> cache;
  detail::run_stack<T>(m, nullptr, ids, hooks, &cache);
  cache.len = static_cast<int64_t>(ids.size());
  return cache;
}

// Runs `ids` at positions cache.len onward, attending the cache plus itself
// causally, and returns logits for every position, [s x vocab].
template <class T>
Tensor<T> forward_suffix(const Model<T>& m, const KvCache<T>& cache, std::span<const int> ids,
                         const ForwardHooks<T>& hooks = {}) {
  const KvCache<T>* c = cache.len > 0 ? &cache : nullptr;
  if (cache.len == 0 && !cache.layers.empty()) {
    throw ContractError("forward_suffix: cache claims zero length but holds layers");
  }
  Tensor<T> hidden = detail::run_stack<T>(m, c, ids, hooks, nullptr);
  Tensor<T> normed = rms_norm(hidden, m.final_gain, static_cast<T>(m.cfg.rms_eps), hooks.tape);
  Tensor<T> logits = matmul(normed, m.unembed, hooks.tape);
  return add_row_vector(logits, m.logit_bias, hooks.tape);
}

// Whole-sequence pass from position 0; logits for every position.
template <class T>
Tensor<T> forward_full(const Model<T>& m, std::span<const int> ids,
                       const ForwardHooks<T>& hooks = {}) {
  return forward_suffix(m, KvCache<T>{}, ids, hooks);
}

}  // namespace permubias
