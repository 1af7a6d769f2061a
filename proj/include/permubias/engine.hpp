#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "permubias/dataset.hpp"
#include "permubias/model.hpp"
#include "permubias/permute.hpp"
#include "permubias/prompt.hpp"
#include "permubias/tokenizer.hpp"

namespace permubias {

// Exact count of tokens pushed through the network. Every forward pass adds
// the length of the sequence it actually computed, so cost claims are checked
// against what ran, not against a formula.
struct TokenCounter {
  int64_t forwarded = 0;
};

enum class ScoreMode { Naive, Cached };

// Per-instance token accounting. The naive route re-encodes the shared
// prefix for every ordering; the cached route encodes it once.
struct LedgerRow {
  std::string instance_id;
  int k = 0;
  int64_t prefix_len = 0;
  int64_t sum_option_lens = 0;
  int64_t naive_cost = 0;
  int64_t cached_cost = 0;
  double savings_pct = 0.0;
};

LedgerRow make_ledger_row(const std::string& instance_id, int64_t prefix_len,
                          const std::vector<int64_t>& suffix_lens);

std::string ledger_csv_header();
std::string ledger_csv_row(const LedgerRow& row);

// Everything downstream consumers need about one instance evaluated under a
// set of orderings. probs[p][c] is the probability the model puts on CONTENT
// index c when the options are displayed under perms[p], renormalized over
// the n option labels.
struct ScoredInstance {
  std::vector<Permutation> perms;
  std::vector<std::vector<double>> probs;
  int identity_index = -1;
  int reverse_index = -1;
  int64_t prefix_tokens = 0;
  std::vector<int64_t> suffix_tokens;
};

// Attention spread at the answer position: for each layer, head, and key
// position, the population standard deviation of the attention weight across
// orderings. Key positions below prefix_len belong to the shared prefix.
struct AttentionFluctuation {
  int64_t prefix_len = 0;
  int n_layers = 0;
  int n_heads = 0;
  std::vector<std::vector<std::vector<double>>> std_by_key;  // [layer][head][key]
  double mean_prefix_std = 0.0;
  double mean_suffix_std = 0.0;
};

namespace detail {

template <class T>
std::vector<int> content_order_label_ids(const Permutation& sigma) {
  const auto inv = inverse_permutation(sigma);
  std::vector<int> ids(sigma.size());
  for (size_t c = 0; c < sigma.size(); ++c) {
    ids[c] = Tokenizer::label_id(inv[c] + 1);
  }
  return ids;
}

}  // namespace detail

// Differentiable core: a [k x n] tensor whose row p holds the content-indexed
// option probabilities under perms[p]. Both routes run the same kernels; they
// differ only in whether the prefix is recomputed per ordering (Naive) or
// encoded once and attended by every continuation (Cached).
template <class T>
Tensor<T> score_orderings(const Model<T>& model, const Tokenizer& tok, const PromptTemplate& tmpl,
                          const McqInstance& inst, const std::vector<Permutation>& perms,
                          ScoreMode mode, const ForwardHooks<T>& hooks = {},
                          TokenCounter* counter = nullptr) {
  if (perms.empty()) throw ContractError("score_orderings: no orderings given");
  const int n = inst.n_options();
  std::vector<Tensor<T>> rows;
  rows.reserve(perms.size());

  if (mode == ScoreMode::Cached) {
    auto first = tokenize_prompt(tok, render_prompt(tmpl, inst, perms[0]));
    KvCache<T> cache = encode_prefix(model, std::span<const int>(first.prefix_ids), hooks);
    if (counter) counter->forwarded += static_cast<int64_t>(first.prefix_ids.size());
    for (const auto& sigma : perms) {
      auto tp = tokenize_prompt(tok, render_prompt(tmpl, inst, sigma));
      if (tp.prefix_ids != first.prefix_ids) {
        throw ContractError("score_orderings: prefix changed across orderings");
      }
      if (tp.suffix_ids.empty()) throw ContractError("score_orderings: empty suffix");
      Tensor<T> logits = forward_suffix(model, cache, std::span<const int>(tp.suffix_ids), hooks);
      if (counter) counter->forwarded += static_cast<int64_t>(tp.suffix_ids.size());
      Tensor<T> last = slice_rows(logits, logits.dim(0) - 1, 1, hooks.tape);
      auto label_ids = detail::content_order_label_ids<T>(sigma);
      rows.push_back(row_softmax(gather_cols(last, label_ids, hooks.tape), hooks.tape));
    }
  } else {
    for (const auto& sigma : perms) {
      auto tp = tokenize_prompt(tok, render_prompt(tmpl, inst, sigma));
      std::vector<int> full = tp.prefix_ids;
      full.insert(full.end(), tp.suffix_ids.begin(), tp.suffix_ids.end());
      if (full.empty()) throw ContractError("score_orderings: empty prompt");
      Tensor<T> logits = forward_full(model, std::span<const int>(full), hooks);
      if (counter) counter->forwarded += static_cast<int64_t>(full.size());
      Tensor<T> last = slice_rows(logits, logits.dim(0) - 1, 1, hooks.tape);
      auto label_ids = detail::content_order_label_ids<T>(sigma);
      rows.push_back(row_softmax(gather_cols(last, label_ids, hooks.tape), hooks.tape));
    }
  }
  Tensor<T> out = concat_rows(rows, hooks.tape);
  if (out.dim(1) != n) throw ContractError("score_orderings: probability width mismatch");
  return out;
}

// Scalar wrapper: evaluates without a tape and returns plain numbers plus the
// token accounting needed for ledgers.
template <class T>
ScoredInstance score_instance(const Model<T>& model, const Tokenizer& tok,
                              const PromptTemplate& tmpl, const McqInstance& inst,
                              const std::vector<Permutation>& perms, ScoreMode mode,
                              const ForwardHooks<T>& hooks = {},
                              TokenCounter* counter = nullptr) {
  if (perms.empty()) throw ContractError("score_instance: no orderings given");
  ScoredInstance out;
  out.perms = perms;
  const auto id = identity_permutation(inst.n_options());
  const auto rev = reverse_permutation(inst.n_options());
  for (size_t p = 0; p < perms.size(); ++p) {
    if (perms[p] == id && out.identity_index < 0) out.identity_index = static_cast<int>(p);
    if (perms[p] == rev && out.reverse_index < 0) out.reverse_index = static_cast<int>(p);
  }
  auto first = tokenize_prompt(tok, render_prompt(tmpl, inst, perms[0]));
  out.prefix_tokens = static_cast<int64_t>(first.prefix_ids.size());
  for (const auto& sigma : perms) {
    auto tp = tokenize_prompt(tok, render_prompt(tmpl, inst, sigma));
    out.suffix_tokens.push_back(static_cast<int64_t>(tp.suffix_ids.size()));
  }
  Tensor<T> probs = score_orderings(model, tok, tmpl, inst, perms, mode, hooks, counter);
  out.probs.assign(perms.size(), std::vector<double>(static_cast<size_t>(inst.n_options())));
  for (size_t p = 0; p < perms.size(); ++p) {
    for (int c = 0; c < inst.n_options(); ++c) {
      out.probs[p][static_cast<size_t>(c)] =
          static_cast<double>(probs.at({static_cast<int64_t>(p), c}));
    }
  }
  return out;
}

// Runs every ordering with attention capture and reduces to per-key spread.
// Orderings of one instance always produce equal key counts because the
// option block length does not depend on the ordering.
template <class T>
AttentionFluctuation attention_fluctuation(const Model<T>& model, const Tokenizer& tok,
                                           const PromptTemplate& tmpl, const McqInstance& inst,
                                           const std::vector<Permutation>& perms,
                                           const AdapterSet<T>* adapters = nullptr) {
  if (perms.empty()) throw ContractError("attention_fluctuation: no orderings given");
  auto first = tokenize_prompt(tok, render_prompt(tmpl, inst, perms[0]));
  ForwardHooks<T> prefix_hooks;
  prefix_hooks.adapters = adapters;
  KvCache<T> cache = encode_prefix(model, std::span<const int>(first.prefix_ids), prefix_hooks);

  std::vector<AttentionCapture> captures;
  captures.reserve(perms.size());
  for (const auto& sigma : perms) {
    auto tp = tokenize_prompt(tok, render_prompt(tmpl, inst, sigma));
    AttentionCapture cap;
    ForwardHooks<T> hooks;
    hooks.adapters = adapters;
    hooks.capture = &cap;
    forward_suffix(model, cache, std::span<const int>(tp.suffix_ids), hooks);
    captures.push_back(std::move(cap));
  }

  AttentionFluctuation out;
  out.prefix_len = static_cast<int64_t>(first.prefix_ids.size());
  out.n_layers = model.cfg.n_layers;
  out.n_heads = model.cfg.n_heads;
  const size_t keys = captures[0][0][0].size();
  for (const auto& cap : captures) {
    if (cap[0][0].size() != keys) {
      throw ContractError("attention_fluctuation: key counts differ across orderings");
    }
  }
  const double m = static_cast<double>(captures.size());
  double prefix_sum = 0.0, suffix_sum = 0.0;
  int64_t prefix_cells = 0, suffix_cells = 0;
  out.std_by_key.assign(static_cast<size_t>(out.n_layers), {});
  for (int l = 0; l < out.n_layers; ++l) {
    out.std_by_key[static_cast<size_t>(l)].assign(static_cast<size_t>(out.n_heads), {});
    for (int h = 0; h < out.n_heads; ++h) {
      auto& by_key = out.std_by_key[static_cast<size_t>(l)][static_cast<size_t>(h)];
      by_key.resize(keys);
      for (size_t j = 0; j < keys; ++j) {
        double mean = 0.0;
        for (const auto& cap : captures) mean += cap[static_cast<size_t>(l)][static_cast<size_t>(h)][j];
        mean /= m;
        double var = 0.0;
        for (const auto& cap : captures) {
          const double d = cap[static_cast<size_t>(l)][static_cast<size_t>(h)][j] - mean;
          var += d * d;
        }
        var /= m;
        by_key[j] = std::sqrt(var);
        if (static_cast<int64_t>(j) < out.prefix_len) {
          prefix_sum += by_key[j];
          ++prefix_cells;
        } else {
          suffix_sum += by_key[j];
          ++suffix_cells;
        }
      }
    }
  }
  out.mean_prefix_std = prefix_cells ? prefix_sum / static_cast<double>(prefix_cells) : 0.0;
  out.mean_suffix_std = suffix_cells ? suffix_sum / static_cast<double>(suffix_cells) : 0.0;
  return out;
}

}  // namespace permubias
