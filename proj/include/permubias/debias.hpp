#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "permubias/engine.hpp"
#include "permubias/metrics.hpp"

namespace permubias {

// Unsupervised ordering-debias training: rank-1 adapters on the attention
// projections, driven purely by how much the model's option distribution
// moves when the options are reshuffled. No labels are consumed.

struct DebiasConfig {
  double lambda = 0.1;          // entropy penalty weight
  int perm_cap = 24;            // orderings per instance (full set if n! fits)
  int samples_per_epoch = 64;   // instance draws per epoch, with replacement
  int epochs = 1;
  int max_steps = 0;            // 0 means no cap; otherwise stop after this many updates
  double learning_rate = 1e-4;
  double weight_decay = 1e-3;   // decoupled
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  bool raw_bias_sum = false;     // skip the 1/(m*n) normalization of the bias term
  bool raw_entropy_sum = false;  // skip the 1/m normalization of the entropy term

  void validate() const {
    if (lambda < 0.0) throw ConfigError("debias: lambda must be nonnegative");
    if (samples_per_epoch < 1) throw ConfigError("debias: samples_per_epoch must be positive");
    if (epochs < 0 || max_steps < 0) throw ConfigError("debias: counts must be nonnegative");
    if (perm_cap < 1) throw ConfigError("debias: perm_cap must be positive");
    if (learning_rate <= 0.0) throw ConfigError("debias: learning rate must be positive");
    if (weight_decay < 0.0) throw ConfigError("debias: weight decay must be nonnegative");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
      throw ConfigError("debias: betas must lie in [0, 1)");
    }
    if (adam_eps <= 0.0) throw ConfigError("debias: adam_eps must be positive");
  }
};

struct TrainStep {
  int step = 0;  // 1-based, strictly increasing
  int epoch = 0;
  double loss = 0.0;
  double b_log = 0.0;
  double entropy = 0.0;
};

struct EpochEval {
  int epoch = 0;
  double pbm = 0.0;
  double accuracy = 0.0;  // meaningful only when has_accuracy
  bool has_accuracy = false;
};

struct TrainLog {
  std::vector<TrainStep> steps;
  std::vector<EpochEval> evals;
};

// One row per optimizer step; the held-out columns are filled on each
// epoch's final step and blank elsewhere.
std::string train_log_csv(const TrainLog& log);

// Spread of log-probabilities around the log of the ordering-pooled
// probability: (1/(m*n)) sum_p sum_c (ln probs[p][c] - ln mean_p' probs[p'][c])^2.
// Zero iff every content's probability is constant across orderings. The
// log of the mean, not the mean of logs; raw_sum drops the 1/(m*n).
template <class T>
Tensor<T> pbm_log_loss(const Tensor<T>& probs, std::type_identity_t<Tape<T>*> tape = nullptr,
                       bool raw_sum = false) {
  if (probs.rank() != 2) throw DimensionError("pbm_log_loss: expected [m x n] probabilities");
  const int64_t m = probs.dim(0), n = probs.dim(1);
  Tensor<T> lp = log(probs, tape);
  Tensor<T> lmean = log(col_mean(probs, tape), tape);
  Tensor<T> dev = sub(lp, broadcast_rows(lmean, m, tape), tape);
  Tensor<T> total = sum(mul(dev, dev, tape), tape);
  if (raw_sum) return total;
  return scale(total, T(1) / static_cast<T>(m * n), tape);
}

// Mean per-ordering entropy of the option distribution:
// (1/m) sum_p ( - sum_c probs[p][c] ln probs[p][c] ). Added to the loss with
// a positive weight this penalizes hedging toward the uniform distribution,
// which would otherwise zero the bias term for free. raw_sum drops the 1/m.
template <class T>
Tensor<T> entropy_reg(const Tensor<T>& probs, std::type_identity_t<Tape<T>*> tape = nullptr,
                      bool raw_sum = false) {
  if (probs.rank() != 2) throw DimensionError("entropy_reg: expected [m x n] probabilities");
  const int64_t m = probs.dim(0);
  Tensor<T> plogp = sum(mul(probs, log(probs, tape), tape), tape);
  return scale(plogp, raw_sum ? T(-1) : T(-1) / static_cast<T>(m), tape);
}

// Training objective: bias term plus lambda times the entropy term. With
// lambda = 0 this IS the bias term, bitwise.
template <class T>
Tensor<T> debias_loss(const Tensor<T>& probs, T lambda,
                      std::type_identity_t<Tape<T>*> tape = nullptr, bool raw_bias_sum = false,
                      bool raw_entropy_sum = false) {
  if (lambda < T(0)) throw ConfigError("debias_loss: lambda must be nonnegative");
  Tensor<T> b = pbm_log_loss(probs, tape, raw_bias_sum);
  if (lambda == T(0)) return b;
  return add(b, scale(entropy_reg(probs, tape, raw_entropy_sum), lambda, tape), tape);
}

// AdamW with decoupled weight decay. Parameters are updated in place through
// their nodes; updates run strictly between tapes, so no recorded adjoint
// ever observes a mutation. A parameter with no gradient buffer contributes
// a zero gradient (its moments still decay).
template <class T>
class AdamW {
 public:
  AdamW(std::vector<Tensor<T>> params, double lr, double wd, double beta1, double beta2,
        double eps)
      : lr_(lr), wd_(wd), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (params.empty()) throw ContractError("AdamW: no parameters");
    for (auto& p : params) {
      if (!p.requires_grad()) throw ContractError("AdamW: parameter does not require grad");
      slots_.push_back(Slot{p, std::vector<double>(static_cast<size_t>(p.size()), 0.0),
                            std::vector<double>(static_cast<size_t>(p.size()), 0.0)});
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& s : slots_) {
      auto node = s.param.node();
      const bool has = s.param.has_grad();
      for (size_t i = 0; i < node->data.size(); ++i) {
        const double g = has ? static_cast<double>(node->grad[i]) : 0.0;
        s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
        s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
        const double update = (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + eps_);
        const double decayed = update + wd_ * static_cast<double>(node->data[i]);
        node->data[i] -= static_cast<T>(lr_ * decayed);
      }
    }
  }

  int64_t steps_taken() const { return t_; }

 private:
  struct Slot {
    Tensor<T> param;
    std::vector<double> m, v;  // moments kept in double for either precision
  };
  std::vector<Slot> slots_;
  double lr_, wd_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

namespace detail {

// Rebuilds an adapter set over externally supplied factor tensors, in the
// same order for_each_adapter walks them: per layer, per target, a then b.
template <class T>
AdapterSet<T> adapters_from_leaves(const AdapterSet<T>& proto, const std::vector<Tensor<T>>& xs) {
  if (xs.size() != proto.layers.size() * kAdapterTargets * 2) {
    throw ContractError("adapters_from_leaves: leaf count mismatch");
  }
  AdapterSet<T> live;
  live.cfg = proto.cfg;
  live.layers.resize(proto.layers.size());
  size_t k = 0;
  for (auto& quad : live.layers) {
    for (auto& ad : quad) {
      ad.a = xs[k++];
      ad.b = xs[k++];
    }
  }
  return live;
}

}  // namespace detail

// Held-out evaluation with the adapters active and dropout off: ordering
// bias over the pooled probability matrices, plus accuracy when every
// instance carries an answer.
template <class T>
EpochEval evaluate_heldout(const Model<T>& model, const AdapterSet<T>& adapters,
                           const Tokenizer& tok, const PromptTemplate& tmpl,
                           const std::vector<McqInstance>& heldout, int perm_cap, uint64_t seed,
                           int epoch) {
  if (heldout.empty()) throw ContractError("evaluate_heldout: empty evaluation set");
  std::vector<ProbMatrix> mats;
  std::vector<int> answers;
  std::vector<int> identity_rows;
  bool labeled = true;
  ForwardHooks<T> hooks;
  hooks.adapters = &adapters;
  for (size_t i = 0; i < heldout.size(); ++i) {
    const auto& inst = heldout[i];
    auto perms = permutation_set(inst.n_options(), perm_cap, mix_seed(seed, 0xE7A1 + i));
    auto scored =
        score_instance(model, tok, tmpl, inst, perms, ScoreMode::Cached, hooks, nullptr);
    mats.push_back(scored.probs);
    identity_rows.push_back(scored.identity_index);
    if (inst.answer.has_value()) {
      answers.push_back(*inst.answer);
    } else {
      labeled = false;
    }
  }
  EpochEval eval;
  eval.epoch = epoch;
  eval.pbm = pbm_dataset(mats);
  if (labeled) {
    eval.accuracy = permutation_accuracy(mats, answers, identity_rows).accuracy;
    eval.has_accuracy = true;
  }
  return eval;
}

// Maximum relative error between backpropagated and central-difference
// gradients of the full pipeline (render, shared-prefix scoring, loss) with
// respect to every adapter factor. Dropout is off; run in 64-bit. The step
// balances truncation against cancellation: the loss is O(0.1), so 1e-4
// keeps difference-quotient noise near 1e-13 while truncation stays below
// the comparison's relative floor.
template <class T>
double grad_check_loss(const Model<T>& model, const Tokenizer& tok, const PromptTemplate& tmpl,
                       const McqInstance& inst, const std::vector<Permutation>& perms,
                       const AdapterSet<T>& adapters, T lambda, double step = 1e-4) {
  std::vector<Tensor<T>> leaves;
  for_each_adapter(const_cast<AdapterSet<T>&>(adapters),
                   [&](const std::string&, Tensor<T>& t) { leaves.push_back(t); });
  LeafFunction<T> f = [&](const std::vector<Tensor<T>>& xs, Tape<T>* tape) {
    AdapterSet<T> live = detail::adapters_from_leaves(adapters, xs);
    ForwardHooks<T> hooks;
    hooks.tape = tape;
    hooks.adapters = &live;
    Tensor<T> probs = score_orderings(model, tok, tmpl, inst, perms, ScoreMode::Cached, hooks);
    return debias_loss(probs, lambda, tape);
  };
  return finite_diff_check<T>(f, leaves, step);
}

// Unsupervised training loop. Each step draws one instance (seeded, with
// replacement), scores its ordering set through the shared-prefix route with
// adapter dropout active, backpropagates the debias loss into the adapter
// factors only, and applies one AdamW update. The base model is verified
// frozen by checksum. Held-out bias and accuracy are recorded once per epoch.
template <class T>
TrainLog train_debias(const Model<T>& model, AdapterSet<T>& adapters, const Tokenizer& tok,
                      const PromptTemplate& tmpl, const std::vector<McqInstance>& train_set,
                      const std::vector<McqInstance>& heldout, const DebiasConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw ContractError("train_debias: empty training set");
  const uint64_t base_before = weight_checksum(model);

  std::vector<Tensor<T>> params;
  for_each_adapter(adapters, [&](const std::string&, Tensor<T>& t) { params.push_back(t); });
  AdamW<T> opt(params, cfg.learning_rate, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.adam_eps);

  Rng pick_rng(mix_seed(cfg.seed, 0xD1AA));
  Rng drop_rng(mix_seed(cfg.seed, 0xD0D0));

  TrainLog log;
  int step_no = 0;
  bool capped = false;
  for (int epoch = 0; epoch < cfg.epochs && !capped; ++epoch) {
    for (int s = 0; s < cfg.samples_per_epoch && !capped; ++s) {
      const auto& inst = train_set[pick_rng.below(train_set.size())];
      auto perms = permutation_set(inst.n_options(), cfg.perm_cap,
                                   mix_seed(cfg.seed, 0x5EED + static_cast<uint64_t>(step_no)));
      Tape<T> tape;
      ForwardHooks<T> hooks;
      hooks.tape = &tape;
      hooks.adapters = &adapters;
      hooks.training = true;
      hooks.dropout_rng = &drop_rng;
      Tensor<T> probs =
          score_orderings(model, tok, tmpl, inst, perms, ScoreMode::Cached, hooks, nullptr);
      Tensor<T> b = pbm_log_loss(probs, &tape, cfg.raw_bias_sum);
      Tensor<T> loss = b;
      Tensor<T> h;
      if (cfg.lambda > 0.0) {
        h = entropy_reg(probs, &tape, cfg.raw_entropy_sum);
        loss = add(b, scale(h, static_cast<T>(cfg.lambda), &tape), &tape);
      }
      const double loss_val = static_cast<double>(loss.item());
      if (!std::isfinite(loss_val)) {
        throw NumericError("train_debias: non-finite loss at step " + std::to_string(step_no + 1));
      }
      backward(loss, tape);
      opt.step();
      ++step_no;
      log.steps.push_back(TrainStep{step_no, epoch, loss_val, static_cast<double>(b.item()),
                                    h.defined() ? static_cast<double>(h.item()) : 0.0});
      capped = cfg.max_steps > 0 && step_no >= cfg.max_steps;
    }
    if (!heldout.empty()) {
      log.evals.push_back(
          evaluate_heldout(model, adapters, tok, tmpl, heldout, cfg.perm_cap, cfg.seed, epoch));
    }
  }

  if (weight_checksum(model) != base_before) {
    throw ContractError("train_debias: base model weights changed");
  }
  return log;
}

}  // namespace permubias
