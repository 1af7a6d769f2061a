#include "permubias/metrics.hpp"

#include <cmath>

namespace permubias {

namespace {

void check_matrix(const ProbMatrix& probs) {
  if (probs.empty() || probs[0].empty()) throw ContractError("metrics: empty probability matrix");
  const size_t n = probs[0].size();
  for (const auto& row : probs) {
    if (row.size() != n) throw ContractError("metrics: ragged probability matrix");
    for (double v : row) {
      if (!std::isfinite(v) || v < -1e-9 || v > 1.0 + 1e-9) {
        throw NumericError("metrics: probability outside [0, 1]");
      }
    }
  }
}

std::vector<double> column_means(const ProbMatrix& probs) {
  const size_t m = probs.size(), n = probs[0].size();
  std::vector<double> mean(n, 0.0);
  for (const auto& row : probs) {
    for (size_t c = 0; c < n; ++c) mean[c] += row[c];
  }
  for (auto& v : mean) v /= static_cast<double>(m);
  return mean;
}

}  // namespace

int argmax_row(const std::vector<double>& row) {
  if (row.empty()) throw ContractError("argmax_row: empty row");
  int best = 0;
  for (size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[static_cast<size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

double pbm_instance(const ProbMatrix& probs) {
  check_matrix(probs);
  const size_t m = probs.size(), n = probs[0].size();
  const auto mean = column_means(probs);
  double total = 0.0;
  for (size_t c = 0; c < n; ++c) {
    double var = 0.0;
    for (size_t p = 0; p < m; ++p) {
      const double d = probs[p][c] - mean[c];
      var += d * d;
    }
    total += var / static_cast<double>(m);
  }
  return total / static_cast<double>(n);
}

double pbm_dataset(const std::vector<ProbMatrix>& per_instance) {
  if (per_instance.empty()) throw ContractError("pbm_dataset: no instances");
  double total = 0.0;
  for (const auto& probs : per_instance) total += pbm_instance(probs);
  return total / static_cast<double>(per_instance.size());
}

double flip_rate(
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& id_rev_rows) {
  if (id_rev_rows.empty()) throw ContractError("flip_rate: no instances");
  int flips = 0;
  for (const auto& [id_row, rev_row] : id_rev_rows) {
    if (id_row.size() != rev_row.size()) throw ContractError("flip_rate: row width mismatch");
    if (argmax_row(id_row) != argmax_row(rev_row)) ++flips;
  }
  return static_cast<double>(flips) / static_cast<double>(id_rev_rows.size());
}

RstdResult recall_std(const std::vector<int>& chosen, const std::vector<int>& answer,
                      int n_labels) {
  if (chosen.size() != answer.size() || chosen.empty()) {
    throw ContractError("recall_std: need matching nonempty choice and answer lists");
  }
  if (n_labels < 1) throw ContractError("recall_std: n_labels must be positive");
  std::vector<int> hits(static_cast<size_t>(n_labels), 0);
  std::vector<int> totals(static_cast<size_t>(n_labels), 0);
  for (size_t i = 0; i < answer.size(); ++i) {
    const int a = answer[i];
    if (a < 0 || a >= n_labels) throw RangeError("recall_std: answer label out of range");
    ++totals[static_cast<size_t>(a)];
    if (chosen[i] == a) ++hits[static_cast<size_t>(a)];
  }
  std::vector<double> recalls;
  RstdResult out;
  for (int j = 0; j < n_labels; ++j) {
    if (totals[static_cast<size_t>(j)] == 0) {
      ++out.labels_empty;
      continue;
    }
    recalls.push_back(static_cast<double>(hits[static_cast<size_t>(j)]) /
                      static_cast<double>(totals[static_cast<size_t>(j)]));
  }
  out.labels_used = static_cast<int>(recalls.size());
  if (recalls.empty()) throw ContractError("recall_std: every label group is empty");
  double mean = 0.0;
  for (double r : recalls) mean += r;
  mean /= static_cast<double>(recalls.size());
  double var = 0.0;
  for (double r : recalls) var += (r - mean) * (r - mean);
  var /= static_cast<double>(recalls.size());
  out.value = std::sqrt(var);
  return out;
}

double choice_kl(const std::vector<int>& chosen, const std::vector<int>& answer, int n_labels,
                 double eps) {
  if (chosen.size() != answer.size() || chosen.empty()) {
    throw ContractError("choice_kl: need matching nonempty choice and answer lists");
  }
  if (n_labels < 1) throw ContractError("choice_kl: n_labels must be positive");
  if (eps <= 0.0) throw ConfigError("choice_kl: eps must be positive");
  std::vector<double> p(static_cast<size_t>(n_labels), 0.0);
  std::vector<double> q(static_cast<size_t>(n_labels), 0.0);
  const double w = 1.0 / static_cast<double>(chosen.size());
  for (size_t i = 0; i < chosen.size(); ++i) {
    if (chosen[i] < 0 || chosen[i] >= n_labels || answer[i] < 0 || answer[i] >= n_labels) {
      throw RangeError("choice_kl: label out of range");
    }
    p[static_cast<size_t>(answer[i])] += w;
    q[static_cast<size_t>(chosen[i])] += w;
  }
  double q_sum = 0.0;
  for (auto& v : q) {
    v += eps;
    q_sum += v;
  }
  for (auto& v : q) v /= q_sum;
  double kl = 0.0;
  for (int j = 0; j < n_labels; ++j) {
    const double pj = p[static_cast<size_t>(j)];
    if (pj > 0.0) kl += pj * std::log(pj / q[static_cast<size_t>(j)]);
  }
  return kl;
}

int majority_vote(const ProbMatrix& probs) {
  check_matrix(probs);
  return argmax_row(column_means(probs));
}

double vote_certificate(const ProbMatrix& probs) {
  check_matrix(probs);
  const auto mean = column_means(probs);
  return pbm_instance(ProbMatrix(probs.size(), mean));
}

AccuracyResult permutation_accuracy(const std::vector<ProbMatrix>& per_instance,
                                    const std::vector<int>& answers,
                                    const std::vector<int>& identity_rows) {
  if (per_instance.size() != answers.size() || per_instance.empty()) {
    throw ContractError("permutation_accuracy: need matching nonempty lists");
  }
  if (!identity_rows.empty() && identity_rows.size() != per_instance.size()) {
    throw ContractError("permutation_accuracy: identity_rows size mismatch");
  }
  size_t max_m = 0;
  for (const auto& probs : per_instance) {
    check_matrix(probs);
    max_m = std::max(max_m, probs.size());
  }
  AccuracyResult out;
  int identity_correct = 0;
  for (size_t i = 0; i < per_instance.size(); ++i) {
    const auto& probs = per_instance[i];
    if (answers[i] < 0 || answers[i] >= static_cast<int>(probs[0].size())) {
      throw RangeError("permutation_accuracy: answer out of range");
    }
    const int id_row = identity_rows.empty() ? 0 : identity_rows[i];
    if (id_row < 0 || id_row >= static_cast<int>(probs.size())) {
      throw RangeError("permutation_accuracy: identity row out of range");
    }
    if (argmax_row(probs[static_cast<size_t>(id_row)]) == answers[i]) ++identity_correct;
  }
  out.accuracy =
      static_cast<double>(identity_correct) / static_cast<double>(per_instance.size());

  std::vector<double> by_index;
  for (size_t p = 0; p < max_m; ++p) {
    int correct = 0, present = 0;
    for (size_t i = 0; i < per_instance.size(); ++i) {
      if (p >= per_instance[i].size()) continue;
      ++present;
      if (argmax_row(per_instance[i][p]) == answers[i]) ++correct;
    }
    if (present > 0) {
      by_index.push_back(static_cast<double>(correct) / static_cast<double>(present));
    }
  }
  double mean = 0.0;
  for (double a : by_index) mean += a;
  mean /= static_cast<double>(by_index.size());
  double var = 0.0;
  for (double a : by_index) var += (a - mean) * (a - mean);
  var /= static_cast<double>(by_index.size());
  out.acc_std = std::sqrt(var);
  return out;
}

}  // namespace permubias
