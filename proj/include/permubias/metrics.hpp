#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "permubias/error.hpp"

namespace permubias {

// All metrics operate on per-instance probability matrices: probs[p][c] is
// the probability assigned to content index c under ordering p. Columns are
// content-aligned, so column spread across rows is exactly the quantity an
// ordering-insensitive model would hold at zero.

using ProbMatrix = std::vector<std::vector<double>>;

// Ties resolve to the lowest index, making every argmax-based metric
// deterministic.
int argmax_row(const std::vector<double>& row);

// Mean over contents of the population variance of each content's
// probability across orderings. Zero iff every ordering yields the same
// distribution; at most 0.25 for probabilities.
double pbm_instance(const ProbMatrix& probs);

// Unweighted mean of per-instance values.
double pbm_dataset(const std::vector<ProbMatrix>& per_instance);

// Fraction of instances whose top content under the identity ordering
// differs from the top content under the reversal.
double flip_rate(const std::vector<std::pair<std::vector<double>, std::vector<double>>>& id_rev_rows);

// Spread of per-label recall under the identity ordering, where label j
// denotes display position j (equal to content index j under identity).
// Labels that never appear as the correct answer carry no recall and are
// excluded; the result reports how many labels were used and skipped.
struct RstdResult {
  double value = 0.0;
  int labels_used = 0;
  int labels_empty = 0;
};
RstdResult recall_std(const std::vector<int>& chosen, const std::vector<int>& answer, int n_labels);

// KL divergence of the model's choice distribution q from the answer-key
// label distribution p under the identity ordering, natural log: sum of
// p ln(p/q). Labels with no gold mass contribute nothing; q is floored by
// eps and renormalized so never-predicted labels stay finite.
double choice_kl(const std::vector<int>& chosen, const std::vector<int>& answer, int n_labels,
                 double eps = 1e-9);

// Content index with the highest mean probability across orderings.
int majority_vote(const ProbMatrix& probs);

// Ordering sensitivity left after voting: every row is replaced by the
// column-mean row and the instance metric is recomputed. The vote consumes
// the whole matrix, so this is zero up to rounding; the value is returned
// so reports can prove it rather than assert it.
double vote_certificate(const ProbMatrix& probs);

// Accuracy by ordering index: accuracy_p is the fraction of instances whose
// top content under their p-th ordering matches the answer, computed over
// the instances that have a p-th ordering. The headline accuracy uses only
// the identity ordering of each instance (identity_rows[i], row 0 when the
// list is empty; the ordering sets built upstream always put identity
// first); acc_std is the population std of accuracy_p across p.
struct AccuracyResult {
  double accuracy = 0.0;
  double acc_std = 0.0;
};
AccuracyResult permutation_accuracy(const std::vector<ProbMatrix>& per_instance,
                                    const std::vector<int>& answers,
                                    const std::vector<int>& identity_rows = {});

}  // namespace permubias
