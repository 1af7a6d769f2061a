#pragma once

#include <cstdint>
#include <vector>

#include "permubias/error.hpp"

namespace permubias {

// sigma[j] is the content index displayed at position j. Orderings of an
// instance's options are always carried in this form so that "which content
// ended up where" never has to be re-derived from rendered text.
using Permutation = std::vector<int>;

Permutation identity_permutation(int n);
Permutation reverse_permutation(int n);

// inverse[c] = display position of content index c.
Permutation inverse_permutation(const Permutation& sigma);

bool is_permutation(const Permutation& sigma);

uint64_t factorial(int n);

// All n! orderings in lexicographic order, which puts the identity first and
// the reversal last. Refuses n > 4: beyond that the full set is never wanted
// and asking for it is a caller bug.
std::vector<Permutation> enumerate_permutations(int n);

// m distinct orderings: identity at index 0, reversal at index 1, the rest
// drawn uniformly without replacement. Deterministic in (n, m, seed).
std::vector<Permutation> sample_permutations(int n, int m, uint64_t seed);

// The orderings an instance is evaluated under: the full set when n! fits
// within cap, otherwise cap sampled orderings.
std::vector<Permutation> permutation_set(int n, int cap, uint64_t seed);

}  // namespace permubias
