#include "permubias/permute.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "permubias/rng.hpp"

namespace permubias {

Permutation identity_permutation(int n) {
  if (n < 1) throw RangeError("identity_permutation: n must be positive");
  Permutation sigma(static_cast<size_t>(n));
  std::iota(sigma.begin(), sigma.end(), 0);
  return sigma;
}

Permutation reverse_permutation(int n) {
  Permutation sigma = identity_permutation(n);
  std::reverse(sigma.begin(), sigma.end());
  return sigma;
}

Permutation inverse_permutation(const Permutation& sigma) {
  if (!is_permutation(sigma)) throw ContractError("inverse_permutation: not a permutation");
  Permutation inv(sigma.size());
  for (size_t j = 0; j < sigma.size(); ++j) inv[static_cast<size_t>(sigma[j])] = static_cast<int>(j);
  return inv;
}

bool is_permutation(const Permutation& sigma) {
  const int n = static_cast<int>(sigma.size());
  std::vector<bool> seen(sigma.size(), false);
  for (int v : sigma) {
    if (v < 0 || v >= n || seen[static_cast<size_t>(v)]) return false;
    seen[static_cast<size_t>(v)] = true;
  }
  return n > 0;
}

uint64_t factorial(int n) {
  if (n < 0 || n > 20) throw RangeError("factorial: n out of range");
  uint64_t f = 1;
  for (int i = 2; i <= n; ++i) f *= static_cast<uint64_t>(i);
  return f;
}

std::vector<Permutation> enumerate_permutations(int n) {
  if (n < 1) throw RangeError("enumerate_permutations: n must be positive");
  if (n > 4) {
    throw GuardError("enumerate_permutations: full enumeration is capped at n = 4, got n = " +
                     std::to_string(n));
  }
  std::vector<Permutation> all;
  Permutation sigma = identity_permutation(n);
  do {
    all.push_back(sigma);
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  return all;
}

std::vector<Permutation> sample_permutations(int n, int m, uint64_t seed) {
  if (n < 2) throw ConfigError("sample_permutations: n must be at least 2");
  if (m < 2) throw ConfigError("sample_permutations: need room for identity and reversal");
  if (n <= 20 && static_cast<uint64_t>(m) > factorial(n)) {
    throw ConfigError("sample_permutations: requested more orderings than exist");
  }
  std::vector<Permutation> out;
  out.reserve(static_cast<size_t>(m));
  out.push_back(identity_permutation(n));
  out.push_back(reverse_permutation(n));
  std::set<Permutation> seen(out.begin(), out.end());
  Rng rng(seed);
  Permutation sigma = identity_permutation(n);
  while (out.size() < static_cast<size_t>(m)) {
    for (size_t i = sigma.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(rng.below(i));
      std::swap(sigma[i - 1], sigma[j]);
    }
    if (seen.insert(sigma).second) out.push_back(sigma);
  }
  return out;
}

std::vector<Permutation> permutation_set(int n, int cap, uint64_t seed) {
  if (cap < 1) throw ConfigError("permutation_set: cap must be positive");
  if (n >= 1 && n <= 4 && factorial(n) <= static_cast<uint64_t>(cap)) {
    return enumerate_permutations(n);
  }
  if (n > 4 && n <= 20 && factorial(n) <= static_cast<uint64_t>(cap)) {
    // Full set fits but the enumeration guard forbids materializing it; fall
    // through to sampling everything distinct instead.
    return sample_permutations(n, static_cast<int>(factorial(n)), seed);
  }
  return sample_permutations(n, cap, seed);
}

}  // namespace permubias
