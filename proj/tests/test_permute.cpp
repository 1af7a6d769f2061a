#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "permubias/permute.hpp"
#include "permubias/rng.hpp"

using namespace permubias;

TEST_CASE("enumeration is lexicographic with identity first and reversal last") {
  auto all = enumerate_permutations(3);
  REQUIRE(all.size() == 6);
  CHECK(all.front() == Permutation{0, 1, 2});
  CHECK(all.back() == Permutation{2, 1, 0});
  CHECK(all[1] == Permutation{0, 2, 1});
  CHECK(all[2] == Permutation{1, 0, 2});
  for (size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1] < all[i]);

  auto four = enumerate_permutations(4);
  CHECK(four.size() == 24);
  CHECK(four.front() == identity_permutation(4));
  CHECK(four.back() == reverse_permutation(4));
  std::set<Permutation> uniq(four.begin(), four.end());
  CHECK(uniq.size() == 24);

  CHECK(enumerate_permutations(1).size() == 1);
}

TEST_CASE("full enumeration refuses more than four options") {
  CHECK_THROWS_AS(enumerate_permutations(5), GuardError);
  CHECK_THROWS_AS(enumerate_permutations(8), GuardError);
  CHECK_THROWS_AS(enumerate_permutations(0), RangeError);
}

TEST_CASE("sampling forces identity and reversal, is distinct and deterministic") {
  auto s = sample_permutations(8, 24, 99);
  REQUIRE(s.size() == 24);
  CHECK(s[0] == identity_permutation(8));
  CHECK(s[1] == reverse_permutation(8));
  std::set<Permutation> uniq(s.begin(), s.end());
  CHECK(uniq.size() == 24);
  for (const auto& p : s) CHECK(is_permutation(p));

  auto again = sample_permutations(8, 24, 99);
  CHECK(s == again);
  auto other = sample_permutations(8, 24, 100);
  CHECK(s != other);
  // Forced members survive a different seed.
  CHECK(other[0] == identity_permutation(8));
  CHECK(other[1] == reverse_permutation(8));
}

TEST_CASE("sampling rejects impossible requests") {
  CHECK_THROWS_AS(sample_permutations(2, 3, 1), ConfigError);   // only 2 exist
  CHECK_THROWS_AS(sample_permutations(3, 1, 1), ConfigError);   // no room for both anchors
  CHECK_THROWS_AS(sample_permutations(1, 2, 1), ConfigError);
  // Exactly exhausting the space works.
  auto all3 = sample_permutations(3, 6, 5);
  std::set<Permutation> uniq(all3.begin(), all3.end());
  CHECK(uniq.size() == 6);
}

TEST_CASE("permutation_set enumerates when the space fits and samples otherwise") {
  auto full = permutation_set(4, 24, 7);
  CHECK(full.size() == 24);
  CHECK(full == enumerate_permutations(4));

  auto sampled = permutation_set(8, 24, 7);
  CHECK(sampled.size() == 24);
  CHECK(sampled[0] == identity_permutation(8));
  CHECK(sampled[1] == reverse_permutation(8));

  auto capped = permutation_set(4, 6, 7);
  CHECK(capped.size() == 6);
  CHECK(capped[0] == identity_permutation(4));
  CHECK(capped[1] == reverse_permutation(4));

  auto tiny = permutation_set(2, 24, 7);
  CHECK(tiny.size() == 2);
}

TEST_CASE("reversal is an involution and inverse round-trips") {
  for (int n : {2, 3, 4, 6}) {
    auto rev = reverse_permutation(n);
    Permutation twice(rev.size());
    for (size_t j = 0; j < rev.size(); ++j) twice[j] = rev[static_cast<size_t>(rev[j])];
    CHECK(twice == identity_permutation(n));

    Rng rng(static_cast<uint64_t>(n));
    auto s = sample_permutations(n, 2, 3).back();
    auto inv = inverse_permutation(s);
    for (size_t j = 0; j < s.size(); ++j) {
      CHECK(inv[static_cast<size_t>(s[j])] == static_cast<int>(j));
      CHECK(s[static_cast<size_t>(inv[j])] == static_cast<int>(j));
    }
  }
}

TEST_CASE("is_permutation spots malformed inputs") {
  CHECK(is_permutation({0}));
  CHECK(is_permutation({2, 0, 1}));
  CHECK_FALSE(is_permutation({}));
  CHECK_FALSE(is_permutation({0, 0}));
  CHECK_FALSE(is_permutation({1, 2}));
  CHECK_FALSE(is_permutation({-1, 0}));
}

TEST_CASE("per-instance seeds separate instances but stay reproducible") {
  CHECK(mix_seed(42, 0) != mix_seed(42, 1));
  CHECK(mix_seed(42, 0) != mix_seed(43, 0));
  CHECK(mix_seed(42, 7) == mix_seed(42, 7));
  auto a = sample_permutations(8, 10, mix_seed(1, 0));
  auto b = sample_permutations(8, 10, mix_seed(1, 1));
  CHECK(a != b);
}
