#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "permubias/rng.hpp"
#include "permubias/tensor.hpp"

using namespace permubias;

using Td = Tensor<double>;
using Tf = Tensor<float>;

TEST_CASE("construction validates shape against data length") {
  CHECK_THROWS_AS(Td::from_data({2, 3}, {1.0, 2.0}), DimensionError);
  auto t = Td::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(t.size() == 4);
  CHECK(t.at({1, 0}) == 3.0);
  CHECK_THROWS_AS(t.at({2, 0}), RangeError);
  CHECK_THROWS_AS(t.item(), ContractError);
}

TEST_CASE("matmul against hand-computed products") {
  // Identity leaves the other operand unchanged.
  auto eye = Td::from_data({2, 2}, {1, 0, 0, 1});
  auto a = Td::from_data({2, 2}, {3, -1, 2, 5});
  auto p = matmul(eye, a);
  for (int64_t i = 0; i < 4; ++i) CHECK(p.values()[i] == a.values()[i]);

  // [1x3].[3x2]: each output is a short dot product.
  auto u = Td::from_data({1, 3}, {1, 2, 3});
  auto m = Td::from_data({3, 2}, {1, 4, 2, 5, 3, 6});
  auto v = matmul(u, m);
  CHECK(v.at({0, 0}) == doctest::Approx(14.0));  // 1+4+9
  CHECK(v.at({0, 1}) == doctest::Approx(32.0));  // 4+10+18

  CHECK_THROWS_AS(matmul(u, a), DimensionError);
}

TEST_CASE("row_softmax basic behavior") {
  SUBCASE("constant rows give the uniform distribution") {
    auto x = Td::from_data({1, 4}, {0, 0, 0, 0});
    auto y = row_softmax(x);
    for (auto v : y.values()) CHECK(v == doctest::Approx(0.25));
  }
  SUBCASE("shift invariance") {
    auto x = Td::from_data({1, 3}, {1.0, 2.0, 3.0});
    auto xs = Td::from_data({1, 3}, {101.0, 102.0, 103.0});
    auto y = row_softmax(x);
    auto ys = row_softmax(xs);
    for (int64_t i = 0; i < 3; ++i) {
      CHECK(y.values()[i] == doctest::Approx(ys.values()[i]).epsilon(1e-12));
    }
  }
  SUBCASE("large magnitudes stay finite and normalized") {
    auto x = Td::from_data({1, 3}, {1e4, -1e4, 0.0});
    auto y = row_softmax(x);
    double s = 0;
    for (auto v : y.values()) {
      CHECK(std::isfinite(v));
      s += v;
    }
    CHECK(s == doctest::Approx(1.0));
  }
  SUBCASE("non-finite input is rejected") {
    auto x = Td::from_data({1, 2}, {std::numeric_limits<double>::infinity(), 0.0});
    CHECK_THROWS_AS(row_softmax(x), NumericError);
  }
}

TEST_CASE("causal_masked_softmax masks exactly and normalizes the valid span") {
  // 3 query rows against 5 keys with 2 prefix positions: row i sees keys 0..2+i.
  auto x = Td::from_data({3, 5}, {1, 2, 3, 99, 99,
                                  1, 1, 1, 1, 99,
                                  0, 0, 0, 0, 0});
  auto y = causal_masked_softmax(x, 2);
  CHECK(y.at({0, 3}) == 0.0);
  CHECK(y.at({0, 4}) == 0.0);
  CHECK(y.at({1, 4}) == 0.0);
  for (int64_t i = 0; i < 3; ++i) {
    double s = 0;
    for (int64_t j = 0; j < 5; ++j) s += y.at({i, j});
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Row 1 sees four equal scores.
  for (int64_t j = 0; j < 4; ++j) CHECK(y.at({1, j}) == doctest::Approx(0.25));
  // Masked entries never influence the result: poke garbage into them.
  auto x2 = Td::from_data({3, 5}, {1, 2, 3, -1e30, 7e12,
                                   1, 1, 1, 1, -4e9,
                                   0, 0, 0, 0, 0});
  auto y2 = causal_masked_softmax(x2, 2);
  for (int64_t i = 0; i < 3; ++i) {
    for (int64_t j = 0; j < 5; ++j) CHECK(y.at({i, j}) == y2.at({i, j}));
  }
  CHECK_THROWS_AS(causal_masked_softmax(x, 5), RangeError);
}

TEST_CASE("log rejects non-positive input") {
  CHECK_THROWS_AS(log(Td::from_data({2}, {1.0, 0.0})), NumericError);
  CHECK_THROWS_AS(log(Td::from_data({1}, {-3.0})), NumericError);
  auto y = log(Td::from_data({1}, {std::exp(2.0)}));
  CHECK(y.item() == doctest::Approx(2.0));
}

TEST_CASE("gelu matches the tanh form at reference points") {
  auto y = gelu(Td::from_data({3}, {0.0, 1.0, -1.0}));
  CHECK(y.values()[0] == 0.0);
  // 0.5*(1+tanh(sqrt(2/pi)*(1+0.044715)))
  CHECK(y.values()[1] == doctest::Approx(0.8411919906082768).epsilon(1e-12));
  CHECK(y.values()[2] == doctest::Approx(-0.15880800939172324).epsilon(1e-12));
}

TEST_CASE("structural ops move data where they claim") {
  auto a = Td::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  auto t = transpose(a);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t.at({2, 0}) == 3.0);
  CHECK(t.at({0, 1}) == 4.0);

  auto sr = slice_rows(a, 1, 1);
  CHECK(sr.shape() == Shape{1, 3});
  CHECK(sr.at({0, 0}) == 4.0);
  auto sc = slice_cols(a, 1, 2);
  CHECK(sc.shape() == Shape{2, 2});
  CHECK(sc.at({1, 0}) == 5.0);

  auto cr = concat_rows<double>({slice_rows(a, 0, 1), slice_rows(a, 1, 1)});
  for (int64_t i = 0; i < 6; ++i) CHECK(cr.values()[i] == a.values()[i]);
  auto cc = concat_cols<double>({slice_cols(a, 0, 1), slice_cols(a, 1, 2)});
  for (int64_t i = 0; i < 6; ++i) CHECK(cc.values()[i] == a.values()[i]);

  std::vector<int> rows{1, 0, 1};
  auto gr = gather_rows(a, rows);
  CHECK(gr.shape() == Shape{3, 3});
  CHECK(gr.at({0, 0}) == 4.0);
  CHECK(gr.at({2, 2}) == 6.0);

  std::vector<int> cols{2, 0};
  auto gc = gather_cols(a, cols);
  CHECK(gc.shape() == Shape{2, 2});
  CHECK(gc.at({0, 0}) == 3.0);
  CHECK(gc.at({1, 1}) == 4.0);

  std::vector<int> bad{7};
  CHECK_THROWS_AS(gather_rows(a, bad), RangeError);
  CHECK_THROWS_AS(gather_cols(a, bad), RangeError);
}

TEST_CASE("gradient of sum(x*x) is 2x") {
  auto x = Td::from_data({3}, {1.0, -2.0, 0.5}, true);
  Tape<double> tape;
  auto loss = sum(mul(x, x, &tape), &tape);
  backward(loss, tape);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(-4.0));
  CHECK(x.grad()[2] == doctest::Approx(1.0));
}

TEST_CASE("backward over the same tape twice gives identical gradients") {
  Rng rng(7);
  auto x = Td::randn({4, 4}, rng, 1.0, true);
  auto w = Td::randn({4, 4}, rng, 1.0, true);
  Tape<double> tape;
  auto y = sum(gelu(matmul(x, w, &tape), &tape), &tape);
  backward(y, tape);
  std::vector<double> first(x.grad().begin(), x.grad().end());
  backward(y, tape);
  for (size_t i = 0; i < first.size(); ++i) CHECK(x.grad()[i] == first[i]);
}

TEST_CASE("softmax of anything has constant sum, so its sum has zero gradient") {
  Rng rng(11);
  auto x = Td::randn({2, 5}, rng, 2.0, true);
  Tape<double> tape;
  auto loss = sum(row_softmax(x, &tape), &tape);
  backward(loss, tape);
  for (auto g : x.grad()) CHECK(std::abs(g) <= 1e-12);
}

TEST_CASE("frozen inputs are skipped by the tape") {
  auto frozen = Td::from_data({2, 2}, {1, 2, 3, 4}, false);
  auto live = Td::from_data({2, 2}, {1, 1, 1, 1}, true);
  Tape<double> tape;
  auto loss = sum(matmul(frozen, live, &tape), &tape);
  backward(loss, tape);
  CHECK(live.has_grad());
  CHECK_FALSE(frozen.has_grad());
  // Ops on purely frozen values are not recorded at all.
  Tape<double> tape2;
  auto dead = matmul(frozen, frozen, &tape2);
  CHECK(dead.size() == 4);
  CHECK(tape2.op_count() == 0);
}

TEST_CASE("finite differences confirm d/dx x^2 at x=3") {
  auto x = Td::scalar(3.0);
  LeafFunction<double> f = [](const std::vector<Td>& leaves, Tape<double>* tape) {
    return mul(leaves[0], leaves[0], tape);
  };
  CHECK(finite_diff_check<double>(f, {x}) < 1e-8);
}

TEST_CASE("finite differences over a two-layer composition") {
  Rng rng(42);
  auto x = Td::randn({3, 4}, rng, 0.5);
  auto w1 = Td::randn({4, 6}, rng, 0.5);
  auto g1 = Td::filled({6}, 1.0);
  auto w2 = Td::randn({6, 2}, rng, 0.5);
  LeafFunction<double> f = [](const std::vector<Td>& L, Tape<double>* tape) {
    auto h = gelu(matmul(L[0], L[1], tape), tape);
    auto hn = rms_norm(h, L[2], 1e-5, tape);
    auto logits = matmul(hn, L[3], tape);
    auto probs = row_softmax(logits, tape);
    return sum(mul(probs, probs, tape), tape);
  };
  CHECK(finite_diff_check<double>(f, {x, w1, g1, w2}) < 1e-5);
}

TEST_CASE("finite differences catch a deliberately wrong adjoint") {
  // A "squared" op whose backward claims d/dx = 3x instead of 2x.
  auto broken_square = [](const Td& x, Tape<double>* tape) {
    std::vector<double> out(x.values().begin(), x.values().end());
    for (auto& v : out) v = v * v;
    auto y = Td::from_data(x.shape(), std::move(out), x.requires_grad());
    if (tape && x.requires_grad()) {
      auto xn = x.node();
      auto yn = y.node();
      tape->record({xn, yn}, [xn, yn] {
        for (size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += yn->grad[i] * 3.0 * xn->data[i];
      });
    }
    return y;
  };
  auto x = Td::from_data({2}, {1.5, -2.0});
  LeafFunction<double> f = [&](const std::vector<Td>& L, Tape<double>* tape) {
    return sum(broken_square(L[0], tape), tape);
  };
  CHECK(finite_diff_check<double>(f, {x}) > 1e-2);
}

TEST_CASE("finite differences over attention-shaped ops") {
  Rng rng(5);
  auto x = Td::randn({3, 5}, rng, 0.8);
  auto v = Td::randn({5, 3}, rng, 0.8);
  LeafFunction<double> f = [](const std::vector<Td>& L, Tape<double>* tape) {
    auto att = causal_masked_softmax(L[0], 2, tape);
    auto mixed = matmul(att, L[1], tape);
    return sum(gelu(mixed, tape), tape);
  };
  CHECK(finite_diff_check<double>(f, {x, v}) < 1e-5);
}

TEST_CASE("finite differences over structural and reduction ops") {
  Rng rng(9);
  auto a = Td::randn({4, 3}, rng, 1.0);
  auto b = Td::randn({2, 3}, rng, 1.0);
  LeafFunction<double> f = [](const std::vector<Td>& L, Tape<double>* tape) {
    auto joined = concat_rows<double>({L[0], L[1]}, tape);
    auto mean = col_mean(joined, tape);
    auto spread = broadcast_rows(mean, 6, tape);
    auto diff = sub(joined, spread, tape);
    auto sl = slice_cols(mul(diff, diff, tape), 0, 2, tape);
    std::vector<int> pick{1, 0, 2, 4};
    auto rows = gather_rows(sl, pick, tape);
    return sum(rows, tape);
  };
  CHECK(finite_diff_check<double>(f, {a, b}) < 1e-5);
}

TEST_CASE("finite differences through log-softmax scoring") {
  Rng rng(13);
  auto logits = Td::randn({2, 6}, rng, 1.5);
  LeafFunction<double> f = [](const std::vector<Td>& L, Tape<double>* tape) {
    std::vector<int> keep{1, 3, 4};
    auto restricted = gather_cols(L[0], keep, tape);
    auto probs = row_softmax(restricted, tape);
    auto lp = log(probs, tape);
    return sum(mul(lp, lp, tape), tape);
  };
  CHECK(finite_diff_check<double>(f, {logits}) < 1e-5);
}

TEST_CASE("add_row_vector broadcasts and routes gradients to both operands") {
  auto x = Td::from_data({2, 3}, {0, 0, 0, 0, 0, 0}, true);
  auto v = Td::from_data({3}, {1, 2, 3}, true);
  Tape<double> tape;
  auto y = add_row_vector(x, v, &tape);
  CHECK(y.at({0, 2}) == 3.0);
  CHECK(y.at({1, 0}) == 1.0);
  auto loss = sum(y, &tape);
  backward(loss, tape);
  for (auto g : x.grad()) CHECK(g == 1.0);
  for (auto g : v.grad()) CHECK(g == 2.0);  // summed over both rows
}

TEST_CASE("float instantiation works end to end") {
  Rng rng(3);
  auto x = Tf::randn({2, 4}, rng, 1.0f);
  auto w = Tf::randn({4, 4}, rng, 1.0f);
  auto y = row_softmax(matmul(x, w));
  for (int64_t r = 0; r < 2; ++r) {
    float s = 0;
    for (int64_t j = 0; j < 4; ++j) s += y.at({r, j});
    CHECK(s == doctest::Approx(1.0f));
  }
}

TEST_CASE("backward requires a scalar loss") {
  auto x = Td::from_data({2}, {1.0, 2.0}, true);
  Tape<double> tape;
  auto y = mul(x, x, &tape);
  CHECK_THROWS_AS(backward(y, tape), ContractError);
}
