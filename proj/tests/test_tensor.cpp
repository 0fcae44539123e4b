#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "dipro/errors.hpp"
#include "dipro/tensor.hpp"

using namespace dipro;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_SUITE("tensor") {

TEST_CASE("matmul identity and hand product") {
    auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    auto a = Tensor::from({2, 2}, {3.5, -2, 0.25, 7});
    auto prod = matmul(eye, a);
    for (std::size_t i = 0; i < 4; ++i) CHECK(prod[i] == a[i]);

    auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
    auto v = Tensor::from({2, 1}, {0, 1});
    auto mv = matmul(m, v);
    CHECK(mv.shape() == std::vector<int>{2, 1});
    CHECK(mv[0] == 2);
    CHECK(mv[1] == 4);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    auto a = Tensor::from({2, 3}, std::vector<double>(6, 1.0));
    auto b = Tensor::from({2, 2}, std::vector<double>(4, 1.0));
    CHECK_THROWS_WITH_AS(matmul(a, b),
                         "matmul: inner dimensions disagree, (2x3) x (2x2)", DimError);
}

TEST_CASE("matmul gradient of sum(output) wrt a equals column sums of b") {
    Rng rng(11);
    auto a = Tensor::uniform({3, 4}, 1.0, rng, true);
    auto b = Tensor::uniform({4, 2}, 1.0, rng, true);
    auto loss = sum(matmul(a, b));
    backward(loss);
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 4; ++k) {
            double colsum = b.at(k, 0) + b.at(k, 1);
            CHECK(a.grad()[static_cast<std::size_t>(i) * 4 + k] == doctest::Approx(colsum));
        }
    }
}

TEST_CASE("softmax basics") {
    auto s = softmax_lastdim(Tensor::from({2}, {0, 0}));
    CHECK(s[0] == 0.5);
    CHECK(s[1] == 0.5);

    auto masked = softmax_lastdim(Tensor::from({2}, {5, -kInf}));
    CHECK(masked[0] == 1.0);
    CHECK(masked[1] == 0.0);  // exactly zero

    // independent exp-normalize oracle
    auto x = Tensor::from({3}, {1, 2, 3});
    auto y = softmax_lastdim(x);
    long double z = 0.0L;
    for (int j = 0; j < 3; ++j) z += expl(static_cast<long double>(j + 1));
    for (int j = 0; j < 3; ++j) {
        long double want = expl(static_cast<long double>(j + 1)) / z;
        CHECK(std::abs(y[static_cast<std::size_t>(j)] - static_cast<double>(want)) < 1e-12);
    }
}

TEST_CASE("softmax all-masked row zeroes out and flags; NaN input throws") {
    bool flag = false;
    auto y = softmax_lastdim(Tensor::from({1, 2}, {-kInf, -kInf}), &flag);
    CHECK(flag);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);

    CHECK_THROWS_AS(softmax_lastdim(Tensor::from({2}, {std::nan(""), 0.0})), NumericError);
}

TEST_CASE("layer_norm fixtures") {
    auto gain = Tensor::full({3}, 1.0);
    auto bias = Tensor::zeros({3});
    auto y = layer_norm(Tensor::from({3}, {4, 4, 4}), gain, bias);
    for (int j = 0; j < 3; ++j) CHECK(y[static_cast<std::size_t>(j)] == doctest::Approx(0.0));

    auto g2 = Tensor::full({2}, 1.0);
    auto b2 = Tensor::zeros({2});
    auto y2 = layer_norm(Tensor::from({2}, {1, -1}), g2, b2, 1e-14);
    CHECK(y2[0] == doctest::Approx(1.0));
    CHECK(y2[1] == doctest::Approx(-1.0));

    Rng rng(3);
    auto x = Tensor::uniform({8}, 5.0, rng);
    auto g8 = Tensor::full({8}, 1.0);
    auto b8 = Tensor::zeros({8});
    auto out = layer_norm(x, g8, b8, 1e-5);
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 8; ++j) mean += out[j] / 8.0;
    for (std::size_t j = 0; j < 8; ++j) var += (out[j] - mean) * (out[j] - mean) / 8.0;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-3);  // eps shrinks variance slightly
}

TEST_CASE("layer_norm rejects zero-length last dim") {
    CHECK_THROWS_AS(Tensor::zeros({2, 0}), DimError);
}

TEST_CASE("cosine similarity fixtures") {
    CHECK(cosine_similarity(Tensor::from({2}, {1, 0}), Tensor::from({2}, {0, 1})).item() == 0.0);
    CHECK(cosine_similarity(Tensor::from({2}, {3, 4}), Tensor::from({2}, {3, 4})).item() ==
          doctest::Approx(1.0));
    CHECK(cosine_similarity(Tensor::from({2}, {1, 1}), Tensor::from({2}, {1, 0})).item() ==
          doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK_THROWS_AS(cosine_similarity(Tensor::from({2}, {1, 1}), Tensor::from({3}, {1, 0, 0})),
                    DimError);
    // zero vector stays finite via the eps floor
    auto c = cosine_similarity(Tensor::from({2}, {0, 0}), Tensor::from({2}, {1, 0}));
    CHECK(c.item() == 0.0);
}

TEST_CASE("cross entropy fixtures") {
    CHECK(cross_entropy(Tensor::from({3}, {0, 0, 0}), 1).item() == doctest::Approx(std::log(3.0)));
    CHECK(cross_entropy(Tensor::from({2}, {10, -10}), 0).item() < 1e-4);
    CHECK_THROWS_AS(cross_entropy(Tensor::from({3}, {0, 0, 0}), 3), LabelError);
    CHECK_THROWS_AS(cross_entropy(Tensor::from({3}, {0, 0, 0}), -1), LabelError);
}

TEST_CASE("cross entropy gradient equals softmax minus one-hot") {
    Rng rng(5);
    auto logits = Tensor::uniform({4}, 2.0, rng, true);
    auto loss = cross_entropy(logits, 2);
    backward(loss);
    double z = 0.0;
    for (std::size_t j = 0; j < 4; ++j) z += std::exp(logits[j]);
    for (std::size_t j = 0; j < 4; ++j) {
        double want = std::exp(logits[j]) / z - (j == 2 ? 1.0 : 0.0);
        CHECK(logits.grad()[j] == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("mse fixtures") {
    auto a = Tensor::from({3}, {1, 2, 3});
    CHECK(mse(a, a).item() == 0.0);
    CHECK(mse(Tensor::from({2}, {0, 0}), Tensor::from({2}, {2, 0})).item() == doctest::Approx(2.0));
    CHECK_THROWS_AS(mse(Tensor::from({2}, {0, 0}), Tensor::from({3}, {0, 0, 0})), DimError);

    Rng rng(9);
    auto x = Tensor::uniform({7}, 3.0, rng);
    auto y = Tensor::uniform({7}, 3.0, rng);
    double want = 0.0;
    for (std::size_t i = 0; i < 7; ++i) want += (x[i] - y[i]) * (x[i] - y[i]) / 7.0;
    CHECK(std::abs(mse(x, y).item() - want) < 1e-12);
}

TEST_CASE("backward populates expected gradients") {
    auto p = Tensor::from({3}, {1, 2, 3}, true);
    backward(sum(p));
    for (std::size_t i = 0; i < 3; ++i) CHECK(p.grad()[i] == 1.0);

    auto q = Tensor::from({1}, {2}, true);
    backward(mse(q, Tensor::zeros({1})));
    CHECK(q.grad()[0] == doctest::Approx(4.0));

    CHECK_THROWS_AS(backward(Tensor::from({2}, {1, 2}, true)), ContractError);
}

TEST_CASE("gradient of a node off the loss path stays exactly zero") {
    auto used = Tensor::from({2}, {1, 2}, true);
    auto unused = Tensor::from({2}, {5, 6}, true);
    auto loss = sum(mul(used, used));
    backward(loss);
    CHECK(unused.grad()[0] == 0.0);
    CHECK(unused.grad()[1] == 0.0);
    CHECK(used.grad()[0] != 0.0);
}

TEST_CASE("concat, slice, row and mean_rows route values and grads") {
    auto a = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
    auto b = Tensor::from({2, 1}, {5, 6}, true);
    auto cc = concat_cols(a, b);
    CHECK(cc.shape() == std::vector<int>{2, 3});
    CHECK(cc.at(0, 2) == 5);
    CHECK(cc.at(1, 0) == 3);

    auto cr = concat_rows({a, Tensor::from({1, 2}, {7, 8}, true)});
    CHECK(cr.shape() == std::vector<int>{3, 2});
    CHECK(cr.at(2, 1) == 8);

    auto sl = slice_rows(cr, 1, 3);
    CHECK(sl.at(0, 0) == 3);
    auto sc = slice_cols(a, 1, 2);
    CHECK(sc.at(1, 0) == 4);

    auto r1 = row(a, 1);
    CHECK(r1.shape() == std::vector<int>{2});
    CHECK(r1[0] == 3);

    auto mr = mean_rows(a);
    CHECK(mr.at(0, 0) == doctest::Approx(2.0));
    CHECK(mr.at(0, 1) == doctest::Approx(3.0));

    backward(sum(mr));
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.grad()[i] == doctest::Approx(0.5));
}

TEST_CASE("concat order is (earlier, later)") {
    auto cat = concat_cols(Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4}));
    CHECK(cat.shape() == std::vector<int>{4});
    for (std::size_t i = 0; i < 4; ++i) CHECK(cat[i] == static_cast<double>(i + 1));
}

TEST_CASE("dropout is identity in eval mode and rescales in training") {
    Rng rng(123);
    auto x = Tensor::full({1000}, 1.0, true);
    auto eval_out = dropout(x, 0.5, rng, false);
    CHECK(eval_out.ptr() == x.ptr());
    auto train_out = dropout(x, 0.5, rng, true);
    double kept = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) {
        CHECK((train_out[i] == 0.0 || train_out[i] == doctest::Approx(2.0)));
        if (train_out[i] != 0.0) kept += 1.0;
    }
    CHECK(kept / 1000.0 == doctest::Approx(0.5).epsilon(0.15));
}

}  // TEST_SUITE
