#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "dipro/errors.hpp"
#include "dipro/gradcheck.hpp"
#include "dipro/kernels.hpp"
#include "dipro/tensor.hpp"

using namespace dipro;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_SUITE("autodiff") {

TEST_CASE("grad_check on a quadratic bowl is exact up to roundoff") {
    auto p = Tensor::from({4}, {1.0, -2.0, 0.5, 3.0}, true);
    auto err = grad_check([&] { return mse(p, Tensor::zeros({4})); }, {p}, 1e-5);
    CHECK(err < 1e-8);
}

TEST_CASE("grad_check on a softmax cross-entropy chain") {
    Rng rng(21);
    auto w = Tensor::uniform({3, 3}, 1.0, rng, true);
    auto b = Tensor::uniform({1, 3}, 0.5, rng, true);
    auto x = Tensor::uniform({1, 3}, 1.0, rng);
    auto err = grad_check(
        [&] { return cross_entropy(row(add_rowvec(matmul(x, w), b), 0), 1); }, {w, b}, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("grad_check through an attention block with -inf mask entries") {
    Rng rng(33);
    auto wq = Tensor::uniform({4, 4}, 0.7, rng, true);
    auto wk = Tensor::uniform({4, 4}, 0.7, rng, true);
    auto wv = Tensor::uniform({4, 4}, 0.7, rng, true);
    auto q_in = Tensor::uniform({2, 4}, 1.0, rng);
    auto kv_in = Tensor::uniform({5, 4}, 1.0, rng);
    auto mask = Tensor::from({1, 5}, {0.0, -1.5, -kInf, -0.5, -kInf});
    auto err = grad_check(
        [&] {
            auto q = matmul(q_in, wq);
            auto k = matmul(kv_in, wk);
            auto v = matmul(kv_in, wv);
            auto logits = scale(matmul(q, transpose(k)), 1.0 / 2.0);
            auto w = softmax_lastdim(add_rowvec(logits, mask));
            return sum(matmul(w, v));
        },
        {wq, wk, wv}, 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("grad_check rejects bad step and non-finite losses") {
    auto p = Tensor::from({1}, {1.0}, true);
    CHECK_THROWS_AS(grad_check([&] { return sum(p); }, {p}, 0.0), ContractError);
    CHECK_THROWS_AS(
        grad_check([&] { return Tensor::scalar(std::nan(""), true); }, {p}, 1e-5),
        NumericError);
}

TEST_CASE("chain-rule soundness over random composite ops") {
    // 10 trials, dims <= 8, composing most of the op set used by the model.
    for (int trial = 0; trial < 10; ++trial) {
        Rng rng(1000 + trial);
        const int r = 2 + static_cast<int>(rng.index(3));
        const int d = 2 + static_cast<int>(rng.index(6));
        auto w1 = Tensor::uniform({d, d}, 0.8, rng, true);
        auto b1 = Tensor::uniform({1, d}, 0.3, rng, true);
        auto gainv = Tensor::full({d}, 1.0, true);
        auto biasv = Tensor::zeros({d}, true);
        auto x = Tensor::uniform({r, d}, 1.0, rng);
        auto err = grad_check(
            [&] {
                auto h = gelu(add_rowvec(matmul(x, w1), b1));
                auto n = layer_norm(add(h, x), gainv, biasv, 1e-5);
                auto attn = softmax_lastdim(scale(matmul(n, transpose(n)), 1.0 / std::sqrt(d)));
                auto mixed = matmul(attn, n);
                auto cs = cosine_similarity(row(mixed, 0), row(mixed, r - 1));
                return add(mse(mixed, x), mul(cs, cs));
            },
            {w1, b1, gainv, biasv}, 1e-5);
        INFO("trial ", trial, " r=", r, " d=", d);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("masked softmax puts exact zeros and the rest sums to one") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.index(7));
        std::vector<double> logits(static_cast<std::size_t>(n));
        int masked = 0;
        for (auto& v : logits) {
            if (rng.bernoulli(0.4)) {
                v = -kInf;
                ++masked;
            } else {
                v = rng.normal() * 4.0;
            }
        }
        if (masked == n) logits[0] = 0.1;  // keep at least one live entry
        auto y = softmax_lastdim(Tensor::from({n}, logits));
        double total = 0.0;
        for (int j = 0; j < n; ++j) {
            if (logits[static_cast<std::size_t>(j)] == -kInf) {
                CHECK(y[static_cast<std::size_t>(j)] == 0.0);
            }
            total += y[static_cast<std::size_t>(j)];
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
    }
}

TEST_CASE("repeated backward calls accumulate like the summed loss") {
    Rng rng(55);
    auto w = Tensor::uniform({3, 3}, 1.0, rng, true);
    auto x1 = Tensor::uniform({2, 3}, 1.0, rng);
    auto x2 = Tensor::uniform({2, 3}, 1.0, rng);

    auto f = [&](const Tensor& x) { return mse(gelu(matmul(x, w)), Tensor::zeros({2, 3})); };

    w.zero_grad();
    backward(f(x1));
    backward(f(x2));
    std::vector<double> accumulated(w.grad().begin(), w.grad().end());

    w.zero_grad();
    backward(add(f(x1), f(x2)));
    for (std::size_t i = 0; i < accumulated.size(); ++i) {
        CHECK(std::abs(accumulated[i] - w.grad()[i]) < 1e-10);
    }
}

TEST_CASE("forward and gradients are deterministic for a fixed seed") {
    auto run = [] {
        Rng rng(4242);
        auto w = Tensor::uniform({4, 4}, 1.0, rng, true);
        auto x = Tensor::uniform({3, 4}, 1.0, rng);
        auto loss = mse(softmax_lastdim(matmul(x, w)), Tensor::full({3, 4}, 0.25));
        backward(loss);
        std::vector<double> out{loss.item()};
        out.insert(out.end(), w.grad().begin(), w.grad().end());
        return out;
    };
    auto a = run();
    auto b = run();
    CHECK(a == b);  // bit-identical
}

}  // TEST_SUITE
