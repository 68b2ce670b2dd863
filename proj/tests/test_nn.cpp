#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "dcap/nn/ops.hpp"
#include "dcap/nn/optim.hpp"
#include "dcap/nn/tensor.hpp"

using namespace dcap;
using namespace dcap::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scl = 1.0,
                     bool requires_grad = false) {
    std::normal_distribution<double> n(0.0, scl);
    std::size_t total = 1;
    for (int d : shape) total *= d;
    std::vector<double> v(total);
    for (double& x : v) x = n(rng);
    return Tensor::from(shape, v, requires_grad);
}

// Naive multi-head attention oracle: plain scalar loops, one head at a time,
// independent of the tensor engine's ops.
std::vector<double> mha_oracle(const std::vector<double>& q, int nq, const std::vector<double>& k,
                               const std::vector<double>& v, int nk, int d, int heads,
                               const std::vector<double>& wq, const std::vector<double>& bq,
                               const std::vector<double>& wk, const std::vector<double>& bk,
                               const std::vector<double>& wv, const std::vector<double>& bv,
                               const std::vector<double>& wo, const std::vector<double>& bo) {
    auto project = [d](const std::vector<double>& x, int rows, const std::vector<double>& w,
                       const std::vector<double>& b) {
        std::vector<double> out(rows * d, 0.0);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < d; ++j) {
                double s = b[j];
                for (int a = 0; a < d; ++a) s += x[i * d + a] * w[a * d + j];
                out[i * d + j] = s;
            }
        return out;
    };
    std::vector<double> qp = project(q, nq, wq, bq);
    std::vector<double> kp = project(k, nk, wk, bk);
    std::vector<double> vp = project(v, nk, wv, bv);

    const int dh = d / heads;
    std::vector<double> concat(nq * d, 0.0);
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < nq; ++i) {
            std::vector<double> scores(nk);
            for (int j = 0; j < nk; ++j) {
                double s = 0.0;
                for (int a = 0; a < dh; ++a)
                    s += qp[i * d + h * dh + a] * kp[j * d + h * dh + a];
                scores[j] = s / std::sqrt(static_cast<double>(dh));
            }
            double mx = scores[0];
            for (double s : scores) mx = std::max(mx, s);
            double denom = 0.0;
            for (double& s : scores) {
                s = std::exp(s - mx);
                denom += s;
            }
            for (int j = 0; j < nk; ++j)
                for (int a = 0; a < dh; ++a)
                    concat[i * d + h * dh + a] += scores[j] / denom * vp[j * d + h * dh + a];
        }
    }
    return project(concat, nq, wo, bo);
}

MhaParams identity_params(int d) {
    MhaParams p;
    std::vector<double> eye(d * d, 0.0);
    for (int i = 0; i < d; ++i) eye[i * d + i] = 1.0;
    std::vector<double> zero(d, 0.0);
    p.wq = Tensor::from({d, d}, eye);
    p.wk = Tensor::from({d, d}, eye);
    p.wv = Tensor::from({d, d}, eye);
    p.wo = Tensor::from({d, d}, eye);
    p.bq = Tensor::from({1, d}, zero);
    p.bk = Tensor::from({1, d}, zero);
    p.bv = Tensor::from({1, d}, zero);
    p.bo = Tensor::from({1, d}, zero);
    return p;
}

}  // namespace

TEST_CASE("softmax of uniform logits is uniform") {
    Tensor x = Tensor::from({2, 5}, std::vector<double>(10, 0.7));
    Tensor y = softmax_last(x);
    for (int i = 0; i < 2; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 5; ++j) {
            CHECK(y.values()[i * 5 + j] == Catch::Approx(0.2).margin(1e-12));
            sum += y.values()[i * 5 + j];
        }
        CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("layer_norm leaves a standardized row unchanged") {
    // Zero mean, unit variance row (population variance).
    std::vector<double> row = {-1.0, 1.0, -1.0, 1.0};
    Tensor x = Tensor::from({1, 4}, row);
    Tensor y = layer_norm_last(x);
    for (int j = 0; j < 4; ++j) CHECK(y.values()[j] == Catch::Approx(row[j]).margin(1e-5));

    std::mt19937_64 rng(5);
    Tensor z = random_tensor({3, 16}, rng, 2.0);
    Tensor n = layer_norm_last(z);
    for (int i = 0; i < 3; ++i) {
        double mean = 0.0, var = 0.0;
        for (int j = 0; j < 16; ++j) mean += n.values()[i * 16 + j];
        mean /= 16;
        for (int j = 0; j < 16; ++j) {
            double dv = n.values()[i * 16 + j] - mean;
            var += dv * dv;
        }
        var /= 16;
        CHECK(mean == Catch::Approx(0.0).margin(1e-6));
        CHECK(var == Catch::Approx(1.0).margin(1e-4));
    }
}

TEST_CASE("linear matches a scalar-loop oracle on a 2x2 case") {
    Tensor x = Tensor::from({2, 2}, {1.0, 2.0, -0.5, 3.0});
    Tensor w = Tensor::from({2, 2}, {0.25, -1.0, 4.0, 0.5});
    Tensor b = Tensor::from({1, 2}, {0.1, -0.2});
    Tensor y = linear(x, w, b);
    double expected[2][2];
    const double xv[2][2] = {{1.0, 2.0}, {-0.5, 3.0}};
    const double wv[2][2] = {{0.25, -1.0}, {4.0, 0.5}};
    const double bv[2] = {0.1, -0.2};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            expected[i][j] = xv[i][0] * wv[0][j] + xv[i][1] * wv[1][j] + bv[j];
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(y.values()[i * 2 + j] == Catch::Approx(expected[i][j]).margin(1e-12));
}

TEST_CASE("shape mismatches carry both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({3, 2});
    try {
        add(a, b);
        FAIL("expected ShapeMismatch");
    } catch (const ShapeMismatch& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[3,2]") != std::string::npos);
    }
}

TEST_CASE("mha: saturated attention returns the winning value row") {
    const int d = 4;
    MhaParams p = identity_params(d);
    Tensor q = Tensor::from({1, d}, {10.0, 0.0, 0.0, 0.0});
    // First key aligned with the query with a huge logit margin.
    Tensor k = Tensor::from({2, d}, {10.0, 0, 0, 0, -10.0, 0, 0, 0});
    Tensor v = Tensor::from({2, d}, {1.0, 2.0, 3.0, 4.0, -9.0, -9.0, -9.0, -9.0});
    Tensor out = mha(q, k, v, p, 1);
    CHECK(out.values()[0] == Catch::Approx(1.0).margin(1e-3));
    CHECK(out.values()[1] == Catch::Approx(2.0).margin(1e-3));
    CHECK(out.values()[3] == Catch::Approx(4.0).margin(1e-3));
}

TEST_CASE("mha: zero output projection gives zero output") {
    const int d = 4;
    std::mt19937_64 rng(3);
    MhaParams p = identity_params(d);
    p.wo = Tensor::zeros({d, d});
    Tensor q = random_tensor({2, d}, rng);
    Tensor k = random_tensor({3, d}, rng);
    Tensor v = random_tensor({3, d}, rng);
    Tensor out = mha(q, k, v, p, 2);
    for (double x : out.values()) CHECK(x == 0.0);
}

TEST_CASE("mha: single-head 1x2x2 hand-computed case") {
    MhaParams p = identity_params(2);
    Tensor q = Tensor::from({1, 2}, {1.0, 0.0});
    Tensor k = Tensor::from({2, 2}, {2.0, 0.0, 0.0, 1.0});
    Tensor v = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor out = mha(q, k, v, p, 1);
    // Written-out arithmetic: scores = (2, 0)/sqrt(2); softmax; blend rows of v.
    double s1 = 2.0 / std::sqrt(2.0), s2 = 0.0;
    double a1 = std::exp(s1) / (std::exp(s1) + std::exp(s2));
    double a2 = 1.0 - a1;
    CHECK(out.values()[0] == Catch::Approx(a1 * 1.0 + a2 * 3.0).margin(1e-9));
    CHECK(out.values()[1] == Catch::Approx(a1 * 2.0 + a2 * 4.0).margin(1e-9));
}

TEST_CASE("mha matches the naive scalar-loop oracle on seeded shapes") {
    std::mt19937_64 rng(2024);
    for (auto [nq, nk, d, h] : {std::tuple{1, 2, 4, 1}, std::tuple{2, 4, 8, 2},
                                std::tuple{4, 8, 16, 4}, std::tuple{3, 5, 16, 1}}) {
        MhaParams p;
        p.wq = random_tensor({d, d}, rng, 0.5);
        p.wk = random_tensor({d, d}, rng, 0.5);
        p.wv = random_tensor({d, d}, rng, 0.5);
        p.wo = random_tensor({d, d}, rng, 0.5);
        p.bq = random_tensor({1, d}, rng, 0.1);
        p.bk = random_tensor({1, d}, rng, 0.1);
        p.bv = random_tensor({1, d}, rng, 0.1);
        p.bo = random_tensor({1, d}, rng, 0.1);
        Tensor q = random_tensor({nq, d}, rng);
        Tensor k = random_tensor({nk, d}, rng);
        Tensor v = random_tensor({nk, d}, rng);
        Tensor out = mha(q, k, v, p, h);
        std::vector<double> expected =
            mha_oracle(q.values(), nq, k.values(), v.values(), nk, d, h, p.wq.values(),
                       p.bq.values(), p.wk.values(), p.bk.values(), p.wv.values(), p.bv.values(),
                       p.wo.values(), p.bo.values());
        REQUIRE(out.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i)
            CHECK(out.values()[i] == Catch::Approx(expected[i]).margin(1e-6));
    }
}

TEST_CASE("mha is permutation-equivariant over key/value pairs") {
    std::mt19937_64 rng(7);
    const int d = 8, nk = 5;
    MhaParams p;
    p.wq = random_tensor({d, d}, rng, 0.5);
    p.wk = random_tensor({d, d}, rng, 0.5);
    p.wv = random_tensor({d, d}, rng, 0.5);
    p.wo = random_tensor({d, d}, rng, 0.5);
    p.bq = random_tensor({1, d}, rng, 0.1);
    p.bk = random_tensor({1, d}, rng, 0.1);
    p.bv = random_tensor({1, d}, rng, 0.1);
    p.bo = random_tensor({1, d}, rng, 0.1);
    Tensor q = random_tensor({2, d}, rng);
    Tensor k = random_tensor({nk, d}, rng);
    Tensor v = random_tensor({nk, d}, rng);
    Tensor base = mha(q, k, v, p, 2);

    std::vector<int> perm = {3, 0, 4, 1, 2};
    std::vector<double> kp(nk * d), vp(nk * d);
    for (int i = 0; i < nk; ++i)
        for (int j = 0; j < d; ++j) {
            kp[i * d + j] = k.values()[perm[i] * d + j];
            vp[i * d + j] = v.values()[perm[i] * d + j];
        }
    Tensor permuted = mha(q, Tensor::from({nk, d}, kp), Tensor::from({nk, d}, vp), p, 2);
    for (std::size_t i = 0; i < base.size(); ++i)
        CHECK(base.values()[i] == Catch::Approx(permuted.values()[i]).margin(1e-9));
}

TEST_CASE("backward: gradient of the squared norm is 2 theta") {
    ParamStore store(1);
    Tensor theta = store.add_weight("theta", 4, 4);
    store.zero_grads();
    Tensor loss = sum(mul(theta, theta));
    backward(loss);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        double expected = 2.0 * theta.values()[i];
        CHECK(std::abs(theta.grad()[i] - expected) <= 1e-10 * std::max(1.0, std::abs(expected)));
    }
}

TEST_CASE("backward: constant loss leaves zero gradients") {
    ParamStore store(2);
    Tensor theta = store.add_weight("theta", 3, 3);
    store.zero_grads();
    Tensor constant = Tensor::from({1}, {5.0});
    Tensor loss = add(sum(mul(theta, Tensor::zeros({3, 3}))), constant);
    backward(loss);
    for (double g : theta.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward rejects non-scalar losses") {
    ParamStore store(3);
    Tensor theta = store.add_weight("theta", 2, 2);
    CHECK_THROWS_AS(backward(mul(theta, theta)), NonScalarLoss);
}

TEST_CASE("grad_check passes for a composite of every smooth primitive") {
    ParamStore store(17);
    Tensor w1 = store.add_weight("w1", 6, 8);
    Tensor b1 = store.add_zeros("b1", 1, 8);
    Tensor w2 = store.add_weight("w2", 8, 4);
    Tensor b2 = store.add_weight("b2", 1, 4);
    std::mt19937_64 rng(9);
    Tensor x = random_tensor({5, 6}, rng);
    Tensor keys = random_tensor({3, 8}, rng);

    auto f = [&]() {
        Tensor h = tanh(linear(x, w1, b1));
        Tensor n = layer_norm_last(h);
        Tensor attn = softmax_last(scale(matmul(n, transpose(keys)), 0.3));
        Tensor mixed = matmul(attn, keys);
        Tensor out = linear(mixed, w2, b2);
        Tensor pieces = concat_cols({slice_cols(out, 0, 2), slice_cols(out, 2, 4)});
        return sum(mul(pieces, pieces));
    };
    CHECK(grad_check(f, store, 1e-5, 300, 1) < 1e-5);
}

TEST_CASE("grad_check passes for abs away from kinks") {
    ParamStore store(21);
    Tensor w = store.add_weight("w", 4, 4);
    Tensor x = Tensor::from({2, 4}, {1.0, -2.0, 3.0, -1.5, 2.0, 1.0, -0.5, 0.8});
    auto f = [&]() { return sum(abs(add_scalar(matmul(x, w), 3.0))); };
    CHECK(grad_check(f, store, 1e-5, 64, 2) < 1e-5);
}

TEST_CASE("grad_check passes for quaternion ops") {
    ParamStore store(31);
    Tensor a = store.add_weight("a", 1, 4);
    Tensor b = store.add_weight("b", 1, 4);
    auto f = [&]() {
        Tensor qa = l2_normalize_rows(a);
        Tensor qb = l2_normalize_rows(add_scalar(b, 0.5));
        Tensor prod = quat_mul(qa, qb);
        Tensor target = Tensor::from({1, 4}, {0.5, 0.5, -0.5, 0.5});
        Tensor diff = sub(prod, target);
        return sum(mul(diff, diff));
    };
    CHECK(grad_check(f, store, 1e-5, 32, 3) < 1e-5);
}

TEST_CASE("grad_check passes through mha") {
    ParamStore store(41);
    const int d = 8;
    MhaParams p;
    p.wq = store.add_weight("wq", d, d);
    p.wk = store.add_weight("wk", d, d);
    p.wv = store.add_weight("wv", d, d);
    p.wo = store.add_weight("wo", d, d);
    p.bq = store.add_zeros("bq", 1, d);
    p.bk = store.add_zeros("bk", 1, d);
    p.bv = store.add_zeros("bv", 1, d);
    p.bo = store.add_zeros("bo", 1, d);
    std::mt19937_64 rng(11);
    Tensor q = random_tensor({2, d}, rng);
    Tensor kv = random_tensor({4, d}, rng);
    auto f = [&]() {
        Tensor out = mha(q, kv, kv, p, 2);
        return sum(mul(out, out));
    };
    CHECK(grad_check(f, store, 1e-5, 200, 4) < 1e-5);
}

TEST_CASE("forward ops are deterministic") {
    std::mt19937_64 rng1(55), rng2(55);
    Tensor a1 = random_tensor({4, 4}, rng1);
    Tensor a2 = random_tensor({4, 4}, rng2);
    Tensor y1 = softmax_last(layer_norm_last(tanh(a1)));
    Tensor y2 = softmax_last(layer_norm_last(tanh(a2)));
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1.values()[i] == y2.values()[i]);
}

TEST_CASE("adam: closed-form first step") {
    ParamStore store(61);
    Tensor theta = store.add_zeros("theta", 1, 1);
    theta.values()[0] = 1.0;
    store.zero_grads();
    theta.node().grad[0] = 0.5;  // constant gradient
    AdamState adam;
    adam.lr = 1e-3;
    adam_step(store, adam);
    // Bias correction at t=1 makes the step -lr * g/(|g| + eps) ~ -lr.
    CHECK(theta.values()[0] == Catch::Approx(1.0 - 1e-3).margin(1e-6));
    CHECK(theta.node().grad[0] == 0.0);  // zeroed afterwards
}

TEST_CASE("adam: zero gradient leaves the parameter unchanged") {
    ParamStore store(62);
    Tensor theta = store.add_weight("theta", 2, 2);
    std::vector<double> before = theta.values();
    store.zero_grads();
    AdamState adam;
    adam_step(store, adam);
    for (std::size_t i = 0; i < theta.size(); ++i) CHECK(theta.values()[i] == before[i]);
}

TEST_CASE("adam: missing gradient is an error") {
    ParamStore store(63);
    store.add_weight("theta", 2, 2);
    AdamState adam;
    CHECK_THROWS_AS(adam_step(store, adam), MissingGrad);
}

TEST_CASE("adam converges on a quadratic bowl") {
    ParamStore store(64);
    Tensor theta = store.add_zeros("theta", 1, 8);
    std::vector<double> target = {0.12, -0.28, 0.48, 0.0, -0.16, 0.36, -0.44, 0.2};
    Tensor t_star = Tensor::from({1, 8}, target);
    AdamState adam;
    adam.lr = 1e-2;
    for (int it = 0; it < 500; ++it) {
        store.zero_grads();
        Tensor diff = sub(theta, t_star);
        backward(sum(mul(diff, diff)));
        adam_step(store, adam);
    }
    double dist = 0.0;
    for (int i = 0; i < 8; ++i) {
        double d = theta.values()[i] - target[i];
        dist += d * d;
    }
    CHECK(std::sqrt(dist) < 1e-3);
}
