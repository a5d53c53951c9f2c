// Copyright 2026 the l2tww authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <cstring>

#include "l2tww/check.hpp"
#include "l2tww/ops.hpp"
#include "l2tww/rng.hpp"

using namespace l2tww;

namespace {

Tensor rand_tensor(Rng& rng, std::vector<int> shape, double lo = -2.0, double hi = 2.0) {
    Tensor t(std::move(shape));
    double* p = t.mut();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = rng.uniform(lo, hi);
    return t;
}

// keeps samples clear of the relu/relu6 kinks at 0 and 6
Tensor rand_tensor_off_kinks(Rng& rng, std::vector<int> shape, double lo = -3.0, double hi = 8.0) {
    Tensor t(std::move(shape));
    double* p = t.mut();
    for (int64_t i = 0; i < t.numel(); ++i) {
        double v;
        do {
            v = rng.uniform(lo, hi);
        } while (std::fabs(v) < 0.05 || std::fabs(v - 6.0) < 0.05);
        p[i] = v;
    }
    return t;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data(), b.data(), static_cast<size_t>(a.numel()) * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("matmul: identity, frozen example, zeros, shape errors") {
    Graph g;
    Var b = g.constant(Tensor({2, 2}, {5, 6, 7, 8}));

    Var eye = g.constant(Tensor({2, 2}, {1, 0, 0, 1}));
    CHECK(tensors_equal(matmul(eye, b).val(), b.val()));

    Var a = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
    Var ones = g.constant(Tensor({2, 1}, {1, 1}));
    Tensor got = matmul(a, ones).val();
    CHECK(got.at({0, 0}) == 3.0);  // 1*1 + 2*1
    CHECK(got.at({1, 0}) == 7.0);  // 3*1 + 4*1

    Var z = g.constant(Tensor::zeros({2, 2}));
    Tensor zb = matmul(z, b).val();
    for (int64_t i = 0; i < zb.numel(); ++i) CHECK(zb.data()[i] == 0.0);

    Var bad = g.constant(Tensor::zeros({3, 5}));
    CHECK_THROWS_WITH_AS(matmul(a, bad), doctest::Contains("[2x2]"), std::runtime_error);
    try {
        matmul(a, bad);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("[3x5]") != std::string::npos);
    }
}

TEST_CASE("relu6 clamps exactly as max(0, min(6, x))") {
    Graph g;
    Var x = g.constant(Tensor({3}, {7.2, -1.0, 3.5}));
    Tensor y = relu6(x).val();
    CHECK(y.at({0}) == 6.0);
    CHECK(y.at({1}) == 0.0);
    CHECK(y.at({2}) == 3.5);

    Rng rng(11);
    Var r = g.constant(rand_tensor(rng, {64}, -20.0, 20.0));
    Tensor yr = relu6(r).val();
    for (int64_t i = 0; i < yr.numel(); ++i) {
        CHECK(yr.data()[i] >= 0.0);
        CHECK(yr.data()[i] <= 6.0);
    }
}

TEST_CASE("softmax: symmetry, closed form, shift invariance, normalization") {
    Graph g;
    Tensor sym = softmax(g.constant(Tensor::zeros({4}))).val();
    for (int i = 0; i < 4; ++i) CHECK(sym.at({i}) == doctest::Approx(0.25).epsilon(1e-14));

    Var x = g.constant(Tensor({2}, {std::log(1.0), std::log(3.0)}));
    Tensor p = softmax(x).val();
    CHECK(p.at({0}) == doctest::Approx(0.25).epsilon(1e-13));
    CHECK(p.at({1}) == doctest::Approx(0.75).epsilon(1e-13));

    Rng rng(5);
    Tensor base = rand_tensor(rng, {3, 7}, -4.0, 4.0);
    Tensor shifted = base;
    {
        double* q = shifted.mut();
        for (int64_t i = 0; i < shifted.numel(); ++i) q[i] += 123.5;
    }
    Tensor p0 = softmax_rows(g.constant(base)).val();
    Tensor p1 = softmax_rows(g.constant(shifted)).val();
    for (int64_t i = 0; i < p0.numel(); ++i)
        CHECK(std::fabs(p0.data()[i] - p1.data()[i]) < 1e-12);
    for (int r = 0; r < 3; ++r) {
        double s = 0.0;
        for (int c = 0; c < 7; ++c) s += p0.at({r, c});
        CHECK(std::fabs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("global average pooling") {
    Graph g;
    Var one = g.constant(Tensor({2, 3, 1, 1}, {1, 2, 3, 4, 5, 6}));
    Tensor squeezed = global_avg_pool(one).val();
    CHECK(squeezed.shape() == std::vector<int>{2, 3});
    CHECK(squeezed.at({1, 2}) == 6.0);

    Var quad = g.constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
    CHECK(global_avg_pool(quad).val().at({0, 0}) == doctest::Approx(2.5).epsilon(1e-15));

    Var flat = g.constant(Tensor::full({1, 2, 4, 4}, -3.25));
    Tensor m = global_avg_pool(flat).val();
    CHECK(m.at({0, 0}) == doctest::Approx(-3.25).epsilon(1e-15));
}

TEST_CASE("bilinear resize under align-corners") {
    Graph g;
    Rng rng(17);
    Tensor x = rand_tensor(rng, {2, 3, 5, 4});
    Tensor same = bilinear_resize(g.constant(x), 5, 4).val();
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(std::fabs(same.data()[i] - x.data()[i]) < 1e-12);

    Tensor single = bilinear_resize(g.constant(Tensor({1, 1, 1, 1}, {2.5})), 3, 3).val();
    for (int64_t i = 0; i < single.numel(); ++i) CHECK(single.data()[i] == 2.5);

    Tensor line = bilinear_resize(g.constant(Tensor({1, 1, 2, 1}, {0.0, 1.0})), 3, 1).val();
    CHECK(line.at({0, 0, 0, 0}) == doctest::Approx(0.0));
    CHECK(line.at({0, 0, 1, 0}) == doctest::Approx(0.5));
    CHECK(line.at({0, 0, 2, 0}) == doctest::Approx(1.0));
}

TEST_CASE("cross entropy values and label validation") {
    Graph g;
    Var uniform = g.constant(Tensor::zeros({3, 10}));
    CHECK(cross_entropy(uniform, {1, 5, 9}).val().item() ==
          doctest::Approx(std::log(10.0)).epsilon(1e-12));

    Tensor onehot = Tensor::zeros({1, 4});
    onehot.mut()[2] = 50.0;  // large finite margin
    CHECK(cross_entropy(g.constant(onehot), {2}).val().item() < 1e-4);

    Var two = g.constant(Tensor({1, 2}, {0.0, std::log(3.0)}));
    CHECK(cross_entropy(two, {1}).val().item() ==
          doctest::Approx(-std::log(0.75)).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy(two, {2}), std::runtime_error);
    CHECK_THROWS_AS(cross_entropy(two, {-1}), std::runtime_error);
}

TEST_CASE("conv2d identity, hand sum, zero kernel, and geometry errors") {
    Graph g;
    Rng rng(23);
    Tensor x = rand_tensor(rng, {2, 1, 4, 4});
    Var k1 = g.constant(Tensor({1, 1, 1, 1}, {1.0}));
    CHECK(tensors_equal(conv2d(g.constant(x), k1, 1, 0).val(), x));

    Var ones_x = g.constant(Tensor::full({1, 1, 3, 3}, 1.0));
    Var ones_k = g.constant(Tensor::full({1, 1, 3, 3}, 1.0));
    Tensor nine = conv2d(ones_x, ones_k, 1, 0).val();
    CHECK(nine.shape() == std::vector<int>{1, 1, 1, 1});
    CHECK(nine.item() == 9.0);

    Var kz = g.constant(Tensor::zeros({3, 1, 3, 3}));
    Tensor z = conv2d(g.constant(x), kz, 1, 1).val();
    for (int64_t i = 0; i < z.numel(); ++i) CHECK(z.data()[i] == 0.0);

    // (4 + 0 - 3) not divisible by 2
    CHECK_THROWS_WITH_AS(conv2d(g.constant(x), g.constant(Tensor::zeros({1, 1, 3, 3})), 2, 0),
                         doctest::Contains("non-integral"), std::runtime_error);
}

TEST_CASE("grad: quadratic and linear identities, unreachable gives zeros") {
    Graph g;
    Rng rng(31);
    Tensor theta = rand_tensor(rng, {6});
    Tensor avec = rand_tensor(rng, {6});

    Var th = g.leaf(theta, true);
    Var half_norm = scale(dot(th, th), 0.5);
    std::vector<Var> gr = g.grad(half_norm, std::vector<Var>{th});
    CHECK(rel_err(gr[0].val(), theta) < 1e-15);

    Var th2 = g.leaf(theta, true);
    Var lin = dot(g.constant(avec), th2);
    std::vector<Var> gr2 = g.grad(lin, std::vector<Var>{th2});
    CHECK(rel_err(gr2[0].val(), avec) < 1e-15);

    Var unused = g.leaf(rand_tensor(rng, {3, 3}), true);
    std::vector<Var> gr3 = g.grad(lin, std::vector<Var>{unused});
    for (int64_t i = 0; i < gr3[0].val().numel(); ++i) CHECK(gr3[0].val().data()[i] == 0.0);
}

TEST_CASE("grad accumulates shared subexpressions once") {
    Graph g;
    Var x = g.leaf(Tensor::scalar(1.5), true);
    Var y = add(x, x);           // 2x
    Var f = sum_all(mul(y, y));  // 4x^2, df/dx = 8x
    std::vector<Var> gr = g.grad(f, std::vector<Var>{x});
    CHECK(gr[0].val().item() == doctest::Approx(12.0).epsilon(1e-14));
}

TEST_CASE("gradcheck across composite functions hits finite differences") {
    Rng rng(2026);
    for (int trial = 0; trial < 10; ++trial) {
        // softmax . relu6 . linear chain
        std::vector<Tensor> in1 = {rand_tensor_off_kinks(rng, {3, 5}),
                                   rand_tensor(rng, {5, 4}, -0.8, 0.8),
                                   rand_tensor(rng, {4}, -0.5, 0.5)};
        Tensor proj = rand_tensor(rng, {3, 4});
        ScalarFn f1 = [proj](Graph& g, const std::vector<Var>& v) {
            Var h = relu6(v[0]);
            Var y = softmax_rows(linear(h, v[1], v[2]));
            return dot(y, g.constant(proj));
        };
        CHECK(gradcheck(f1, in1) < 1e-6);

        // convolution + pooling + cross entropy
        std::vector<Tensor> in2 = {rand_tensor(rng, {2, 2, 5, 5}, -1.0, 1.0),
                                   rand_tensor(rng, {3, 2, 3, 3}, -0.7, 0.7),
                                   rand_tensor(rng, {3}, -0.2, 0.2)};
        ScalarFn f2 = [](Graph& g, const std::vector<Var>& v) {
            (void)g;
            Var y = conv2d(v[0], v[1], v[2], 2, 1);
            Var pooled = global_avg_pool(y);
            return cross_entropy(pooled, {0, 2});
        };
        CHECK(gradcheck(f2, in2) < 1e-6);

        // bilinear resize + exp + reductions
        std::vector<Tensor> in3 = {rand_tensor(rng, {1, 2, 3, 4}, -1.0, 1.0)};
        Tensor proj3 = rand_tensor(rng, {1, 2, 5, 3});
        ScalarFn f3 = [proj3](Graph& g, const std::vector<Var>& v) {
            Var r = bilinear_resize(v[0], 5, 3);
            return dot(vexp(scale(r, 0.5)), g.constant(proj3));
        };
        CHECK(gradcheck(f3, in3) < 1e-6);
    }
}

TEST_CASE("graph replay is bitwise deterministic") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        Graph g;
        Var x = g.leaf(rand_tensor(rng, {2, 3, 6, 6}), true);
        Var k = g.leaf(rand_tensor(rng, {4, 3, 3, 3}, -0.4, 0.4), true);
        Var y = global_avg_pool(relu(conv2d(x, k, 1, 1)));
        Var f = cross_entropy(y, {1, 3});
        std::vector<Var> gr = g.grad(f, std::vector<Var>{x, k});
        return std::tuple<double, Tensor, Tensor>{f.val().item(), gr[0].val(), gr[1].val()};
    };
    auto [f1, gx1, gk1] = run(42);
    auto [f2, gx2, gk2] = run(42);
    CHECK(std::memcmp(&f1, &f2, sizeof(double)) == 0);
    CHECK(tensors_equal(gx1, gx2));
    CHECK(tensors_equal(gk1, gk2));
}

TEST_CASE("strict graphs reject non-finite op outputs, relaxed graphs allow them") {
    Graph strict_g(true);
    Var big = strict_g.constant(Tensor({1}, {1000.0}));
    CHECK_THROWS_WITH_AS(vexp(big), doctest::Contains("non-finite"), std::runtime_error);

    Graph loose_g(false);
    Var big2 = loose_g.constant(Tensor({1}, {1000.0}));
    CHECK(std::isinf(vexp(big2).val().item()));
}
