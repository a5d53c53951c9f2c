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

#include "l2tww/check.hpp"
#include "l2tww/ops.hpp"
#include "l2tww/rng.hpp"

using namespace l2tww;

namespace {

Tensor rand_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    double* p = t.mut();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = rng.uniform(lo, hi);
    return t;
}

// smooth non-quadratic scalar: sum(exp(0.3 * softmax_rows(W x) . proj)) style
ScalarFn smooth_test_fn(const Tensor& proj) {
    return [proj](Graph& g, const std::vector<Var>& v) {
        Var y = matmul(v[0], v[1]);               // [2,3]*[3,2]
        Var s = softmax_rows(y);                  // [2,2]
        Var e = vexp(scale(matmul(s, v[2]), 0.4));  // [2,2]
        return dot(e, g.constant(proj));
    };
}

}  // namespace

TEST_CASE("hvp on a diagonal quadratic gives the diagonal times v") {
    // f = 0.5 * theta' diag(1,2) theta
    ScalarFn f = [](Graph& g, const std::vector<Var>& v) {
        Var d = g.constant(Tensor({2}, {1.0, 2.0}));
        return scale(dot(mul(v[0], d), v[0]), 0.5);
    };
    std::vector<Tensor> at = {Tensor({2}, {0.3, -0.7})};
    std::vector<Tensor> dir = {Tensor({2}, {1.0, 1.0})};
    std::vector<Tensor> out = hvp_at(f, at, dir);
    CHECK(out[0].at({0}) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(out[0].at({1}) == doctest::Approx(2.0).epsilon(1e-14));

    std::vector<Tensor> zero = {Tensor::zeros({2})};
    std::vector<Tensor> z = hvp_at(f, at, zero);
    CHECK(z[0].at({0}) == 0.0);
    CHECK(z[0].at({1}) == 0.0);
}

TEST_CASE("hvp matches finite differences of the gradient") {
    Rng rng(808);
    for (int trial = 0; trial < 8; ++trial) {
        Tensor proj = rand_tensor(rng, {2, 2});
        ScalarFn f = smooth_test_fn(proj);
        std::vector<Tensor> at = {rand_tensor(rng, {2, 3}), rand_tensor(rng, {3, 2}),
                                  rand_tensor(rng, {2, 2})};
        std::vector<Tensor> dir = {rand_tensor(rng, {2, 3}), rand_tensor(rng, {3, 2}),
                                   rand_tensor(rng, {2, 2})};
        CHECK(hvpcheck(f, at, dir, 1e-5) < 1e-5);
    }
}

TEST_CASE("hvp is a symmetric bilinear form") {
    Rng rng(909);
    for (int trial = 0; trial < 8; ++trial) {
        Tensor proj = rand_tensor(rng, {2, 2});
        ScalarFn f = smooth_test_fn(proj);
        std::vector<Tensor> at = {rand_tensor(rng, {2, 3}), rand_tensor(rng, {3, 2}),
                                  rand_tensor(rng, {2, 2})};
        std::vector<Tensor> u = {rand_tensor(rng, {2, 3}), rand_tensor(rng, {3, 2}),
                                 rand_tensor(rng, {2, 2})};
        std::vector<Tensor> v = {rand_tensor(rng, {2, 3}), rand_tensor(rng, {3, 2}),
                                 rand_tensor(rng, {2, 2})};
        CHECK(hvp_symmetry_gap(f, at, u, v) < 1e-10);
    }
}

TEST_CASE("mixed_hvp closed form on a bilinear coupling") {
    // f = phi * (a' theta):  d2f/dphi dtheta . v = a . v
    Rng rng(101);
    Tensor avec = rand_tensor(rng, {5});
    SplitScalarFn f = [avec](Graph& g, const std::vector<Var>& th, const std::vector<Var>& ph) {
        return mul(sum_all(mul(g.constant(avec), th[0])), reshape(ph[0], {1}));
    };
    std::vector<Tensor> theta = {rand_tensor(rng, {5})};
    std::vector<Tensor> phi = {rand_tensor(rng, {1})};
    std::vector<Tensor> v = {rand_tensor(rng, {5})};
    std::vector<Tensor> got = mixed_hvp_at(f, theta, phi, v);
    double expect = 0.0;
    for (int i = 0; i < 5; ++i) expect += avec.at({i}) * v[0].at({i});
    CHECK(got[0].item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("mixed_hvp vanishes when f ignores phi") {
    Rng rng(102);
    SplitScalarFn f = [](Graph& g, const std::vector<Var>& th, const std::vector<Var>& ph) {
        (void)g;
        (void)ph;
        return dot(th[0], th[0]);
    };
    std::vector<Tensor> theta = {rand_tensor(rng, {4})};
    std::vector<Tensor> phi = {rand_tensor(rng, {3})};
    std::vector<Tensor> v = {rand_tensor(rng, {4})};
    std::vector<Tensor> got = mixed_hvp_at(f, theta, phi, v);
    for (int64_t i = 0; i < got[0].numel(); ++i) CHECK(got[0].data()[i] == 0.0);
}

TEST_CASE("mixed_hvp matches finite differences of the phi-gradient") {
    Rng rng(103);
    for (int trial = 0; trial < 6; ++trial) {
        Tensor proj = rand_tensor(rng, {2, 2});
        SplitScalarFn f = [proj](Graph& g, const std::vector<Var>& th, const std::vector<Var>& ph) {
            Var y = matmul(th[0], ph[0]);             // [2,3]*[3,2]
            Var s = softmax_rows(y);
            Var mixed = mul(s, vexp(scale(matmul(th[1], ph[0]), 0.3)));
            return dot(mixed, g.constant(proj));
        };
        std::vector<Tensor> theta = {rand_tensor(rng, {2, 3}), rand_tensor(rng, {2, 3})};
        std::vector<Tensor> phi = {rand_tensor(rng, {3, 2})};
        std::vector<Tensor> v = {rand_tensor(rng, {2, 3}), rand_tensor(rng, {2, 3})};
        CHECK(mixed_hvpcheck(f, theta, phi, v, 1e-5) < 1e-5);
    }
}

TEST_CASE("second-order counters track hvp and mixed_hvp evaluations") {
    SecondOrderCounters& c = second_order_counters();
    c = SecondOrderCounters{};
    ScalarFn f = [](Graph& g, const std::vector<Var>& v) {
        (void)g;
        return dot(v[0], v[0]);
    };
    std::vector<Tensor> at = {Tensor({2}, {1.0, 2.0})};
    std::vector<Tensor> dir = {Tensor({2}, {0.5, 0.5})};
    hvp_at(f, at, dir);
    hvp_at(f, at, dir);
    CHECK(c.hvp == 2);
    CHECK(c.mixed_hvp == 0);
}
