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
#include <limits>
#include <vector>

#include "l2tww/kernels.hpp"
#include "l2tww/rng.hpp"

using namespace l2tww;

namespace {

// sizes that exercise full vectors plus every remainder length
const std::vector<size_t> kSizes = {1, 2, 3, 4, 5, 7, 8, 15, 16, 17, 64, 1003};

std::vector<double> random_values(Rng& rng, size_t n, bool with_specials) {
    std::vector<double> v(n);
    for (size_t i = 0; i < n; ++i) v[i] = rng.uniform(-8.0, 8.0);
    if (with_specials && n >= 6) {
        v[0] = 0.0;
        v[1] = -0.0;
        v[2] = 6.0;
        v[3] = std::numeric_limits<double>::infinity();
        v[4] = -std::numeric_limits<double>::infinity();
        v[5] = std::numeric_limits<double>::quiet_NaN();
    }
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("every kernel variant matches the scalar reference bit for bit") {
    Rng rng(20260801);
    for (const Kernels* k : available_kernels()) {
        CAPTURE(k->name);
        for (size_t n : kSizes) {
            std::vector<double> a = random_values(rng, n, true);
            std::vector<double> b = random_values(rng, n, false);
            for (double& x : b)
                if (x == 0.0) x = 1.0;  // keep div well-defined

            std::vector<double> ref(n), got(n);

            kScalarKernels.add(ref.data(), a.data(), b.data(), n);
            k->add(got.data(), a.data(), b.data(), n);
            CHECK(bitwise_equal(ref, got));

            kScalarKernels.sub(ref.data(), a.data(), b.data(), n);
            k->sub(got.data(), a.data(), b.data(), n);
            CHECK(bitwise_equal(ref, got));

            kScalarKernels.mul(ref.data(), a.data(), b.data(), n);
            k->mul(got.data(), a.data(), b.data(), n);
            CHECK(bitwise_equal(ref, got));

            kScalarKernels.div(ref.data(), a.data(), b.data(), n);
            k->div(got.data(), a.data(), b.data(), n);
            CHECK(bitwise_equal(ref, got));

            kScalarKernels.scale(ref.data(), a.data(), 1.7, n);
            k->scale(got.data(), a.data(), 1.7, n);
            CHECK(bitwise_equal(ref, got));

            ref = b;
            got = b;
            kScalarKernels.axpy(ref.data(), -0.3, a.data(), n);
            k->axpy(got.data(), -0.3, a.data(), n);
            CHECK(bitwise_equal(ref, got));
        }
    }
}

TEST_CASE("activation kernels agree on kinks, NaN and infinities") {
    Rng rng(7);
    for (const Kernels* k : available_kernels()) {
        CAPTURE(k->name);
        for (size_t n : kSizes) {
            std::vector<double> a = random_values(rng, n, true);
            std::vector<double> ref(n), got(n);

            kScalarKernels.relu(ref.data(), a.data(), n);
            k->relu(got.data(), a.data(), n);
            CHECK(bitwise_equal(ref, got));

            kScalarKernels.relu6(ref.data(), a.data(), n);
            k->relu6(got.data(), a.data(), n);
            CHECK(bitwise_equal(ref, got));

            kScalarKernels.relu_mask(ref.data(), a.data(), n);
            k->relu_mask(got.data(), a.data(), n);
            CHECK(bitwise_equal(ref, got));

            kScalarKernels.relu6_mask(ref.data(), a.data(), n);
            k->relu6_mask(got.data(), a.data(), n);
            CHECK(bitwise_equal(ref, got));
        }
    }
}

TEST_CASE("matmul variants reproduce the scalar accumulation order exactly") {
    Rng rng(99);
    const int dims[][3] = {{1, 1, 1}, {2, 3, 4}, {5, 7, 9}, {8, 8, 8}, {3, 17, 13}, {16, 27, 33}};
    for (const Kernels* k : available_kernels()) {
        CAPTURE(k->name);
        for (auto& d : dims) {
            const size_t m = static_cast<size_t>(d[0]), kk = static_cast<size_t>(d[1]), n = static_cast<size_t>(d[2]);
            std::vector<double> a = random_values(rng, m * kk, false);
            std::vector<double> b = random_values(rng, kk * n, false);
            std::vector<double> ref(m * n), got(m * n);
            kScalarKernels.matmul(ref.data(), a.data(), b.data(), m, kk, n);
            k->matmul(got.data(), a.data(), b.data(), m, kk, n);
            CHECK(bitwise_equal(ref, got));
        }
    }
}

TEST_CASE("finite_all flags NaN and infinities wherever they sit") {
    Rng rng(3);
    for (const Kernels* k : available_kernels()) {
        CAPTURE(k->name);
        for (size_t n : kSizes) {
            std::vector<double> a = random_values(rng, n, false);
            CHECK(k->finite_all(a.data(), n) == 1);
            for (size_t pos : {size_t(0), n / 2, n - 1}) {
                std::vector<double> bad = a;
                bad[pos] = std::numeric_limits<double>::quiet_NaN();
                CHECK(k->finite_all(bad.data(), n) == 0);
                bad[pos] = -std::numeric_limits<double>::infinity();
                CHECK(k->finite_all(bad.data(), n) == 0);
            }
        }
    }
}

TEST_CASE("kernel selection is explicit and reversible") {
    const Kernels& before = kernels();
    select_kernels("scalar");
    CHECK(std::string(kernels().name) == "scalar");
    CHECK_THROWS(select_kernels("no-such-variant"));
    select_kernels("auto");
    CHECK(std::string(kernels().name) == std::string(before.name));
}
