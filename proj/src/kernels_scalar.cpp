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

// Reference kernels. These define the numerical behaviour every SIMD
// variant has to reproduce bit for bit.

#include "l2tww/kernels.hpp"

#include <cstdint>
#include <cstring>

namespace l2tww {
namespace {

void add_s(double* dst, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}
void sub_s(double* dst, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = a[i] - b[i];
}
void mul_s(double* dst, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}
void div_s(double* dst, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = a[i] / b[i];
}
void scale_s(double* dst, const double* a, double c, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = a[i] * c;
}
void axpy_s(double* y, double a, const double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}
void relu_s(double* dst, const double* a, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = a[i] > 0.0 ? a[i] : 0.0;
}
void relu6_s(double* dst, const double* a, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        double v = a[i] > 0.0 ? a[i] : 0.0;
        dst[i] = v < 6.0 ? v : 6.0;
    }
}
void relu_mask_s(double* dst, const double* a, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = a[i] > 0.0 ? 1.0 : 0.0;
}
void relu6_mask_s(double* dst, const double* a, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = (a[i] > 0.0 && a[i] < 6.0) ? 1.0 : 0.0;
}

void matmul_s(double* c, const double* a, const double* b,
              size_t m, size_t k, size_t n) {
    std::memset(c, 0, m * n * sizeof(double));
    for (size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            const double* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

int finite_all_s(const double* a, size_t n) {
    // finite iff the exponent field is not all ones
    for (size_t i = 0; i < n; ++i) {
        uint64_t bits;
        std::memcpy(&bits, &a[i], sizeof bits);
        if (((bits >> 52) & 0x7FFu) == 0x7FFu) return 0;
    }
    return 1;
}

}  // namespace

const Kernels kScalarKernels = {
    "scalar",   add_s,   sub_s,       mul_s,        div_s,    scale_s,
    axpy_s,     relu_s,  relu6_s,     relu_mask_s,  relu6_mask_s,
    matmul_s,   finite_all_s,
};

}  // namespace l2tww
