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

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace l2tww {

// Dense double-precision inner loops behind a runtime-dispatched table.
//
// Every variant of a kernel must produce bitwise-identical results to the
// scalar reference on the same inputs: elementwise kernels are lane-wise
// copies of the scalar loop, and matmul vectorizes across output columns so
// each output element sees the exact same sequence of multiply-adds (no FMA
// contraction). This keeps results independent of which variant the
// dispatcher picks on a given machine, and lets the equivalence tests
// compare variants with memcmp.
struct Kernels {
    const char* name;

    // dst[i] = a[i] (op) b[i]
    void (*add)(double* dst, const double* a, const double* b, size_t n);
    void (*sub)(double* dst, const double* a, const double* b, size_t n);
    void (*mul)(double* dst, const double* a, const double* b, size_t n);
    void (*div)(double* dst, const double* a, const double* b, size_t n);

    // dst[i] = a[i] * c
    void (*scale)(double* dst, const double* a, double c, size_t n);
    // y[i] += a * x[i]
    void (*axpy)(double* y, double a, const double* x, size_t n);

    void (*relu)(double* dst, const double* a, size_t n);
    void (*relu6)(double* dst, const double* a, size_t n);
    // dst[i] = 1 where the activation passes its input through, else 0.
    // Kink points (0 for both, 6 for relu6) count as blocked.
    void (*relu_mask)(double* dst, const double* a, size_t n);
    void (*relu6_mask)(double* dst, const double* a, size_t n);

    // c[M x N] = a[M x K] * b[K x N], row-major, c overwritten.
    // Accumulation order over k is fixed (m, k, n loop nest).
    void (*matmul)(double* c, const double* a, const double* b,
                   size_t m, size_t k, size_t n);

    // 1 iff no element is NaN or +-Inf.
    int (*finite_all)(const double* a, size_t n);
};

extern const Kernels kScalarKernels;
#if defined(__x86_64__) || defined(_M_X64)
extern const Kernels kAvx2Kernels;
#endif
#if defined(__aarch64__)
extern const Kernels kNeonKernels;
#endif

// The table in use. Selected once on first call: the L2TWW_KERNELS
// environment variable ("scalar", "avx2", "neon", "auto") wins, otherwise
// the best variant the CPU supports.
const Kernels& kernels();

// Force a specific variant (tests). Throws if the variant is unknown or
// unsupported on this machine.
void select_kernels(const std::string& name);

// Variants usable on this machine, scalar first.
std::vector<const Kernels*> available_kernels();

}  // namespace l2tww
