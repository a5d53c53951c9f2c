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

// AVX2 kernels, 4 doubles per vector. This translation unit is compiled
// with -mavx2 and must only be entered after a runtime cpuid check.
//
// matmul deliberately uses separate mul + add instead of FMA: fused
// rounding would diverge from the scalar reference.

#if defined(__x86_64__) || defined(_M_X64)

#include "l2tww/kernels.hpp"

#include <cstdint>
#include <cstring>
#include <immintrin.h>

namespace l2tww {
namespace {

void add_v(double* dst, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                                _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] + b[i];
}
void sub_v(double* dst, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                                _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] - b[i];
}
void mul_v(double* dst, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                                _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] * b[i];
}
void div_v(double* dst, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_div_pd(_mm256_loadu_pd(a + i),
                                                _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] / b[i];
}
void scale_v(double* dst, const double* a, double c, size_t n) {
    const __m256d vc = _mm256_set1_pd(c);
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vc));
    for (; i < n; ++i) dst[i] = a[i] * c;
}
void axpy_v(double* y, double a, const double* x, size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}
void relu_v(double* dst, const double* a, size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    size_t i = 0;
    // maxpd(x, 0) returns 0 for NaN lanes, same as the scalar branch
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
    for (; i < n; ++i) dst[i] = a[i] > 0.0 ? a[i] : 0.0;
}
void relu6_v(double* dst, const double* a, size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d six = _mm256_set1_pd(6.0);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_max_pd(_mm256_loadu_pd(a + i), zero);
        _mm256_storeu_pd(dst + i, _mm256_min_pd(v, six));
    }
    for (; i < n; ++i) {
        double v = a[i] > 0.0 ? a[i] : 0.0;
        dst[i] = v < 6.0 ? v : 6.0;
    }
}
void relu_mask_v(double* dst, const double* a, size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d one = _mm256_set1_pd(1.0);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d gt = _mm256_cmp_pd(_mm256_loadu_pd(a + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(dst + i, _mm256_and_pd(gt, one));
    }
    for (; i < n; ++i) dst[i] = a[i] > 0.0 ? 1.0 : 0.0;
}
void relu6_mask_v(double* dst, const double* a, size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d six = _mm256_set1_pd(6.0);
    const __m256d one = _mm256_set1_pd(1.0);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d x = _mm256_loadu_pd(a + i);
        __m256d open = _mm256_and_pd(_mm256_cmp_pd(x, zero, _CMP_GT_OQ),
                                     _mm256_cmp_pd(x, six, _CMP_LT_OQ));
        _mm256_storeu_pd(dst + i, _mm256_and_pd(open, one));
    }
    for (; i < n; ++i) dst[i] = (a[i] > 0.0 && a[i] < 6.0) ? 1.0 : 0.0;
}

void matmul_v(double* c, const double* a, const double* b,
              size_t m, size_t k, size_t n) {
    std::memset(c, 0, m * n * sizeof(double));
    for (size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            const double* brow = b + p * n;
            const __m256d vav = _mm256_set1_pd(av);
            size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d prod = _mm256_mul_pd(vav, _mm256_loadu_pd(brow + j));
                _mm256_storeu_pd(crow + j,
                                 _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
            }
            for (; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

int finite_all_v(const double* a, size_t n) {
    const __m256i expmask = _mm256_set1_epi64x(0x7FF0000000000000LL);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256i bits = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + i));
        __m256i exp = _mm256_and_si256(bits, expmask);
        __m256i bad = _mm256_cmpeq_epi64(exp, expmask);
        if (_mm256_movemask_epi8(bad) != 0) return 0;
    }
    for (; i < n; ++i) {
        uint64_t bits;
        std::memcpy(&bits, &a[i], sizeof bits);
        if (((bits >> 52) & 0x7FFu) == 0x7FFu) return 0;
    }
    return 1;
}

}  // namespace

const Kernels kAvx2Kernels = {
    "avx2",     add_v,   sub_v,       mul_v,        div_v,    scale_v,
    axpy_v,     relu_v,  relu6_v,     relu_mask_v,  relu6_mask_v,
    matmul_v,   finite_all_v,
};

}  // namespace l2tww

#endif  // x86_64
