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

// NEON kernels, 2 doubles per vector (aarch64 only).
//
// relu/relu6 use compare+select rather than vmax/vmin so NaN lanes clamp
// to zero exactly like the scalar reference. matmul uses separate mul+add
// (no vfma) for the same reason.

#if defined(__aarch64__)

#include "l2tww/kernels.hpp"

#include <arm_neon.h>
#include <cstdint>
#include <cstring>

namespace l2tww {
namespace {

void add_v(double* dst, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(dst + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) dst[i] = a[i] + b[i];
}
void sub_v(double* dst, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(dst + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) dst[i] = a[i] - b[i];
}
void mul_v(double* dst, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(dst + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) dst[i] = a[i] * b[i];
}
void div_v(double* dst, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(dst + i, vdivq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) dst[i] = a[i] / b[i];
}
void scale_v(double* dst, const double* a, double c, size_t n) {
    const float64x2_t vc = vdupq_n_f64(c);
    size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(dst + i, vmulq_f64(vld1q_f64(a + i), vc));
    for (; i < n; ++i) dst[i] = a[i] * c;
}
void axpy_v(double* y, double a, const double* x, size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t prod = vmulq_f64(va, vld1q_f64(x + i));
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}
void relu_v(double* dst, const double* a, size_t n) {
    const float64x2_t zero = vdupq_n_f64(0.0);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t x = vld1q_f64(a + i);
        uint64x2_t gt = vcgtq_f64(x, zero);
        vst1q_f64(dst + i, vbslq_f64(gt, x, zero));
    }
    for (; i < n; ++i) dst[i] = a[i] > 0.0 ? a[i] : 0.0;
}
void relu6_v(double* dst, const double* a, size_t n) {
    const float64x2_t zero = vdupq_n_f64(0.0);
    const float64x2_t six = vdupq_n_f64(6.0);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t x = vld1q_f64(a + i);
        float64x2_t v = vbslq_f64(vcgtq_f64(x, zero), x, zero);
        vst1q_f64(dst + i, vbslq_f64(vcltq_f64(v, six), v, six));
    }
    for (; i < n; ++i) {
        double v = a[i] > 0.0 ? a[i] : 0.0;
        dst[i] = v < 6.0 ? v : 6.0;
    }
}
void relu_mask_v(double* dst, const double* a, size_t n) {
    const float64x2_t zero = vdupq_n_f64(0.0);
    const float64x2_t one = vdupq_n_f64(1.0);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        uint64x2_t gt = vcgtq_f64(vld1q_f64(a + i), zero);
        vst1q_f64(dst + i, vbslq_f64(gt, one, zero));
    }
    for (; i < n; ++i) dst[i] = a[i] > 0.0 ? 1.0 : 0.0;
}
void relu6_mask_v(double* dst, const double* a, size_t n) {
    const float64x2_t zero = vdupq_n_f64(0.0);
    const float64x2_t six = vdupq_n_f64(6.0);
    const float64x2_t one = vdupq_n_f64(1.0);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t x = vld1q_f64(a + i);
        uint64x2_t open = vandq_u64(vcgtq_f64(x, zero), vcltq_f64(x, six));
        vst1q_f64(dst + i, vbslq_f64(open, one, zero));
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
            const float64x2_t vav = vdupq_n_f64(av);
            size_t j = 0;
            for (; j + 2 <= n; j += 2) {
                float64x2_t prod = vmulq_f64(vav, vld1q_f64(brow + j));
                vst1q_f64(crow + j, vaddq_f64(vld1q_f64(crow + j), prod));
            }
            for (; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

int finite_all_v(const double* a, size_t n) {
    const uint64x2_t expmask = vdupq_n_u64(0x7FF0000000000000ULL);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        uint64x2_t bits = vreinterpretq_u64_f64(vld1q_f64(a + i));
        uint64x2_t bad = vceqq_u64(vandq_u64(bits, expmask), expmask);
        if (vgetq_lane_u64(bad, 0) | vgetq_lane_u64(bad, 1)) return 0;
    }
    for (; i < n; ++i) {
        uint64_t bits;
        std::memcpy(&bits, &a[i], sizeof bits);
        if (((bits >> 52) & 0x7FFu) == 0x7FFu) return 0;
    }
    return 1;
}

}  // namespace

const Kernels kNeonKernels = {
    "neon",     add_v,   sub_v,       mul_v,        div_v,    scale_v,
    axpy_v,     relu_v,  relu6_v,     relu_mask_v,  relu6_mask_v,
    matmul_v,   finite_all_v,
};

}  // namespace l2tww

#endif  // aarch64
