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

#include <cstdint>
#include <vector>

#include "l2tww/graph.hpp"

namespace l2tww {

// Elementwise (operands must have identical shapes).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var neg(const Var& a);
Var vexp(const Var& a);
Var relu(const Var& a);
Var relu6(const Var& a);  // max(0, min(6, x)); derivative 0 at both kinks

// Linear algebra and data movement.
Var matmul(const Var& a, const Var& b);  // [MxK]*[KxN]
Var transpose(const Var& a);             // [MxN] -> [NxM]
Var transpose01(const Var& a);           // [A,B,L] -> [B,A,L]
Var reshape(const Var& a, std::vector<int> shape);

// Reductions and their adjoint broadcasts.
Var sum_last(const Var& a);                    // [..., L] -> [...], rank >= 2
Var broadcast_last(const Var& a, int l);       // [...] -> [..., L]
Var sum_first(const Var& a);                   // [B, ...] -> [...], rank >= 2
Var broadcast_first(const Var& a, int b);      // [...] -> [B, ...]
Var sum_all(const Var& a);                     // any -> [1]
Var broadcast_fill(const Var& s, std::vector<int> shape);  // [1] -> shape
Var dot(const Var& a, const Var& b);           // sum_all(mul), shapes equal

// Patch extraction for convolution; col2im is its exact adjoint.
// Output columns are ordered (batch, out_row, out_col).
Var im2col(const Var& x, int kh, int kw, int stride, int padding);
Var col2im(const Var& cols, std::vector<int> xshape, int kh, int kw, int stride, int padding);

// Align-corners bilinear interpolation and its adjoint.
Var bilinear_resize(const Var& x, int out_h, int out_w);

// Row picking for label losses; scatter_rows is its exact adjoint.
Var gather_rows(const Var& a, std::vector<int64_t> idx);
Var scatter_rows(const Var& v, std::vector<int64_t> idx, int k);

// Row-wise activations on [B, C] (max-subtracted internally).
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);

// Composites.
// Cross-correlation; kernel [Cout, Cin, kh, kw], optional bias [Cout].
Var conv2d(const Var& x, const Var& k, int stride, int padding);
Var conv2d(const Var& x, const Var& k, const Var& bias, int stride, int padding);
Var global_avg_pool(const Var& x);                     // [B,C,H,W] -> [B,C]
Var linear(const Var& x, const Var& w, const Var& b);  // x[B,I] * w[I,O] + b[O]
Var softmax(const Var& a);                             // rank-1 convenience
Var cross_entropy(const Var& logits, const std::vector<int64_t>& labels);  // batch mean

}  // namespace l2tww
