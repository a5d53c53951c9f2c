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

#include <functional>
#include <vector>

#include "l2tww/graph.hpp"

namespace l2tww {

// Central finite-difference oracles. These evaluate functions through
// fresh graphs and perturbed copies of the inputs only; they never look at
// the reverse-mode path they are checking.

// Builds a scalar from leaf variables created from the given tensors.
using ScalarFn = std::function<Var(Graph&, const std::vector<Var>&)>;

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|), taken over all tensors.
double rel_err(const std::vector<Tensor>& a, const std::vector<Tensor>& b);
double rel_err(const Tensor& a, const Tensor& b);

// Reverse-mode gradient (and plain value) of f at the given inputs.
double eval_value(const ScalarFn& f, const std::vector<Tensor>& at);
std::vector<Tensor> eval_grad(const ScalarFn& f, const std::vector<Tensor>& at);

// Central finite differences of the value, coordinate by coordinate.
std::vector<Tensor> fd_grad(const ScalarFn& f, const std::vector<Tensor>& at, double eps);

// rel_err between reverse-mode gradient and fd_grad.
double gradcheck(const ScalarFn& f, const std::vector<Tensor>& at, double eps = 1e-6);

// rel_err between hvp and the central difference of gradients along v:
// (grad(x + eps v) - grad(x - eps v)) / (2 eps).
double hvpcheck(const ScalarFn& f, const std::vector<Tensor>& at,
                const std::vector<Tensor>& v, double eps = 1e-5);

// Same for the cross block: f(theta, phi), direction v in theta space,
// FD of grad_phi along v. The callable receives theta vars then phi vars.
using SplitScalarFn =
    std::function<Var(Graph&, const std::vector<Var>& theta, const std::vector<Var>& phi)>;
double mixed_hvpcheck(const SplitScalarFn& f, const std::vector<Tensor>& theta,
                      const std::vector<Tensor>& phi, const std::vector<Tensor>& v,
                      double eps = 1e-5);

// |<u, H v> - <v, H u>| for the Hessian bilinear form.
double hvp_symmetry_gap(const ScalarFn& f, const std::vector<Tensor>& at,
                        const std::vector<Tensor>& u, const std::vector<Tensor>& v);

std::vector<Tensor> hvp_at(const ScalarFn& f, const std::vector<Tensor>& at,
                           const std::vector<Tensor>& v);
std::vector<Tensor> mixed_hvp_at(const SplitScalarFn& f, const std::vector<Tensor>& theta,
                                 const std::vector<Tensor>& phi, const std::vector<Tensor>& v);

double dot_all(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

}  // namespace l2tww
