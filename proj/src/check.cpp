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

#include "l2tww/check.hpp"

#include <cmath>
#include <stdexcept>

namespace l2tww {
namespace {

std::vector<Var> make_leaves(Graph& g, const std::vector<Tensor>& at, bool requires_grad) {
    std::vector<Var> vs;
    vs.reserve(at.size());
    for (const Tensor& t : at) vs.push_back(g.leaf(t, requires_grad));
    return vs;
}

Tensor perturbed(const Tensor& t, int64_t coord, double delta) {
    Tensor c = t;
    c.mut()[coord] += delta;
    return c;
}

std::vector<Tensor> axpy_tensors(const std::vector<Tensor>& x, double a, const std::vector<Tensor>& d) {
    std::vector<Tensor> out;
    out.reserve(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        Tensor t = x[i];
        double* p = t.mut();
        const double* q = d[i].data();
        for (int64_t j = 0; j < t.numel(); ++j) p[j] += a * q[j];
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

double rel_err(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape()))
        throw std::runtime_error("check: rel_err shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double worst = 0.0;
    const double* pa = a.data();
    const double* pb = b.data();
    for (int64_t i = 0; i < a.numel(); ++i) {
        double denom = std::max({1.0, std::fabs(pa[i]), std::fabs(pb[i])});
        worst = std::max(worst, std::fabs(pa[i] - pb[i]) / denom);
    }
    return worst;
}

double rel_err(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) throw std::runtime_error("check: rel_err arity mismatch");
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
    return worst;
}

double eval_value(const ScalarFn& f, const std::vector<Tensor>& at) {
    Graph g;
    return f(g, make_leaves(g, at, false)).val().item();
}

std::vector<Tensor> eval_grad(const ScalarFn& f, const std::vector<Tensor>& at) {
    Graph g;
    std::vector<Var> leaves = make_leaves(g, at, true);
    Var y = f(g, leaves);
    std::vector<Var> gs = g.grad(y, leaves, false);
    std::vector<Tensor> out;
    out.reserve(gs.size());
    for (const Var& v : gs) out.push_back(v.val());
    return out;
}

std::vector<Tensor> fd_grad(const ScalarFn& f, const std::vector<Tensor>& at, double eps) {
    std::vector<Tensor> out;
    out.reserve(at.size());
    for (size_t i = 0; i < at.size(); ++i) {
        Tensor gi(at[i].shape());
        double* dst = gi.mut();
        for (int64_t c = 0; c < at[i].numel(); ++c) {
            std::vector<Tensor> hi = at, lo = at;
            hi[i] = perturbed(at[i], c, eps);
            lo[i] = perturbed(at[i], c, -eps);
            dst[c] = (eval_value(f, hi) - eval_value(f, lo)) / (2.0 * eps);
        }
        out.push_back(std::move(gi));
    }
    return out;
}

double gradcheck(const ScalarFn& f, const std::vector<Tensor>& at, double eps) {
    return rel_err(eval_grad(f, at), fd_grad(f, at, eps));
}

std::vector<Tensor> hvp_at(const ScalarFn& f, const std::vector<Tensor>& at,
                           const std::vector<Tensor>& v) {
    Graph g;
    std::vector<Var> leaves = make_leaves(g, at, true);
    Var y = f(g, leaves);
    return hvp(y, leaves, v);
}

double hvpcheck(const ScalarFn& f, const std::vector<Tensor>& at,
                const std::vector<Tensor>& v, double eps) {
    std::vector<Tensor> analytic = hvp_at(f, at, v);
    std::vector<Tensor> ghi = eval_grad(f, axpy_tensors(at, eps, v));
    std::vector<Tensor> glo = eval_grad(f, axpy_tensors(at, -eps, v));
    std::vector<Tensor> fd;
    fd.reserve(ghi.size());
    for (size_t i = 0; i < ghi.size(); ++i) {
        Tensor d(ghi[i].shape());
        double* p = d.mut();
        const double* h = ghi[i].data();
        const double* l = glo[i].data();
        for (int64_t j = 0; j < d.numel(); ++j) p[j] = (h[j] - l[j]) / (2.0 * eps);
        fd.push_back(std::move(d));
    }
    return rel_err(analytic, fd);
}

std::vector<Tensor> mixed_hvp_at(const SplitScalarFn& f, const std::vector<Tensor>& theta,
                                 const std::vector<Tensor>& phi, const std::vector<Tensor>& v) {
    Graph g;
    std::vector<Var> tv = make_leaves(g, theta, true);
    std::vector<Var> pv = make_leaves(g, phi, true);
    Var y = f(g, tv, pv);
    return mixed_hvp(y, tv, pv, v);
}

double mixed_hvpcheck(const SplitScalarFn& f, const std::vector<Tensor>& theta,
                      const std::vector<Tensor>& phi, const std::vector<Tensor>& v,
                      double eps) {
    std::vector<Tensor> analytic = mixed_hvp_at(f, theta, phi, v);

    auto grad_phi_at = [&](const std::vector<Tensor>& th) {
        Graph g;
        std::vector<Var> tv = make_leaves(g, th, true);
        std::vector<Var> pv = make_leaves(g, phi, true);
        Var y = f(g, tv, pv);
        std::vector<Var> gs = g.grad(y, pv, false);
        std::vector<Tensor> out;
        for (const Var& x : gs) out.push_back(x.val());
        return out;
    };
    std::vector<Tensor> ghi = grad_phi_at(axpy_tensors(theta, eps, v));
    std::vector<Tensor> glo = grad_phi_at(axpy_tensors(theta, -eps, v));
    std::vector<Tensor> fd;
    for (size_t i = 0; i < ghi.size(); ++i) {
        Tensor d(ghi[i].shape());
        double* p = d.mut();
        const double* h = ghi[i].data();
        const double* l = glo[i].data();
        for (int64_t j = 0; j < d.numel(); ++j) p[j] = (h[j] - l[j]) / (2.0 * eps);
        fd.push_back(std::move(d));
    }
    return rel_err(analytic, fd);
}

double dot_all(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double* pa = a[i].data();
        const double* pb = b[i].data();
        for (int64_t j = 0; j < a[i].numel(); ++j) s += pa[j] * pb[j];
    }
    return s;
}

double hvp_symmetry_gap(const ScalarFn& f, const std::vector<Tensor>& at,
                        const std::vector<Tensor>& u, const std::vector<Tensor>& v) {
    std::vector<Tensor> hv = hvp_at(f, at, v);
    std::vector<Tensor> hu = hvp_at(f, at, u);
    return std::fabs(dot_all(u, hv) - dot_all(v, hu));
}

}  // namespace l2tww
