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

#include "l2tww/graph.hpp"

#include <stdexcept>

#include "l2tww/errors.hpp"
#include "l2tww/ops.hpp"

namespace l2tww {

const Tensor& Var::val() const {
    if (!valid()) throw std::runtime_error("graph: value of invalid variable");
    return g->value(id);
}

bool Var::requires_grad() const { return valid() && g->node_requires_grad(id); }

Var Graph::leaf(Tensor value, bool requires_grad) {
    if (!value.defined()) throw std::runtime_error("graph: leaf from undefined tensor");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = "leaf";
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::record(const char* op, Tensor value, std::vector<int> parents, BackwardFn bw) {
    if (strict_ && !value.all_finite())
        throw NumericError(std::string("graph: non-finite output of op '") + op + "'");
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.bw = std::move(bw);
    n.op = op;
    for (int p : n.parents) {
        if (p < 0 || p >= static_cast<int>(nodes_.size()))
            throw std::runtime_error(std::string("graph: bad parent id in op '") + op + "'");
        if (nodes_[static_cast<size_t>(p)].requires_grad) n.requires_grad = true;
    }
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

std::vector<Var> Graph::grad(const Var& f, std::span<const Var> wrt, bool create_graph) {
    if (f.g != this) throw std::runtime_error("graph: grad of variable from another graph");
    if (f.val().numel() != 1) throw std::runtime_error("graph: grad requires scalar, got " + f.val().shape_str());
    for (const Var& w : wrt)
        if (w.g != this) throw std::runtime_error("graph: wrt variable from another graph");

    const int fid = f.id;

    // nodes on a gradient path: reachable from f through grad-requiring nodes
    std::vector<char> active(static_cast<size_t>(fid) + 1, 0);
    if (nodes_[static_cast<size_t>(fid)].requires_grad) {
        std::vector<int> stack{fid};
        active[static_cast<size_t>(fid)] = 1;
        while (!stack.empty()) {
            int id = stack.back();
            stack.pop_back();
            for (int p : nodes_[static_cast<size_t>(id)].parents) {
                if (p <= fid && !active[static_cast<size_t>(p)] &&
                    nodes_[static_cast<size_t>(p)].requires_grad) {
                    active[static_cast<size_t>(p)] = 1;
                    stack.push_back(p);
                }
            }
        }
    }

    std::vector<int> gmap(static_cast<size_t>(fid) + 1, -1);
    if (active[static_cast<size_t>(fid)])
        gmap[static_cast<size_t>(fid)] = constant(Tensor::full(f.val().shape(), 1.0)).id;

    for (int id = fid; id >= 0; --id) {
        if (gmap[static_cast<size_t>(id)] < 0 || !active[static_cast<size_t>(id)]) continue;
        // copy what we need: record() during bw can reallocate nodes_
        BackwardFn bw = nodes_[static_cast<size_t>(id)].bw;
        std::vector<int> parents = nodes_[static_cast<size_t>(id)].parents;
        const char* op = nodes_[static_cast<size_t>(id)].op;
        if (!bw) continue;  // leaf
        Var gout{this, gmap[static_cast<size_t>(id)]};
        std::vector<Var> pg = bw(gout, Var{this, id});
        if (pg.size() != parents.size())
            throw std::runtime_error(std::string("graph: backward arity mismatch in op '") + op + "'");
        for (size_t i = 0; i < parents.size(); ++i) {
            int p = parents[i];
            if (!pg[i].valid()) continue;
            if (!nodes_[static_cast<size_t>(p)].requires_grad) continue;
            if (!(pg[i].val().shape() == nodes_[static_cast<size_t>(p)].value.shape()))
                throw std::runtime_error(std::string("graph: gradient shape ") + pg[i].val().shape_str() +
                                         " does not match parent " + nodes_[static_cast<size_t>(p)].value.shape_str() +
                                         " in op '" + op + "'");
            int& slot = gmap[static_cast<size_t>(p)];
            slot = slot < 0 ? pg[i].id : add(Var{this, slot}, pg[i]).id;
        }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const Var& w : wrt) {
        int gid = w.id <= fid ? gmap[static_cast<size_t>(w.id)] : -1;
        if (gid < 0) {
            out.push_back(constant(Tensor::zeros(w.val().shape())));
        } else if (create_graph) {
            out.push_back(Var{this, gid});
        } else {
            out.push_back(constant(value(gid)));
        }
    }
    return out;
}

SecondOrderCounters& second_order_counters() {
    thread_local SecondOrderCounters c;
    return c;
}

namespace {

std::vector<Tensor> detached(const std::vector<Var>& vars) {
    std::vector<Tensor> out;
    out.reserve(vars.size());
    for (const Var& v : vars) out.push_back(v.val());
    return out;
}

Var directional_inner(const Var& f, std::span<const Var> theta, std::span<const Tensor> v) {
    if (theta.size() != v.size()) throw std::runtime_error("hvp: theta/v length mismatch");
    for (size_t i = 0; i < theta.size(); ++i)
        if (!(theta[i].val().shape() == v[i].shape()))
            throw std::runtime_error("hvp: direction shape " + v[i].shape_str() +
                                     " does not match parameter " + theta[i].val().shape_str());
    Graph& g = *f.g;
    std::vector<Var> g1 = g.grad(f, theta, /*create_graph=*/true);
    Var s;
    for (size_t i = 0; i < theta.size(); ++i) {
        Var term = dot(g1[i], g.constant(v[i]));
        s = s.valid() ? add(s, term) : term;
    }
    return s;
}

}  // namespace

std::vector<Tensor> hvp(const Var& f, std::span<const Var> theta, std::span<const Tensor> v) {
    Var s = directional_inner(f, theta, v);
    ++second_order_counters().hvp;
    return detached(f.g->grad(s, theta, false));
}

std::vector<Tensor> mixed_hvp(const Var& f, std::span<const Var> theta,
                              std::span<const Var> phi, std::span<const Tensor> v) {
    Var s = directional_inner(f, theta, v);
    ++second_order_counters().mixed_hvp;
    return detached(f.g->grad(s, phi, false));
}

}  // namespace l2tww
