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
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "l2tww/tensor.hpp"

namespace l2tww {

class Graph;

// Handle to a recorded node. Cheap to copy; valid for the life of its graph.
struct Var {
    Graph* g = nullptr;
    int id = -1;

    bool valid() const { return g != nullptr && id >= 0; }
    const Tensor& val() const;
    const std::vector<int>& shape() const { return val().shape(); }
    bool requires_grad() const;
};

// Gradient of each parent given the gradient of the output. Entries may be
// invalid for parents that receive no gradient. The function builds its
// result out of recorded operations, which is what makes gradients
// differentiable again (second order comes for free). `self` is the node
// the backward belongs to, so ops like exp can express their derivative
// through their own output.
using BackwardFn = std::function<std::vector<Var>(const Var& gout, const Var& self)>;

// Tape of recorded operations. Node ids are topologically ordered by
// construction; the backward sweep walks ids in descending order and visits
// each reachable node exactly once. A graph is confined to one thread from
// construction through backward; independent graphs are independent.
class Graph {
public:
    explicit Graph(bool strict = true) : strict_(strict) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var leaf(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var record(const char* op, Tensor value, std::vector<int> parents, BackwardFn bw);

    // Reverse-mode gradients of scalar f with respect to wrt. Unreachable
    // entries yield zero tensors. With create_graph the results stay
    // connected to the tape and can be differentiated again; without it
    // they are detached constants.
    std::vector<Var> grad(const Var& f, std::span<const Var> wrt, bool create_graph = false);

    const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool node_requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
    const char* op_name(int id) const { return nodes_[static_cast<size_t>(id)].op; }
    size_t size() const { return nodes_.size(); }

    bool strict() const { return strict_; }
    void set_strict(bool s) { strict_ = s; }

private:
    struct Node {
        Tensor value;
        std::vector<int> parents;
        BackwardFn bw;  // empty for leaves
        bool requires_grad = false;
        const char* op = "";
    };

    // deque: node references stay valid while the tape grows
    std::deque<Node> nodes_;
    bool strict_ = true;
};

// Counts of second-order product evaluations on this thread. The reverse
// hypergradient sweep has a fixed budget per step that tests pin down.
struct SecondOrderCounters {
    int64_t hvp = 0;
    int64_t mixed_hvp = 0;
};
SecondOrderCounters& second_order_counters();

// (d2f/dtheta2) . v  via double backward: grad(<grad(f,theta), v>, theta).
std::vector<Tensor> hvp(const Var& f, std::span<const Var> theta, std::span<const Tensor> v);

// (d2f/dphi dtheta) . v  via grad(<grad(f,theta), v>, phi).
std::vector<Tensor> mixed_hvp(const Var& f, std::span<const Var> theta,
                              std::span<const Var> phi, std::span<const Tensor> v);

}  // namespace l2tww
