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
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace l2tww {

// Dense row-major double tensor with value semantics. Storage is shared on
// copy and detached on first write, so snapshotting parameters or recording
// values into a graph is cheap while writers can never alias a reader.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);  // zero-filled
    Tensor(std::vector<int> shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v);

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t numel() const { return numel_; }
    bool defined() const { return static_cast<bool>(data_); }

    const double* data() const { return data_ ? data_->data() : nullptr; }
    double* mut();  // detaches shared storage before handing out a writable pointer

    double at(std::initializer_list<int> idx) const;
    double item() const;  // numel()==1 only

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    std::string shape_str() const;

    Tensor reshaped(std::vector<int> shape) const;  // same storage, new dims

    static int64_t numel_of(const std::vector<int>& shape);

private:
    std::vector<int> shape_;
    int64_t numel_ = 0;
    std::shared_ptr<std::vector<double>> data_;
};

std::string shape_to_string(const std::vector<int>& s);

}  // namespace l2tww
