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

#include "l2tww/tensor.hpp"

#include <sstream>
#include <stdexcept>

#include "l2tww/kernels.hpp"

namespace l2tww {

int64_t Tensor::numel_of(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::runtime_error("tensor: non-positive dimension in shape " + shape_to_string(shape));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), numel_(numel_of(shape_)),
      data_(std::make_shared<std::vector<double>>(static_cast<size_t>(numel_), 0.0)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), numel_(numel_of(shape_)),
      data_(std::make_shared<std::vector<double>>(std::move(values))) {
    if (static_cast<int64_t>(data_->size()) != numel_)
        throw std::runtime_error("tensor: " + std::to_string(data_->size()) +
                                 " values for shape " + shape_to_string(shape_));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), v);
    return t;
}

double* Tensor::mut() {
    if (!data_) throw std::runtime_error("tensor: write to undefined tensor");
    if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
    return data_->data();
}

double Tensor::at(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank())
        throw std::runtime_error("tensor: index rank mismatch");
    int64_t off = 0;
    int i = 0;
    for (int v : idx) {
        if (v < 0 || v >= shape_[static_cast<size_t>(i)]) throw std::runtime_error("tensor: index out of range");
        off = off * shape_[static_cast<size_t>(i)] + v;
        ++i;
    }
    return (*data_)[static_cast<size_t>(off)];
}

double Tensor::item() const {
    if (numel_ != 1) throw std::runtime_error("tensor: item() on shape " + shape_str());
    return (*data_)[0];
}

bool Tensor::all_finite() const {
    return kernels().finite_all(data(), static_cast<size_t>(numel_)) != 0;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (numel_of(shape) != numel_)
        throw std::runtime_error("tensor: cannot reshape " + shape_str() + " to " + shape_to_string(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = numel_;
    t.data_ = data_;
    return t;
}

std::string shape_to_string(const std::vector<int>& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

}  // namespace l2tww
