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
#include <optional>
#include <string>
#include <vector>

#include "l2tww/rng.hpp"
#include "l2tww/tensor.hpp"

namespace l2tww {

struct Standardization {
    std::vector<double> mean, stddev;  // per channel
};

struct Dataset {
    Tensor images;  // [N,C,H,W], scaled to [0,1] then standardized
    std::vector<int64_t> labels;
    int class_count = 0;
    std::string split;
    Standardization stats;

    int64_t size() const { return images.defined() ? images.dim(0) : 0; }
    void validate() const;
};

// Scale raw [0,1] images in place; computes stats unless given.
Standardization standardize(Tensor& images, const std::optional<Standardization>& given = {});
Tensor destandardize(const Tensor& images, const Standardization& stats);

// IDX files (big-endian dims; magic 0x00000803 for images, 0x00000801 for
// labels). Malformed input fails with the byte offset; nothing partial is
// ever returned.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& split, int class_count = 0,
                 const std::optional<Standardization>& stats = {});

// Binary records of 1 label byte + 3x32x32 pixel bytes; reads every *.bin
// file in the directory in name order.
Dataset load_cifar_binary(const std::string& dir, const std::string& split,
                          const std::optional<Standardization>& stats = {});

// Exactly n per class, chosen by a seeded per-class shuffle. Draws with the
// same seed nest: the n=50 subset is a prefix of the n=100 one.
Dataset subsample_per_class(const Dataset& ds, int n, uint64_t seed);

struct Batch {
    Tensor x;
    std::vector<int64_t> y;
};

// One epoch worth of batches: a seeded permutation of [0,n) in chunks.
std::vector<std::vector<int64_t>> epoch_batches(int64_t n, int batch_size, Rng& rng);

Batch gather_batch(const Dataset& ds, const std::vector<int64_t>& idx);

// pad-4 random crop plus horizontal flip
Batch augment_batch(const Batch& b, Rng& rng);

}  // namespace l2tww
