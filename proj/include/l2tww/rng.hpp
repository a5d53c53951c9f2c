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
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace l2tww {

// Seeded RNG with purpose-keyed derivation. Each consumer (parameter init,
// data order, augmentation, ...) draws from its own stream derived from the
// run seed and a name, so adding or removing one consumer never shifts the
// values another one sees.
class Rng {
public:
    Rng() : eng_(0) {}
    explicit Rng(uint64_t seed) : eng_(seed) {}

    static Rng derive(uint64_t root_seed, std::string_view purpose);

    double uniform(double lo = 0.0, double hi = 1.0);
    double normal(double mean = 0.0, double stddev = 1.0);
    int64_t randint(int64_t lo, int64_t hi);  // inclusive bounds
    uint64_t next() { return eng_(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(randint(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<int64_t> permutation(int64_t n);

    // Engine state as text, for checkpointing.
    std::string serialize() const;
    void deserialize(const std::string& s);

private:
    std::mt19937_64 eng_;
};

uint64_t fnv1a64(std::string_view s);

}  // namespace l2tww
