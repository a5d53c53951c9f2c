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

#include "l2tww/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace l2tww {

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Rng Rng::derive(uint64_t root_seed, std::string_view purpose) {
    // splitmix-style final mix so nearby seeds land far apart
    uint64_t z = root_seed ^ fnv1a64(purpose);
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z = z ^ (z >> 31);
    return Rng(z);
}

// Distributions are derived from raw engine words rather than the standard
// distributions, so streams are reproducible across standard libraries and
// carry no hidden state besides the engine itself.
double Rng::uniform(double lo, double hi) {
    double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;  // [0,1)
    return lo + u * (hi - lo);
}

double Rng::normal(double mean, double stddev) {
    // Box-Muller, cosine branch only (stateless)
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

int64_t Rng::randint(int64_t lo, int64_t hi) {
    if (lo > hi) throw std::runtime_error("rng: randint with empty range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(eng_());  // full 64-bit range
    uint64_t mask = span - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    uint64_t v;
    do {
        v = eng_() & mask;
    } while (v >= span);
    return lo + static_cast<int64_t>(v);
}

std::vector<int64_t> Rng::permutation(int64_t n) {
    std::vector<int64_t> p(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
    shuffle(p);
    return p;
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
}

void Rng::deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (is.fail()) throw std::runtime_error("rng: malformed engine state");
}

}  // namespace l2tww
