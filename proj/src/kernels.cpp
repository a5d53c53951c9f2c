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

#include "l2tww/kernels.hpp"

#include <cstdlib>
#include <stdexcept>

namespace l2tww {
namespace {

const Kernels* pick_best() {
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2")) return &kAvx2Kernels;
#endif
#if defined(__aarch64__)
    return &kNeonKernels;
#endif
    return &kScalarKernels;
}

const Kernels* find(const std::string& name) {
    if (name == "scalar") return &kScalarKernels;
    if (name == "auto") return pick_best();
#if defined(__x86_64__) || defined(_M_X64)
    if (name == "avx2") {
        if (!__builtin_cpu_supports("avx2"))
            throw std::runtime_error("kernels: avx2 requested but not supported by this CPU");
        return &kAvx2Kernels;
    }
#endif
#if defined(__aarch64__)
    if (name == "neon") return &kNeonKernels;
#endif
    throw std::runtime_error("kernels: unknown variant '" + name + "'");
}

const Kernels* initial() {
    if (const char* env = std::getenv("L2TWW_KERNELS")) return find(env);
    return pick_best();
}

// Selected once, read-only afterwards unless select_kernels is called.
const Kernels* g_active = nullptr;

}  // namespace

const Kernels& kernels() {
    if (!g_active) g_active = initial();
    return *g_active;
}

void select_kernels(const std::string& name) {
    g_active = find(name);
}

std::vector<const Kernels*> available_kernels() {
    std::vector<const Kernels*> out{&kScalarKernels};
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2")) out.push_back(&kAvx2Kernels);
#endif
#if defined(__aarch64__)
    out.push_back(&kNeonKernels);
#endif
    return out;
}

}  // namespace l2tww
