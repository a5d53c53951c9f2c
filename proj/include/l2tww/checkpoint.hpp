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
#include <string>
#include <utility>
#include <vector>

#include "l2tww/tensor.hpp"

namespace l2tww {

// Container serialized to the "MXF1" checkpoint format: magic, version,
// a float-width flag, a named parameter table, a named optimizer-state
// table, named RNG states, and the schedule position. Parameters are
// stored as 32-bit floats unless float64 is set; everything is
// little-endian. save(load(save(x))) is byte-identical.
struct CheckpointData {
    bool float64 = false;
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, Tensor>> opt_state;
    std::vector<std::pair<std::string, std::string>> rng_states;
    int64_t epoch = 0;
    int64_t step = 0;

    const Tensor* find_param(const std::string& name) const;
    const Tensor* find_opt(const std::string& name) const;
    const std::string* find_rng(const std::string& name) const;
};

void save_checkpoint(const CheckpointData& data, const std::string& path);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace l2tww
