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

#include "l2tww/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace l2tww {
namespace {

constexpr char kMagic[4] = {'M', 'X', 'F', '1'};
constexpr uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    }
    void bytes(const void* p, size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u32(uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        bytes(b, 4);
    }
    void u64(uint64_t v) {
        u32(static_cast<uint32_t>(v));
        u32(static_cast<uint32_t>(v >> 32));
    }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void finish() {
        out_.flush();
        if (!out_) throw std::runtime_error("checkpoint: write failed for " + path_);
    }

private:
    std::ofstream out_;
    std::string path_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : path_(path) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
        buf_.resize(static_cast<size_t>(in.tellg()));
        in.seekg(0);
        if (!buf_.empty() && !in.read(reinterpret_cast<char*>(buf_.data()), static_cast<std::streamsize>(buf_.size())))
            throw std::runtime_error("checkpoint: short read from " + path);
    }
    const void* take(size_t n) {
        if (at_ + n > buf_.size())
            throw std::runtime_error("checkpoint: " + path_ + " truncated at byte offset " + std::to_string(at_));
        const void* p = buf_.data() + at_;
        at_ += n;
        return p;
    }
    uint8_t u8() { return *static_cast<const uint8_t*>(take(1)); }
    uint32_t u32() {
        const unsigned char* b = static_cast<const unsigned char*>(take(4));
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }
    uint64_t u64() {
        const uint64_t lo = u32();
        return lo | (static_cast<uint64_t>(u32()) << 32);
    }
    std::string str() {
        const uint32_t n = u32();
        const char* p = static_cast<const char*>(take(n));
        return std::string(p, n);
    }
    void expect_end() {
        if (at_ != buf_.size())
            throw std::runtime_error("checkpoint: " + path_ + " has " + std::to_string(buf_.size() - at_) +
                                     " trailing bytes at offset " + std::to_string(at_));
    }
    size_t offset() const { return at_; }
    const std::string& path() const { return path_; }

private:
    std::vector<unsigned char> buf_;
    size_t at_ = 0;
    std::string path_;
};

void write_tensor_table(Writer& w, const std::vector<std::pair<std::string, Tensor>>& table,
                        bool float64) {
    w.u32(static_cast<uint32_t>(table.size()));
    for (const auto& [name, t] : table) {
        w.str(name);
        w.u32(static_cast<uint32_t>(t.shape().size()));
        for (int d : t.shape()) w.u32(static_cast<uint32_t>(d));
        if (float64) {
            for (int64_t i = 0; i < t.numel(); ++i) {
                uint64_t bits;
                double v = t.data()[i];
                std::memcpy(&bits, &v, 8);
                w.u64(bits);
            }
        } else {
            for (int64_t i = 0; i < t.numel(); ++i) {
                float v = static_cast<float>(t.data()[i]);
                uint32_t bits;
                std::memcpy(&bits, &v, 4);
                w.u32(bits);
            }
        }
    }
}

std::vector<std::pair<std::string, Tensor>> read_tensor_table(Reader& r, bool float64) {
    std::vector<std::pair<std::string, Tensor>> table;
    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const uint32_t rank = r.u32();
        if (rank > 8)
            throw std::runtime_error("checkpoint: " + r.path() + " has implausible rank " +
                                     std::to_string(rank) + " at byte offset " + std::to_string(r.offset()));
        std::vector<int> shape;
        for (uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u32()));
        Tensor t(shape);
        double* p = t.mut();
        for (int64_t j = 0; j < t.numel(); ++j) {
            if (float64) {
                uint64_t bits = r.u64();
                double v;
                std::memcpy(&v, &bits, 8);
                p[j] = v;
            } else {
                uint32_t bits = r.u32();
                float v;
                std::memcpy(&v, &bits, 4);
                p[j] = static_cast<double>(v);
            }
        }
        table.emplace_back(std::move(name), std::move(t));
    }
    return table;
}

}  // namespace

const Tensor* CheckpointData::find_param(const std::string& name) const {
    for (const auto& [n, t] : params)
        if (n == name) return &t;
    return nullptr;
}

const Tensor* CheckpointData::find_opt(const std::string& name) const {
    for (const auto& [n, t] : opt_state)
        if (n == name) return &t;
    return nullptr;
}

const std::string* CheckpointData::find_rng(const std::string& name) const {
    for (const auto& [n, s] : rng_states)
        if (n == name) return &s;
    return nullptr;
}

void save_checkpoint(const CheckpointData& data, const std::string& path) {
    Writer w(path);
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.u8(data.float64 ? 1 : 0);
    write_tensor_table(w, data.params, data.float64);
    write_tensor_table(w, data.opt_state, data.float64);
    w.u32(static_cast<uint32_t>(data.rng_states.size()));
    for (const auto& [name, state] : data.rng_states) {
        w.str(name);
        w.str(state);
    }
    w.u64(static_cast<uint64_t>(data.epoch));
    w.u64(static_cast<uint64_t>(data.step));
    w.finish();
}

CheckpointData load_checkpoint(const std::string& path) {
    Reader r(path);
    const char* magic = static_cast<const char*>(r.take(4));
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: " + path + " has bad magic at byte offset 0");
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw std::runtime_error("checkpoint: " + path + " is format version " + std::to_string(version) +
                                 ", this build reads version " + std::to_string(kVersion) +
                                 " only; refusing to reinterpret");
    CheckpointData data;
    data.float64 = r.u8() != 0;
    data.params = read_tensor_table(r, data.float64);
    data.opt_state = read_tensor_table(r, data.float64);
    const uint32_t nrng = r.u32();
    for (uint32_t i = 0; i < nrng; ++i) {
        std::string name = r.str();
        std::string state = r.str();
        data.rng_states.emplace_back(std::move(name), std::move(state));
    }
    data.epoch = static_cast<int64_t>(r.u64());
    data.step = static_cast<int64_t>(r.u64());
    r.expect_end();
    return data;
}

}  // namespace l2tww
