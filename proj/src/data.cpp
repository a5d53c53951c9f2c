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

#include "l2tww/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

namespace l2tww {
namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("data: cannot open " + path);
    const std::streamsize size = in.tellg();
    in.seekg(0);
    std::vector<unsigned char> buf(static_cast<size_t>(size));
    if (size > 0 && !in.read(reinterpret_cast<char*>(buf.data()), size))
        throw std::runtime_error("data: short read from " + path);
    return buf;
}

uint32_t be32(const std::vector<unsigned char>& buf, size_t off, const std::string& path) {
    if (off + 4 > buf.size())
        throw std::runtime_error("data: " + path + " truncated at byte offset " + std::to_string(off));
    return (static_cast<uint32_t>(buf[off]) << 24) | (static_cast<uint32_t>(buf[off + 1]) << 16) |
           (static_cast<uint32_t>(buf[off + 2]) << 8) | static_cast<uint32_t>(buf[off + 3]);
}

}  // namespace

void Dataset::validate() const {
    if (!images.defined() || images.rank() != 4 || size() < 1)
        throw std::runtime_error("dataset: needs a non-empty [N,C,H,W] image tensor");
    if (static_cast<int64_t>(labels.size()) != size())
        throw std::runtime_error("dataset: " + std::to_string(labels.size()) + " labels for " +
                                 std::to_string(size()) + " images");
    if (class_count < 1) throw std::runtime_error("dataset: bad class count");
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || labels[i] >= class_count)
            throw std::runtime_error("dataset: label " + std::to_string(labels[i]) + " at index " +
                                     std::to_string(i) + " outside [0," + std::to_string(class_count) + ")");
    if (static_cast<int>(stats.mean.size()) != images.dim(1) ||
        static_cast<int>(stats.stddev.size()) != images.dim(1))
        throw std::runtime_error("dataset: standardization stats missing");
}

Standardization standardize(Tensor& images, const std::optional<Standardization>& given) {
    const int n = images.dim(0), c = images.dim(1);
    const int64_t hw = static_cast<int64_t>(images.dim(2)) * images.dim(3);
    Standardization st;
    if (given) {
        st = *given;
        if (static_cast<int>(st.mean.size()) != c || static_cast<int>(st.stddev.size()) != c)
            throw std::runtime_error("data: standardization stats for " + std::to_string(st.mean.size()) +
                                     " channels applied to " + std::to_string(c));
    } else {
        st.mean.assign(static_cast<size_t>(c), 0.0);
        st.stddev.assign(static_cast<size_t>(c), 0.0);
        const double* p = images.data();
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch) {
                const double* plane = p + (static_cast<int64_t>(i) * c + ch) * hw;
                for (int64_t j = 0; j < hw; ++j) st.mean[static_cast<size_t>(ch)] += plane[j];
            }
        for (int ch = 0; ch < c; ++ch) st.mean[static_cast<size_t>(ch)] /= static_cast<double>(n) * hw;
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch) {
                const double* plane = p + (static_cast<int64_t>(i) * c + ch) * hw;
                for (int64_t j = 0; j < hw; ++j) {
                    const double d = plane[j] - st.mean[static_cast<size_t>(ch)];
                    st.stddev[static_cast<size_t>(ch)] += d * d;
                }
            }
        for (int ch = 0; ch < c; ++ch) {
            st.stddev[static_cast<size_t>(ch)] =
                std::sqrt(st.stddev[static_cast<size_t>(ch)] / (static_cast<double>(n) * hw));
            if (st.stddev[static_cast<size_t>(ch)] < 1e-8) st.stddev[static_cast<size_t>(ch)] = 1.0;
        }
    }
    double* p = images.mut();
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            double* plane = p + (static_cast<int64_t>(i) * c + ch) * hw;
            const double m = st.mean[static_cast<size_t>(ch)];
            const double s = st.stddev[static_cast<size_t>(ch)];
            for (int64_t j = 0; j < hw; ++j) plane[j] = (plane[j] - m) / s;
        }
    return st;
}

Tensor destandardize(const Tensor& images, const Standardization& stats) {
    Tensor out = images;
    const int n = out.dim(0), c = out.dim(1);
    const int64_t hw = static_cast<int64_t>(out.dim(2)) * out.dim(3);
    double* p = out.mut();
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            double* plane = p + (static_cast<int64_t>(i) * c + ch) * hw;
            for (int64_t j = 0; j < hw; ++j)
                plane[j] = plane[j] * stats.stddev[static_cast<size_t>(ch)] + stats.mean[static_cast<size_t>(ch)];
        }
    return out;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& split, int class_count,
                 const std::optional<Standardization>& stats) {
    std::vector<unsigned char> ibuf = read_file(images_path);
    if (ibuf.empty()) throw std::runtime_error("data: " + images_path + " is empty (truncated at byte offset 0)");
    const uint32_t imagic = be32(ibuf, 0, images_path);
    if (imagic != 0x00000803u)
        throw std::runtime_error("data: " + images_path + " has magic 0x" + [&] {
            char b[16];
            std::snprintf(b, sizeof b, "%08x", imagic);
            return std::string(b);
        }() + " at byte offset 0, expected 0x00000803");
    const uint32_t n = be32(ibuf, 4, images_path);
    const uint32_t h = be32(ibuf, 8, images_path);
    const uint32_t w = be32(ibuf, 12, images_path);
    const size_t need = 16 + static_cast<size_t>(n) * h * w;
    if (ibuf.size() != need)
        throw std::runtime_error("data: " + images_path + " has " + std::to_string(ibuf.size()) +
                                 " bytes, expected " + std::to_string(need) +
                                 " (truncated at byte offset " + std::to_string(std::min(ibuf.size(), need)) + ")");

    std::vector<unsigned char> lbuf = read_file(labels_path);
    if (lbuf.empty()) throw std::runtime_error("data: " + labels_path + " is empty (truncated at byte offset 0)");
    const uint32_t lmagic = be32(lbuf, 0, labels_path);
    if (lmagic != 0x00000801u)
        throw std::runtime_error("data: " + labels_path + " has bad label magic at byte offset 0");
    const uint32_t ln = be32(lbuf, 4, labels_path);
    if (ln != n)
        throw std::runtime_error("data: " + std::to_string(ln) + " labels for " + std::to_string(n) + " images");
    if (lbuf.size() != 8 + static_cast<size_t>(ln))
        throw std::runtime_error("data: " + labels_path + " truncated at byte offset " +
                                 std::to_string(std::min(lbuf.size(), 8 + static_cast<size_t>(ln))));
    if (n == 0) throw std::runtime_error("data: " + images_path + " holds no images");

    Dataset ds;
    ds.split = split;
    ds.images = Tensor({static_cast<int>(n), 1, static_cast<int>(h), static_cast<int>(w)});
    double* p = ds.images.mut();
    for (size_t i = 0; i < static_cast<size_t>(n) * h * w; ++i)
        p[i] = static_cast<double>(ibuf[16 + i]) / 255.0;
    ds.labels.reserve(n);
    int maxl = 0;
    for (uint32_t i = 0; i < ln; ++i) {
        const int v = lbuf[8 + i];
        maxl = std::max(maxl, v);
        ds.labels.push_back(v);
    }
    ds.class_count = class_count > 0 ? class_count : maxl + 1;
    ds.stats = standardize(ds.images, stats);
    ds.validate();
    return ds;
}

Dataset load_cifar_binary(const std::string& dir, const std::string& split,
                          const std::optional<Standardization>& stats) {
    namespace fs = std::filesystem;
    std::vector<std::string> files;
    if (!fs::is_directory(dir)) throw std::runtime_error("data: " + dir + " is not a directory");
    for (const fs::directory_entry& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".bin") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("data: no .bin files under " + dir);

    constexpr size_t kRecord = 3073;
    constexpr int kSide = 32, kChannels = 3;
    std::vector<unsigned char> all;
    for (const std::string& f : files) {
        std::vector<unsigned char> buf = read_file(f);
        if (buf.empty() || buf.size() % kRecord != 0)
            throw std::runtime_error("data: " + f + " has " + std::to_string(buf.size()) +
                                     " bytes, not a multiple of " + std::to_string(kRecord));
        all.insert(all.end(), buf.begin(), buf.end());
    }
    const int64_t n = static_cast<int64_t>(all.size() / kRecord);
    Dataset ds;
    ds.split = split;
    ds.class_count = 10;
    ds.images = Tensor({static_cast<int>(n), kChannels, kSide, kSide});
    double* p = ds.images.mut();
    for (int64_t i = 0; i < n; ++i) {
        const unsigned char* rec = all.data() + i * kRecord;
        const int label = rec[0];
        if (label >= ds.class_count)
            throw std::runtime_error("data: label " + std::to_string(label) + " in record " +
                                     std::to_string(i) + " outside [0,10)");
        ds.labels.push_back(label);
        for (int64_t j = 0; j < static_cast<int64_t>(kRecord) - 1; ++j)
            p[i * (kRecord - 1) + j] = static_cast<double>(rec[1 + j]) / 255.0;
    }
    ds.stats = standardize(ds.images, stats);
    ds.validate();
    return ds;
}

Dataset subsample_per_class(const Dataset& ds, int n, uint64_t seed) {
    ds.validate();
    std::map<int64_t, std::vector<int64_t>> by_class;
    for (int64_t i = 0; i < ds.size(); ++i) by_class[ds.labels[static_cast<size_t>(i)]].push_back(i);
    std::vector<int64_t> keep;
    for (int c = 0; c < ds.class_count; ++c) {
        std::vector<int64_t>& idx = by_class[c];
        if (static_cast<int>(idx.size()) < n)
            throw std::runtime_error("subsample: class " + std::to_string(c) + " has only " +
                                     std::to_string(idx.size()) + " samples, need " + std::to_string(n));
        Rng rng = Rng::derive(seed, "subsample-class-" + std::to_string(c));
        rng.shuffle(idx);
        keep.insert(keep.end(), idx.begin(), idx.begin() + n);
    }
    Dataset out;
    out.split = ds.split;
    out.class_count = ds.class_count;
    out.stats = ds.stats;
    const int c = ds.images.dim(1), h = ds.images.dim(2), w = ds.images.dim(3);
    const int64_t chw = static_cast<int64_t>(c) * h * w;
    out.images = Tensor({static_cast<int>(keep.size()), c, h, w});
    double* dst = out.images.mut();
    const double* src = ds.images.data();
    for (size_t i = 0; i < keep.size(); ++i) {
        std::memcpy(dst + static_cast<int64_t>(i) * chw, src + keep[i] * chw,
                    static_cast<size_t>(chw) * sizeof(double));
        out.labels.push_back(ds.labels[static_cast<size_t>(keep[i])]);
    }
    out.validate();
    return out;
}

std::vector<std::vector<int64_t>> epoch_batches(int64_t n, int batch_size, Rng& rng) {
    if (batch_size < 1) throw std::runtime_error("data: bad batch size");
    std::vector<int64_t> perm = rng.permutation(n);
    std::vector<std::vector<int64_t>> out;
    for (int64_t at = 0; at < n; at += batch_size) {
        const int64_t end = std::min(n, at + batch_size);
        out.emplace_back(perm.begin() + at, perm.begin() + end);
    }
    return out;
}

Batch gather_batch(const Dataset& ds, const std::vector<int64_t>& idx) {
    const int c = ds.images.dim(1), h = ds.images.dim(2), w = ds.images.dim(3);
    const int64_t chw = static_cast<int64_t>(c) * h * w;
    Batch b;
    b.x = Tensor({static_cast<int>(idx.size()), c, h, w});
    double* dst = b.x.mut();
    const double* src = ds.images.data();
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= ds.size()) throw std::runtime_error("data: batch index out of range");
        std::memcpy(dst + static_cast<int64_t>(i) * chw, src + idx[i] * chw,
                    static_cast<size_t>(chw) * sizeof(double));
        b.y.push_back(ds.labels[static_cast<size_t>(idx[i])]);
    }
    return b;
}

Batch augment_batch(const Batch& b, Rng& rng) {
    constexpr int kPad = 4;
    const int n = b.x.dim(0), c = b.x.dim(1), h = b.x.dim(2), w = b.x.dim(3);
    Batch out;
    out.y = b.y;
    out.x = Tensor({n, c, h, w});
    double* dst = out.x.mut();
    const double* src = b.x.data();
    for (int i = 0; i < n; ++i) {
        const int dy = static_cast<int>(rng.randint(0, 2 * kPad)) - kPad;
        const int dx = static_cast<int>(rng.randint(0, 2 * kPad)) - kPad;
        const bool flip = rng.randint(0, 1) == 1;
        for (int ch = 0; ch < c; ++ch) {
            const double* sp = src + (static_cast<int64_t>(i) * c + ch) * h * w;
            double* dp = dst + (static_cast<int64_t>(i) * c + ch) * h * w;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const int sy = y + dy;
                    const int sx0 = x + dx;
                    const int sx = flip ? w - 1 - sx0 : sx0;
                    dp[y * w + x] = (sy >= 0 && sy < h && sx0 >= 0 && sx0 < w) ? sp[sy * w + sx] : 0.0;
                }
        }
    }
    return out;
}

}  // namespace l2tww
