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
#include <span>
#include <string>
#include <vector>

#include "l2tww/graph.hpp"
#include "l2tww/ops.hpp"

namespace l2tww {

// ---------------------------------------------------------------------------
// Feature extractors
// ---------------------------------------------------------------------------

struct GroupSpec {
    int channels = 0;
    int blocks = 1;
    bool downscale_after = true;
};

// Plain convolutional stack: per group, an entry conv (strided 2x2 when the
// previous group downscales, 3x3 pad 1 otherwise) followed by 3x3 pad 1
// blocks, relu after every conv. One tap per group, taken after the last
// block, i.e. just before the next downscale. Classifier head is global
// average pooling into fully connected layers.
struct ExtractorSpec {
    int in_channels = 3;
    int in_h = 16;
    int in_w = 16;
    std::vector<GroupSpec> groups;
    std::vector<int> head_hidden;  // may be empty
    int num_classes = 2;

    void validate() const;
    int tap_count() const { return static_cast<int>(groups.size()); }
    int tap_channels(int k) const { return groups[static_cast<size_t>(k)].channels; }
    int tap_h(int k) const;  // k is 0-based
    int tap_w(int k) const;
};

class FeatureExtractor {
public:
    FeatureExtractor() = default;

    // He-initialized parameters, deterministic in the seed.
    static FeatureExtractor build(const ExtractorSpec& spec, uint64_t seed);

    const ExtractorSpec& spec() const { return spec_; }
    const std::vector<std::string>& param_names() const { return names_; }
    const std::vector<Tensor>& params() const { return values_; }
    std::vector<Tensor>& params() { return values_; }
    bool frozen() const { return frozen_; }
    void set_frozen(bool f) { frozen_ = f; }
    int64_t param_count() const;

    // Parameters as graph leaves; frozen extractors never require grad.
    std::vector<Var> bind(Graph& g) const;

    struct Forward {
        std::vector<Var> taps;  // one per group, post-activation
        Var logits;
    };
    Forward forward(Graph& g, std::span<const Var> params, const Var& x) const;

    // Binds parameters internally; for evaluation-style calls.
    Forward forward_values(Graph& g, const Tensor& x) const;

private:
    ExtractorSpec spec_;
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    bool frozen_ = false;
};

// ---------------------------------------------------------------------------
// Meta parameters: channel weights, pair weights, adaptors
// ---------------------------------------------------------------------------

// A candidate pair: source model index, source tap m, target tap n (1-based
// tap numbers, matching the g1..gG tap names).
struct PairSpec {
    int source = 0;
    int m = 1;
    int n = 1;
    bool operator==(const PairSpec&) const = default;
};

struct TapInfo {
    int channels = 0;
    int h = 0;
    int w = 0;
};

enum class MetaMode {
    kUniform,       // w uniform, lambda = 1; no meta parameters at all
    kChannelsOnly,  // f learned, lambda fixed at 1
    kMetaNetworks,  // f and g learned (the full method)
    kMetaWeights,   // free per-pair logits/scalars instead of networks
};

const char* to_string(MetaMode m);

// Per-pair parameters. Adaptors (pointwise conv kernels) belong to the
// target-side parameter vector theta; everything else is phi.
class MetaParams {
public:
    MetaParams() = default;
    static MetaParams build(MetaMode mode, std::vector<PairSpec> pairs,
                            std::vector<TapInfo> src_taps, std::vector<TapInfo> tgt_taps,
                            uint64_t seed);

    MetaMode mode() const { return mode_; }
    const std::vector<PairSpec>& pairs() const { return pairs_; }
    const TapInfo& src_tap(int pair) const { return src_taps_[static_cast<size_t>(pair)]; }
    const TapInfo& tgt_tap(int pair) const { return tgt_taps_[static_cast<size_t>(pair)]; }
    int pair_index(const PairSpec& p) const;  // throws on unknown pair

    const std::vector<std::string>& adaptor_names() const { return adaptor_names_; }
    std::vector<Tensor>& adaptor_values() { return adaptor_values_; }
    const std::vector<Tensor>& adaptor_values() const { return adaptor_values_; }

    const std::vector<std::string>& phi_names() const { return phi_names_; }
    std::vector<Tensor>& phi_values() { return phi_values_; }
    const std::vector<Tensor>& phi_values() const { return phi_values_; }

    std::vector<Var> bind_adaptors(Graph& g, bool requires_grad = true) const;
    std::vector<Var> bind_phi(Graph& g, bool requires_grad = true) const;

    // w^{m,n}: per-sample softmax weights over source channels, [B, Cs].
    Var channel_weights(int pair, std::span<const Var> phi, const Var& src_gap) const;
    // lambda^{m,n}: per-sample relu6-bounded pair weight, [B].
    Var pair_weight(int pair, std::span<const Var> phi, const Var& src_gap) const;
    // r_theta: pointwise conv to source channels plus bilinear alignment.
    Var adapt(int pair, std::span<const Var> adaptors, const Var& tgt_tap) const;

    struct PhiLayout {
        int f_w = -1, f_b = -1, g_w = -1, g_b = -1, w_logits = -1, lam_raw = -1;
    };
    const PhiLayout& layout(int pair) const { return layout_[static_cast<size_t>(pair)]; }

private:
    MetaMode mode_ = MetaMode::kUniform;
    std::vector<PairSpec> pairs_;
    std::vector<TapInfo> src_taps_, tgt_taps_;
    std::vector<std::string> adaptor_names_;
    std::vector<Tensor> adaptor_values_;
    std::vector<std::string> phi_names_;
    std::vector<Tensor> phi_values_;
    std::vector<PhiLayout> layout_;
};

// ---------------------------------------------------------------------------
// Optimizers and schedule
// ---------------------------------------------------------------------------

struct SgdOptions {
    double momentum = 0.9;
    double weight_decay = 1e-4;  // coupled: added to the gradient
};

struct SgdState {
    std::vector<Tensor> velocity;
    static SgdState like(const std::vector<Tensor>& params);
};

void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, SgdState& state,
              double lr, const SgdOptions& opt);

// 0.5 * (1 + cos(pi t / t_max)) * base, monotone non-increasing on [0, t_max].
double cosine_lr(int64_t t, int64_t t_max, double base);

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct AdamState {
    std::vector<Tensor> m, v;
    int64_t step = 0;
    static AdamState like(const std::vector<Tensor>& params);
};

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamOptions& opt);

}  // namespace l2tww
