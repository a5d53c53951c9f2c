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

#include "l2tww/models.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "l2tww/kernels.hpp"
#include "l2tww/rng.hpp"

namespace l2tww {
namespace {

Tensor he_conv(Rng& rng, int co, int ci, int kh, int kw) {
    Tensor t({co, ci, kh, kw});
    const double std = std::sqrt(2.0 / (ci * kh * kw));
    double* p = t.mut();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = rng.normal(0.0, std);
    return t;
}

Tensor he_fc(Rng& rng, int in, int out) {
    Tensor t({in, out});
    const double std = std::sqrt(2.0 / in);
    double* p = t.mut();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = rng.normal(0.0, std);
    return t;
}

// entry conv of group k downscales iff the previous group asked for it
bool entry_strided(const ExtractorSpec& spec, int k) {
    return k > 0 && spec.groups[static_cast<size_t>(k) - 1].downscale_after;
}

}  // namespace

void ExtractorSpec::validate() const {
    if (groups.empty()) throw std::runtime_error("extractor: needs at least one group");
    if (in_channels <= 0 || in_h <= 0 || in_w <= 0)
        throw std::runtime_error("extractor: bad input shape");
    if (num_classes <= 0) throw std::runtime_error("extractor: bad class count");
    for (const GroupSpec& g : groups) {
        if (g.channels <= 0) throw std::runtime_error("extractor: group with zero channels");
        if (g.blocks <= 0) throw std::runtime_error("extractor: group with zero blocks");
    }
    for (int h : head_hidden)
        if (h <= 0) throw std::runtime_error("extractor: bad head width");
    int h = in_h, w = in_w;
    for (size_t k = 1; k < groups.size(); ++k) {
        if (groups[k - 1].downscale_after) {
            if (h % 2 != 0 || w % 2 != 0)
                throw std::runtime_error("extractor: spatial size " + std::to_string(h) + "x" +
                                         std::to_string(w) + " not divisible by 2 before group " +
                                         std::to_string(k + 1));
            h /= 2;
            w /= 2;
        }
    }
}

int ExtractorSpec::tap_h(int k) const {
    int h = in_h;
    for (int j = 1; j <= k; ++j)
        if (groups[static_cast<size_t>(j) - 1].downscale_after) h /= 2;
    return h;
}

int ExtractorSpec::tap_w(int k) const {
    int w = in_w;
    for (int j = 1; j <= k; ++j)
        if (groups[static_cast<size_t>(j) - 1].downscale_after) w /= 2;
    return w;
}

FeatureExtractor FeatureExtractor::build(const ExtractorSpec& spec, uint64_t seed) {
    spec.validate();
    Rng rng = Rng::derive(seed, "extractor-init");
    FeatureExtractor fe;
    fe.spec_ = spec;
    int prev_ch = spec.in_channels;
    for (size_t k = 0; k < spec.groups.size(); ++k) {
        const GroupSpec& gs = spec.groups[k];
        for (int blk = 0; blk < gs.blocks; ++blk) {
            const int ci = blk == 0 ? prev_ch : gs.channels;
            const bool strided = blk == 0 && entry_strided(spec, static_cast<int>(k));
            const int ksz = strided ? 2 : 3;
            const std::string base = "g" + std::to_string(k + 1) + ".conv" + std::to_string(blk + 1);
            fe.names_.push_back(base + ".w");
            fe.values_.push_back(he_conv(rng, gs.channels, ci, ksz, ksz));
            fe.names_.push_back(base + ".b");
            fe.values_.push_back(Tensor::zeros({gs.channels}));
        }
        prev_ch = gs.channels;
    }
    int in = prev_ch;
    int fc = 1;
    for (int hidden : spec.head_hidden) {
        const std::string base = "head.fc" + std::to_string(fc++);
        fe.names_.push_back(base + ".w");
        fe.values_.push_back(he_fc(rng, in, hidden));
        fe.names_.push_back(base + ".b");
        fe.values_.push_back(Tensor::zeros({hidden}));
        in = hidden;
    }
    const std::string base = "head.fc" + std::to_string(fc);
    fe.names_.push_back(base + ".w");
    fe.values_.push_back(he_fc(rng, in, spec.num_classes));
    fe.names_.push_back(base + ".b");
    fe.values_.push_back(Tensor::zeros({spec.num_classes}));
    return fe;
}

int64_t FeatureExtractor::param_count() const {
    int64_t n = 0;
    for (const Tensor& t : values_) n += t.numel();
    return n;
}

std::vector<Var> FeatureExtractor::bind(Graph& g) const {
    std::vector<Var> out;
    out.reserve(values_.size());
    for (const Tensor& t : values_) out.push_back(g.leaf(t, !frozen_));
    return out;
}

FeatureExtractor::Forward FeatureExtractor::forward(Graph&, std::span<const Var> params,
                                                    const Var& x) const {
    if (params.size() != values_.size())
        throw std::runtime_error("extractor: bound " + std::to_string(params.size()) +
                                 " parameters, expected " + std::to_string(values_.size()));
    const Tensor& tx = x.val();
    if (tx.rank() != 4 || tx.dim(1) != spec_.in_channels || tx.dim(2) != spec_.in_h ||
        tx.dim(3) != spec_.in_w)
        throw std::runtime_error("extractor: input " + tx.shape_str() + " does not match spec [Bx" +
                                 std::to_string(spec_.in_channels) + "x" + std::to_string(spec_.in_h) +
                                 "x" + std::to_string(spec_.in_w) + "]");
    Forward fw;
    size_t pi = 0;
    Var h = x;
    for (size_t k = 0; k < spec_.groups.size(); ++k) {
        const GroupSpec& gs = spec_.groups[k];
        for (int blk = 0; blk < gs.blocks; ++blk) {
            const bool strided = blk == 0 && entry_strided(spec_, static_cast<int>(k));
            const Var& w = params[pi++];
            const Var& b = params[pi++];
            h = relu(conv2d(h, w, b, strided ? 2 : 1, strided ? 0 : 1));
        }
        fw.taps.push_back(h);
    }
    Var feat = global_avg_pool(h);
    const size_t n_fc = spec_.head_hidden.size() + 1;
    for (size_t f = 0; f < n_fc; ++f) {
        const Var& w = params[pi++];
        const Var& b = params[pi++];
        feat = linear(feat, w, b);
        if (f + 1 < n_fc) feat = relu(feat);
    }
    fw.logits = feat;
    return fw;
}

FeatureExtractor::Forward FeatureExtractor::forward_values(Graph& g, const Tensor& x) const {
    std::vector<Var> params = bind(g);
    return forward(g, params, g.constant(x));
}

// ---------------------------------------------------------------------------
// MetaParams
// ---------------------------------------------------------------------------

const char* to_string(MetaMode m) {
    switch (m) {
        case MetaMode::kUniform: return "uniform";
        case MetaMode::kChannelsOnly: return "channels-only";
        case MetaMode::kMetaNetworks: return "meta-networks";
        case MetaMode::kMetaWeights: return "meta-weights";
    }
    return "?";
}

MetaParams MetaParams::build(MetaMode mode, std::vector<PairSpec> pairs,
                             std::vector<TapInfo> src_taps, std::vector<TapInfo> tgt_taps,
                             uint64_t seed) {
    if (pairs.size() != src_taps.size() || pairs.size() != tgt_taps.size())
        throw std::runtime_error("meta: pair/tap info mismatch");
    for (size_t i = 0; i < pairs.size(); ++i)
        for (size_t j = i + 1; j < pairs.size(); ++j)
            if (pairs[i] == pairs[j]) throw std::runtime_error("meta: duplicate candidate pair");

    MetaParams mp;
    mp.mode_ = mode;
    mp.pairs_ = std::move(pairs);
    mp.src_taps_ = std::move(src_taps);
    mp.tgt_taps_ = std::move(tgt_taps);
    Rng rng = Rng::derive(seed, "adaptor-init");
    for (size_t i = 0; i < mp.pairs_.size(); ++i) {
        const int cs = mp.src_taps_[i].channels;
        const int ct = mp.tgt_taps_[i].channels;
        const std::string tag = "pair" + std::to_string(i);
        mp.adaptor_names_.push_back(tag + ".adaptor.w");
        mp.adaptor_values_.push_back(he_conv(rng, cs, ct, 1, 1));

        PhiLayout lay;
        auto push_phi = [&](const std::string& name, Tensor t) {
            mp.phi_names_.push_back(tag + "." + name);
            mp.phi_values_.push_back(std::move(t));
            return static_cast<int>(mp.phi_values_.size()) - 1;
        };
        switch (mode) {
            case MetaMode::kUniform:
                break;
            case MetaMode::kChannelsOnly:
                // zero init: start exactly at the uniform-weight baseline
                lay.f_w = push_phi("f.w", Tensor::zeros({cs, cs}));
                lay.f_b = push_phi("f.b", Tensor::zeros({cs}));
                break;
            case MetaMode::kMetaNetworks:
                lay.f_w = push_phi("f.w", Tensor::zeros({cs, cs}));
                lay.f_b = push_phi("f.b", Tensor::zeros({cs}));
                lay.g_w = push_phi("g.w", Tensor::zeros({cs, 1}));
                lay.g_b = push_phi("g.b", Tensor::full({1}, 1.0));
                break;
            case MetaMode::kMetaWeights:
                lay.w_logits = push_phi("w_logits", Tensor::zeros({cs}));
                lay.lam_raw = push_phi("lam_raw", Tensor::full({1}, 1.0));
                break;
        }
        mp.layout_.push_back(lay);
    }
    return mp;
}

int MetaParams::pair_index(const PairSpec& p) const {
    for (size_t i = 0; i < pairs_.size(); ++i)
        if (pairs_[i] == p) return static_cast<int>(i);
    throw std::runtime_error("meta: unknown pair (source " + std::to_string(p.source) + ", m " +
                             std::to_string(p.m) + ", n " + std::to_string(p.n) + ")");
}

std::vector<Var> MetaParams::bind_adaptors(Graph& g, bool requires_grad) const {
    std::vector<Var> out;
    out.reserve(adaptor_values_.size());
    for (const Tensor& t : adaptor_values_) out.push_back(g.leaf(t, requires_grad));
    return out;
}

std::vector<Var> MetaParams::bind_phi(Graph& g, bool requires_grad) const {
    std::vector<Var> out;
    out.reserve(phi_values_.size());
    for (const Tensor& t : phi_values_) out.push_back(g.leaf(t, requires_grad));
    return out;
}

Var MetaParams::channel_weights(int pair, std::span<const Var> phi, const Var& src_gap) const {
    if (pair < 0 || pair >= static_cast<int>(pairs_.size()))
        throw std::runtime_error("meta: unknown pair index " + std::to_string(pair));
    const int cs = src_taps_[static_cast<size_t>(pair)].channels;
    const Tensor& g = src_gap.val();
    if (g.rank() != 2 || g.dim(1) != cs)
        throw std::runtime_error("meta: pooled source features " + g.shape_str() + " do not match " +
                                 std::to_string(cs) + " channels");
    const int b = g.dim(0);
    Graph& gr = *src_gap.g;
    const PhiLayout& lay = layout_[static_cast<size_t>(pair)];
    switch (mode_) {
        case MetaMode::kUniform:
            return gr.constant(Tensor::full({b, cs}, 1.0 / cs));
        case MetaMode::kChannelsOnly:
        case MetaMode::kMetaNetworks:
            return softmax_rows(linear(src_gap, phi[static_cast<size_t>(lay.f_w)],
                                       phi[static_cast<size_t>(lay.f_b)]));
        case MetaMode::kMetaWeights:
            return softmax_rows(broadcast_first(phi[static_cast<size_t>(lay.w_logits)], b));
    }
    throw std::runtime_error("meta: bad mode");
}

Var MetaParams::pair_weight(int pair, std::span<const Var> phi, const Var& src_gap) const {
    if (pair < 0 || pair >= static_cast<int>(pairs_.size()))
        throw std::runtime_error("meta: unknown pair index " + std::to_string(pair));
    const int b = src_gap.val().dim(0);
    Graph& gr = *src_gap.g;
    const PhiLayout& lay = layout_[static_cast<size_t>(pair)];
    switch (mode_) {
        case MetaMode::kUniform:
        case MetaMode::kChannelsOnly:
            return gr.constant(Tensor::full({b}, 1.0));
        case MetaMode::kMetaNetworks: {
            Var pre = linear(src_gap, phi[static_cast<size_t>(lay.g_w)],
                             phi[static_cast<size_t>(lay.g_b)]);  // [B,1]
            return relu6(reshape(pre, {b}));
        }
        case MetaMode::kMetaWeights:
            return relu6(broadcast_fill(phi[static_cast<size_t>(lay.lam_raw)], {b}));
    }
    throw std::runtime_error("meta: bad mode");
}

Var MetaParams::adapt(int pair, std::span<const Var> adaptors, const Var& tgt_tap) const {
    if (pair < 0 || pair >= static_cast<int>(pairs_.size()))
        throw std::runtime_error("meta: unknown pair index " + std::to_string(pair));
    const TapInfo& src = src_taps_[static_cast<size_t>(pair)];
    Var mapped = conv2d(tgt_tap, adaptors[static_cast<size_t>(pair)], 1, 0);
    const Tensor& t = mapped.val();
    if (t.dim(2) != src.h || t.dim(3) != src.w)
        mapped = bilinear_resize(mapped, src.h, src.w);
    return mapped;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

SgdState SgdState::like(const std::vector<Tensor>& params) {
    SgdState s;
    s.velocity.reserve(params.size());
    for (const Tensor& p : params) s.velocity.push_back(Tensor::zeros(p.shape()));
    return s;
}

void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, SgdState& state,
              double lr, const SgdOptions& opt) {
    if (params.size() != grads.size() || params.size() != state.velocity.size())
        throw std::runtime_error("sgd: parameter/gradient/state arity mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        if (!(params[i].shape() == grads[i].shape()))
            throw std::runtime_error("sgd: gradient " + grads[i].shape_str() +
                                     " does not match parameter " + params[i].shape_str());
        const size_t n = static_cast<size_t>(params[i].numel());
        double* v = state.velocity[i].mut();
        // v <- mu v + (g + wd p); p <- p - lr v
        kernels().scale(v, v, opt.momentum, n);
        kernels().axpy(v, 1.0, grads[i].data(), n);
        if (opt.weight_decay != 0.0) kernels().axpy(v, opt.weight_decay, params[i].data(), n);
        kernels().axpy(params[i].mut(), -lr, v, n);
    }
}

double cosine_lr(int64_t t, int64_t t_max, double base) {
    if (t_max <= 0 || t < 0 || t > t_max)
        throw std::runtime_error("cosine_lr: t=" + std::to_string(t) + " outside [0," +
                                 std::to_string(t_max) + "]");
    return 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(t_max))) * base;
}

AdamState AdamState::like(const std::vector<Tensor>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor& p : params) {
        s.m.push_back(Tensor::zeros(p.shape()));
        s.v.push_back(Tensor::zeros(p.shape()));
    }
    return s;
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamOptions& opt) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::runtime_error("adam: parameter/gradient/state arity mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        if (!(params[i].shape() == grads[i].shape()))
            throw std::runtime_error("adam: gradient " + grads[i].shape_str() +
                                     " does not match parameter " + params[i].shape_str());
        const int64_t n = params[i].numel();
        double* m = state.m[i].mut();
        double* v = state.v[i].mut();
        double* p = params[i].mut();
        const double* g = grads[i].data();
        for (int64_t j = 0; j < n; ++j) {
            const double gj = opt.weight_decay != 0.0 ? g[j] + opt.weight_decay * p[j] : g[j];
            m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * gj;
            v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
    }
}

}  // namespace l2tww
