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

#include "l2tww/transfer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace l2tww {

const char* to_string(MatchStyle s) {
    switch (s) {
        case MatchStyle::kSingle: return "single";
        case MatchStyle::kOneToOne: return "one-to-one";
        case MatchStyle::kAllToAll: return "all-to-all";
    }
    return "?";
}

MatchStyle match_style_from_string(const std::string& s) {
    if (s == "single") return MatchStyle::kSingle;
    if (s == "one-to-one") return MatchStyle::kOneToOne;
    if (s == "all-to-all") return MatchStyle::kAllToAll;
    throw std::runtime_error("match style '" + s + "' not one of single|one-to-one|all-to-all");
}

std::vector<TapInfo> tap_infos(const ExtractorSpec& spec) {
    std::vector<TapInfo> out;
    for (int k = 0; k < spec.tap_count(); ++k)
        out.push_back(TapInfo{spec.tap_channels(k), spec.tap_h(k), spec.tap_w(k)});
    return out;
}

namespace {

// target tap matching a source tap's spatial size; nearest size as the
// fallback, larger target size on ties
int match_target_tap(const TapInfo& src, const std::vector<TapInfo>& tgt) {
    int best = -1;
    for (size_t n = 0; n < tgt.size(); ++n) {
        if (tgt[n].h == src.h && tgt[n].w == src.w) return static_cast<int>(n);
        if (best < 0) {
            best = static_cast<int>(n);
            continue;
        }
        const int cur = std::abs(tgt[static_cast<size_t>(best)].h - src.h);
        const int cand = std::abs(tgt[n].h - src.h);
        if (cand < cur || (cand == cur && tgt[n].h > tgt[static_cast<size_t>(best)].h))
            best = static_cast<int>(n);
    }
    return best;
}

}  // namespace

MatchConfig make_config(MatchStyle style, const std::vector<std::vector<TapInfo>>& source_taps,
                        const std::vector<TapInfo>& target_taps, double beta) {
    if (source_taps.empty()) throw std::runtime_error("make_config: no source models");
    if (target_taps.empty()) throw std::runtime_error("make_config: target has no taps");
    if (beta <= 0.0) throw std::runtime_error("make_config: beta must be positive");
    MatchConfig cfg;
    cfg.style = style;
    cfg.beta = beta;
    for (size_t s = 0; s < source_taps.size(); ++s) {
        const std::vector<TapInfo>& taps = source_taps[s];
        if (taps.empty()) throw std::runtime_error("make_config: source " + std::to_string(s) + " has no taps");
        const int src_id = static_cast<int>(s);
        switch (style) {
            case MatchStyle::kSingle: {
                const int m = static_cast<int>(taps.size());
                int n = match_target_tap(taps.back(), target_taps);
                bool exact = target_taps[static_cast<size_t>(n)].h == taps.back().h &&
                             target_taps[static_cast<size_t>(n)].w == taps.back().w;
                if (!exact) n = static_cast<int>(target_taps.size()) - 1;  // deepest
                cfg.pairs.push_back(PairSpec{src_id, m, n + 1});
                break;
            }
            case MatchStyle::kOneToOne:
                for (size_t m = 0; m < taps.size(); ++m) {
                    int n = match_target_tap(taps[m], target_taps);
                    cfg.pairs.push_back(PairSpec{src_id, static_cast<int>(m) + 1, n + 1});
                }
                break;
            case MatchStyle::kAllToAll:
                for (size_t m = 0; m < taps.size(); ++m)
                    for (size_t n = 0; n < target_taps.size(); ++n)
                        cfg.pairs.push_back(
                            PairSpec{src_id, static_cast<int>(m) + 1, static_cast<int>(n) + 1});
                break;
        }
    }
    return cfg;
}

Var wfm_pair_loss(const Var& adapted, const Var& source_tap, const Var& w) {
    const Tensor& ta = adapted.val();
    const Tensor& ts = source_tap.val();
    if (!(ta.shape() == ts.shape()))
        throw std::runtime_error("wfm: adapted features " + ta.shape_str() +
                                 " do not match source features " + ts.shape_str());
    const int b = ta.dim(0), c = ta.dim(1), hw = ta.dim(2) * ta.dim(3);
    if (w.val().rank() != 2 || w.val().dim(0) != b || w.val().dim(1) != c)
        throw std::runtime_error("wfm: channel weights " + w.val().shape_str() + " do not match features " +
                                 ta.shape_str());
    Var diff = sub(adapted, source_tap);
    Var sq = mul(diff, diff);
    Var per_channel = sum_last(reshape(sq, {b, c, hw}));  // [B,C]
    Var weighted = sum_last(mul(per_channel, w));         // [B]
    return scale(weighted, 1.0 / hw);
}

void TransferModel::validate() const {
    if (config.pairs.size() != meta.pairs().size())
        throw std::runtime_error("transfer: match config and meta parameters disagree");
    for (const PairSpec& p : config.pairs) {
        if (p.source < 0 || p.source >= static_cast<int>(sources.size()))
            throw std::runtime_error("transfer: pair references source " + std::to_string(p.source));
        const ExtractorSpec& ss = sources[static_cast<size_t>(p.source)].spec();
        if (p.m < 1 || p.m > ss.tap_count())
            throw std::runtime_error("transfer: pair references source tap g" + std::to_string(p.m));
        if (p.n < 1 || p.n > target.spec().tap_count())
            throw std::runtime_error("transfer: pair references target tap g" + std::to_string(p.n));
    }
    for (const FeatureExtractor& s : sources)
        if (!s.frozen()) throw std::runtime_error("transfer: source models must be frozen");
}

std::vector<Tensor> TransferModel::theta() const {
    std::vector<Tensor> out = target.params();
    out.insert(out.end(), meta.adaptor_values().begin(), meta.adaptor_values().end());
    return out;
}

void TransferModel::set_theta(const std::vector<Tensor>& values) {
    if (values.size() != theta_size()) throw std::runtime_error("transfer: theta arity mismatch");
    const size_t nt = target.params().size();
    for (size_t i = 0; i < nt; ++i) target.params()[i] = values[i];
    for (size_t i = nt; i < values.size(); ++i) meta.adaptor_values()[i - nt] = values[i];
}

std::vector<std::string> TransferModel::theta_names() const {
    std::vector<std::string> out;
    for (const std::string& n : target.param_names()) out.push_back("target." + n);
    for (const std::string& n : meta.adaptor_names()) out.push_back("meta." + n);
    return out;
}

std::vector<Var> TransferModel::bind_theta(Graph& g, const std::vector<Tensor>& values,
                                           bool requires_grad) const {
    if (values.size() != theta_size()) throw std::runtime_error("transfer: theta arity mismatch");
    std::vector<Var> out;
    out.reserve(values.size());
    for (const Tensor& t : values) out.push_back(g.leaf(t, requires_grad));
    return out;
}

std::vector<Var> TransferModel::bind_phi(Graph& g, bool requires_grad) const {
    return meta.bind_phi(g, requires_grad);
}

SourceBatch TransferModel::source_features(const Tensor& x) const {
    SourceBatch sb;
    for (const FeatureExtractor& s : sources) {
        Graph g;  // throwaway: values only
        FeatureExtractor::Forward fw = s.forward_values(g, x);
        std::vector<Tensor> taps, gaps;
        for (const Var& tap : fw.taps) {
            taps.push_back(tap.val());
            gaps.push_back(global_avg_pool(tap).val());
        }
        sb.taps.push_back(std::move(taps));
        sb.gaps.push_back(std::move(gaps));
    }
    return sb;
}

Var TransferModel::loss_org(Graph& g, std::span<const Var> theta, const Tensor& x,
                            const std::vector<int64_t>& y) const {
    const size_t nt = target.params().size();
    FeatureExtractor::Forward fw = target.forward(g, theta.subspan(0, nt), g.constant(x));
    return cross_entropy(fw.logits, y);
}

TransferModel::WfmBuild TransferModel::loss_wfm(Graph& g, std::span<const Var> theta,
                                                std::span<const Var> phi, const SourceBatch& src,
                                                const Tensor& x) const {
    if (config.pairs.empty()) throw std::runtime_error("transfer: empty candidate pair set");
    const size_t nt = target.params().size();
    std::span<const Var> theta_net = theta.subspan(0, nt);
    std::span<const Var> adaptors = theta.subspan(nt);
    FeatureExtractor::Forward fw = target.forward(g, theta_net, g.constant(x));
    const int b = x.dim(0);

    WfmBuild out;
    Var total;  // [B] running sum of lambda * pair loss
    for (size_t i = 0; i < config.pairs.size(); ++i) {
        const PairSpec& p = config.pairs[i];
        const Tensor& tap = src.taps[static_cast<size_t>(p.source)][static_cast<size_t>(p.m) - 1];
        const Tensor& gap = src.gaps[static_cast<size_t>(p.source)][static_cast<size_t>(p.m) - 1];
        Var src_tap = g.constant(tap);
        Var src_gap = g.constant(gap);
        Var w = meta.channel_weights(static_cast<int>(i), phi, src_gap);
        Var lam = meta.pair_weight(static_cast<int>(i), phi, src_gap);
        Var adapted = meta.adapt(static_cast<int>(i), adaptors, fw.taps[static_cast<size_t>(p.n) - 1]);
        Var ploss = wfm_pair_loss(adapted, src_tap, w);
        Var contrib = mul(lam, ploss);
        total = total.valid() ? add(total, contrib) : contrib;
        out.pair_losses.push_back(ploss);
        out.lambdas.push_back(lam);
    }
    out.l_wfm = scale(sum_all(total), 1.0 / b);
    return out;
}

TransferModel::TotalBuild TransferModel::loss_total(Graph& g, std::span<const Var> theta,
                                                    std::span<const Var> phi, const SourceBatch& src,
                                                    const Tensor& x,
                                                    const std::vector<int64_t>& y) const {
    TotalBuild out;
    out.l_org = loss_org(g, theta, x, y);
    WfmBuild wfm = loss_wfm(g, theta, phi, src, x);
    out.l_wfm = wfm.l_wfm;
    out.pair_losses = std::move(wfm.pair_losses);
    out.lambdas = std::move(wfm.lambdas);
    out.l_total = add(out.l_org, scale(out.l_wfm, config.beta));
    return out;
}

TransferBatchReport TransferModel::report_from(const TotalBuild& build) const {
    TransferBatchReport rep;
    rep.loss_org = build.l_org.val().item();
    rep.loss_wfm = build.l_wfm.val().item();
    rep.loss_total = build.l_total.val().item();
    for (size_t i = 0; i < config.pairs.size(); ++i) {
        PairReport pr;
        pr.pair = config.pairs[i];
        const Tensor& lam = build.lambdas[i].val();
        const Tensor& pl = build.pair_losses[i].val();
        const int b = lam.dim(0);
        double mean = 0.0, meansq = 0.0, loss = 0.0, weighted = 0.0;
        for (int j = 0; j < b; ++j) {
            const double l = lam.data()[j];
            mean += l;
            meansq += l * l;
            loss += pl.data()[j];
            weighted += l * pl.data()[j];
        }
        mean /= b;
        meansq /= b;
        pr.lambda_mean = mean;
        pr.lambda_std = std::sqrt(std::max(0.0, meansq - mean * mean));
        pr.loss = loss / b;
        pr.weighted = weighted / b;
        rep.pairs.push_back(pr);
    }
    return rep;
}

Tensor saliency_map(const TransferModel& model, const Tensor& image, const PairSpec& pair,
                    bool uniform_w) {
    if (image.rank() != 3)
        throw std::runtime_error("saliency: expected a single [C,H,W] image, got " + image.shape_str());
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    const int pi = model.meta.pair_index(pair);
    Tensor batch = image.reshaped({1, c, h, w});
    SourceBatch src = model.source_features(batch);

    Graph g;
    Var x = g.leaf(batch, true);
    std::vector<Var> theta = model.bind_theta(g, model.theta(), false);
    std::vector<Var> phi = model.bind_phi(g, false);
    const size_t nt = model.target.params().size();
    FeatureExtractor::Forward fw = model.target.forward(g, std::span<const Var>(theta).subspan(0, nt), x);

    const Tensor& tap = src.taps[static_cast<size_t>(pair.source)][static_cast<size_t>(pair.m) - 1];
    const Tensor& gap = src.gaps[static_cast<size_t>(pair.source)][static_cast<size_t>(pair.m) - 1];
    Var src_tap = g.constant(tap);
    Var wvar = uniform_w ? g.constant(Tensor::full({1, tap.dim(1)}, 1.0 / tap.dim(1)))
                         : model.meta.channel_weights(pi, phi, g.constant(gap));
    Var adapted = model.meta.adapt(pi, std::span<const Var>(theta).subspan(nt),
                                   fw.taps[static_cast<size_t>(pair.n) - 1]);
    Var ploss = sum_all(wfm_pair_loss(adapted, src_tap, wvar));
    std::vector<Var> gs = g.grad(ploss, std::vector<Var>{x});
    const Tensor& gx = gs[0].val();

    Tensor map({h, w});
    double* dst = map.mut();
    double peak = 0.0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double m = 0.0;
            for (int ch = 0; ch < c; ++ch)
                m = std::max(m, std::fabs(gx.at({0, ch, i, j})));
            dst[i * w + j] = m;
            peak = std::max(peak, m);
        }
    if (peak > 0.0)
        for (int64_t i = 0; i < map.numel(); ++i) dst[i] /= peak;
    return map;
}

void write_pgm(const std::string& path, const Tensor& map2d) {
    if (map2d.rank() != 2) throw std::runtime_error("pgm: expected a 2-d map, got " + map2d.shape_str());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pgm: cannot open " + path);
    const int h = map2d.dim(0), w = map2d.dim(1);
    out << "P5\n" << w << " " << h << "\n255\n";
    for (int64_t i = 0; i < map2d.numel(); ++i) {
        double v = map2d.data()[i];
        v = std::min(1.0, std::max(0.0, v));
        unsigned char byte = static_cast<unsigned char>(std::lround(255.0 * v));
        out.write(reinterpret_cast<const char*>(&byte), 1);
    }
    if (!out) throw std::runtime_error("pgm: write failed for " + path);
}

}  // namespace l2tww
