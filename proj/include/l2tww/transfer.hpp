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

#include <span>
#include <string>
#include <vector>

#include "l2tww/models.hpp"

namespace l2tww {

enum class MatchStyle { kSingle, kOneToOne, kAllToAll };

const char* to_string(MatchStyle s);
MatchStyle match_style_from_string(const std::string& s);

struct MatchConfig {
    std::vector<PairSpec> pairs;
    MatchStyle style = MatchStyle::kOneToOne;
    double beta = 0.5;
};

std::vector<TapInfo> tap_infos(const ExtractorSpec& spec);

// Candidate pair construction.
//   single:     last source tap to the target tap of equal spatial size
//               (deepest target tap if none matches);
//   one-to-one: each source tap to the target tap of equal spatial size,
//               nearest size if none is equal (larger target wins ties);
//   all-to-all: full cross product.
// Multiple sources contribute independent candidate sets, tagged by index.
MatchConfig make_config(MatchStyle style, const std::vector<std::vector<TapInfo>>& source_taps,
                        const std::vector<TapInfo>& target_taps, double beta = 0.5);

// Frozen source activations for one batch: values only, nothing to
// differentiate. taps[s][k] is [B,C,H,W]; gaps[s][k] its [B,C] pooled form.
struct SourceBatch {
    std::vector<std::vector<Tensor>> taps;
    std::vector<std::vector<Tensor>> gaps;
};

struct PairReport {
    PairSpec pair;
    double lambda_mean = 0.0;
    double lambda_std = 0.0;
    double loss = 0.0;      // batch mean of the unweighted pair loss
    double weighted = 0.0;  // batch mean of lambda * pair loss
};

struct TransferBatchReport {
    std::vector<PairReport> pairs;
    double loss_org = 0.0;
    double loss_wfm = 0.0;
    double loss_total = 0.0;
};

// Per-sample weighted matching loss for one pair, [B]:
//   (1/HW) sum_c w_c sum_ij (adapted - source)^2
Var wfm_pair_loss(const Var& adapted, const Var& source_tap, const Var& w);

// Everything the training losses need, bundled. theta is the target
// network's parameters followed by the adaptor kernels; phi is the meta
// parameter vector of the configured mode.
class TransferModel {
public:
    std::vector<FeatureExtractor> sources;  // frozen
    FeatureExtractor target;
    MetaParams meta;
    MatchConfig config;

    void validate() const;

    size_t theta_size() const { return target.params().size() + meta.adaptor_values().size(); }
    std::vector<Tensor> theta() const;
    void set_theta(const std::vector<Tensor>& values);
    std::vector<std::string> theta_names() const;

    std::vector<Var> bind_theta(Graph& g, const std::vector<Tensor>& values, bool requires_grad) const;
    std::vector<Var> bind_phi(Graph& g, bool requires_grad) const;

    SourceBatch source_features(const Tensor& x) const;

    Var loss_org(Graph& g, std::span<const Var> theta, const Tensor& x,
                 const std::vector<int64_t>& y) const;

    struct WfmBuild {
        Var l_wfm;                     // scalar, batch mean of per-sample sums
        std::vector<Var> pair_losses;  // [B] each, unweighted
        std::vector<Var> lambdas;      // [B] each
    };
    WfmBuild loss_wfm(Graph& g, std::span<const Var> theta, std::span<const Var> phi,
                      const SourceBatch& src, const Tensor& x) const;

    struct TotalBuild {
        Var l_total, l_org, l_wfm;
        std::vector<Var> pair_losses;
        std::vector<Var> lambdas;
    };
    TotalBuild loss_total(Graph& g, std::span<const Var> theta, std::span<const Var> phi,
                          const SourceBatch& src, const Tensor& x,
                          const std::vector<int64_t>& y) const;

    TransferBatchReport report_from(const TotalBuild& build) const;
};

// Input-gradient saliency of one pair's matching loss for a single image
// [C,H,W]: channelwise max of |d loss / d pixel|, scaled into [0,1]
// (an all-zero gradient map stays zero). uniform_w ignores the learned
// channel weights.
Tensor saliency_map(const TransferModel& model, const Tensor& image, const PairSpec& pair,
                    bool uniform_w);

// 8-bit binary graymap with values round(255 * m), m expected in [0,1].
void write_pgm(const std::string& path, const Tensor& map2d);

}  // namespace l2tww
