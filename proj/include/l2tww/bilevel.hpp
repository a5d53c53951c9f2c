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

#include <functional>

#include "l2tww/checkpoint.hpp"
#include "l2tww/data.hpp"
#include "l2tww/transfer.hpp"

namespace l2tww {

enum class Scheme { kThreeStage, kTwoStage };
const char* to_string(Scheme s);

struct BilevelConfig {
    int inner_steps = 2;     // T
    double inner_lr = -1.0;  // <= 0: reuse the scheduled outer learning rate
    Scheme scheme = Scheme::kThreeStage;
};

// A bilevel instance: the inner descent variable theta, the outer variable
// phi, a task loss in theta alone, and a coupled loss in (theta, phi). The
// transfer model is one such instance; toy problems in the oracle suites
// are others, and both drive the same rollout and reverse sweep.
struct BilevelProblem {
    std::function<Var(Graph&, std::span<const Var> theta)> task_loss;
    std::function<Var(Graph&, std::span<const Var> theta, std::span<const Var> phi)> coupled_loss;
    // inner objective of the two-stage scheme (task + beta * coupled)
    std::function<Var(Graph&, std::span<const Var> theta, std::span<const Var> phi)> total_loss;
    std::vector<Tensor> phi;
};

// The transfer problem for one batch: task loss is cross entropy, coupled
// loss is the weighted matching loss. Captures src/x/y by value.
BilevelProblem transfer_problem(const TransferModel& model, const SourceBatch& src, const Tensor& x,
                                const std::vector<int64_t>& y);

// Unrolled inner descent, reproducible from snapshot 0. Three-stage rollouts
// hold T coupled-loss steps plus one task step (T+2 snapshots); two-stage
// rollouts hold T steps on the total objective (T+1 snapshots).
struct Trajectory {
    std::vector<std::vector<Tensor>> snapshots;  // theta_0 .. theta_last
    double alpha = 0.0;
    int wfm_steps = 0;  // T
    Scheme scheme = Scheme::kThreeStage;
};

// Vanilla gradient descent, no momentum or decay. Works on copies; live
// parameters are untouched.
Trajectory inner_rollout(const BilevelProblem& prob, const std::vector<Tensor>& theta0, int t_steps,
                         double alpha, Scheme scheme = Scheme::kThreeStage);

// Reverse sweep over the trajectory: the gradient of the task loss at the
// final snapshot with respect to phi, accumulated through Hessian-vector
// and mixed-partial products. Costs exactly T+1 hvp and T mixed_hvp
// evaluations for a three-stage trajectory (T of each for two-stage).
std::vector<Tensor> hypergrad(const BilevelProblem& prob, const Trajectory& traj);

// Central finite differences of phi -> task_loss(theta_last(phi)) through
// full rollouts; the independent oracle for hypergrad.
std::vector<Tensor> hypergrad_fd(const BilevelProblem& prob, const std::vector<Tensor>& theta0,
                                 int t_steps, double alpha, Scheme scheme, double eps = 1e-5);

struct TrainState {
    TransferModel model;
    SgdState opt_theta;
    SgdOptions sgd;
    AdamState opt_phi;
    AdamOptions adam;
    int64_t epoch = 0;
    int64_t step = 0;
    Rng data_rng;
    Rng augment_rng;
};

TrainState init_train_state(TransferModel model, uint64_t seed, const SgdOptions& sgd,
                            const AdamOptions& adam);

struct StepOptions {
    double lr = 0.1;  // scheduled outer learning rate for this step
    BilevelConfig bilevel;
};

struct StepStats {
    TransferBatchReport report;
    int64_t hvp_evals = 0;
    int64_t mixed_hvp_evals = 0;
};

// One alternating update: (1) one SGD step on theta for the total loss,
// (2) inner rollout from the updated theta on the same batch, (3) reverse
// hypergradient, (4) one Adam step on phi. Rollout snapshots are discarded.
// Without candidate pairs this is plain supervised training; without meta
// parameters stages 2-4 are skipped.
StepStats meta_step(TrainState& state, const Batch& batch, const StepOptions& opt);

struct EpochMetrics {
    int64_t epoch = 0;
    double lr = 0.0;
    double train_loss_org = 0.0;
    double train_loss_wfm = 0.0;
    double test_acc = 0.0;
    std::vector<PairReport> pair_stats;  // batch-averaged
};

struct TrainOptions {
    int64_t epochs = 30;
    int batch_size = 128;
    double base_lr = 0.1;
    BilevelConfig bilevel;
    bool augment = false;
};

using EpochHook = std::function<void(const TrainState&, const EpochMetrics&)>;

// Epoch loop: cosine schedule on the outer lr, seeded shuffling, one
// meta_step per batch, per-epoch test evaluation. The hook runs after
// every epoch (checkpointing, CSV).
std::vector<EpochMetrics> train_loop(TrainState& state, const Dataset& train, const Dataset& test,
                                     const TrainOptions& opt, const EpochHook& hook = {});

double evaluate_accuracy(const FeatureExtractor& net, const Dataset& ds, int batch_size = 256);

// Checkpoint round trip for a full training state. Loading requires a
// state whose model structure already matches; values are filled by name
// and anything missing or shaped differently is an error.
CheckpointData state_to_checkpoint(const TrainState& state, bool float64);
void state_from_checkpoint(TrainState& state, const CheckpointData& data);

}  // namespace l2tww
