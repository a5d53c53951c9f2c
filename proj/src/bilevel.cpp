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

#include "l2tww/bilevel.hpp"

#include <algorithm>
#include <stdexcept>

#include "l2tww/errors.hpp"
#include "l2tww/kernels.hpp"

namespace l2tww {
namespace {

std::vector<Tensor> detach_all(const std::vector<Var>& vars) {
    std::vector<Tensor> out;
    out.reserve(vars.size());
    for (const Var& v : vars) out.push_back(v.val());
    return out;
}

// y[i] += a * x[i], elementwise over aligned tensor lists
void axpy_all(std::vector<Tensor>& y, double a, const std::vector<Tensor>& x) {
    if (y.size() != x.size()) throw std::runtime_error("bilevel: tensor list arity mismatch");
    for (size_t i = 0; i < y.size(); ++i)
        kernels().axpy(y[i].mut(), a, x[i].data(), static_cast<size_t>(y[i].numel()));
}

std::vector<Tensor> stepped(const std::vector<Tensor>& params, double alpha,
                            const std::vector<Tensor>& grads) {
    std::vector<Tensor> out = params;
    axpy_all(out, -alpha, grads);
    return out;
}

void check_finite(const std::vector<Tensor>& ts, const std::string& what) {
    for (const Tensor& t : ts)
        if (!t.all_finite()) throw NumericError("bilevel: non-finite parameters after " + what);
}

std::vector<Var> bind_all(Graph& g, const std::vector<Tensor>& ts, bool rg) {
    std::vector<Var> out;
    out.reserve(ts.size());
    for (const Tensor& t : ts) out.push_back(g.leaf(t, rg));
    return out;
}

// gradient of the inner objective at theta, values only
std::vector<Tensor> inner_grad(const BilevelProblem& prob, const std::vector<Tensor>& theta,
                               Scheme scheme, bool task_stage) {
    Graph g;
    std::vector<Var> th = bind_all(g, theta, true);
    Var loss;
    if (task_stage) {
        loss = prob.task_loss(g, th);
    } else if (scheme == Scheme::kThreeStage) {
        std::vector<Var> ph = bind_all(g, prob.phi, false);
        loss = prob.coupled_loss(g, th, ph);
    } else {
        std::vector<Var> ph = bind_all(g, prob.phi, false);
        loss = prob.total_loss(g, th, ph);
    }
    return detach_all(g.grad(loss, th));
}

}  // namespace

const char* to_string(Scheme s) {
    return s == Scheme::kThreeStage ? "three-stage" : "two-stage";
}

BilevelProblem transfer_problem(const TransferModel& model, const SourceBatch& src, const Tensor& x,
                                const std::vector<int64_t>& y) {
    BilevelProblem prob;
    prob.phi = model.meta.phi_values();
    prob.task_loss = [&model, x, y](Graph& g, std::span<const Var> theta) {
        return model.loss_org(g, theta, x, y);
    };
    prob.coupled_loss = [&model, src, x](Graph& g, std::span<const Var> theta,
                                         std::span<const Var> phi) {
        return model.loss_wfm(g, theta, phi, src, x).l_wfm;
    };
    prob.total_loss = [&model, src, x, y](Graph& g, std::span<const Var> theta,
                                          std::span<const Var> phi) {
        return model.loss_total(g, theta, phi, src, x, y).l_total;
    };
    return prob;
}

Trajectory inner_rollout(const BilevelProblem& prob, const std::vector<Tensor>& theta0, int t_steps,
                         double alpha, Scheme scheme) {
    if (t_steps < 1) throw std::runtime_error("rollout: inner step count must be >= 1");
    if (alpha <= 0.0) throw std::runtime_error("rollout: inner learning rate must be positive");
    Trajectory traj;
    traj.alpha = alpha;
    traj.wfm_steps = t_steps;
    traj.scheme = scheme;
    traj.snapshots.push_back(theta0);
    std::vector<Tensor> cur = theta0;
    for (int t = 0; t < t_steps; ++t) {
        const std::string what = (scheme == Scheme::kThreeStage ? "matching step " : "total step ") +
                                 std::to_string(t);
        try {
            cur = stepped(cur, alpha, inner_grad(prob, cur, scheme, false));
        } catch (const NumericError& e) {
            throw NumericError("rollout: " + what + ": " + e.what());
        }
        check_finite(cur, what);
        traj.snapshots.push_back(cur);
    }
    if (scheme == Scheme::kThreeStage) {
        try {
            cur = stepped(cur, alpha, inner_grad(prob, cur, scheme, true));
        } catch (const NumericError& e) {
            throw NumericError(std::string("rollout: task step: ") + e.what());
        }
        check_finite(cur, "task step");
        traj.snapshots.push_back(cur);
    }
    return traj;
}

std::vector<Tensor> hypergrad(const BilevelProblem& prob, const Trajectory& traj) {
    const int t_steps = traj.wfm_steps;
    const double alpha = traj.alpha;
    const size_t want = static_cast<size_t>(t_steps) + (traj.scheme == Scheme::kThreeStage ? 2 : 1);
    if (traj.snapshots.size() != want)
        throw std::runtime_error("hypergrad: trajectory holds " + std::to_string(traj.snapshots.size()) +
                                 " snapshots, expected " + std::to_string(want));

    // adjoint p = d task_loss(theta_last) / d theta
    std::vector<Tensor> p;
    {
        Graph g;
        std::vector<Var> th = bind_all(g, traj.snapshots.back(), true);
        Var l = prob.task_loss(g, th);
        p = detach_all(g.grad(l, th));
    }

    if (traj.scheme == Scheme::kThreeStage) {
        // across the task step: p <- p - alpha H_task(theta_T) p (phi-free)
        Graph g;
        std::vector<Var> th = bind_all(g, traj.snapshots[static_cast<size_t>(t_steps)], true);
        Var l = prob.task_loss(g, th);
        std::vector<Tensor> hv = hvp(l, th, p);
        axpy_all(p, -alpha, hv);
    }

    std::vector<Tensor> dphi;
    for (const Tensor& t : prob.phi) dphi.push_back(Tensor::zeros(t.shape()));

    for (int t = t_steps - 1; t >= 0; --t) {
        Graph g;
        std::vector<Var> th = bind_all(g, traj.snapshots[static_cast<size_t>(t)], true);
        std::vector<Var> ph = bind_all(g, prob.phi, true);
        Var loss = traj.scheme == Scheme::kThreeStage ? prob.coupled_loss(g, th, ph)
                                                      : prob.total_loss(g, th, ph);
        std::vector<Tensor> mv = mixed_hvp(loss, th, ph, p);
        axpy_all(dphi, -alpha, mv);
        std::vector<Tensor> hv = hvp(loss, th, p);
        axpy_all(p, -alpha, hv);
    }
    return dphi;
}

std::vector<Tensor> hypergrad_fd(const BilevelProblem& prob, const std::vector<Tensor>& theta0,
                                 int t_steps, double alpha, Scheme scheme, double eps) {
    auto objective = [&](const std::vector<Tensor>& phi) {
        BilevelProblem shifted = prob;
        shifted.phi = phi;
        Trajectory traj = inner_rollout(shifted, theta0, t_steps, alpha, scheme);
        Graph g;
        std::vector<Var> th = bind_all(g, traj.snapshots.back(), false);
        return shifted.task_loss(g, th).val().item();
    };
    std::vector<Tensor> out;
    for (size_t i = 0; i < prob.phi.size(); ++i) {
        Tensor gi(prob.phi[i].shape());
        double* dst = gi.mut();
        for (int64_t c = 0; c < prob.phi[i].numel(); ++c) {
            std::vector<Tensor> hi = prob.phi, lo = prob.phi;
            hi[i].mut()[c] += eps;
            lo[i].mut()[c] -= eps;
            dst[c] = (objective(hi) - objective(lo)) / (2.0 * eps);
        }
        out.push_back(std::move(gi));
    }
    return out;
}

TrainState init_train_state(TransferModel model, uint64_t seed, const SgdOptions& sgd,
                            const AdamOptions& adam) {
    model.validate();
    TrainState st;
    st.model = std::move(model);
    st.sgd = sgd;
    st.adam = adam;
    st.opt_theta = SgdState::like(st.model.theta());
    st.opt_phi = AdamState::like(st.model.meta.phi_values());
    st.data_rng = Rng::derive(seed, "data-order");
    st.augment_rng = Rng::derive(seed, "augment");
    return st;
}

StepStats meta_step(TrainState& state, const Batch& batch, const StepOptions& opt) {
    StepStats stats;
    TransferModel& model = state.model;
    const bool transfer = !model.config.pairs.empty();
    const SecondOrderCounters before = second_order_counters();

    SourceBatch src;
    if (transfer) src = model.source_features(batch.x);

    // stage 1: one optimizer step on theta for the full objective
    {
        Graph g;
        std::vector<Tensor> theta = model.theta();
        std::vector<Var> th = model.bind_theta(g, theta, true);
        std::vector<Tensor> grads;
        if (transfer) {
            std::vector<Var> ph = model.bind_phi(g, false);
            TransferModel::TotalBuild total = model.loss_total(g, th, ph, src, batch.x, batch.y);
            grads = detach_all(g.grad(total.l_total, th));
            stats.report = model.report_from(total);
        } else {
            Var l = model.loss_org(g, th, batch.x, batch.y);
            grads = detach_all(g.grad(l, th));
            stats.report.loss_org = l.val().item();
            stats.report.loss_total = stats.report.loss_org;
        }
        sgd_step(theta, grads, state.opt_theta, opt.lr, state.sgd);
        check_finite(theta, "optimizer step");
        model.set_theta(theta);
    }

    // stages 2-4: rollout from the updated theta, reverse sweep, Adam on phi
    if (transfer && !model.meta.phi_values().empty()) {
        const double alpha = opt.bilevel.inner_lr > 0.0 ? opt.bilevel.inner_lr : opt.lr;
        BilevelProblem prob = transfer_problem(model, src, batch.x, batch.y);
        Trajectory traj =
            inner_rollout(prob, model.theta(), opt.bilevel.inner_steps, alpha, opt.bilevel.scheme);
        std::vector<Tensor> dphi = hypergrad(prob, traj);
        adam_step(model.meta.phi_values(), dphi, state.opt_phi, state.adam);
        check_finite(model.meta.phi_values(), "meta step");
    }

    const SecondOrderCounters after = second_order_counters();
    stats.hvp_evals = after.hvp - before.hvp;
    stats.mixed_hvp_evals = after.mixed_hvp - before.mixed_hvp;
    state.step += 1;
    return stats;
}

double evaluate_accuracy(const FeatureExtractor& net, const Dataset& ds, int batch_size) {
    int64_t correct = 0;
    const int64_t n = ds.size();
    for (int64_t at = 0; at < n; at += batch_size) {
        std::vector<int64_t> idx;
        for (int64_t i = at; i < std::min(n, at + batch_size); ++i) idx.push_back(i);
        Batch b = gather_batch(ds, idx);
        Graph g;
        FeatureExtractor::Forward fw = net.forward_values(g, b.x);
        const Tensor& logits = fw.logits.val();
        const int k = logits.dim(1);
        for (size_t i = 0; i < idx.size(); ++i) {
            int best = 0;
            for (int j = 1; j < k; ++j)
                if (logits.data()[static_cast<int64_t>(i) * k + j] >
                    logits.data()[static_cast<int64_t>(i) * k + best])
                    best = j;
            if (best == b.y[i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<EpochMetrics> train_loop(TrainState& state, const Dataset& train, const Dataset& test,
                                     const TrainOptions& opt, const EpochHook& hook) {
    train.validate();
    test.validate();
    std::vector<EpochMetrics> metrics;
    const size_t n_pairs = state.model.config.pairs.size();
    for (; state.epoch < opt.epochs; ++state.epoch) {
        const double lr = cosine_lr(state.epoch, opt.epochs, opt.base_lr);
        StepOptions sopt;
        sopt.lr = lr;
        sopt.bilevel = opt.bilevel;

        EpochMetrics em;
        em.epoch = state.epoch;
        em.lr = lr;
        em.pair_stats.resize(n_pairs);
        for (size_t i = 0; i < n_pairs; ++i) em.pair_stats[i].pair = state.model.config.pairs[i];

        std::vector<std::vector<int64_t>> batches =
            epoch_batches(train.size(), opt.batch_size, state.data_rng);
        for (const std::vector<int64_t>& idx : batches) {
            Batch b = gather_batch(train, idx);
            if (opt.augment) b = augment_batch(b, state.augment_rng);
            StepStats ss = meta_step(state, b, sopt);
            em.train_loss_org += ss.report.loss_org;
            em.train_loss_wfm += ss.report.loss_wfm;
            for (size_t i = 0; i < ss.report.pairs.size(); ++i) {
                em.pair_stats[i].lambda_mean += ss.report.pairs[i].lambda_mean;
                em.pair_stats[i].lambda_std += ss.report.pairs[i].lambda_std;
                em.pair_stats[i].loss += ss.report.pairs[i].loss;
                em.pair_stats[i].weighted += ss.report.pairs[i].weighted;
            }
        }
        const double nb = static_cast<double>(batches.size());
        em.train_loss_org /= nb;
        em.train_loss_wfm /= nb;
        for (PairReport& pr : em.pair_stats) {
            pr.lambda_mean /= nb;
            pr.lambda_std /= nb;
            pr.loss /= nb;
            pr.weighted /= nb;
        }
        em.test_acc = evaluate_accuracy(state.model.target, test);
        metrics.push_back(em);
        if (hook) hook(state, em);
    }
    return metrics;
}

CheckpointData state_to_checkpoint(const TrainState& state, bool float64) {
    CheckpointData data;
    data.float64 = float64;
    const TransferModel& m = state.model;
    const std::vector<std::string> tn = m.theta_names();
    const std::vector<Tensor> tv = m.theta();
    for (size_t i = 0; i < tn.size(); ++i) data.params.emplace_back(tn[i], tv[i]);
    for (size_t i = 0; i < m.meta.phi_names().size(); ++i)
        data.params.emplace_back("meta." + m.meta.phi_names()[i], m.meta.phi_values()[i]);

    for (size_t i = 0; i < tn.size(); ++i)
        data.opt_state.emplace_back("sgd.vel." + tn[i], state.opt_theta.velocity[i]);
    for (size_t i = 0; i < m.meta.phi_names().size(); ++i) {
        data.opt_state.emplace_back("adam.m.meta." + m.meta.phi_names()[i], state.opt_phi.m[i]);
        data.opt_state.emplace_back("adam.v.meta." + m.meta.phi_names()[i], state.opt_phi.v[i]);
    }
    data.opt_state.emplace_back("adam.step", Tensor::scalar(static_cast<double>(state.opt_phi.step)));

    data.rng_states.emplace_back("data-order", state.data_rng.serialize());
    data.rng_states.emplace_back("augment", state.augment_rng.serialize());
    data.epoch = state.epoch;
    data.step = state.step;
    return data;
}

namespace {

Tensor require_named(const CheckpointData& data, const std::string& name, const Tensor& like,
                     bool param) {
    const Tensor* t = param ? data.find_param(name) : data.find_opt(name);
    if (!t) throw std::runtime_error("checkpoint: missing entry '" + name + "'");
    if (!(t->shape() == like.shape()))
        throw std::runtime_error("checkpoint: entry '" + name + "' has shape " + t->shape_str() +
                                 ", expected " + like.shape_str());
    return *t;
}

}  // namespace

void state_from_checkpoint(TrainState& state, const CheckpointData& data) {
    TransferModel& m = state.model;
    const std::vector<std::string> tn = m.theta_names();
    std::vector<Tensor> tv = m.theta();
    for (size_t i = 0; i < tn.size(); ++i) tv[i] = require_named(data, tn[i], tv[i], true);
    m.set_theta(tv);
    for (size_t i = 0; i < m.meta.phi_names().size(); ++i)
        m.meta.phi_values()[i] =
            require_named(data, "meta." + m.meta.phi_names()[i], m.meta.phi_values()[i], true);

    for (size_t i = 0; i < tn.size(); ++i)
        state.opt_theta.velocity[i] =
            require_named(data, "sgd.vel." + tn[i], state.opt_theta.velocity[i], false);
    for (size_t i = 0; i < m.meta.phi_names().size(); ++i) {
        state.opt_phi.m[i] =
            require_named(data, "adam.m.meta." + m.meta.phi_names()[i], state.opt_phi.m[i], false);
        state.opt_phi.v[i] =
            require_named(data, "adam.v.meta." + m.meta.phi_names()[i], state.opt_phi.v[i], false);
    }
    state.opt_phi.step =
        static_cast<int64_t>(require_named(data, "adam.step", Tensor::scalar(0), false).item());

    const std::string* drng = data.find_rng("data-order");
    const std::string* arng = data.find_rng("augment");
    if (!drng || !arng) throw std::runtime_error("checkpoint: missing RNG state");
    state.data_rng.deserialize(*drng);
    state.augment_rng.deserialize(*arng);
    state.epoch = data.epoch;
    state.step = data.step;
}

}  // namespace l2tww
