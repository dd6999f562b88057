#pragma once

// Training objective: recommendation loss over the softmax output, a
// two-view contrastive regularizer over batch representations, their weighted
// sum, and the Adam optimizer step.

#include <cmath>
#include <random>
#include <unordered_map>
#include <vector>

#include "slime/errors.hpp"
#include "slime/model.hpp"
#include "slime/tensor.hpp"

namespace slime {

// Binary-sum cross entropy over the full probability vector with a one-hot
// target: -[log p_t + sum_{i != t} log(1 - p_i)], probabilities clamped to
// [1e-8, 1-1e-8] before the logs. plain_ce switches to -log p_t alone.
inline TensorPtr rec_loss(const TensorPtr& y_hat, std::size_t target, bool plain_ce = false) {
    if (y_hat->shape.size() != 1) throw DimensionError("rec_loss expects a probability vector");
    const std::size_t v = y_hat->size();
    if (target == 0) throw DataError("rec_loss target must not be the padding item");
    if (target >= v) throw DataError("rec_loss target " + std::to_string(target) +
                                     " outside vocabulary of " + std::to_string(v));
    auto clamped = clamp(y_hat, 1e-8, 1.0 - 1e-8);
    std::vector<double> hot(v, 0.0), cold(v, 1.0);
    hot[target] = 1.0;
    cold[target] = 0.0;
    auto pos = mul(clamped, make_tensor({v}, std::move(hot)));
    if (plain_ce) return scale(log_op(sum(pos)), -1.0);
    auto neg = mul(log_op(rsub_scalar(1.0, clamped)), make_tensor({v}, std::move(cold)));
    return scale(add(log_op(sum(pos)), sum(neg)), -1.0);
}

// ---------------------------------------------------------------------------
// Contrastive views: for each batch element, a second stochastic forward of
// the same sequence (unsupervised) and a forward of a different sequence that
// shares the target item (supervised; fallback to a third stochastic forward
// when no such sequence exists).

struct ContrastiveBatchViews {
    std::vector<TensorPtr> h_prime;    // B last-position vectors, view 1
    std::vector<TensorPtr> h_s_prime;  // B last-position vectors, view 2
    std::vector<long> positive_source;  // dataset index sampled per element, -1 for fallback
};

inline ContrastiveBatchViews build_views(
    const std::vector<std::vector<int>>& batch_inputs, const std::vector<int>& batch_targets,
    const std::vector<long>& batch_indices, const std::vector<std::vector<int>>& all_inputs,
    const std::unordered_map<int, std::vector<long>>& target_index, const ModelParams& params,
    const ModelConfig& cfg, const RampSchedule& schedule, std::mt19937_64& rng) {
    const std::size_t b = batch_inputs.size();
    if (batch_targets.size() != b || batch_indices.size() != b)
        throw DimensionError("build_views batch fields disagree in length");
    ContrastiveBatchViews views;
    for (std::size_t i = 0; i < b; ++i) {
        auto h1 = encoder_forward(batch_inputs[i], params, cfg, schedule, rng, true);
        views.h_prime.push_back(row(h1, cfg.max_len - 1));

        long source = -1;
        auto it = target_index.find(batch_targets[i]);
        if (it != target_index.end()) {
            std::vector<long> candidates;
            for (long idx : it->second)
                if (idx != batch_indices[i]) candidates.push_back(idx);
            if (!candidates.empty()) {
                std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
                source = candidates[pick(rng)];
            }
        }
        views.positive_source.push_back(source);
        const auto& seq = (source >= 0) ? all_inputs[static_cast<std::size_t>(source)]
                                        : batch_inputs[i];
        auto h2 = encoder_forward(seq, params, cfg, schedule, rng, true);
        views.h_s_prime.push_back(row(h2, cfg.max_len - 1));
    }
    return views;
}

// InfoNCE with a dot-product similarity scaled by 1/tau. For each anchor the
// denominator runs over the 2B-2 other view vectors in the batch, excluding
// the anchor and its positive; both directions are summed and the result is
// averaged over anchors.
inline TensorPtr cl_reg_loss(const ContrastiveBatchViews& views, double tau) {
    const std::size_t b = views.h_prime.size();
    if (views.h_s_prime.size() != b) throw DimensionError("view lists disagree in length");
    if (b < 2) throw ConfigError("contrastive loss needs a batch of at least 2");
    if (tau <= 0.0) throw ConfigError("temperature must be positive");

    // pool layout: [0, B) = h', [B, 2B) = h_s'
    std::vector<TensorPtr> pool(views.h_prime);
    pool.insert(pool.end(), views.h_s_prime.begin(), views.h_s_prime.end());
    const std::size_t p = pool.size();

    // cache exp(sim(a, b)) for every unordered pair
    std::vector<TensorPtr> esim(p * p);
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t c = a + 1; c < p; ++c)
            esim[a * p + c] = esim[c * p + a] =
                exp_op(scale(dot(pool[a], pool[c]), 1.0 / tau));

    auto direction = [&](std::size_t anchor, std::size_t positive) {
        std::vector<TensorPtr> negs;
        for (std::size_t c = 0; c < p; ++c)
            if (c != anchor && c != positive) negs.push_back(esim[anchor * p + c]);
        return sub(log_op(add_many(negs)), log_op(esim[anchor * p + positive]));
    };

    std::vector<TensorPtr> terms;
    for (std::size_t i = 0; i < b; ++i) {
        terms.push_back(direction(i, b + i));  // h' anchored against h_s'
        terms.push_back(direction(b + i, i));  // h_s' anchored against h'
    }
    return scale(add_many(terms), 1.0 / static_cast<double>(b));
}

// rec + lambda * clreg; lambda = 0 leaves the contrastive graph detached.
inline TensorPtr total_loss(const TensorPtr& rec, const TensorPtr& clreg, double lambda) {
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (lambda == 0.0) return rec;
    return add(rec, scale(clreg, lambda));
}

// ---------------------------------------------------------------------------
// Adam with bias correction. Moment buffers mirror parameter shapes; the step
// counter is shared. Gradients are cleared after the update.

struct AdamState {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<std::vector<double>> m, v;

    void ensure(const std::vector<TensorPtr>& params) {
        if (!m.empty()) {
            if (m.size() != params.size())
                throw ContractError("optimizer state sized for a different parameter list");
            return;
        }
        for (const auto& par : params) {
            m.emplace_back(par->size(), 0.0);
            v.emplace_back(par->size(), 0.0);
        }
    }
};

inline void adam_step(const std::vector<TensorPtr>& params, AdamState& state) {
    state.ensure(params);
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& par = *params[pi];
        if (!par.requires_grad) continue;
        if (par.grad.size() != par.data.size())
            throw ContractError("adam_step: parameter " + std::to_string(pi) +
                                " has no gradient buffer");
        if (state.m[pi].size() != par.size())
            throw ContractError("optimizer moment shape mismatch");
        for (std::size_t i = 0; i < par.size(); ++i) {
            double g = par.grad[i];
            state.m[pi][i] = state.beta1 * state.m[pi][i] + (1.0 - state.beta1) * g;
            state.v[pi][i] = state.beta2 * state.v[pi][i] + (1.0 - state.beta2) * g * g;
            double mhat = state.m[pi][i] / bc1;
            double vhat = state.v[pi][i] / bc2;
            par.data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
        std::fill(par.grad.begin(), par.grad.end(), 0.0);
    }
}

}  // namespace slime
