#pragma once

// Seeded training loop: shuffled mini-batches, joint objective, Adam updates,
// periodic validation with best-checkpoint retention, early stopping, and a
// JSON-lines step log.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "slime/data.hpp"
#include "slime/errors.hpp"
#include "slime/eval.hpp"
#include "slime/model.hpp"
#include "slime/objectives.hpp"

namespace slime {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 256;
    std::size_t eval_every = 1;  // epochs between validation passes
    std::size_t patience = 10;   // early stop on validation NDCG@10
    double lr = 0.001;
    std::string log_path;  // JSONL step log; empty disables
    bool freeze_filters = false;  // ablation: filter planes keep their init values
    // next-item training examples drawn per user from the train prefix: the
    // last `targets_per_user` positions each become one (input, target) pair
    std::size_t targets_per_user = 1;
};

struct TrainResult {
    ModelParams best_params;       // parameters at the best validation NDCG
    double best_valid_ndcg = -1.0;
    std::size_t best_epoch = 0;
    std::size_t steps = 0;
    double first_epoch_loss = 0.0;
    double last_epoch_loss = 0.0;
    bool early_stopped = false;
};

namespace train_detail {

inline ModelParams clone_params(const ModelParams& src) {
    ModelParams copy = src;
    copy.item_embeddings = make_tensor(src.item_embeddings->shape,
                                       std::vector<double>(src.item_embeddings->data), true);
    copy.positional =
        make_tensor(src.positional->shape, std::vector<double>(src.positional->data), true);
    auto dup = [](const TensorPtr& t) {
        return make_tensor(t->shape, std::vector<double>(t->data), true);
    };
    copy.embed_ln_gain = dup(src.embed_ln_gain);
    copy.embed_ln_bias = dup(src.embed_ln_bias);
    for (std::size_t l = 0; l < src.layers.size(); ++l) {
        auto& cl = copy.layers[l];
        const auto& sl = src.layers[l];
        cl.filters.w_dynamic = ComplexTensor(dup(sl.filters.w_dynamic.real),
                                             dup(sl.filters.w_dynamic.imag));
        cl.filters.w_static =
            ComplexTensor(dup(sl.filters.w_static.real), dup(sl.filters.w_static.imag));
        cl.mixer_ln_gain = dup(sl.mixer_ln_gain);
        cl.mixer_ln_bias = dup(sl.mixer_ln_bias);
        cl.ffn_w1 = dup(sl.ffn_w1);
        cl.ffn_b1 = dup(sl.ffn_b1);
        cl.ffn_w2 = dup(sl.ffn_w2);
        cl.ffn_b2 = dup(sl.ffn_b2);
        cl.block_ln_gain = dup(sl.block_ln_gain);
        cl.block_ln_bias = dup(sl.block_ln_bias);
    }
    return copy;
}

inline std::uint64_t batch_hash(const std::vector<std::size_t>& ids) {
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t v : ids) {
        h ^= v;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace train_detail

inline TrainResult train_model(ModelParams& params, const ModelConfig& cfg,
                               const RampSchedule& schedule, const Splits& splits,
                               const TrainConfig& tc) {
    if (splits.train.empty()) throw DataError("training split is empty");
    if (tc.batch_size < 1) throw ConfigError("batch size must be >= 1");

    std::ofstream log;
    if (!tc.log_path.empty()) {
        log.open(tc.log_path);
        if (!log) throw IoError("cannot open training log: " + tc.log_path);
    }

    if (tc.targets_per_user < 1) throw ConfigError("targets_per_user must be >= 1");
    // expand each user's train prefix into up to targets_per_user next-item
    // examples (most recent positions first), then pre-pad the inputs once
    std::vector<SplitExample> examples;
    for (std::size_t u = 0; u < splits.train_prefix.size(); ++u) {
        const auto& prefix = splits.train_prefix[u];
        const std::size_t last = prefix.size();  // target position is 1-based
        const std::size_t first =
            (last > tc.targets_per_user) ? last - tc.targets_per_user + 1 : 1;
        for (std::size_t j = last; j >= first && j >= 1; --j) {
            SplitExample ex;
            ex.user = splits.train[u].user;
            ex.input.assign(prefix.begin(), prefix.begin() + static_cast<long>(j) - 1);
            ex.target = prefix[j - 1];
            examples.push_back(std::move(ex));
            if (j == 1) break;
        }
    }
    std::vector<std::vector<int>> padded_inputs;
    std::vector<int> targets;
    for (const auto& ex : examples) {
        padded_inputs.push_back(pad_truncate(ex.input, cfg.max_len));
        targets.push_back(ex.target);
    }
    auto target_index = build_target_index(examples);

    std::vector<TensorPtr> leaves;
    std::vector<bool> is_filter_plane;
    for (const auto& [name, t] : params.named()) {
        leaves.push_back(t);
        is_filter_plane.push_back(name.find("w_dynamic") != std::string::npos ||
                                  name.find("w_static") != std::string::npos);
    }

    std::mt19937_64 rng(cfg.seed);
    AdamState adam;
    adam.lr = tc.lr;

    TrainResult result;
    result.best_params = train_detail::clone_params(params);
    std::size_t epochs_since_best = 0;

    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        std::vector<std::size_t> order(examples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);

        double epoch_loss = 0.0;
        std::size_t epoch_batches = 0;
        for (std::size_t off = 0; off < order.size(); off += tc.batch_size) {
            std::vector<std::size_t> batch(
                order.begin() + off,
                order.begin() + std::min(off + tc.batch_size, order.size()));

            Tape tape;
            double rec_value = 0.0, clreg_value = 0.0, total_value = 0.0;
            {
                TapeScope scope(tape);
                std::vector<TensorPtr> rec_terms;
                std::vector<std::vector<int>> batch_inputs;
                std::vector<int> batch_targets;
                std::vector<long> batch_indices;
                for (std::size_t idx : batch) {
                    auto h = encoder_forward(padded_inputs[idx], params, cfg, schedule, rng, true);
                    rec_terms.push_back(
                        rec_loss(predict_scores(h, params), targets[idx], cfg.plain_ce));
                    batch_inputs.push_back(padded_inputs[idx]);
                    batch_targets.push_back(targets[idx]);
                    batch_indices.push_back(static_cast<long>(idx));
                }
                auto rec = scale(add_many(rec_terms), 1.0 / static_cast<double>(batch.size()));
                rec_value = rec->data[0];
                TensorPtr loss = rec;
                if (cfg.lambda > 0.0 && batch.size() >= 2) {
                    auto views = build_views(batch_inputs, batch_targets, batch_indices,
                                             padded_inputs, target_index, params, cfg, schedule,
                                             rng);
                    auto clreg = cl_reg_loss(views, cfg.temperature);
                    clreg_value = clreg->data[0];
                    loss = total_loss(rec, clreg, cfg.lambda);
                }
                total_value = loss->data[0];
                if (!std::isfinite(total_value)) {
                    std::ostringstream msg;
                    msg << "non-finite loss at step " << result.steps << " (lr " << adam.lr
                        << ", batch hash " << std::hex << train_detail::batch_hash(batch) << ")";
                    throw ContractError(msg.str());
                }
                tape.backward(loss);
            }

            // the padding embedding never trains
            std::fill_n(params.item_embeddings->grad.begin(), cfg.hidden, 0.0);
            if (tc.freeze_filters)
                for (std::size_t li = 0; li < leaves.size(); ++li)
                    if (is_filter_plane[li] && !leaves[li]->grad.empty())
                        std::fill(leaves[li]->grad.begin(), leaves[li]->grad.end(), 0.0);
            for (auto& leaf : leaves) leaf->ensure_grad();
            adam_step(leaves, adam);

            ++result.steps;
            epoch_loss += total_value;
            ++epoch_batches;
            if (log)
                log << "{\"step\": " << result.steps << ", \"rec_loss\": " << rec_value
                    << ", \"clreg_loss\": " << clreg_value << ", \"total\": " << total_value
                    << ", \"lr\": " << adam.lr << ", \"seed\": " << cfg.seed << "}\n";
        }
        epoch_loss /= static_cast<double>(epoch_batches);
        if (epoch == 0) result.first_epoch_loss = epoch_loss;
        result.last_epoch_loss = epoch_loss;

        if ((epoch + 1) % tc.eval_every == 0 && !splits.valid.empty()) {
            auto report = evaluate(params, cfg, schedule, splits.valid, {10});
            double ndcg = report.ndcg[0];
            if (ndcg > result.best_valid_ndcg) {
                result.best_valid_ndcg = ndcg;
                result.best_epoch = epoch;
                result.best_params = train_detail::clone_params(params);
                epochs_since_best = 0;
            } else if (++epochs_since_best >= tc.patience) {
                result.early_stopped = true;
                break;
            }
        }
    }
    if (result.best_valid_ndcg < 0.0) result.best_params = train_detail::clone_params(params);
    return result;
}

}  // namespace slime
