#pragma once

// Full-vocabulary ranking evaluation: pessimistic-tie rank, HR@K / NDCG@K,
// and the split-level report with JSON / CSV emission.

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "slime/data.hpp"
#include "slime/errors.hpp"
#include "slime/model.hpp"

namespace slime {

// 1 + number of candidates scoring >= the target (ties count against the
// target). Padding item 0 is always excluded from the candidate set.
inline std::size_t rank_target(const std::vector<double>& scores, std::size_t target,
                               const std::unordered_set<std::size_t>& exclusions = {}) {
    if (target == 0 || target >= scores.size())
        throw ContractError("rank_target: invalid target " + std::to_string(target));
    if (exclusions.count(target))
        throw ContractError("rank_target: target is excluded from candidates");
    std::size_t rank = 1;
    const double target_score = scores[target];
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (i == target || exclusions.count(i)) continue;
        if (scores[i] >= target_score) ++rank;
    }
    return rank;
}

inline double hr_at_k(std::size_t rank, int k) {
    if (k <= 0) throw ConfigError("metric cutoff K must be positive");
    if (rank < 1) throw ContractError("rank must be >= 1");
    return rank <= static_cast<std::size_t>(k) ? 1.0 : 0.0;
}

inline double ndcg_at_k(std::size_t rank, int k) {
    if (k <= 0) throw ConfigError("metric cutoff K must be positive");
    if (rank < 1) throw ContractError("rank must be >= 1");
    if (rank > static_cast<std::size_t>(k)) return 0.0;
    return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

struct RankingReport {
    std::vector<int> cutoffs;  // default {5, 10}
    std::vector<double> hr;    // aligned with cutoffs
    std::vector<double> ndcg;
    std::size_t user_count = 0;
    std::string fingerprint;

    std::string to_json() const {
        std::ostringstream out;
        out << "{\"users\": " << user_count << ", \"fingerprint\": \"" << fingerprint << "\"";
        for (std::size_t i = 0; i < cutoffs.size(); ++i)
            out << ", \"hr@" << cutoffs[i] << "\": " << hr[i] << ", \"ndcg@" << cutoffs[i]
                << "\": " << ndcg[i];
        out << "}";
        return out.str();
    }

    static std::string csv_header(const std::vector<int>& cutoffs) {
        std::ostringstream out;
        out << "users,fingerprint";
        for (int k : cutoffs) out << ",hr@" << k << ",ndcg@" << k;
        return out.str();
    }

    std::string to_csv_row() const {
        std::ostringstream out;
        out << user_count << "," << fingerprint;
        for (std::size_t i = 0; i < cutoffs.size(); ++i) out << "," << hr[i] << "," << ndcg[i];
        return out.str();
    }
};

// Scores every example of a split with the deterministic forward pass
// (dropout off) and aggregates mean HR / NDCG. Noise, when enabled, perturbs
// each layer input as in the robustness protocol.
inline RankingReport evaluate(const ModelParams& params, const ModelConfig& cfg,
                              const RampSchedule& schedule,
                              const std::vector<SplitExample>& split,
                              const std::vector<int>& cutoffs = {5, 10},
                              const std::string& fingerprint = "", double noise_epsilon = 0.0,
                              std::uint64_t noise_seed = 0) {
    if (split.empty()) throw DataError("evaluate called on an empty split");
    for (int k : cutoffs)
        if (k <= 0) throw ConfigError("metric cutoff K must be positive");

    RankingReport report;
    report.cutoffs = cutoffs;
    report.hr.assign(cutoffs.size(), 0.0);
    report.ndcg.assign(cutoffs.size(), 0.0);
    report.fingerprint = fingerprint;

    std::mt19937_64 unused(0);  // dropout rng; inert because training = false
    std::mt19937_64 noise_rng(noise_seed);
    for (const auto& ex : split) {
        auto padded = pad_truncate(ex.input, cfg.max_len);
        LayerNoise noise{noise_epsilon, noise_epsilon > 0.0 ? &noise_rng : nullptr};
        auto h = encoder_forward(padded, params, cfg, schedule, unused, false, noise);
        auto probs = predict_scores(h, params);
        auto rank = rank_target(probs->data, static_cast<std::size_t>(ex.target));
        for (std::size_t i = 0; i < cutoffs.size(); ++i) {
            report.hr[i] += hr_at_k(rank, cutoffs[i]);
            report.ndcg[i] += ndcg_at_k(rank, cutoffs[i]);
        }
    }
    for (std::size_t i = 0; i < cutoffs.size(); ++i) {
        report.hr[i] /= static_cast<double>(split.size());
        report.ndcg[i] /= static_cast<double>(split.size());
    }
    report.user_count = split.size();
    return report;
}

}  // namespace slime
