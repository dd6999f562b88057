#pragma once

// Full network: embedding layer, L stacked filter-mixer + FFN blocks with the
// dense residual, and the tied-weight prediction head. Plus the binary
// parameter checkpoint format.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "slime/errors.hpp"
#include "slime/filter_mixer.hpp"
#include "slime/tensor.hpp"

namespace slime {

struct ModelConfig {
    std::size_t max_len = 16;     // N, even
    std::size_t hidden = 64;      // d
    std::size_t layers = 2;       // L
    double alpha = 0.5;           // dynamic filter size ratio
    double gamma = 0.5;           // static/dynamic mixing coefficient
    double lambda = 0.1;          // contrastive regularization strength
    double dropout_embed = 0.1;
    double dropout_block = 0.1;
    int slide_mode = 4;
    std::size_t vocab_size = 0;   // includes padding item 0
    double temperature = 1.0;     // contrastive similarity temperature
    std::uint64_t seed = 42;
    bool plain_ce = false;        // -log(p_target) instead of the binary-sum form

    std::size_t num_bins() const { return half_spectrum_bins(max_len); }

    void validate() const {
        if (max_len < 2 || max_len % 2 != 0)
            throw ConfigError("max_len must be even and >= 2, got " + std::to_string(max_len));
        if (hidden < 1) throw ConfigError("hidden size must be >= 1");
        if (layers < 1) throw ConfigError("layer count must be >= 1");
        if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in (0, 1]");
        if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must lie in [0, 1]");
        if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
        if (vocab_size < 2) throw ConfigError("vocab must contain padding plus at least one item");
        if (temperature <= 0.0) throw ConfigError("temperature must be positive");
        if (num_bins() < layers)
            throw ConfigError("sequence too short: " + std::to_string(num_bins()) +
                              " frequency bins for " + std::to_string(layers) + " layers");
    }
};

struct LayerWeights {
    FilterParams filters;
    TensorPtr mixer_ln_gain, mixer_ln_bias;
    TensorPtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    TensorPtr block_ln_gain, block_ln_bias;
};

struct ModelParams {
    TensorPtr item_embeddings;  // [V x d]; row 0 is the padding item, kept at zero
    TensorPtr positional;       // [N x d]
    TensorPtr embed_ln_gain, embed_ln_bias;
    std::vector<LayerWeights> layers;

    static ModelParams init(const ModelConfig& cfg, std::mt19937_64& rng) {
        cfg.validate();
        const std::size_t d = cfg.hidden, n = cfg.max_len, m = cfg.num_bins();
        ModelParams p;
        p.item_embeddings = randn({cfg.vocab_size, d}, rng, 0.02, true);
        std::fill_n(p.item_embeddings->data.begin(), d, 0.0);  // padding row
        p.positional = randn({n, d}, rng, 0.02, true);
        p.embed_ln_gain = ones({d}, true);
        p.embed_ln_bias = zeros({d}, true);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            LayerWeights lw;
            lw.filters = init_filter_params(m, d, rng);
            lw.mixer_ln_gain = ones({d}, true);
            lw.mixer_ln_bias = zeros({d}, true);
            lw.ffn_w1 = randn({d, d}, rng, 0.02, true);
            lw.ffn_b1 = zeros({d}, true);
            lw.ffn_w2 = randn({d, d}, rng, 0.02, true);
            lw.ffn_b2 = zeros({d}, true);
            lw.block_ln_gain = ones({d}, true);
            lw.block_ln_bias = zeros({d}, true);
            p.layers.push_back(std::move(lw));
        }
        return p;
    }

    std::vector<std::pair<std::string, TensorPtr>> named() const {
        std::vector<std::pair<std::string, TensorPtr>> out;
        out.emplace_back("item_embeddings", item_embeddings);
        out.emplace_back("positional", positional);
        out.emplace_back("embed_ln_gain", embed_ln_gain);
        out.emplace_back("embed_ln_bias", embed_ln_bias);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            std::string pre = "layer" + std::to_string(l) + ".";
            out.emplace_back(pre + "w_dynamic_re", layers[l].filters.w_dynamic.real);
            out.emplace_back(pre + "w_dynamic_im", layers[l].filters.w_dynamic.imag);
            out.emplace_back(pre + "w_static_re", layers[l].filters.w_static.real);
            out.emplace_back(pre + "w_static_im", layers[l].filters.w_static.imag);
            out.emplace_back(pre + "mixer_ln_gain", layers[l].mixer_ln_gain);
            out.emplace_back(pre + "mixer_ln_bias", layers[l].mixer_ln_bias);
            out.emplace_back(pre + "ffn_w1", layers[l].ffn_w1);
            out.emplace_back(pre + "ffn_b1", layers[l].ffn_b1);
            out.emplace_back(pre + "ffn_w2", layers[l].ffn_w2);
            out.emplace_back(pre + "ffn_b2", layers[l].ffn_b2);
            out.emplace_back(pre + "block_ln_gain", layers[l].block_ln_gain);
            out.emplace_back(pre + "block_ln_bias", layers[l].block_ln_bias);
        }
        return out;
    }
};

// Optional evaluation-time perturbation: Uniform(-epsilon, +epsilon) added to
// each layer's input representation.
struct LayerNoise {
    double epsilon = 0.0;
    std::mt19937_64* rng = nullptr;
};

inline TensorPtr add_uniform_noise(const TensorPtr& x, double epsilon, std::mt19937_64& rng) {
    if (epsilon < 0.0) throw ConfigError("noise epsilon must be >= 0");
    if (epsilon == 0.0) return x;
    std::uniform_real_distribution<double> unif(-epsilon, epsilon);
    std::vector<double> noise(x->size());
    for (auto& v : noise) v = unif(rng);
    return add(x, make_tensor(x->shape, std::move(noise)));
}

// Lookup + positional + LayerNorm + dropout over a padded index row.
inline TensorPtr embed_sequence(const std::vector<int>& items, const ModelParams& params,
                                const ModelConfig& cfg, std::mt19937_64& rng, bool training) {
    if (items.size() != cfg.max_len)
        throw DimensionError("expected a padded row of length " + std::to_string(cfg.max_len));
    auto e = gather_rows(params.item_embeddings, items);
    auto normed = layer_norm(add(e, params.positional), params.embed_ln_gain, params.embed_ln_bias);
    return dropout(normed, cfg.dropout_embed, rng, training);
}

// L blocks of filter mixer + FFN with the dense residual
// H^{l+1} = LayerNorm(H^l + Hhat^l + Dropout(FFN(Hhat^l))).
inline TensorPtr encoder_forward(const std::vector<int>& items, const ModelParams& params,
                                 const ModelConfig& cfg, const RampSchedule& schedule,
                                 std::mt19937_64& rng, bool training,
                                 const LayerNoise& noise = {}) {
    auto h = embed_sequence(items, params, cfg, rng, training);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const auto& lw = params.layers[l];
        if (noise.epsilon > 0.0 && noise.rng)
            h = add_uniform_noise(h, noise.epsilon, *noise.rng);
        auto hhat = filter_mixer_forward(h, l, lw.filters, schedule, cfg.gamma, lw.mixer_ln_gain,
                                         lw.mixer_ln_bias, cfg.dropout_block, rng, training);
        auto inner = gelu(add(matmul(hhat, lw.ffn_w1), lw.ffn_b1));
        auto ffn = add(matmul(inner, lw.ffn_w2), lw.ffn_b2);
        auto dropped = dropout(ffn, cfg.dropout_block, rng, training);
        h = layer_norm(add(add(h, hhat), dropped), lw.block_ln_gain, lw.block_ln_bias);
    }
    return h;
}

// Tied-weight prediction: softmax of item-embedding scores for the last
// position, with the padding item masked out.
inline TensorPtr predict_scores(const TensorPtr& h_final, const ModelParams& params) {
    std::size_t n = h_final->shape[0], d = h_final->shape[1];
    auto h_last = row(h_final, n - 1);
    auto h_col = make_tensor({d, 1}, h_last->data);
    if (h_last->requires_grad && Tape::active()) {
        detail::mark_output(h_col);
        Tape::active()->record([h_last, h_col]() {
            if (h_col->grad.empty()) return;
            h_last->ensure_grad();
            for (std::size_t i = 0; i < h_last->size(); ++i) h_last->grad[i] += h_col->grad[i];
        });
    }
    auto logits_col = matmul(params.item_embeddings, h_col);  // [V x 1]
    auto logits = make_tensor({logits_col->size()}, logits_col->data);
    if (logits_col->requires_grad && Tape::active()) {
        detail::mark_output(logits);
        Tape::active()->record([logits_col, logits]() {
            if (logits->grad.empty()) return;
            logits_col->ensure_grad();
            for (std::size_t i = 0; i < logits->size(); ++i)
                logits_col->grad[i] += logits->grad[i];
        });
    }
    std::vector<bool> mask(logits->size(), false);
    mask[0] = true;  // padding item never ranked
    return masked_softmax(logits, mask);
}

// ---------------------------------------------------------------------------
// Checkpoint: versioned binary, little-endian float64 buffers, manifest of
// (name, shape) entries. Round-trips bit-exactly.

namespace ckpt_detail {

constexpr char kMagic[8] = {'S', 'L', 'I', 'M', 'E', 'C', 'K', '1'};

inline void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    std::string s(read_u64(in), '\0');
    in.read(s.data(), static_cast<std::streamsize>(s.size()));
    return s;
}

}  // namespace ckpt_detail

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, TensorPtr>>& entries,
                            const std::string& fingerprint = "") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(ckpt_detail::kMagic, 8);
    ckpt_detail::write_u64(out, 1);  // format version
    ckpt_detail::write_string(out, fingerprint);
    ckpt_detail::write_u64(out, entries.size());
    for (const auto& [name, t] : entries) {
        ckpt_detail::write_string(out, name);
        ckpt_detail::write_u64(out, t->shape.size());
        for (std::size_t dsz : t->shape) ckpt_detail::write_u64(out, dsz);
        static_assert(sizeof(double) == 8);
        out.write(reinterpret_cast<const char*>(t->data.data()),
                  static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

struct LoadedCheckpoint {
    std::string fingerprint;
    std::vector<std::pair<std::string, TensorPtr>> entries;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, ckpt_detail::kMagic, 8) != 0)
        throw DataError("not a checkpoint file: " + path);
    std::uint64_t version = ckpt_detail::read_u64(in);
    if (version != 1) throw DataError("unsupported checkpoint version " + std::to_string(version));
    LoadedCheckpoint ck;
    ck.fingerprint = ckpt_detail::read_string(in);
    std::uint64_t count = ckpt_detail::read_u64(in);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = ckpt_detail::read_string(in);
        std::uint64_t ndims = ckpt_detail::read_u64(in);
        Shape shape(ndims);
        for (auto& dsz : shape) dsz = ckpt_detail::read_u64(in);
        std::vector<double> data(shape_numel(shape));
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!in) throw DataError("truncated checkpoint: " + path);
        ck.entries.emplace_back(name, make_tensor(shape, std::move(data), true));
    }
    return ck;
}

// Restores saved buffers into an initialized parameter set by name.
inline void restore_params(ModelParams& params, const LoadedCheckpoint& ck) {
    auto named = params.named();
    if (named.size() != ck.entries.size())
        throw DataError("checkpoint entry count mismatch: expected " +
                        std::to_string(named.size()) + ", got " +
                        std::to_string(ck.entries.size()));
    for (std::size_t i = 0; i < named.size(); ++i) {
        if (named[i].first != ck.entries[i].first)
            throw DataError("checkpoint entry '" + ck.entries[i].first + "' where '" +
                            named[i].first + "' was expected");
        if (named[i].second->shape != ck.entries[i].second->shape)
            throw DataError("checkpoint shape mismatch for " + named[i].first);
        named[i].second->data = ck.entries[i].second->data;
    }
}

}  // namespace slime
