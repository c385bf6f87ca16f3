// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#include "avprune/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "avprune/errors.hpp"
#include "avprune/rng.hpp"

namespace avprune {

namespace {

constexpr double kLnEps = 1e-5;

void fill_uniform(Matrix& m, Rng& rng, double scale) {
    for (double& v : m.data()) {
        v = rng.symmetric(scale);
    }
}

void layer_norm(std::span<const double> in, std::span<double> out) {
    double mean = 0.0;
    for (double v : in) {
        mean += v;
    }
    mean /= static_cast<double>(in.size());
    double var = 0.0;
    for (double v : in) {
        var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(in.size());
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = (in[i] - mean) * inv;
    }
}

// out = x * W, x is 1 x W.rows()
void vecmat(std::span<const double> x, const Matrix& w, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < w.rows(); ++k) {
        const double xk = x[k];
        auto w_row = w.row(k);
        for (std::size_t j = 0; j < w.cols(); ++j) {
            out[j] += xk * w_row[j];
        }
    }
}

double gelu(double x) {
    const double c = std::sqrt(2.0 / std::numbers::pi);
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

std::vector<double> positional_encoding(std::size_t position, std::size_t dim) {
    std::vector<double> pe(dim);
    const double pos = static_cast<double>(position);
    for (std::size_t i = 0; i < dim; ++i) {
        const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
        const double angle = pos / std::pow(10000.0, exponent);
        pe[i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
    return pe;
}

std::vector<double> embed(const ModelWeights& w, TokenId token, std::size_t position) {
    if (token < 0 || static_cast<std::size_t>(token) >= w.config.vocab_size) {
        throw InputError("token id " + std::to_string(token) + " outside vocab of size " +
                         std::to_string(w.config.vocab_size));
    }
    std::vector<double> x = positional_encoding(position, w.config.model_dim);
    auto row = w.embedding.row(static_cast<std::size_t>(token));
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] += row[i];
    }
    return x;
}

void output_logits(const ModelWeights& w, std::span<const double> hidden,
                   std::span<double> logits) {
    std::vector<double> xf(hidden.size());
    layer_norm(hidden, xf);
    for (std::size_t t = 0; t < w.config.vocab_size; ++t) {
        auto row = w.embedding.row(t);
        double acc = 0.0;
        for (std::size_t i = 0; i < xf.size(); ++i) {
            acc += xf[i] * row[i];
        }
        logits[t] = acc;
    }
}

struct PrefillOutput {
    KvCache cache;
    std::vector<double> last_logits;
    std::vector<std::size_t> layer_token_counts;
    std::vector<ActiveSet> active_used;
    ActiveSet final_active;
    std::vector<std::vector<double>> last_query_rows;
    Matrix all_logits;                       // capture only
    std::vector<AttentionTensor> attention;  // capture only
};

PrefillOutput run_prefill(const ModelWeights& w, const TokenSequence& seq, PruningHooks* hooks,
                          bool capture, AttentionAudit* audit) {
    const ModelConfig& cfg = w.config;
    seq.validate();
    if (capture && hooks != nullptr) {
        throw InternalError("prefill: capture mode cannot be combined with pruning hooks");
    }
    const std::size_t n = seq.size();
    const std::size_t d = cfg.model_dim;
    const std::size_t n_heads = cfg.heads;
    const std::size_t p = cfg.head_dim();
    const double inv_sqrt_p = 1.0 / std::sqrt(static_cast<double>(p));

    PrefillOutput out;
    out.cache.layers.resize(cfg.layers);
    out.cache.prompt_length = n;

    // Hidden states indexed by original position; rows of pruned tokens go
    // stale and are never read again.
    std::vector<double> hidden(n * d);
    for (std::size_t pos = 0; pos < n; ++pos) {
        std::vector<double> x = embed(w, seq.tokens[pos], pos);
        std::copy(x.begin(), x.end(), hidden.begin() + static_cast<std::ptrdiff_t>(pos * d));
    }

    ActiveSet active = ActiveSet::full(n);

    std::vector<double> q_buf, k_buf, v_buf, attn_buf, proj_buf;
    for (std::size_t layer = 1; layer <= cfg.layers; ++layer) {
        const LayerWeights& lw = w.layers[layer - 1];
        const auto& positions = active.positions();
        const std::size_t n_act = positions.size();

        out.active_used.push_back(active);
        out.layer_token_counts.push_back(n_act);

        q_buf.assign(n_act * d, 0.0);
        k_buf.assign(n_act * d, 0.0);
        v_buf.assign(n_act * d, 0.0);
        attn_buf.assign(n_act * d, 0.0);

#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n_act); ++ii) {
            const std::size_t idx = static_cast<std::size_t>(ii);
            std::vector<double> xhat(d);
            layer_norm({hidden.data() + positions[idx] * d, d}, xhat);
            vecmat(xhat, lw.wq, {q_buf.data() + idx * d, d});
            vecmat(xhat, lw.wk, {k_buf.data() + idx * d, d});
            vecmat(xhat, lw.wv, {v_buf.data() + idx * d, d});
        }

        auto& cache_rows = out.cache.layers[layer - 1];
        cache_rows.reserve(n_act);
        for (std::size_t idx = 0; idx < n_act; ++idx) {
            cache_rows.push_back({positions[idx],
                                  {k_buf.begin() + static_cast<std::ptrdiff_t>(idx * d),
                                   k_buf.begin() + static_cast<std::ptrdiff_t>((idx + 1) * d)},
                                  {v_buf.begin() + static_cast<std::ptrdiff_t>(idx * d),
                                   v_buf.begin() + static_cast<std::ptrdiff_t>((idx + 1) * d)}});
        }

        AttentionTensor tensor;
        if (capture) {
            tensor.layer = layer;
            tensor.heads.assign(n_heads, Matrix(n, n));
            if (audit != nullptr) {
                for (std::size_t h = 0; h < n_heads; ++h) {
                    audit->note_buffer(n, n);
                }
            }
        }

        std::vector<double> last_row(n_act, 0.0);
        const double inv_heads = 1.0 / static_cast<double>(n_heads);

#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n_act); ++ii) {
            const std::size_t idx = static_cast<std::size_t>(ii);
            const std::size_t row_len = idx + 1;
            std::vector<double> scores(row_len);
            if (audit != nullptr && !capture) {
                audit->note_buffer(1, row_len);
            }
            for (std::size_t h = 0; h < n_heads; ++h) {
                const std::size_t off = h * p;
                const double* q = q_buf.data() + idx * d + off;
                for (std::size_t j = 0; j < row_len; ++j) {
                    const double* k = k_buf.data() + j * d + off;
                    double acc = 0.0;
                    for (std::size_t t = 0; t < p; ++t) {
                        acc += q[t] * k[t];
                    }
                    scores[j] = acc * inv_sqrt_p;
                }
                softmax_inplace(scores);
                if (capture) {
                    for (std::size_t j = 0; j < row_len; ++j) {
                        tensor.heads[h](positions[idx], positions[j]) = scores[j];
                    }
                }
                double* o = attn_buf.data() + idx * d + off;
                for (std::size_t t = 0; t < p; ++t) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < row_len; ++j) {
                        acc += scores[j] * v_buf[j * d + off + t];
                    }
                    o[t] = acc;
                }
                if (idx == n_act - 1) {
                    for (std::size_t j = 0; j < row_len; ++j) {
                        last_row[j] += scores[j] * inv_heads;
                    }
                }
            }
        }

        proj_buf.assign(n_act * d, 0.0);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n_act); ++ii) {
            const std::size_t idx = static_cast<std::size_t>(ii);
            std::span<double> proj{proj_buf.data() + idx * d, d};
            vecmat({attn_buf.data() + idx * d, d}, lw.wo, proj);
            double* hrow = hidden.data() + positions[idx] * d;
            for (std::size_t t = 0; t < d; ++t) {
                hrow[t] += proj[t];
            }
            // FFN with pre-norm
            std::vector<double> xhat(d), up(cfg.ffn_dim), down(d);
            layer_norm({hrow, d}, xhat);
            vecmat(xhat, lw.w_up, up);
            for (double& u : up) {
                u = gelu(u);
            }
            vecmat(up, lw.w_down, down);
            for (std::size_t t = 0; t < d; ++t) {
                hrow[t] += down[t];
            }
        }

        if (capture) {
            out.attention.push_back(std::move(tensor));
        }
        out.last_query_rows.push_back(last_row);

        if (hooks != nullptr) {
            auto updated = hooks->prefill_after_layer(layer, active, last_row);
            if (updated.has_value()) {
                updated->validate();
                for (std::size_t pos : updated->positions()) {
                    if (!active.contains(pos)) {
                        throw InternalError("pruning hook re-activated position " +
                                            std::to_string(pos));
                    }
                }
                if (updated->empty() || updated->positions().back() != n - 1) {
                    throw InternalError("pruning hook dropped the last token");
                }
                active = std::move(*updated);
            }
        }
    }

    out.final_active = active;
    out.last_logits.assign(cfg.vocab_size, 0.0);
    output_logits(w, {hidden.data() + (n - 1) * d, d}, out.last_logits);

    if (capture) {
        out.all_logits = Matrix(n, cfg.vocab_size);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t pos = 0; pos < static_cast<std::ptrdiff_t>(n); ++pos) {
            output_logits(w, {hidden.data() + static_cast<std::size_t>(pos) * d, d},
                          out.all_logits.row(static_cast<std::size_t>(pos)));
        }
    }
    return out;
}

TokenId argmax_token(std::span<const double> logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) {
            best = i;
        }
    }
    return static_cast<TokenId>(best);
}

}  // namespace

void ModelConfig::validate() const {
    if (layers < 1 || heads < 1 || model_dim < 1 || ffn_dim < 1 || vocab_size < 1) {
        throw ConfigError("model config: all counts must be >= 1");
    }
    if (layers % 2 != 0) {
        throw ConfigError("model config: layer count must be even so a middle layer exists");
    }
    if (model_dim % heads != 0) {
        throw ConfigError("model config: model_dim " + std::to_string(model_dim) +
                          " not divisible by heads " + std::to_string(heads));
    }
}

void AttentionAudit::note_buffer(std::size_t rows, std::size_t cols) {
    if (rows <= 1) {
        row_buffers.fetch_add(1, std::memory_order_relaxed);
    } else if (rows == cols) {
        square_buffers.fetch_add(1, std::memory_order_relaxed);
    }
    std::size_t prev = max_buffer_rows.load(std::memory_order_relaxed);
    while (prev < rows &&
           !max_buffer_rows.compare_exchange_weak(prev, rows, std::memory_order_relaxed)) {
    }
}

void KvCache::remove_positions(std::size_t layer, const std::vector<std::size_t>& positions) {
    auto& rows = layers.at(layer);
    auto keep = [&](const Row& r) {
        return std::find(positions.begin(), positions.end(), r.position) == positions.end();
    };
    std::vector<Row> kept;
    kept.reserve(rows.size());
    for (auto& r : rows) {
        if (keep(r)) {
            kept.push_back(std::move(r));
        }
    }
    rows = std::move(kept);
}

ModelWeights init_model(const ModelConfig& config) {
    config.validate();
    ModelWeights w;
    w.config = config;
    Rng rng(config.seed);

    const double d_scale = 1.0 / std::sqrt(static_cast<double>(config.model_dim));
    const double resid_scale = d_scale / std::sqrt(2.0 * static_cast<double>(config.layers));
    const double ffn_down_scale = 1.0 / std::sqrt(static_cast<double>(config.ffn_dim)) /
                                  std::sqrt(2.0 * static_cast<double>(config.layers));

    w.embedding = Matrix(config.vocab_size, config.model_dim);
    fill_uniform(w.embedding, rng, 0.5);

    w.layers.resize(config.layers);
    for (LayerWeights& lw : w.layers) {
        lw.wq = Matrix(config.model_dim, config.model_dim);
        lw.wk = Matrix(config.model_dim, config.model_dim);
        lw.wv = Matrix(config.model_dim, config.model_dim);
        lw.wo = Matrix(config.model_dim, config.model_dim);
        lw.w_up = Matrix(config.model_dim, config.ffn_dim);
        lw.w_down = Matrix(config.ffn_dim, config.model_dim);
        fill_uniform(lw.wq, rng, d_scale);
        fill_uniform(lw.wk, rng, d_scale);
        fill_uniform(lw.wv, rng, d_scale);
        fill_uniform(lw.wo, rng, resid_scale);
        fill_uniform(lw.w_up, rng, d_scale);
        fill_uniform(lw.w_down, rng, ffn_down_scale);
    }
    return w;
}

CaptureResult forward_capture(const ModelWeights& weights, const TokenSequence& sequence) {
    PrefillOutput out = run_prefill(weights, sequence, nullptr, /*capture=*/true, nullptr);
    return {std::move(out.all_logits), std::move(out.attention)};
}

StepResult forward_pruned_step(const ModelWeights& weights, KvCache& cache, TokenId token,
                               std::size_t position,
                               const std::vector<ActiveSet>* active_per_layer,
                               AttentionAudit* audit) {
    const ModelConfig& cfg = weights.config;
    if (cache.layers.size() != cfg.layers) {
        throw InternalError("pruned step: cache has " + std::to_string(cache.layers.size()) +
                            " layers, model has " + std::to_string(cfg.layers));
    }
    if (active_per_layer != nullptr) {
        if (active_per_layer->size() != cfg.layers) {
            throw InternalError("pruned step: active set chain length mismatch");
        }
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const auto& expect = (*active_per_layer)[l].positions();
            std::size_t i = 0;
            for (const KvCache::Row& row : cache.layers[l]) {
                if (row.position >= cache.prompt_length) {
                    continue;  // generated rows are always live
                }
                if (i >= expect.size() || expect[i] != row.position) {
                    throw InternalError("pruned step: cache row " + std::to_string(row.position) +
                                        " of layer " + std::to_string(l + 1) +
                                        " does not match the active set");
                }
                ++i;
            }
            if (i != expect.size()) {
                throw InternalError("pruned step: cache of layer " + std::to_string(l + 1) +
                                    " is missing active rows");
            }
        }
    }

    const std::size_t d = cfg.model_dim;
    const std::size_t n_heads = cfg.heads;
    const std::size_t p = cfg.head_dim();
    const double inv_sqrt_p = 1.0 / std::sqrt(static_cast<double>(p));
    const double inv_heads = 1.0 / static_cast<double>(n_heads);

    StepResult result;
    result.last_query_rows.reserve(cfg.layers);

    std::vector<double> x = embed(weights, token, position);
    std::vector<double> xhat(d), q(d), k(d), v(d), attn(d), proj(d);
    std::vector<double> up(cfg.ffn_dim), down(d);

    for (std::size_t layer = 1; layer <= cfg.layers; ++layer) {
        const LayerWeights& lw = weights.layers[layer - 1];
        auto& rows = cache.layers[layer - 1];

        layer_norm(x, xhat);
        vecmat(xhat, lw.wq, q);
        vecmat(xhat, lw.wk, k);
        vecmat(xhat, lw.wv, v);

        const std::size_t n_keys = rows.size() + 1;  // cached rows + self
        std::vector<double> scores(n_keys);
        if (audit != nullptr) {
            audit->note_buffer(1, n_keys);
        }
        std::vector<double> mean_row(n_keys, 0.0);
        std::fill(attn.begin(), attn.end(), 0.0);

        for (std::size_t h = 0; h < n_heads; ++h) {
            const std::size_t off = h * p;
            for (std::size_t j = 0; j + 1 < n_keys; ++j) {
                const double* kj = rows[j].key.data() + off;
                double acc = 0.0;
                for (std::size_t t = 0; t < p; ++t) {
                    acc += q[off + t] * kj[t];
                }
                scores[j] = acc * inv_sqrt_p;
            }
            {
                double acc = 0.0;
                for (std::size_t t = 0; t < p; ++t) {
                    acc += q[off + t] * k[off + t];
                }
                scores[n_keys - 1] = acc * inv_sqrt_p;
            }
            softmax_inplace(scores);
            for (std::size_t t = 0; t < p; ++t) {
                double acc = 0.0;
                for (std::size_t j = 0; j + 1 < n_keys; ++j) {
                    acc += scores[j] * rows[j].value[off + t];
                }
                acc += scores[n_keys - 1] * v[off + t];
                attn[off + t] = acc;
            }
            for (std::size_t j = 0; j < n_keys; ++j) {
                mean_row[j] += scores[j] * inv_heads;
            }
        }

        vecmat(attn, lw.wo, proj);
        for (std::size_t t = 0; t < d; ++t) {
            x[t] += proj[t];
        }
        layer_norm(x, xhat);
        vecmat(xhat, lw.w_up, up);
        for (double& u : up) {
            u = gelu(u);
        }
        vecmat(up, lw.w_down, down);
        for (std::size_t t = 0; t < d; ++t) {
            x[t] += down[t];
        }

        rows.push_back({position, k, v});
        result.last_query_rows.push_back(std::move(mean_row));
    }

    result.logits.assign(cfg.vocab_size, 0.0);
    output_logits(weights, x, result.logits);
    return result;
}

DecodeResult decode_greedy(const ModelWeights& weights, const TokenSequence& sequence,
                           const DecodeOptions& options, PruningHooks* hooks) {
    if (options.max_steps < 1) {
        throw ConfigError("decode: max_steps must be >= 1");
    }
    PrefillOutput prefill =
        run_prefill(weights, sequence, hooks, /*capture=*/false, options.audit);

    DecodeResult result;
    result.layer_token_counts = std::move(prefill.layer_token_counts);
    result.active_used = prefill.active_used;
    result.final_active = prefill.final_active;

    std::vector<ActiveSet> chain = std::move(prefill.active_used);
    KvCache cache = std::move(prefill.cache);
    const std::size_t prompt_len = sequence.size();

    TokenId current = argmax_token(prefill.last_logits);
    result.tokens.push_back(current);
    if (options.eos.has_value() && current == *options.eos) {
        return result;
    }

    std::vector<std::size_t> generated_positions;
    for (std::size_t step = 1; step < options.max_steps; ++step) {
        const std::size_t pos = prompt_len + step - 1;
        StepResult sr = forward_pruned_step(weights, cache, current, pos, &chain, options.audit);
        generated_positions.push_back(pos);

        if (hooks != nullptr && hooks->prune_during_generation()) {
            for (std::size_t l = 0; l < weights.config.layers; ++l) {
                // Augment the layer's prompt-side active set with the live
                // generated rows (the self entry included) so indices line up
                // with the score row.
                ActiveSet aug = chain[l];
                for (std::size_t gp : generated_positions) {
                    aug.add(gp, /*is_protected=*/true);
                }
                auto updated = hooks->generation_after_step(l + 1, aug, sr.last_query_rows[l]);
                if (!updated.has_value()) {
                    continue;
                }
                std::vector<std::size_t> removed;
                for (std::size_t p : chain[l].positions()) {
                    if (!updated->contains(p)) {
                        removed.push_back(p);
                    }
                }
                if (!removed.empty()) {
                    cache.remove_positions(l, removed);
                    chain[l] = chain[l].without(removed);
                }
            }
        }

        current = argmax_token(sr.logits);
        result.tokens.push_back(current);
        if (options.eos.has_value() && current == *options.eos) {
            break;
        }
    }
    return result;
}

}  // namespace avprune
