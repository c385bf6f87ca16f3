// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "avprune/active_set.hpp"
#include "avprune/matrix.hpp"
#include "avprune/sequence.hpp"

namespace avprune {

struct ModelConfig {
    std::size_t layers = 28;
    std::size_t heads = 8;
    std::size_t model_dim = 128;
    std::size_t ffn_dim = 512;
    std::size_t vocab_size = 256;
    std::uint64_t seed = 0;

    std::size_t head_dim() const { return model_dim / heads; }
    std::size_t middle_layer() const { return layers / 2; }

    // layers must be even (a middle layer must exist), model_dim divisible
    // by heads, all counts >= 1. Throws ConfigError.
    void validate() const;
};

struct LayerWeights {
    Matrix wq, wk, wv, wo;   // model_dim x model_dim
    Matrix w_up;             // model_dim x ffn_dim
    Matrix w_down;           // ffn_dim x model_dim
};

// Immutable after init; safe to share read-only across threads.
struct ModelWeights {
    ModelConfig config;
    Matrix embedding;  // vocab_size x model_dim, tied with the output head
    std::vector<LayerWeights> layers;
};

// Fills every weight from a single mt19937_64 stream in a fixed order, so the
// same config yields bit-identical weights on every platform.
ModelWeights init_model(const ModelConfig& config);

// Per-layer causal attention captured during a full forward pass. Each head
// matrix is n x n, rows supported on columns <= row index, row sums 1.
struct AttentionTensor {
    std::size_t layer = 0;  // 1-based
    std::vector<Matrix> heads;
};

// Shape audit for attention score buffers. The pruned inference path must
// only ever request single-row buffers; anything wider means a full attention
// map was materialized.
struct AttentionAudit {
    std::atomic<std::size_t> row_buffers{0};
    std::atomic<std::size_t> square_buffers{0};
    std::atomic<std::size_t> max_buffer_rows{0};

    void note_buffer(std::size_t rows, std::size_t cols);
};

// Per-layer KV rows, keyed by original token position. After pruning, the
// rows of layer l are exactly the tokens that were active when layer l ran.
struct KvCache {
    struct Row {
        std::size_t position;
        std::vector<double> key;    // model_dim
        std::vector<double> value;  // model_dim
    };
    std::vector<std::vector<Row>> layers;  // position-ascending within a layer
    std::size_t prompt_length = 0;

    void remove_positions(std::size_t layer, const std::vector<std::size_t>& positions);
};

// Pruning callbacks driven by the decoding loop. `last_query_row` is the
// head-averaged attention row of the final position over the active tokens
// of that layer, in position order.
struct PruningHooks {
    virtual ~PruningHooks() = default;

    // Called after prefill computes layer `layer` (1-based). A returned set
    // becomes the active set for subsequent layers.
    virtual std::optional<ActiveSet> prefill_after_layer(std::size_t layer,
                                                         const ActiveSet& active,
                                                         std::span<const double> last_query_row) = 0;

    virtual bool prune_during_generation() const { return false; }

    // Called after each generation step per layer when generation pruning is
    // enabled; may shrink that layer's cache.
    virtual std::optional<ActiveSet> generation_after_step(std::size_t /*layer*/,
                                                           const ActiveSet& /*active*/,
                                                           std::span<const double> /*row*/) {
        return std::nullopt;
    }
};

struct CaptureResult {
    Matrix logits;                          // n x vocab_size
    std::vector<AttentionTensor> attention; // one per layer
};

// Full forward pass retaining every per-layer, per-head attention matrix.
// Calibration/analysis only: this mode materializes full attention maps and
// is incompatible with the pruned inference contract; reports must say so.
CaptureResult forward_capture(const ModelWeights& weights, const TokenSequence& sequence);

struct StepResult {
    std::vector<double> logits;                         // vocab_size
    std::vector<std::vector<double>> last_query_rows;   // per layer, over cache rows + self
};

// One decoding step attending only to cached rows; never materializes an
// n x n matrix. `active_per_layer`, when given, is checked against the cache
// (mismatch -> InternalError). Appends the new token's KV rows.
StepResult forward_pruned_step(const ModelWeights& weights, KvCache& cache, TokenId token,
                               std::size_t position,
                               const std::vector<ActiveSet>* active_per_layer = nullptr,
                               AttentionAudit* audit = nullptr);

struct DecodeOptions {
    std::size_t max_steps = 8;
    std::optional<TokenId> eos;
    AttentionAudit* audit = nullptr;
};

struct DecodeResult {
    std::vector<TokenId> tokens;                    // generated ids
    std::vector<std::size_t> layer_token_counts;    // tokens processed per layer at prefill
    std::vector<ActiveSet> active_used;             // active set per layer at prefill
    ActiveSet final_active;                         // prompt tokens surviving all stages
};

// Greedy decoding. Without hooks this is vanilla inference; with hooks the
// prefill pass applies them layer by layer and decoding continues on the
// compacted cache.
DecodeResult decode_greedy(const ModelWeights& weights, const TokenSequence& sequence,
                           const DecodeOptions& options, PruningHooks* hooks = nullptr);

}  // namespace avprune
