// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace avprune {

using TokenId = std::int32_t;

enum class Modality { visual, audio, text, generated };

const char* modality_name(Modality m);
Modality modality_from_name(const std::string& name);

enum class Layout { contiguous, frame_interleaved };

struct Span {
    Modality modality;
    std::size_t start = 0;
    std::size_t length = 0;
};

// Ordered multimodal token sequence. Spans partition [0, size()) exactly and
// in order; token positions are original ids and are never renumbered, even
// after pruning.
struct TokenSequence {
    std::vector<TokenId> tokens;
    std::vector<Span> spans;
    Layout layout = Layout::contiguous;
    std::size_t frame_size = 0;  // tokens per frame, frame_interleaved only

    std::size_t size() const { return tokens.size(); }
    Modality modality_at(std::size_t pos) const;
    std::size_t count(Modality m) const;

    // Index of the frame containing `pos` (frame_interleaved only).
    std::size_t frame_of(std::size_t pos) const;

    // First position of the first text span, or size() if there is none.
    std::size_t first_text_position() const;

    void append_generated(TokenId token);

    // Checks the span partition and layout invariants; throws InputError.
    void validate() const;
};

struct SequenceRecipe {
    std::size_t visual = 0;
    std::size_t audio = 0;
    std::size_t text = 0;
    Layout layout = Layout::contiguous;
    // frame_interleaved: `frames` frames of (visual_per_frame + audio_per_frame)
    // tokens, followed by the text block.
    std::size_t frames = 0;
    std::size_t visual_per_frame = 0;
    std::size_t audio_per_frame = 0;

    std::size_t total() const;
};

// Deterministic synthetic sequence with the recipe's span structure; token
// ids are drawn uniformly below `vocab_size`.
TokenSequence gen_sequence(const SequenceRecipe& recipe, std::size_t vocab_size,
                           std::uint64_t seed);

}  // namespace avprune
