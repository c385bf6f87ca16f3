// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#include "avprune/sequence.hpp"

#include <string>

#include "avprune/errors.hpp"
#include "avprune/rng.hpp"

namespace avprune {

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::visual: return "visual";
        case Modality::audio: return "audio";
        case Modality::text: return "text";
        case Modality::generated: return "generated";
    }
    return "?";
}

Modality modality_from_name(const std::string& name) {
    if (name == "visual") return Modality::visual;
    if (name == "audio") return Modality::audio;
    if (name == "text") return Modality::text;
    if (name == "generated") return Modality::generated;
    throw ConfigError("unknown modality name: " + name);
}

Modality TokenSequence::modality_at(std::size_t pos) const {
    for (const Span& s : spans) {
        if (pos >= s.start && pos < s.start + s.length) {
            return s.modality;
        }
    }
    throw InputError("position " + std::to_string(pos) + " outside any span");
}

std::size_t TokenSequence::count(Modality m) const {
    std::size_t n = 0;
    for (const Span& s : spans) {
        if (s.modality == m) {
            n += s.length;
        }
    }
    return n;
}

std::size_t TokenSequence::frame_of(std::size_t pos) const {
    if (layout != Layout::frame_interleaved || frame_size == 0) {
        throw InputError("frame_of: sequence is not frame-interleaved");
    }
    return pos / frame_size;  // frames precede the text block, see gen_sequence
}

std::size_t TokenSequence::first_text_position() const {
    for (const Span& s : spans) {
        if (s.modality == Modality::text) {
            return s.start;
        }
    }
    return size();
}

void TokenSequence::append_generated(TokenId token) {
    if (!spans.empty() && spans.back().modality == Modality::generated) {
        spans.back().length += 1;
    } else {
        spans.push_back({Modality::generated, size(), 1});
    }
    tokens.push_back(token);
}

void TokenSequence::validate() const {
    if (tokens.empty()) {
        throw InputError("sequence: empty");
    }
    std::size_t cursor = 0;
    for (const Span& s : spans) {
        if (s.start != cursor || s.length == 0) {
            throw InputError("sequence: spans do not partition [0, K) in order");
        }
        cursor += s.length;
    }
    if (cursor != tokens.size()) {
        throw InputError("sequence: spans cover " + std::to_string(cursor) + " of " +
                         std::to_string(tokens.size()) + " tokens");
    }
    if (layout == Layout::frame_interleaved) {
        if (frame_size == 0) {
            throw InputError("sequence: frame_interleaved requires frame_size > 0");
        }
        // visual/audio spans must alternate ahead of the text block
        Modality expect = Modality::visual;
        for (const Span& s : spans) {
            if (s.modality == Modality::text || s.modality == Modality::generated) {
                break;
            }
            if (s.modality != expect) {
                throw InputError("sequence: interleaved spans do not alternate visual/audio");
            }
            expect = (expect == Modality::visual) ? Modality::audio : Modality::visual;
        }
    }
}

std::size_t SequenceRecipe::total() const {
    if (layout == Layout::frame_interleaved) {
        return frames * (visual_per_frame + audio_per_frame) + text;
    }
    return visual + audio + text;
}

TokenSequence gen_sequence(const SequenceRecipe& recipe, std::size_t vocab_size,
                           std::uint64_t seed) {
    if (recipe.total() == 0) {
        throw InputError("gen_sequence: recipe yields an empty sequence");
    }
    if (vocab_size == 0) {
        throw ConfigError("gen_sequence: vocab_size must be positive");
    }
    TokenSequence seq;
    seq.layout = recipe.layout;
    Rng rng(seed);
    auto draw = [&] { return static_cast<TokenId>(rng.below(vocab_size)); };

    if (recipe.layout == Layout::contiguous) {
        std::size_t cursor = 0;
        auto add_span = [&](Modality m, std::size_t len) {
            if (len == 0) {
                return;
            }
            seq.spans.push_back({m, cursor, len});
            for (std::size_t i = 0; i < len; ++i) {
                seq.tokens.push_back(draw());
            }
            cursor += len;
        };
        add_span(Modality::visual, recipe.visual);
        add_span(Modality::audio, recipe.audio);
        add_span(Modality::text, recipe.text);
    } else {
        if (recipe.frames == 0 || recipe.visual_per_frame == 0 || recipe.audio_per_frame == 0) {
            throw ConfigError("gen_sequence: frame_interleaved needs frames and per-frame sizes");
        }
        seq.frame_size = recipe.visual_per_frame + recipe.audio_per_frame;
        std::size_t cursor = 0;
        for (std::size_t f = 0; f < recipe.frames; ++f) {
            seq.spans.push_back({Modality::visual, cursor, recipe.visual_per_frame});
            for (std::size_t i = 0; i < recipe.visual_per_frame; ++i) {
                seq.tokens.push_back(draw());
            }
            cursor += recipe.visual_per_frame;
            seq.spans.push_back({Modality::audio, cursor, recipe.audio_per_frame});
            for (std::size_t i = 0; i < recipe.audio_per_frame; ++i) {
                seq.tokens.push_back(draw());
            }
            cursor += recipe.audio_per_frame;
        }
        if (recipe.text > 0) {
            seq.spans.push_back({Modality::text, cursor, recipe.text});
            for (std::size_t i = 0; i < recipe.text; ++i) {
                seq.tokens.push_back(draw());
            }
        }
    }
    seq.validate();
    return seq;
}

}  // namespace avprune
