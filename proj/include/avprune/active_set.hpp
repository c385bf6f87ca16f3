// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace avprune {

// Surviving original token positions at some layer, strictly increasing, with
// a protected subset that no pruning stage may remove. Positions are original
// sequence ids and are never renumbered.
class ActiveSet {
public:
    ActiveSet() = default;

    // All positions [0, n) active, none protected.
    static ActiveSet full(std::size_t n);

    void add(std::size_t position, bool is_protected);

    std::size_t size() const { return positions_.size(); }
    bool empty() const { return positions_.empty(); }

    const std::vector<std::size_t>& positions() const { return positions_; }

    bool contains(std::size_t position) const;
    bool is_protected(std::size_t position) const;
    void protect(std::size_t position);

    std::size_t protected_count() const;

    // Positions eligible for removal (active and not protected).
    std::vector<std::size_t> prunable() const;

    // Removes the given positions (must be present and unprotected); keeps
    // order. Throws InternalError on a protected removal.
    ActiveSet without(const std::vector<std::size_t>& removals) const;

    // Checks strictly-increasing order; throws InternalError otherwise.
    void validate() const;

private:
    std::vector<std::size_t> positions_;      // strictly increasing
    std::vector<bool> protected_flags_;       // aligned with positions_
    std::size_t index_of(std::size_t position) const;  // npos if missing
};

}  // namespace avprune
