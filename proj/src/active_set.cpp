// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#include "avprune/active_set.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "avprune/errors.hpp"

namespace avprune {

namespace {
constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
}

ActiveSet ActiveSet::full(std::size_t n) {
    ActiveSet s;
    s.positions_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.positions_[i] = i;
    }
    s.protected_flags_.assign(n, false);
    return s;
}

void ActiveSet::add(std::size_t position, bool is_protected) {
    if (!positions_.empty() && position <= positions_.back()) {
        throw InternalError("active set: positions must be added in increasing order");
    }
    positions_.push_back(position);
    protected_flags_.push_back(is_protected);
}

std::size_t ActiveSet::index_of(std::size_t position) const {
    auto it = std::lower_bound(positions_.begin(), positions_.end(), position);
    if (it == positions_.end() || *it != position) {
        return npos;
    }
    return static_cast<std::size_t>(it - positions_.begin());
}

bool ActiveSet::contains(std::size_t position) const {
    return index_of(position) != npos;
}

bool ActiveSet::is_protected(std::size_t position) const {
    std::size_t i = index_of(position);
    return i != npos && protected_flags_[i];
}

void ActiveSet::protect(std::size_t position) {
    std::size_t i = index_of(position);
    if (i == npos) {
        throw InternalError("active set: cannot protect inactive position " +
                            std::to_string(position));
    }
    protected_flags_[i] = true;
}

std::size_t ActiveSet::protected_count() const {
    std::size_t n = 0;
    for (bool f : protected_flags_) {
        n += f ? 1 : 0;
    }
    return n;
}

std::vector<std::size_t> ActiveSet::prunable() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < positions_.size(); ++i) {
        if (!protected_flags_[i]) {
            out.push_back(positions_[i]);
        }
    }
    return out;
}

ActiveSet ActiveSet::without(const std::vector<std::size_t>& removals) const {
    std::vector<std::size_t> sorted = removals;
    std::sort(sorted.begin(), sorted.end());
    ActiveSet out;
    std::size_t r = 0;
    for (std::size_t i = 0; i < positions_.size(); ++i) {
        while (r < sorted.size() && sorted[r] < positions_[i]) {
            ++r;
        }
        if (r < sorted.size() && sorted[r] == positions_[i]) {
            if (protected_flags_[i]) {
                throw InternalError("active set: attempt to remove protected position " +
                                    std::to_string(positions_[i]));
            }
            continue;
        }
        out.positions_.push_back(positions_[i]);
        out.protected_flags_.push_back(protected_flags_[i]);
    }
    return out;
}

void ActiveSet::validate() const {
    for (std::size_t i = 1; i < positions_.size(); ++i) {
        if (positions_[i] <= positions_[i - 1]) {
            throw InternalError("active set: positions not strictly increasing");
        }
    }
}

}  // namespace avprune
