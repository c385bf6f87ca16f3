// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "avprune/matrix.hpp"

namespace avprune::reference {

// Serial counterparts of the OpenMP kernels. Kept deliberately naive and
// structurally different (inner-product loop nest, explicit temporaries) so
// the tests and the kernel benchmark have an independent baseline.

Matrix matmul(const Matrix& a, const Matrix& b);

Matrix softmax_rows(const Matrix& m, std::span<const std::size_t> prefix = {});

Matrix mean_over_heads(std::span<const Matrix> heads);

}  // namespace avprune::reference
