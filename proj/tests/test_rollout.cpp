// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <sstream>

#include "avprune/errors.hpp"
#include "avprune/reference.hpp"
#include "avprune/rng.hpp"
#include "avprune/rollout.hpp"

using namespace avprune;

namespace {

Matrix random_causal_stochastic(std::size_t n, Rng& rng) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
            m(i, j) = rng.unit() + 1e-3;
            sum += m(i, j);
        }
        for (std::size_t j = 0; j <= i; ++j) {
            m(i, j) /= sum;
        }
    }
    return m;
}

std::vector<AttentionTensor> random_stack(std::size_t n, std::size_t layers, std::size_t heads,
                                          Rng& rng) {
    std::vector<AttentionTensor> out(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        out[l].layer = l + 1;
        for (std::size_t h = 0; h < heads; ++h) {
            out[l].heads.push_back(random_causal_stochastic(n, rng));
        }
    }
    return out;
}

// Independent oracle: explicit left-multiplied product of mixed matrices
// through the serial reference kernel.
Matrix brute_force_rollout(const std::vector<AttentionTensor>& stack, std::size_t upto,
                           double alpha) {
    const std::size_t n = stack[0].heads[0].rows();
    Matrix r = Matrix::identity(n);
    for (std::size_t l = 0; l < upto; ++l) {
        Matrix mean(n, n);
        for (const Matrix& head : stack[l].heads) {
            for (std::size_t i = 0; i < mean.data().size(); ++i) {
                mean.data()[i] += head.data()[i];
            }
        }
        for (double& v : mean.data()) {
            v /= static_cast<double>(stack[l].heads.size());
        }
        Matrix mixed(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                mixed(i, j) = alpha * mean(i, j) + (i == j ? 1.0 - alpha : 0.0);
            }
        }
        r = reference::matmul(mixed, r);
    }
    return r;
}

}  // namespace

TEST_CASE("mix_residual limits") {
    Rng rng(2);
    Matrix a = random_causal_stochastic(4, rng);
    Matrix at_zero = mix_residual(a, 0.0);
    Matrix at_one = mix_residual(a, 1.0);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(at_zero(i, j) == (i == j ? 1.0 : 0.0));
            CHECK(at_one(i, j) == a(i, j));
        }
    }
    CHECK_THROWS_AS(mix_residual(a, 1.5), ConfigError);
    CHECK_THROWS_AS(mix_residual(a, -0.1), ConfigError);
    CHECK_THROWS_AS(mix_residual(Matrix(2, 3), 0.5), ConfigError);
}

TEST_CASE("mix_residual hand example") {
    Matrix a(2, 2, {1.0, 0.0, 0.5, 0.5});
    Matrix out = mix_residual(a, 0.5);
    CHECK(out(0, 0) == 1.0);
    CHECK(out(0, 1) == 0.0);
    CHECK(out(1, 0) == 0.25);
    CHECK(out(1, 1) == 0.75);
}

TEST_CASE("accumulate from identity equals a single mix") {
    Rng rng(3);
    Matrix a = random_causal_stochastic(3, rng);
    RolloutState s = RolloutState::initial(3, 0.5);
    RolloutState next = accumulate(s, a);
    CHECK(next.layer == 1);
    Matrix expected = mix_residual(a, 0.5);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(next.r.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-15));
    }
}

TEST_CASE("two accumulations match the worked product") {
    Matrix a(2, 2, {1.0, 0.0, 0.5, 0.5});
    RolloutState s = RolloutState::initial(2, 0.5);
    s = accumulate(s, a);
    s = accumulate(s, a);
    CHECK(s.layer == 2);
    CHECK(s.r(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.r(0, 1) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(s.r(1, 0) == doctest::Approx(0.4375).epsilon(1e-15));
    CHECK(s.r(1, 1) == doctest::Approx(0.5625).epsilon(1e-15));
}

TEST_CASE("identity attention is a rollout fixed point at any alpha") {
    for (double alpha : {0.0, 0.3, 0.7, 1.0}) {
        RolloutState s = RolloutState::initial(5, alpha);
        for (int l = 0; l < 6; ++l) {
            s = accumulate(s, Matrix::identity(5));
        }
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 5; ++j) {
                CHECK(s.r(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("accumulate rejects shape mismatch") {
    RolloutState s = RolloutState::initial(3, 0.5);
    CHECK_THROWS_AS(accumulate(s, Matrix::identity(4)), ConfigError);
}

TEST_CASE("rollout_at base cases") {
    Rng rng(5);
    auto stack = random_stack(4, 3, 2, rng);
    Matrix at_zero = rollout_at(stack, 0, 0.5);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(at_zero(i, j) == (i == j ? 1.0 : 0.0));
        }
    }
    Matrix at_one = rollout_at(stack, 1, 0.5);
    Matrix expected = mix_residual(mean_over_heads(stack[0].heads), 0.5);
    for (std::size_t i = 0; i < at_one.data().size(); ++i) {
        CHECK(at_one.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-14));
    }
    CHECK_THROWS_AS(rollout_at(stack, 4, 0.5), ConfigError);
}

TEST_CASE("rollout matches the brute-force product oracle") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.below(7);       // <= 8
        const std::size_t layers = 1 + rng.below(4);  // <= 4
        const std::size_t heads = 1 + rng.below(3);
        auto stack = random_stack(n, layers, heads, rng);
        for (double alpha : {0.0, 0.3, 0.5, 1.0}) {
            Matrix fast = rollout_at(stack, layers, alpha);
            Matrix slow = brute_force_rollout(stack, layers, alpha);
            for (std::size_t i = 0; i < fast.data().size(); ++i) {
                CHECK(fast.data()[i] == doctest::Approx(slow.data()[i]).epsilon(1e-10));
            }
            CHECK(max_row_sum_error(fast) <= 1e-9);
        }
    }
}

TEST_CASE("row-stochasticity survives 28 layers") {
    Rng rng(11);
    auto stack = random_stack(16, 28, 4, rng);
    Matrix r = rollout_at(stack, 28, 0.5);
    CHECK(max_row_sum_error(r) <= 1e-9);
}

TEST_CASE("causal inputs give a causal rollout") {
    Rng rng(13);
    auto stack = random_stack(8, 4, 2, rng);
    Matrix r = rollout_at(stack, 4, 0.5);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = i + 1; j < 8; ++j) {
            CHECK(r(i, j) == 0.0);
        }
    }
}

TEST_CASE("alpha=0 influence is one-hot on the last query row") {
    Rng rng(17);
    auto stack = random_stack(6, 3, 2, rng);
    Matrix r = rollout_at(stack, 3, 0.0);
    const std::size_t rows[] = {5};
    std::vector<double> scores = influence_scores(r, rows);
    for (std::size_t j = 0; j < 6; ++j) {
        CHECK(scores[j] == doctest::Approx(j == 5 ? 1.0 : 0.0).epsilon(1e-12));
    }
}

TEST_CASE("influence scores definitions") {
    Matrix r(2, 2, {1.0, 0.0, 0.4375, 0.5625});
    const std::size_t row1[] = {1};
    std::vector<double> s = influence_scores(r, row1);
    CHECK(s[0] == doctest::Approx(0.4375).epsilon(1e-15));
    CHECK(s[1] == doctest::Approx(0.5625).epsilon(1e-15));

    const std::size_t all[] = {0, 1};
    std::vector<double> means = influence_scores(r, all);
    CHECK(means[0] == doctest::Approx((1.0 + 0.4375) / 2.0).epsilon(1e-15));
    CHECK(means[1] == doctest::Approx(0.5625 / 2.0).epsilon(1e-15));

    double total = 0.0;
    for (double v : means) {
        total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS_AS(influence_scores(r, std::span<const std::size_t>{}), ConfigError);
    const std::size_t bad[] = {7};
    CHECK_THROWS_AS(influence_scores(r, bad), ConfigError);
}

TEST_CASE("heatmap CSV has the header dimension and matching rows") {
    Rng rng(19);
    Matrix r = random_causal_stochastic(5, rng);
    std::ostringstream os;
    write_heatmap_csv(r, os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "5");
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        std::size_t commas = 0;
        for (char c : line) {
            commas += c == ',' ? 1 : 0;
        }
        CHECK(commas == 4);
    }
    CHECK(rows == 5);
}
