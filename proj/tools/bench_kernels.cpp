// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0
//
// Compares the OpenMP kernels against the serial reference implementations
// and reports timings. Run with OMP_NUM_THREADS to control the thread count.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "avprune/matrix.hpp"
#include "avprune/model.hpp"
#include "avprune/reference.hpp"
#include "avprune/rng.hpp"
#include "avprune/rollout.hpp"

namespace {

using avprune::Matrix;

double time_seconds(const std::function<void()>& fn, int reps) {
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) {
        fn();
    }
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(stop - start).count() / reps;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, avprune::Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data()) {
        v = rng.symmetric(1.0);
    }
    return m;
}

Matrix random_stochastic(std::size_t n, avprune::Rng& rng) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            m(i, j) = rng.unit() + 1e-3;
            sum += m(i, j);
        }
        for (std::size_t j = 0; j < n; ++j) {
            m(i, j) /= sum;
        }
    }
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    }
    return worst;
}

int failures = 0;

void report(const char* name, double serial_s, double parallel_s, double diff, double tol) {
    const bool ok = diff <= tol;
    if (!ok) {
        ++failures;
    }
    std::printf("%-24s serial %9.4f ms   omp %9.4f ms   speedup %5.2fx   maxdiff %.2e  %s\n",
                name, serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s, diff,
                ok ? "OK" : "MISMATCH");
}

}  // namespace

int main() {
    std::printf("kernel benchmark, %d OpenMP threads\n\n", omp_get_max_threads());
    avprune::Rng rng(42);

    {
        const std::size_t n = 384;
        Matrix a = random_matrix(n, n, rng);
        Matrix b = random_matrix(n, n, rng);
        Matrix ref = avprune::reference::matmul(a, b);
        Matrix omp_out = avprune::matmul(a, b);
        const double ts = time_seconds([&] { avprune::reference::matmul(a, b); }, 3);
        const double tp = time_seconds([&] { avprune::matmul(a, b); }, 3);
        report("matmul 384x384", ts, tp, max_abs_diff(ref, omp_out), 1e-9);
    }
    {
        const std::size_t rows = 2048, cols = 512;
        Matrix m = random_matrix(rows, cols, rng);
        Matrix ref = avprune::reference::softmax_rows(m);
        Matrix omp_out = avprune::softmax_rows(m);
        const double ts = time_seconds([&] { avprune::reference::softmax_rows(m); }, 5);
        const double tp = time_seconds([&] { avprune::softmax_rows(m); }, 5);
        report("softmax 2048x512", ts, tp, max_abs_diff(ref, omp_out), 1e-12);
    }
    {
        std::vector<Matrix> heads;
        for (int h = 0; h < 8; ++h) {
            heads.push_back(random_matrix(512, 512, rng));
        }
        Matrix ref = avprune::reference::mean_over_heads(heads);
        Matrix omp_out = avprune::mean_over_heads(heads);
        const double ts = time_seconds([&] { avprune::reference::mean_over_heads(heads); }, 5);
        const double tp = time_seconds([&] { avprune::mean_over_heads(heads); }, 5);
        report("head mean 8x512x512", ts, tp, max_abs_diff(ref, omp_out), 1e-12);
    }
    {
        // 28-layer rollout at n=256: OpenMP accumulate vs explicit serial product
        const std::size_t n = 256, layers = 28;
        std::vector<avprune::AttentionTensor> attn(layers);
        for (std::size_t l = 0; l < layers; ++l) {
            attn[l].layer = l + 1;
            attn[l].heads.push_back(random_stochastic(n, rng));
        }
        const double alpha = 0.5;
        Matrix r_omp = avprune::rollout_at(attn, layers, alpha);
        Matrix r_ref = Matrix::identity(n);
        for (std::size_t l = 0; l < layers; ++l) {
            r_ref = avprune::reference::matmul(avprune::mix_residual(attn[l].heads[0], alpha),
                                               r_ref);
        }
        const double ts = time_seconds(
            [&] {
                Matrix r = Matrix::identity(n);
                for (std::size_t l = 0; l < layers; ++l) {
                    r = avprune::reference::matmul(
                        avprune::mix_residual(attn[l].heads[0], alpha), r);
                }
            },
            2);
        const double tp = time_seconds([&] { avprune::rollout_at(attn, layers, alpha); }, 2);
        report("rollout 28x256", ts, tp, max_abs_diff(r_omp, r_ref), 1e-10);
    }
    {
        // whole prefill pass, 1 thread vs all threads
        avprune::ModelConfig cfg;
        cfg.layers = 8;
        cfg.heads = 8;
        cfg.model_dim = 256;
        cfg.ffn_dim = 1024;
        cfg.vocab_size = 256;
        cfg.seed = 7;
        avprune::ModelWeights weights = avprune::init_model(cfg);
        avprune::SequenceRecipe recipe{128, 96, 32, avprune::Layout::contiguous, 0, 0, 0};
        avprune::TokenSequence seq = avprune::gen_sequence(recipe, cfg.vocab_size, 7);

        const int max_threads = omp_get_max_threads();
        omp_set_num_threads(1);
        avprune::CaptureResult serial_out = avprune::forward_capture(weights, seq);
        const double ts = time_seconds([&] { avprune::forward_capture(weights, seq); }, 2);
        omp_set_num_threads(max_threads);
        avprune::CaptureResult parallel_out = avprune::forward_capture(weights, seq);
        const double tp = time_seconds([&] { avprune::forward_capture(weights, seq); }, 2);
        report("prefill 8L d256 K=256", ts, tp,
               max_abs_diff(serial_out.logits, parallel_out.logits), 0.0);
    }

    std::printf("\n%s\n", failures == 0 ? "all kernels agree" : "KERNEL MISMATCH");
    return failures == 0 ? 0 : 1;
}
