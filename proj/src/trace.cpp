// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#include "avprune/trace.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "avprune/errors.hpp"

namespace avprune {

namespace {

void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32_le(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    put_u32_le(out, bits);
}

std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32_le(const unsigned char* p) {
    const std::uint32_t bits = get_u32_le(p);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

}  // namespace

void save_trace(const std::filesystem::path& path, std::span<const AttentionTensor> attention) {
    if (attention.empty()) {
        throw InputError("save_trace: empty attention stack");
    }
    const std::size_t layers = attention.size();
    const std::size_t heads = attention[0].heads.size();
    const std::size_t n = attention[0].heads.at(0).rows();
    for (const AttentionTensor& t : attention) {
        if (t.heads.size() != heads) {
            throw InputError("save_trace: inconsistent head count across layers");
        }
        for (const Matrix& m : t.heads) {
            if (m.rows() != n || m.cols() != n) {
                throw InputError("save_trace: inconsistent matrix shape");
            }
        }
    }

    std::string buf;
    buf.reserve(8 + 12 + 4 * layers * heads * n * n);
    buf.append(kTraceMagic, sizeof(kTraceMagic));
    put_u32_le(buf, static_cast<std::uint32_t>(layers));
    put_u32_le(buf, static_cast<std::uint32_t>(heads));
    put_u32_le(buf, static_cast<std::uint32_t>(n));
    for (const AttentionTensor& t : attention) {
        for (const Matrix& m : t.heads) {
            for (double v : m.data()) {
                put_f32_le(buf, static_cast<float>(v));
            }
        }
    }

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw InputError("save_trace: cannot open " + path.string());
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) {
        throw InputError("save_trace: write failed for " + path.string());
    }
}

std::vector<AttentionTensor> load_trace(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) {
        throw InputError("load_trace: cannot open " + path.string());
    }
    const std::streamsize size = is.tellg();
    is.seekg(0);
    std::vector<unsigned char> buf(static_cast<std::size_t>(size));
    if (size > 0) {
        is.read(reinterpret_cast<char*>(buf.data()), size);
    }
    if (!is) {
        throw InputError("load_trace: read failed for " + path.string());
    }

    if (buf.size() < 20) {
        throw TruncationError("load_trace: file shorter than the 20-byte header");
    }
    if (std::memcmp(buf.data(), kTraceMagic, sizeof(kTraceMagic)) != 0) {
        throw FormatError("load_trace: bad magic, expected AVTRACE1");
    }
    const std::size_t layers = get_u32_le(buf.data() + 8);
    const std::size_t heads = get_u32_le(buf.data() + 12);
    const std::size_t n = get_u32_le(buf.data() + 16);
    if (layers == 0 || heads == 0 || n == 0) {
        throw FormatError("load_trace: zero dimension in header");
    }
    const std::size_t expected = 20 + 4 * layers * heads * n * n;
    if (buf.size() != expected) {
        throw TruncationError("load_trace: file is " + std::to_string(buf.size()) +
                              " bytes, header implies " + std::to_string(expected));
    }

    std::vector<AttentionTensor> out;
    out.reserve(layers);
    const unsigned char* p = buf.data() + 20;
    double worst_err = 0.0;
    std::size_t worst_layer = 0, worst_head = 0, worst_row = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        AttentionTensor t;
        t.layer = l + 1;
        t.heads.reserve(heads);
        for (std::size_t h = 0; h < heads; ++h) {
            Matrix m(n, n);
            for (std::size_t i = 0; i < n; ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double v = static_cast<double>(get_f32_le(p));
                    p += 4;
                    if (!std::isfinite(v)) {
                        throw ValidationError("load_trace: non-finite entry at layer " +
                                              std::to_string(l + 1));
                    }
                    m(i, j) = v;
                    sum += v;
                }
                const double err = std::abs(sum - 1.0);
                if (err > worst_err) {
                    worst_err = err;
                    worst_layer = l + 1;
                    worst_head = h;
                    worst_row = i;
                }
            }
            t.heads.push_back(std::move(m));
        }
        out.push_back(std::move(t));
    }
    if (worst_err > 1e-4) {
        throw ValidationError("load_trace: row sums off by " + std::to_string(worst_err) +
                              " (worst at layer " + std::to_string(worst_layer) + ", head " +
                              std::to_string(worst_head) + ", row " + std::to_string(worst_row) +
                              ")");
    }
    return out;
}

}  // namespace avprune
