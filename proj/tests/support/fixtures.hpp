// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "taskmat/taskmat.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using namespace taskmat;

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("taskmat-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::vector<unsigned char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
void put_le(std::vector<unsigned char>& bytes, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes.push_back(static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
    }
}

template <typename T>
void set_le(std::vector<unsigned char>& bytes, std::size_t offset, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes[offset + i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
    }
}

inline std::uint32_t get_u32(const std::vector<unsigned char>& bytes, std::size_t offset) {
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
    return v;
}

inline StoredMatrix random_stored(std::size_t rows, std::size_t cols, Rng& rng) {
    StoredMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = static_cast<float>(rng.normal() * 10.0);
        }
    }
    return m;
}

inline EmbeddingBundle random_bundle(Rng& rng) {
    EmbeddingBundle b;
    b.num_samples = 1 + rng.below(12);
    b.hidden_dim = 1 + rng.below(9);
    b.num_classes = static_cast<std::uint32_t>(2 + rng.below(5));
    const auto num_layers = 1 + rng.below(4);
    LayerIndex next = static_cast<LayerIndex>(rng.below(3));
    for (std::uint64_t i = 0; i < num_layers; ++i) {
        b.layers.push_back(next);
        next += 1 + static_cast<LayerIndex>(rng.below(3));
        b.matrices.push_back(random_stored(b.num_samples, b.hidden_dim, rng));
    }
    for (std::uint64_t j = 0; j < b.num_samples; ++j) {
        b.labels.push_back(static_cast<Label>(rng.below(b.num_classes)));
    }
    b.metadata = {{"dataset", "ds" + std::to_string(rng.below(100))}, {"split", "train"}, {"note", "\xc3\xa9t\xc3\xa9"}};
    return b;
}

inline ClassifierHead random_head(Rng& rng) {
    ClassifierHead h;
    const auto n = static_cast<std::size_t>(2 + rng.below(6));
    const auto d = static_cast<std::size_t>(1 + rng.below(10));
    h.weights = random_stored(n, d, rng).cast<double>();
    h.bias = random_stored(n, 1, rng).cast<double>();
    h.provenance = static_cast<HeadProvenance>(rng.below(3));
    h.metadata = {{"dataset", "ds"}, {"seed", std::to_string(rng.below(1000))}};
    return h;
}

inline TaskMatrix random_task_matrix(Rng& rng) {
    TaskMatrix tm;
    const auto rows = static_cast<std::size_t>(1 + rng.below(10));
    const auto cols = static_cast<std::size_t>(1 + rng.below(10));
    tm.weights = random_stored(rows, cols, rng).cast<double>();
    tm.source_layer = static_cast<LayerIndex>(rng.below(24));
    tm.lambda = rng.below(2) ? 0.0 : static_cast<double>(static_cast<float>(rng.uniform()));
    tm.k_train = rng.below(5000);
    tm.rank_estimate = static_cast<std::size_t>(rng.below(10));
    return tm;
}

/// A least-squares instance for the pseudoinverse comparison. Every third
/// instance is made rank deficient with exactly repeated or zeroed columns.
struct LsInstance {
    Matrix x;
    Matrix y;
    bool rank_deficient = false;
};

inline LsInstance least_squares_instance(std::uint64_t seed) {
    Rng rng(seed);
    const auto k = static_cast<Eigen::Index>(3 + rng.below(18));  // 3..20
    const auto d = static_cast<Eigen::Index>(2 + rng.below(9));   // 2..10
    const auto d_out = static_cast<Eigen::Index>(1 + rng.below(6));
    LsInstance inst;
    inst.x = gaussian_matrix(k, d, 1.0, rng);
    inst.y = gaussian_matrix(k, d_out, 1.0, rng);
    if (seed % 3 == 0) {
        inst.rank_deficient = true;
        const auto src = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(d)));
        for (Eigen::Index c = 0; c < d; ++c) {
            if (c == src) continue;
            if (rng.below(2)) {
                inst.x.col(c) = inst.x.col(src);
            } else {
                inst.x.col(c).setZero();
            }
        }
    } else if (seed % 3 == 1) {
        // Duplicate rows: rank limited by the number of distinct rows.
        const auto distinct = std::max<Eigen::Index>(1, std::min(k, d) - 1);
        for (Eigen::Index r = distinct; r < k; ++r) {
            inst.x.row(r) = inst.x.row(r % distinct);
        }
        inst.rank_deficient = true;
    }
    return inst;
}

}  // namespace fixtures
