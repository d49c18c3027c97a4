// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors
//
// Embedding bundles, classifier heads and their binary file formats.
//
// All three formats (TMEB bundles, TMHD heads, TMTX task matrices) share a
// preamble: 4-byte magic, u32 version, u32 metadata length, UTF-8 JSON
// metadata. Integers are little-endian; numeric payloads are IEEE-754
// float32, row-major.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "taskmat/core.hpp"
#include "taskmat/random.hpp"
#include "taskmat/task_matrix.hpp"

namespace taskmat {

using Metadata = std::map<std::string, std::string>;

inline constexpr std::uint32_t kFormatVersion = 1;

/// Per-(model, dataset, split) container of per-layer representations.
///
/// Row j of every layer matrix belongs to the same sample j, and labels are
/// stored once for all layers.
struct EmbeddingBundle {
    Metadata metadata;
    std::uint64_t num_samples = 0;
    std::uint64_t hidden_dim = 0;
    std::uint32_t num_classes = 0;
    std::vector<LayerIndex> layers;
    std::vector<StoredMatrix> matrices;
    Labels labels;

    bool has_layer(LayerIndex layer) const {
        return std::binary_search(layers.begin(), layers.end(), layer);
    }

    const StoredMatrix& layer(LayerIndex layer) const {
        auto it = std::lower_bound(layers.begin(), layers.end(), layer);
        if (it == layers.end() || *it != layer) {
            throw ValidationError("bundle has no layer " + std::to_string(layer));
        }
        return matrices[static_cast<std::size_t>(it - layers.begin())];
    }

    /// Layer matrix promoted to working precision.
    Matrix layer_matrix(LayerIndex index) const { return layer(index).cast<double>(); }

    LayerIndex final_layer() const {
        require(!layers.empty(), "bundle has no layers");
        return layers.back();
    }

    std::string dataset() const {
        auto it = metadata.find("dataset");
        return it == metadata.end() ? std::string{} : it->second;
    }

    /// Throws ValidationError naming the first failing field.
    void validate() const {
        require(num_samples >= 1, "bundle.num_samples: must be >= 1");
        require(hidden_dim >= 1, "bundle.hidden_dim: must be >= 1");
        require(!layers.empty(), "bundle.layers: at least one layer required");
        require(matrices.size() == layers.size(),
                "bundle.matrices: " + std::to_string(matrices.size()) + " matrices for " +
                    std::to_string(layers.size()) + " layers");
        for (std::size_t i = 1; i < layers.size(); ++i) {
            require(layers[i - 1] < layers[i], "bundle.layers: indices must be strictly increasing");
        }
        require(labels.size() == num_samples,
                "bundle.labels: length " + std::to_string(labels.size()) + " != num_samples " +
                    std::to_string(num_samples));
        for (std::size_t j = 0; j < labels.size(); ++j) {
            require(labels[j] < num_classes, "bundle.labels: label " + std::to_string(labels[j]) + " at row " +
                                                 std::to_string(j) + " outside [0, " +
                                                 std::to_string(num_classes) + ")");
        }
        for (std::size_t i = 0; i < matrices.size(); ++i) {
            const auto& m = matrices[i];
            require(static_cast<std::uint64_t>(m.rows()) == num_samples &&
                        static_cast<std::uint64_t>(m.cols()) == hidden_dim,
                    "bundle.matrices: layer " + std::to_string(layers[i]) + " has shape " +
                        shape_string(m.rows(), m.cols()) + ", expected " +
                        shape_string(static_cast<Eigen::Index>(num_samples),
                                     static_cast<Eigen::Index>(hidden_dim)));
            for (Eigen::Index r = 0; r < m.rows(); ++r) {
                if (!all_finite(m.row(r))) {
                    throw ValidationError("bundle.matrices: layer " + std::to_string(layers[i]) + " row " +
                                          std::to_string(r) + " has a non-finite entry");
                }
            }
        }
    }

    friend bool operator==(const EmbeddingBundle& a, const EmbeddingBundle& b) {
        if (a.metadata != b.metadata || a.num_samples != b.num_samples || a.hidden_dim != b.hidden_dim ||
            a.num_classes != b.num_classes || a.layers != b.layers || a.labels != b.labels ||
            a.matrices.size() != b.matrices.size()) {
            return false;
        }
        for (std::size_t i = 0; i < a.matrices.size(); ++i) {
            const auto& x = a.matrices[i];
            const auto& y = b.matrices[i];
            if (x.rows() != y.rows() || x.cols() != y.cols() ||
                std::memcmp(x.data(), y.data(), sizeof(float) * static_cast<std::size_t>(x.size())) != 0) {
                return false;
            }
        }
        return true;
    }
};

enum class HeadProvenance { finetuned, frozen_random, probe };

inline std::string_view to_string(HeadProvenance p) {
    switch (p) {
        case HeadProvenance::finetuned: return "finetuned";
        case HeadProvenance::frozen_random: return "frozen_random";
        case HeadProvenance::probe: return "probe";
    }
    return "finetuned";
}

inline std::optional<HeadProvenance> parse_provenance(std::string_view text) {
    if (text == "finetuned") return HeadProvenance::finetuned;
    if (text == "frozen_random") return HeadProvenance::frozen_random;
    if (text == "probe") return HeadProvenance::probe;
    return std::nullopt;
}

/// Linear decoder producing logits `weights * h + bias`.
struct ClassifierHead {
    Matrix weights;  // N x d
    Vector bias;     // N
    HeadProvenance provenance = HeadProvenance::finetuned;
    Metadata metadata;

    Eigen::Index num_classes() const { return weights.rows(); }
    Eigen::Index hidden_dim() const { return weights.cols(); }

    void validate() const {
        require(weights.rows() >= 2, "head.num_classes: must be >= 2");
        require(weights.cols() >= 1, "head.hidden_dim: must be >= 1");
        require(bias.size() == weights.rows(), "head.bias: length " + std::to_string(bias.size()) +
                                                   " != num_classes " + std::to_string(weights.rows()));
        require(all_finite(weights), "head.weights: non-finite entry");
        require(all_finite(bias), "head.bias: non-finite entry");
    }

    friend bool operator==(const ClassifierHead& a, const ClassifierHead& b) {
        return a.provenance == b.provenance && a.metadata == b.metadata && a.weights.rows() == b.weights.rows() &&
               a.weights.cols() == b.weights.cols() && a.bias.size() == b.bias.size() &&
               a.weights == b.weights && a.bias == b.bias;
    }
};

namespace detail {

inline constexpr std::array<char, 4> kBundleMagic{'T', 'M', 'E', 'B'};
inline constexpr std::array<char, 4> kHeadMagic{'T', 'M', 'H', 'D'};
inline constexpr std::array<char, 4> kMatrixMagic{'T', 'M', 'T', 'X'};

template <typename T>
T byteswap_value(T value) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
}

template <typename T>
T to_little(T value) {
    if constexpr (std::endian::native == std::endian::big) {
        return byteswap_value(value);
    } else {
        return value;
    }
}

/// Multiplies payload dimensions, rejecting products that overflow.
inline std::uint64_t checked_product(std::initializer_list<std::uint64_t> factors, const std::string& where) {
    std::uint64_t total = 1;
    for (auto f : factors) {
        if (f != 0 && total > std::numeric_limits<std::uint64_t>::max() / f) {
            throw LayoutMismatch(where + ": declared payload size overflows");
        }
        total *= f;
    }
    return total;
}

class BinaryWriter {
public:
    explicit BinaryWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
        if (!out_) {
            throw IoError("cannot open " + path.string() + " for writing");
        }
    }

    template <typename T>
    void put(T value) {
        value = to_little(value);
        out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
    }

    void bytes(std::string_view data) { out_.write(data.data(), static_cast<std::streamsize>(data.size())); }

    void magic(const std::array<char, 4>& m) { out_.write(m.data(), 4); }

    template <typename Derived>
    void floats(const Eigen::DenseBase<Derived>& values) {
        // Row-major traversal regardless of the source storage order.
        const auto& m = values.derived();
        std::vector<float> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                row[static_cast<std::size_t>(c)] = to_little(static_cast<float>(m(r, c)));
            }
            out_.write(reinterpret_cast<const char*>(row.data()),
                       static_cast<std::streamsize>(row.size() * sizeof(float)));
        }
    }

    void metadata(const nlohmann::json& meta) {
        const std::string text = meta.dump();
        if (text.size() > std::numeric_limits<std::uint32_t>::max()) {
            throw ValidationError("metadata block too large");
        }
        put(static_cast<std::uint32_t>(text.size()));
        bytes(text);
    }

    void finish() {
        out_.flush();
        if (!out_) {
            throw IoError("write failed for " + path_.string());
        }
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
        std::error_code ec;
        if (!std::filesystem::is_regular_file(path, ec) || !in_) {
            throw IoError("cannot open " + path.string());
        }
        remaining_ = std::filesystem::file_size(path, ec);
        if (ec) {
            throw IoError("cannot stat " + path.string());
        }
    }

    std::uint64_t remaining() const { return remaining_; }

    void need(std::uint64_t count, std::string_view what) {
        if (count > remaining_) {
            throw TruncatedPayload(path_.string() + ": file ends inside " + std::string(what) + " (need " +
                                   std::to_string(count) + " bytes, " + std::to_string(remaining_) +
                                   " left)");
        }
    }

    void raw(char* dst, std::uint64_t count, std::string_view what) {
        need(count, what);
        in_.read(dst, static_cast<std::streamsize>(count));
        if (!in_) {
            throw IoError("read failed for " + path_.string());
        }
        remaining_ -= count;
    }

    template <typename T>
    T get(std::string_view what) {
        T value{};
        raw(reinterpret_cast<char*>(&value), sizeof(T), what);
        return to_little(value);
    }

    void expect_magic(const std::array<char, 4>& expected) {
        std::array<char, 4> got{};
        raw(got.data(), 4, "magic");
        if (got != expected) {
            throw BadMagic(path_.string() + ": bad magic \"" + std::string(got.data(), 4) + "\", expected \"" +
                           std::string(expected.data(), 4) + "\"");
        }
        const auto version = get<std::uint32_t>("version");
        if (version != kFormatVersion) {
            throw UnsupportedVersion(path_.string() + ": unsupported version " + std::to_string(version));
        }
    }

    nlohmann::json metadata() {
        const auto len = get<std::uint32_t>("metadata length");
        std::string text(len, '\0');
        raw(text.data(), len, "metadata");
        nlohmann::json meta = nlohmann::json::parse(text, nullptr, false);
        if (meta.is_discarded() || !meta.is_object()) {
            throw MalformedMetadata(path_.string() + ": metadata is not a JSON object");
        }
        return meta;
    }

    /// Reads rows*cols float32 values into a row-major float matrix.
    StoredMatrix floats(std::uint64_t rows, std::uint64_t cols, std::string_view what) {
        const auto bytes = checked_product({rows, cols, sizeof(float)}, path_.string());
        need(bytes, what);
        StoredMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        raw(reinterpret_cast<char*>(m.data()), bytes, what);
        if constexpr (std::endian::native == std::endian::big) {
            for (Eigen::Index i = 0; i < m.size(); ++i) {
                m.data()[i] = byteswap_value(m.data()[i]);
            }
        }
        if (!all_finite(m)) {
            throw CorruptPayload(path_.string() + ": non-finite value in " + std::string(what));
        }
        return m;
    }

    void expect_end() {
        if (remaining_ != 0) {
            throw LayoutMismatch(path_.string() + ": " + std::to_string(remaining_) +
                                 " trailing bytes after declared payload");
        }
    }

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::uint64_t remaining_ = 0;
};

inline Metadata string_map(const nlohmann::json& meta, const std::string& where) {
    Metadata out;
    for (auto it = meta.begin(); it != meta.end(); ++it) {
        if (!it.value().is_string()) {
            throw MalformedMetadata(where + ": metadata value for \"" + it.key() + "\" is not a string");
        }
        out.emplace(it.key(), it.value().get<std::string>());
    }
    return out;
}

}  // namespace detail

inline void write_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& path) {
    bundle.validate();
    detail::BinaryWriter w(path);
    w.magic(detail::kBundleMagic);
    w.put(kFormatVersion);
    w.metadata(nlohmann::json(bundle.metadata));
    w.put(bundle.num_samples);
    w.put(bundle.hidden_dim);
    w.put(static_cast<std::uint32_t>(bundle.layers.size()));
    for (auto layer : bundle.layers) {
        w.put(static_cast<std::uint32_t>(layer));
    }
    w.put(bundle.num_classes);
    for (auto label : bundle.labels) {
        w.put(static_cast<std::uint32_t>(label));
    }
    for (const auto& m : bundle.matrices) {
        w.floats(m);
    }
    w.finish();
}

inline EmbeddingBundle read_bundle(const std::filesystem::path& path) {
    detail::BinaryReader r(path);
    const std::string where = path.string();
    r.expect_magic(detail::kBundleMagic);

    EmbeddingBundle b;
    b.metadata = detail::string_map(r.metadata(), where);
    b.num_samples = r.get<std::uint64_t>("num_samples");
    b.hidden_dim = r.get<std::uint64_t>("hidden_dim");
    const auto num_layers = r.get<std::uint32_t>("num_layers");
    if (b.num_samples == 0 || b.hidden_dim == 0 || num_layers == 0) {
        throw LayoutMismatch(where + ": num_samples, hidden_dim and num_layers must all be >= 1");
    }
    r.need(std::uint64_t{num_layers} * 4, "layer indices");
    b.layers.resize(num_layers);
    for (auto& layer : b.layers) {
        layer = r.get<std::uint32_t>("layer indices");
    }
    for (std::size_t i = 1; i < b.layers.size(); ++i) {
        if (b.layers[i - 1] >= b.layers[i]) {
            throw LayoutMismatch(where + ": layer indices not strictly increasing");
        }
    }
    b.num_classes = r.get<std::uint32_t>("num_classes");
    const auto label_bytes = detail::checked_product({b.num_samples, 4}, where);
    r.need(label_bytes, "labels");
    b.labels.resize(b.num_samples);
    for (std::size_t j = 0; j < b.labels.size(); ++j) {
        b.labels[j] = r.get<std::uint32_t>("labels");
        if (b.labels[j] >= b.num_classes) {
            throw LayoutMismatch(where + ": label " + std::to_string(b.labels[j]) + " at row " + std::to_string(j) +
                                 " outside [0, " + std::to_string(b.num_classes) + ")");
        }
    }
    const auto payload = detail::checked_product({num_layers, b.num_samples, b.hidden_dim, 4}, where);
    if (payload > r.remaining()) {
        throw TruncatedPayload(where + ": declared " + std::to_string(num_layers) + " layers of " +
                               std::to_string(b.num_samples) + "x" + std::to_string(b.hidden_dim) +
                               " floats but only " + std::to_string(r.remaining()) + " payload bytes present");
    }
    b.matrices.reserve(num_layers);
    for (auto layer : b.layers) {
        b.matrices.push_back(r.floats(b.num_samples, b.hidden_dim, "layer " + std::to_string(layer)));
    }
    r.expect_end();
    return b;
}

inline void write_head(const ClassifierHead& head, const std::filesystem::path& path) {
    head.validate();
    nlohmann::json meta(head.metadata);
    meta["provenance"] = std::string(to_string(head.provenance));
    detail::BinaryWriter w(path);
    w.magic(detail::kHeadMagic);
    w.put(kFormatVersion);
    w.metadata(meta);
    w.put(static_cast<std::uint64_t>(head.num_classes()));
    w.put(static_cast<std::uint64_t>(head.hidden_dim()));
    w.floats(head.weights);
    w.floats(head.bias.transpose());
    w.finish();
}

inline ClassifierHead read_head(const std::filesystem::path& path) {
    detail::BinaryReader r(path);
    const std::string where = path.string();
    r.expect_magic(detail::kHeadMagic);

    ClassifierHead head;
    head.metadata = detail::string_map(r.metadata(), where);
    auto prov = head.metadata.find("provenance");
    if (prov == head.metadata.end()) {
        throw MalformedMetadata(where + ": head metadata lacks \"provenance\"");
    }
    auto parsed = parse_provenance(prov->second);
    if (!parsed) {
        throw MalformedMetadata(where + ": unknown provenance \"" + prov->second + "\"");
    }
    head.provenance = *parsed;
    head.metadata.erase(prov);

    const auto n = r.get<std::uint64_t>("num_classes");
    const auto d = r.get<std::uint64_t>("hidden_dim");
    if (n < 2 || d < 1) {
        throw LayoutMismatch(where + ": head needs num_classes >= 2 and hidden_dim >= 1");
    }
    const auto payload = detail::checked_product({n, d, 4}, where) + detail::checked_product({n, 4}, where);
    if (payload > r.remaining()) {
        throw TruncatedPayload(where + ": declared " + std::to_string(n) + "x" + std::to_string(d) +
                               " head but only " + std::to_string(r.remaining()) + " payload bytes present");
    }
    head.weights = r.floats(n, d, "head weights").cast<double>();
    head.bias = r.floats(1, n, "head bias").cast<double>().transpose();
    r.expect_end();
    return head;
}

inline void write_task_matrix(const TaskMatrix& tm, const std::filesystem::path& path) {
    tm.validate();
    nlohmann::json meta = {
        {"source_layer", tm.source_layer},
        {"lambda", tm.lambda},
        {"k_train", tm.k_train},
        {"rank_estimate", tm.rank_estimate},
    };
    detail::BinaryWriter w(path);
    w.magic(detail::kMatrixMagic);
    w.put(kFormatVersion);
    w.metadata(meta);
    w.put(static_cast<std::uint64_t>(tm.d_out()));
    w.put(static_cast<std::uint64_t>(tm.d_in()));
    w.floats(tm.weights);
    w.finish();
}

inline TaskMatrix read_task_matrix(const std::filesystem::path& path) {
    detail::BinaryReader r(path);
    const std::string where = path.string();
    r.expect_magic(detail::kMatrixMagic);

    const auto meta = r.metadata();
    TaskMatrix tm;
    try {
        tm.source_layer = meta.at("source_layer").get<LayerIndex>();
        tm.lambda = meta.at("lambda").get<double>();
        tm.k_train = meta.at("k_train").get<std::uint64_t>();
        tm.rank_estimate = meta.value("rank_estimate", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw MalformedMetadata(where + ": task matrix metadata: " + e.what());
    }
    if (!(tm.lambda >= 0.0)) {
        throw MalformedMetadata(where + ": negative lambda");
    }
    const auto d_out = r.get<std::uint64_t>("d_out");
    const auto d_in = r.get<std::uint64_t>("d_in");
    if (d_out == 0 || d_in == 0) {
        throw LayoutMismatch(where + ": task matrix dimensions must be >= 1");
    }
    const auto payload = detail::checked_product({d_out, d_in, 4}, where);
    if (payload > r.remaining()) {
        throw TruncatedPayload(where + ": declared " + std::to_string(d_out) + "x" + std::to_string(d_in) +
                               " weights but only " + std::to_string(r.remaining()) + " bytes present");
    }
    tm.weights = r.floats(d_out, d_in, "task matrix weights").cast<double>();
    r.expect_end();
    return tm;
}

// ---------------------------------------------------------------------------
// Subsampling

struct SubsampleSpec {
    double fraction = 1.0;
    std::uint64_t seed = 0;
    bool stratified = true;
};

namespace detail {

inline std::size_t floor_count(double fraction, std::size_t n) {
    // Absorb representation error such as 0.29 * 100 = 28.999999999999996.
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

}  // namespace detail

/// `count` distinct indices from [0, population), returned ascending.
inline std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, std::uint64_t seed) {
    require(count <= population, "cannot draw " + std::to_string(count) + " of " + std::to_string(population) +
                                     " samples");
    std::vector<std::size_t> idx(population);
    for (std::size_t i = 0; i < population; ++i) {
        idx[i] = i;
    }
    Rng rng(seed);
    // Partial Fisher-Yates: the first `count` slots are a uniform draw.
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(population - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// Row indices retained by `spec`, ascending. Shared by every layer and by
/// companion bundles so that base/finetuned pairs stay aligned.
inline std::vector<std::size_t> subsample_indices(const Labels& labels, const SubsampleSpec& spec) {
    require(spec.fraction > 0.0 && spec.fraction <= 1.0, "subsample fraction must lie in (0, 1]");
    const std::size_t k = labels.size();
    require(k >= 1, "cannot subsample an empty bundle");
    if (!spec.stratified) {
        const auto count = detail::floor_count(spec.fraction, k);
        require(count >= 1, "subsample fraction " + std::to_string(spec.fraction) + " of " + std::to_string(k) +
                                " samples keeps none");
        return sample_indices(k, count, spec.seed);
    }

    std::map<Label, std::vector<std::size_t>> by_class;
    for (std::size_t j = 0; j < k; ++j) {
        by_class[labels[j]].push_back(j);
    }
    Rng rng(spec.seed);
    std::vector<std::size_t> kept;
    for (auto& [label, members] : by_class) {
        const auto count = detail::floor_count(spec.fraction, members.size());
        if (count == 0) {
            throw ValidationError("stratified subsample: class " + std::to_string(label) + " has " +
                                  std::to_string(members.size()) + " samples; fraction " +
                                  std::to_string(spec.fraction) + " keeps none");
        }
        for (std::size_t i = 0; i < count; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(members.size() - i));
            std::swap(members[i], members[j]);
        }
        kept.insert(kept.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(count));
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

inline EmbeddingBundle take_rows(const EmbeddingBundle& bundle, std::span<const std::size_t> rows) {
    require(!rows.empty(), "take_rows: no rows selected");
    EmbeddingBundle out;
    out.metadata = bundle.metadata;
    out.num_samples = rows.size();
    out.hidden_dim = bundle.hidden_dim;
    out.num_classes = bundle.num_classes;
    out.layers = bundle.layers;
    out.labels.reserve(rows.size());
    for (auto r : rows) {
        require(r < bundle.num_samples, "take_rows: row " + std::to_string(r) + " out of range");
        out.labels.push_back(bundle.labels[r]);
    }
    out.matrices.reserve(bundle.matrices.size());
    for (const auto& m : bundle.matrices) {
        StoredMatrix sub(static_cast<Eigen::Index>(rows.size()), m.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            sub.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
        }
        out.matrices.push_back(std::move(sub));
    }
    return out;
}

inline EmbeddingBundle subsample(const EmbeddingBundle& bundle, const SubsampleSpec& spec) {
    bundle.validate();
    const auto rows = subsample_indices(bundle.labels, spec);
    return take_rows(bundle, rows);
}

}  // namespace taskmat
