// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors
//
// Planted-map synthetic data: a stand-in for real model embeddings where
// the true base -> finetuned map and the labelling head are known.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/QR>

#include "taskmat/core.hpp"
#include "taskmat/embedding_store.hpp"
#include "taskmat/probe.hpp"
#include "taskmat/random.hpp"

namespace taskmat {

enum class PlantedMapKind { rotation, random_gaussian, identity };
enum class SyntheticHeadKind { gaussian, identity_rows };

inline std::string_view to_string(PlantedMapKind k) {
    switch (k) {
        case PlantedMapKind::rotation: return "rotation";
        case PlantedMapKind::random_gaussian: return "random_gaussian";
        case PlantedMapKind::identity: return "identity";
    }
    return "rotation";
}

inline std::optional<PlantedMapKind> parse_map_kind(std::string_view text) {
    if (text == "rotation") return PlantedMapKind::rotation;
    if (text == "random_gaussian" || text == "gaussian") return PlantedMapKind::random_gaussian;
    if (text == "identity") return PlantedMapKind::identity;
    return std::nullopt;
}

struct SyntheticSpec {
    std::size_t d = 16;
    std::size_t k_train = 256;
    std::size_t k_test = 256;
    std::size_t num_classes = 4;
    std::size_t num_layers = 4;
    LayerIndex signal_layer = 2;
    double noise_sigma = 0.0;
    PlantedMapKind map_kind = PlantedMapKind::rotation;
    SyntheticHeadKind head_kind = SyntheticHeadKind::gaussian;
    /// Per-coordinate standard deviation of base features and noise layers.
    double feature_scale = 1.0;
    std::uint64_t seed = 0;
    std::string dataset = "synthetic";

    void validate() const {
        require(d >= 1, "synthetic: d must be >= 1");
        require(k_train >= 1 && k_test >= 1, "synthetic: k_train and k_test must be >= 1");
        require(num_classes >= 2, "synthetic: num_classes must be >= 2");
        require(num_layers >= 1, "synthetic: num_layers must be >= 1");
        require(signal_layer < num_layers, "synthetic: signal_layer must be < num_layers");
        require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "synthetic: noise_sigma must be >= 0");
        require(feature_scale > 0.0 && std::isfinite(feature_scale), "synthetic: feature_scale must be > 0");
        require(head_kind != SyntheticHeadKind::identity_rows || num_classes <= d,
                "synthetic: identity-row head needs num_classes <= d");
    }
};

struct SyntheticData {
    EmbeddingBundle base_train;
    EmbeddingBundle base_test;
    /// Finetuned bundles hold one layer, indexed num_layers - 1.
    EmbeddingBundle ft_train;
    EmbeddingBundle ft_test;
    ClassifierHead head;
    Matrix planted_map;
};

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
    Matrix m(rows, cols);
    // Row-major fill order keeps draws independent of Eigen's storage order.
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = scale * rng.normal();
        }
    }
    return m;
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian with sign fix).
inline Matrix random_rotation(Eigen::Index d, Rng& rng) {
    const Matrix g = gaussian_matrix(d, d, 1.0, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(d, d);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < d; ++i) {
        if (r(i, i) < 0.0) {
            q.col(i) = -q.col(i);
        }
    }
    return q;
}

inline Matrix make_planted_map(PlantedMapKind kind, Eigen::Index d, Rng& rng) {
    switch (kind) {
        case PlantedMapKind::rotation: return random_rotation(d, rng);
        case PlantedMapKind::random_gaussian: return gaussian_matrix(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
        case PlantedMapKind::identity: return Matrix::Identity(d, d);
    }
    return Matrix::Identity(d, d);
}

namespace detail {

inline StoredMatrix to_stored(const Matrix& m) { return m.cast<float>(); }

inline EmbeddingBundle make_bundle(const SyntheticSpec& spec, std::string_view model, std::string_view split,
                                   std::vector<LayerIndex> layers, std::vector<StoredMatrix> matrices,
                                   const Labels& labels) {
    EmbeddingBundle b;
    b.metadata = {{"dataset", spec.dataset},
                  {"model", std::string(model)},
                  {"split", std::string(split)},
                  {"token", "cls"},
                  {"generator", "planted_map"},
                  {"seed", std::to_string(spec.seed)}};
    b.num_samples = labels.size();
    b.hidden_dim = spec.d;
    b.num_classes = static_cast<std::uint32_t>(spec.num_classes);
    b.layers = std::move(layers);
    b.matrices = std::move(matrices);
    b.labels = labels;
    return b;
}

}  // namespace detail

/// Generates planted data around a caller-supplied map; datasets built with
/// the same map but different seeds share one true base -> finetuned map.
inline SyntheticData generate_synthetic(const SyntheticSpec& spec, const Matrix& planted_map) {
    spec.validate();
    const auto d = static_cast<Eigen::Index>(spec.d);
    require(planted_map.rows() == d && planted_map.cols() == d, "synthetic: planted map must be d x d");

    // Offset keeps head/data draws distinct from the map draw of the
    // single-argument overload.
    Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);

    SyntheticData out;
    out.planted_map = planted_map;
    out.head.provenance = HeadProvenance::finetuned;
    out.head.metadata = {{"dataset", spec.dataset}, {"generator", "planted_map"}};
    const auto n = static_cast<Eigen::Index>(spec.num_classes);
    if (spec.head_kind == SyntheticHeadKind::identity_rows) {
        out.head.weights = Matrix::Identity(n, d);
    } else {
        // Rounded to float so the stored head decodes exactly like this one.
        out.head.weights = gaussian_matrix(n, d, 1.0, rng).cast<float>().cast<double>();
    }
    out.head.bias = Vector::Zero(n);

    const auto final_layer = static_cast<LayerIndex>(spec.num_layers - 1);
    auto make_split = [&](std::size_t k, std::string_view split, EmbeddingBundle& base, EmbeddingBundle& ft) {
        const auto rows = static_cast<Eigen::Index>(k);
        // Features go through float first so every consumer sees the stored values.
        const Matrix features = gaussian_matrix(rows, d, spec.feature_scale, rng).cast<float>().cast<double>();
        const Matrix clean = features * planted_map.transpose();
        const StoredMatrix clean_stored = detail::to_stored(clean);
        const Labels labels = predict(out.head, clean_stored.cast<double>());

        std::vector<StoredMatrix> layers;
        std::vector<LayerIndex> indices;
        for (std::size_t layer = 0; layer < spec.num_layers; ++layer) {
            indices.push_back(static_cast<LayerIndex>(layer));
            if (layer == spec.signal_layer) {
                layers.push_back(detail::to_stored(features));
            } else {
                layers.push_back(detail::to_stored(gaussian_matrix(rows, d, spec.feature_scale, rng)));
            }
        }
        StoredMatrix target = clean_stored;
        if (spec.noise_sigma > 0.0) {
            target = detail::to_stored(clean + gaussian_matrix(rows, d, spec.noise_sigma, rng));
        }
        base = detail::make_bundle(spec, "synthetic-base", split, std::move(indices), std::move(layers), labels);
        ft = detail::make_bundle(spec, "synthetic-finetuned", split, {final_layer}, {std::move(target)}, labels);
    };
    make_split(spec.k_train, "train", out.base_train, out.ft_train);
    make_split(spec.k_test, "test", out.base_test, out.ft_test);
    return out;
}

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng map_rng(spec.seed);
    const Matrix map = make_planted_map(spec.map_kind, static_cast<Eigen::Index>(spec.d), map_rng);
    return generate_synthetic(spec, map);
}

}  // namespace taskmat
