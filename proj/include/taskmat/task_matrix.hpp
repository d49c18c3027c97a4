// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors

#pragma once

#include <cstdint>

#include "taskmat/core.hpp"

namespace taskmat {

/// A fitted linear map from base representations to finetuned ones.
///
/// Orientation is always base -> finetuned: `weights` is d_out x d_in and a
/// mapped sample is `weights * x`. Consumers (apply_map, evaluation, the
/// TMTX format) all rely on this convention.
struct TaskMatrix {
    Matrix weights;
    LayerIndex source_layer = 0;
    double lambda = 0.0;
    std::uint64_t k_train = 0;
    std::uint64_t rank_estimate = 0;

    Eigen::Index d_out() const { return weights.rows(); }
    Eigen::Index d_in() const { return weights.cols(); }

    static TaskMatrix identity(Eigen::Index dim, LayerIndex layer = 0) {
        TaskMatrix tm;
        tm.weights = Matrix::Identity(dim, dim);
        tm.source_layer = layer;
        tm.rank_estimate = static_cast<std::uint64_t>(dim);
        return tm;
    }

    void validate() const {
        require(weights.rows() >= 1 && weights.cols() >= 1, "task matrix: weights must be non-empty");
        require(all_finite(weights), "task matrix: weights contain non-finite entries");
        require(lambda >= 0.0 && std::isfinite(lambda), "task matrix: lambda must be finite and >= 0");
    }
};

}  // namespace taskmat
