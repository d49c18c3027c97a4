// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "taskmat/errors.hpp"

namespace taskmat {

using LayerIndex = std::uint32_t;
using Label = std::uint32_t;
using Labels = std::vector<Label>;

/// Working precision for all fitting and evaluation.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Storage precision for embedding payloads; matches the on-disk layout.
using StoredMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.derived().array().isFinite().all();
}

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw ValidationError(message);
    }
}

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace taskmat
