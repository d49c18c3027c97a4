// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "taskmat/core.hpp"
#include "taskmat/task_matrix.hpp"

namespace taskmat {

struct FitDiagnostics {
    /// ||X W^T - Y||_F of the returned map on the training data.
    double training_residual_fro = 0.0;
    std::uint64_t rank_estimate = 0;
    double largest_singular_value = 0.0;
    /// Smallest singular value kept by the truncation rule (0 when rank is 0).
    double smallest_retained_singular_value = 0.0;
    double truncation_threshold = 0.0;
};

struct FitResult {
    TaskMatrix map;
    FitDiagnostics diagnostics;
};

/// Fits W minimizing sum_j ||W x_j - y_j||^2 + lambda ||W||_F^2.
///
/// `base` is k x d_in (one sample per row), `target` is k x d_out. The solve
/// goes through a thin SVD X = U S V^T. Singular values at or below
/// s_max * max(k, d_in) * eps are treated as zero, which yields the
/// minimal-norm solution whenever X is rank deficient or k < d_in. The kept
/// directions are weighted by s / (s^2 + lambda); lambda = 0 reduces this to
/// the pseudoinverse.
inline FitResult fit_task_matrix(const Matrix& base, const Matrix& target, double lambda,
                                 LayerIndex source_layer = 0) {
    if (base.rows() != target.rows()) {
        throw DimensionMismatch("fit_task_matrix: base has " + std::to_string(base.rows()) + " rows, target has " +
                                std::to_string(target.rows()));
    }
    require(base.rows() >= 1, "fit_task_matrix: need at least one sample");
    require(base.cols() >= 1 && target.cols() >= 1, "fit_task_matrix: empty representation dimension");
    require(std::isfinite(lambda) && lambda >= 0.0, "fit_task_matrix: lambda must be finite and >= 0");
    require(all_finite(base), "fit_task_matrix: base representations contain non-finite values");
    require(all_finite(target), "fit_task_matrix: target representations contain non-finite values");

    const Eigen::Index k = base.rows();
    const Eigen::Index d_in = base.cols();

    // Tall systems are reduced to the d_in x d_in triangular factor first:
    // X = Q R gives the same singular values and U^T Y = U_R^T (Q^T Y).
    Matrix reduced_base;
    Matrix reduced_target;
    const bool tall = k > d_in;
    if (tall) {
        Eigen::HouseholderQR<Matrix> qr(base);
        reduced_base = qr.matrixQR().topRows(d_in).triangularView<Eigen::Upper>();
        reduced_target = (qr.householderQ().adjoint() * target).topRows(d_in);
    }
    const Matrix& design = tall ? reduced_base : base;
    const Matrix& response = tall ? reduced_target : target;

    Eigen::BDCSVD<Matrix> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sigma = svd.singularValues();

    FitDiagnostics diag;
    diag.largest_singular_value = sigma.size() > 0 ? sigma(0) : 0.0;
    diag.truncation_threshold = diag.largest_singular_value * static_cast<double>(std::max(k, d_in)) *
                                std::numeric_limits<double>::epsilon();

    Eigen::Index rank = 0;
    while (rank < sigma.size() && sigma(rank) > diag.truncation_threshold) {
        ++rank;
    }
    diag.rank_estimate = static_cast<std::uint64_t>(rank);
    diag.smallest_retained_singular_value = rank > 0 ? sigma(rank - 1) : 0.0;

    Matrix weights_t = Matrix::Zero(d_in, target.cols());
    if (rank > 0) {
        Vector filter(rank);
        for (Eigen::Index i = 0; i < rank; ++i) {
            const double s = sigma(i);
            filter(i) = s / (s * s + lambda);
        }
        // W^T = V_r diag(filter) U_r^T Y
        const Matrix projected = svd.matrixU().leftCols(rank).transpose() * response;
        weights_t.noalias() = svd.matrixV().leftCols(rank) * (filter.asDiagonal() * projected);
    }

    FitResult result;
    result.map.weights = weights_t.transpose();
    result.map.source_layer = source_layer;
    result.map.lambda = lambda;
    result.map.k_train = static_cast<std::uint64_t>(k);
    result.map.rank_estimate = diag.rank_estimate;
    diag.training_residual_fro = (base * weights_t - target).norm();
    result.diagnostics = diag;
    return result;
}

/// Maps every row: output row j is W x_j.
inline Matrix apply_map(const TaskMatrix& tm, const Matrix& base) {
    if (base.cols() != tm.d_in()) {
        throw DimensionMismatch("apply_map: representations have " + std::to_string(base.cols()) +
                                " columns, task matrix expects " + std::to_string(tm.d_in()));
    }
    Matrix out = base * tm.weights.transpose();
    require(all_finite(out), "apply_map: non-finite output");
    return out;
}

/// Mean squared residual (1/k) sum_j ||W x_j - y_j||^2.
inline double residual_frobenius(const TaskMatrix& tm, const Matrix& base, const Matrix& target) {
    if (base.rows() != target.rows() || base.cols() != tm.d_in() || target.cols() != tm.d_out()) {
        throw DimensionMismatch("residual_frobenius: shapes " + shape_string(base.rows(), base.cols()) + ", " +
                                shape_string(target.rows(), target.cols()) + " incompatible with " +
                                shape_string(tm.d_out(), tm.d_in()) + " map");
    }
    require(base.rows() >= 1, "residual_frobenius: need at least one sample");
    return (base * tm.weights.transpose() - target).squaredNorm() / static_cast<double>(base.rows());
}

}  // namespace taskmat
