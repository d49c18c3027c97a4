// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors
//
// Linear probe baseline: multinomial logistic regression on frozen
// representations, trained by full-batch gradient descent.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "taskmat/core.hpp"
#include "taskmat/embedding_store.hpp"
#include "taskmat/random.hpp"

namespace taskmat {

/// Numerically stable softmax (max-subtracted).
inline Vector softmax(const Vector& logits) {
    require(logits.size() >= 1, "softmax: empty input");
    require(all_finite(logits), "softmax: non-finite input");
    const double top = logits.maxCoeff();
    Vector e = (logits.array() - top).exp().matrix();
    return e / e.sum();
}

/// Class with the largest logit; ties go to the lowest index.
template <typename Derived>
Label argmax_lowest(const Eigen::MatrixBase<Derived>& row) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < row.size(); ++c) {
        if (row(c) > row(best)) {
            best = c;
        }
    }
    return static_cast<Label>(best);
}

inline Matrix logits(const ClassifierHead& head, const Matrix& reps) {
    if (reps.cols() != head.hidden_dim()) {
        throw DimensionMismatch("head expects dimension " + std::to_string(head.hidden_dim()) +
                                ", representations have " + std::to_string(reps.cols()));
    }
    Matrix z = reps * head.weights.transpose();
    z.rowwise() += head.bias.transpose();
    return z;
}

inline Labels predict(const ClassifierHead& head, const Matrix& reps) {
    const Matrix z = logits(head, reps);
    Labels out(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index j = 0; j < z.rows(); ++j) {
        out[static_cast<std::size_t>(j)] = argmax_lowest(z.row(j));
    }
    return out;
}

struct LossAndGradient {
    double loss = 0.0;
    Matrix grad_weights;  // N x d
    Vector grad_bias;     // N
};

/// Mean cross-entropy of softmax(V h + b) plus (l2/2) ||V||_F^2, with its
/// exact gradient.
inline LossAndGradient cross_entropy_loss(const Matrix& weights, const Vector& bias, const Matrix& reps,
                                          const Labels& labels, double l2_penalty = 0.0) {
    const Eigen::Index n = weights.rows();
    if (bias.size() != n || reps.cols() != weights.cols()) {
        throw DimensionMismatch("cross_entropy_loss: weights " + shape_string(weights.rows(), weights.cols()) +
                                ", bias " + std::to_string(bias.size()) + ", representations " +
                                shape_string(reps.rows(), reps.cols()));
    }
    if (static_cast<std::size_t>(reps.rows()) != labels.size()) {
        throw DimensionMismatch("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(reps.rows()) + " samples");
    }
    require(reps.rows() >= 1, "cross_entropy_loss: need at least one sample");

    Matrix z = reps * weights.transpose();
    z.rowwise() += bias.transpose();

    double total = 0.0;
    for (Eigen::Index j = 0; j < z.rows(); ++j) {
        const Label y = labels[static_cast<std::size_t>(j)];
        if (y >= static_cast<Label>(n)) {
            throw ValidationError("cross_entropy_loss: label " + std::to_string(y) + " out of range for " +
                                  std::to_string(n) + " classes");
        }
        auto row = z.row(j);
        Eigen::Index arg = 0;
        const double top = row.maxCoeff(&arg);
        // log1p over the non-max terms keeps tiny losses from rounding to zero.
        double tail = 0.0;
        for (Eigen::Index c = 0; c < row.size(); ++c) {
            if (c != arg) tail += std::exp(row(c) - top);
        }
        const double lse = top + std::log1p(tail);
        total += lse - row(y);
        row = (row.array() - lse).exp().matrix();
        row(y) -= 1.0;
    }
    const double inv_k = 1.0 / static_cast<double>(z.rows());

    LossAndGradient out;
    out.loss = total * inv_k + 0.5 * l2_penalty * weights.squaredNorm();
    out.grad_weights = inv_k * (z.transpose() * reps) + l2_penalty * weights;
    out.grad_bias = inv_k * z.colwise().sum().transpose();
    return out;
}

struct ProbeConfig {
    double learning_rate = 1.0;
    std::size_t max_iters = 2000;
    double grad_tol = 1e-6;
    double l2_penalty = 0.0;
    std::uint64_t seed = 0;
    /// Std-dev of the random starting weights; 0 starts from V = 0, b = 0
    /// and makes the seed irrelevant.
    double init_scale = 0.0;

    void validate() const {
        require(learning_rate > 0.0 && std::isfinite(learning_rate), "probe: learning_rate must be > 0");
        require(max_iters >= 1, "probe: max_iters must be >= 1");
        require(grad_tol > 0.0, "probe: grad_tol must be > 0");
        require(l2_penalty >= 0.0, "probe: l2_penalty must be >= 0");
        require(init_scale >= 0.0, "probe: init_scale must be >= 0");
    }
};

struct ProbeModel {
    ClassifierHead head;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::size_t iterations_used = 0;
    bool converged = false;
    /// Loss after each accepted step, starting with the initial loss.
    std::vector<double> loss_trace;
    std::vector<std::string> warnings;
};

/// Full-batch gradient descent with Armijo backtracking.
///
/// Each iteration starts from `learning_rate` and halves the step until
/// the loss drops by at least 1e-4 * step * ||grad||^2. Stops once the
/// gradient infinity-norm is below `grad_tol`, after `max_iters` accepted
/// steps, or when no step size makes progress.
inline ProbeModel fit_linear_probe(const Matrix& reps, const Labels& labels, std::size_t num_classes,
                                   const ProbeConfig& config = {}) {
    config.validate();
    require(num_classes >= 2, "probe: need at least two classes");
    require(static_cast<std::size_t>(reps.rows()) == labels.size(), "probe: labels/representations mismatch");
    require(labels.size() >= num_classes, "probe: need at least as many samples as classes");
    require(all_finite(reps), "probe: representations contain non-finite values");

    const auto n = static_cast<Eigen::Index>(num_classes);
    const Eigen::Index d = reps.cols();

    ProbeModel model;
    std::set<Label> present(labels.begin(), labels.end());
    for (Label y : labels) {
        require(y < num_classes, "probe: label " + std::to_string(y) + " out of range");
    }
    if (present.size() == 1) {
        model.warnings.push_back("degenerate training set: every sample has class " +
                                 std::to_string(*present.begin()));
    }

    Matrix weights = Matrix::Zero(n, d);
    Vector bias = Vector::Zero(n);
    if (config.init_scale > 0.0) {
        Rng rng(config.seed);
        for (Eigen::Index i = 0; i < weights.size(); ++i) {
            weights.data()[i] = config.init_scale * rng.normal();
        }
        for (Eigen::Index i = 0; i < bias.size(); ++i) {
            bias(i) = config.init_scale * rng.normal();
        }
    }

    constexpr double kArmijo = 1e-4;
    constexpr double kMinStep = 1e-20;

    auto current = cross_entropy_loss(weights, bias, reps, labels, config.l2_penalty);
    model.initial_loss = current.loss;
    model.loss_trace.push_back(current.loss);

    while (model.iterations_used < config.max_iters) {
        const double grad_inf =
            std::max(current.grad_weights.cwiseAbs().maxCoeff(), current.grad_bias.cwiseAbs().maxCoeff());
        if (grad_inf < config.grad_tol) {
            model.converged = true;
            break;
        }
        const double grad_sq = current.grad_weights.squaredNorm() + current.grad_bias.squaredNorm();
        double step = config.learning_rate;
        bool accepted = false;
        while (step >= kMinStep) {
            Matrix w_try = weights - step * current.grad_weights;
            Vector b_try = bias - step * current.grad_bias;
            auto trial = cross_entropy_loss(w_try, b_try, reps, labels, config.l2_penalty);
            if (trial.loss <= current.loss - kArmijo * step * grad_sq) {
                weights = std::move(w_try);
                bias = std::move(b_try);
                current = std::move(trial);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // Flat to machine precision along the gradient.
            model.converged = true;
            break;
        }
        ++model.iterations_used;
        model.loss_trace.push_back(current.loss);
    }

    model.final_loss = current.loss;
    model.head.weights = std::move(weights);
    model.head.bias = std::move(bias);
    model.head.provenance = HeadProvenance::probe;
    return model;
}

}  // namespace taskmat
