// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors

#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "taskmat/core.hpp"
#include "taskmat/embedding_store.hpp"
#include "taskmat/probe.hpp"
#include "taskmat/solver.hpp"

namespace taskmat {

enum class Method { task_matrix, linear_probe, base_with_ft_head, finetuned_reference };

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::task_matrix: return "task_matrix";
        case Method::linear_probe: return "linear_probe";
        case Method::base_with_ft_head: return "base_with_ft_head";
        case Method::finetuned_reference: return "finetuned_reference";
    }
    return "task_matrix";
}

inline std::optional<Method> parse_method(std::string_view text) {
    for (auto m : {Method::task_matrix, Method::linear_probe, Method::base_with_ft_head,
                   Method::finetuned_reference}) {
        if (to_string(m) == text) {
            return m;
        }
    }
    return std::nullopt;
}

inline bool is_layer_dependent(Method m) {
    return m == Method::task_matrix || m == Method::base_with_ft_head;
}

struct EvalResult {
    Method method = Method::task_matrix;
    std::optional<LayerIndex> layer;
    double accuracy = 0.0;
    std::size_t num_test = 0;
    std::string dataset;

    friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

/// Layers whose accuracy is within this distance of the best are all
/// reported as best (0.05 percentage points).
inline constexpr double kBestLayerTolerance = 0.0005;

struct SweepResult {
    std::map<LayerIndex, EvalResult> per_layer;
    std::map<LayerIndex, FitDiagnostics> diagnostics;
    std::vector<LayerIndex> best_layers;

    double best_accuracy() const { return per_layer.at(best_layers.front()).accuracy; }
};

struct AggregateResult {
    std::size_t n_runs = 0;
    double mean = 0.0;
    double half_width = 0.0;
};

inline double accuracy(const Labels& predicted, const Labels& gold) {
    if (predicted.size() != gold.size()) {
        throw DimensionMismatch("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                                std::to_string(gold.size()) + " labels");
    }
    require(!gold.empty(), "accuracy: empty label vector");
    std::size_t hits = 0;
    for (std::size_t j = 0; j < gold.size(); ++j) {
        hits += predicted[j] == gold[j] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(gold.size());
}

/// Decodes W h through the head: argmax over V (W h) + b.
inline EvalResult evaluate_task_matrix(const TaskMatrix& tm, const ClassifierHead& head,
                                       const EmbeddingBundle& test, LayerIndex layer) {
    if (tm.d_in() != static_cast<Eigen::Index>(test.hidden_dim)) {
        throw DimensionMismatch("task matrix input dimension " + std::to_string(tm.d_in()) +
                                " != bundle dimension " + std::to_string(test.hidden_dim));
    }
    if (tm.d_out() != head.hidden_dim()) {
        throw DimensionMismatch("task matrix output dimension " + std::to_string(tm.d_out()) +
                                " != head dimension " + std::to_string(head.hidden_dim()));
    }
    const Matrix mapped = apply_map(tm, test.layer_matrix(layer));
    EvalResult r;
    r.method = Method::task_matrix;
    r.layer = layer;
    r.accuracy = accuracy(predict(head, mapped), test.labels);
    r.num_test = test.labels.size();
    r.dataset = test.dataset();
    return r;
}

/// Reads base representations straight through the finetuned head, i.e.
/// the task matrix fixed to the identity.
inline EvalResult evaluate_base_with_ft_head(const ClassifierHead& head, const EmbeddingBundle& test,
                                             LayerIndex layer) {
    auto r = evaluate_task_matrix(TaskMatrix::identity(static_cast<Eigen::Index>(test.hidden_dim), layer), head,
                                  test, layer);
    r.method = Method::base_with_ft_head;
    return r;
}

/// Head applied to the finetuned model's own final-layer representations.
inline EvalResult evaluate_finetuned_reference(const ClassifierHead& head, const EmbeddingBundle& ft_test) {
    EvalResult r;
    r.method = Method::finetuned_reference;
    r.accuracy = accuracy(predict(head, ft_test.layer_matrix(ft_test.final_layer())), ft_test.labels);
    r.num_test = ft_test.labels.size();
    r.dataset = ft_test.dataset();
    return r;
}

/// Probe head applied to the base model's final-layer representations.
inline EvalResult evaluate_probe(const ClassifierHead& probe_head, const EmbeddingBundle& base_test) {
    EvalResult r;
    r.method = Method::linear_probe;
    r.accuracy = accuracy(predict(probe_head, base_test.layer_matrix(base_test.final_layer())), base_test.labels);
    r.num_test = base_test.labels.size();
    r.dataset = base_test.dataset();
    return r;
}

/// Every layer whose accuracy is within kBestLayerTolerance of the maximum.
inline std::vector<LayerIndex> best_layers(const std::map<LayerIndex, double>& accuracy_by_layer) {
    require(!accuracy_by_layer.empty(), "best_layers: no layers");
    double top = accuracy_by_layer.begin()->second;
    for (const auto& [layer, acc] : accuracy_by_layer) {
        top = std::max(top, acc);
    }
    std::vector<LayerIndex> best;
    for (const auto& [layer, acc] : accuracy_by_layer) {
        if (acc >= top - kBestLayerTolerance) {
            best.push_back(layer);
        }
    }
    return best;
}

inline void require_aligned(const EmbeddingBundle& base, const EmbeddingBundle& finetuned, const std::string& what) {
    if (base.num_samples != finetuned.num_samples) {
        throw DimensionMismatch(what + ": base bundle has " + std::to_string(base.num_samples) +
                                " samples, finetuned bundle has " + std::to_string(finetuned.num_samples));
    }
    if (base.labels != finetuned.labels) {
        throw ValidationError(what + ": base and finetuned bundles carry different labels (misaligned rows)");
    }
}

/// Fits and evaluates one task matrix per base layer.
inline SweepResult layer_sweep(const EmbeddingBundle& base_train, const EmbeddingBundle& ft_train,
                               const EmbeddingBundle& base_test, const ClassifierHead& head, double lambda) {
    require_aligned(base_train, ft_train, "layer_sweep");
    if (base_train.layers != base_test.layers || base_train.hidden_dim != base_test.hidden_dim) {
        throw DimensionMismatch("layer_sweep: train and test bundles must share layers and hidden dimension");
    }
    const Matrix target = ft_train.layer_matrix(ft_train.final_layer());

    SweepResult sweep;
    std::map<LayerIndex, double> acc;
    for (LayerIndex layer : base_train.layers) {
        auto fit = fit_task_matrix(base_train.layer_matrix(layer), target, lambda, layer);
        auto eval = evaluate_task_matrix(fit.map, head, base_test, layer);
        acc[layer] = eval.accuracy;
        sweep.per_layer.emplace(layer, std::move(eval));
        sweep.diagnostics.emplace(layer, fit.diagnostics);
    }
    sweep.best_layers = best_layers(acc);
    return sweep;
}

/// Two-sided 95% Student-t quantile with `dof` degrees of freedom.
inline double t_quantile_975(std::size_t dof) {
    require(dof >= 1, "t quantile needs at least one degree of freedom");
    boost::math::students_t dist(static_cast<double>(dof));
    return boost::math::quantile(dist, 0.975);
}

/// Mean and 95% CI half-width t_{0.975, n-1} * s / sqrt(n) over runs.
inline AggregateResult aggregate_ci(const std::vector<double>& values) {
    require(!values.empty(), "aggregate_ci: no runs");
    AggregateResult out;
    out.n_runs = values.size();
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() == 1) {
        return out;
    }
    double ss = 0.0;
    for (double v : values) {
        ss += (v - out.mean) * (v - out.mean);
    }
    const double n = static_cast<double>(values.size());
    const double sd = std::sqrt(ss / (n - 1.0));
    out.half_width = t_quantile_975(values.size() - 1) * sd / std::sqrt(n);
    return out;
}

}  // namespace taskmat
