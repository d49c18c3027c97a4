// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors
//
// Experiment drivers: core method comparison, data scarcity, multitask
// grids and the sample-count (double descent) curve.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "taskmat/core.hpp"
#include "taskmat/embedding_store.hpp"
#include "taskmat/evaluate.hpp"
#include "taskmat/multitask.hpp"
#include "taskmat/probe.hpp"
#include "taskmat/solver.hpp"

namespace taskmat {

// ---------------------------------------------------------------------------
// Core comparison

struct CoreComparisonConfig {
    double lambda = 0.0;
    ProbeConfig probe;
};

struct CoreComparisonReport {
    EvalResult probe;
    SweepResult task_matrix;
    std::map<LayerIndex, EvalResult> ablation;
    std::vector<LayerIndex> ablation_best_layers;
    EvalResult finetuned;

    /// Table-shaped view: linear probe, task matrix at its best layer,
    /// base-with-FT-head at its best layer, finetuned reference.
    std::vector<EvalResult> summary_rows() const {
        return {probe, task_matrix.per_layer.at(task_matrix.best_layers.front()),
                ablation.at(ablation_best_layers.front()), finetuned};
    }

    /// Every measured row, per layer for the layer-dependent methods.
    std::vector<EvalResult> all_rows() const {
        std::vector<EvalResult> rows{probe};
        for (const auto& [layer, r] : task_matrix.per_layer) rows.push_back(r);
        for (const auto& [layer, r] : ablation) rows.push_back(r);
        rows.push_back(finetuned);
        return rows;
    }
};

inline CoreComparisonReport run_core_comparison(const EmbeddingBundle& base_train, const EmbeddingBundle& ft_train,
                                                const EmbeddingBundle& base_test, const EmbeddingBundle& ft_test,
                                                const ClassifierHead& head, const CoreComparisonConfig& config = {}) {
    require_aligned(base_train, ft_train, "core comparison (train)");
    require_aligned(base_test, ft_test, "core comparison (test)");

    CoreComparisonReport report;
    const auto probe_model = fit_linear_probe(base_train.layer_matrix(base_train.final_layer()), base_train.labels,
                                              static_cast<std::size_t>(head.num_classes()), config.probe);
    report.probe = evaluate_probe(probe_model.head, base_test);
    report.task_matrix = layer_sweep(base_train, ft_train, base_test, head, config.lambda);

    std::map<LayerIndex, double> acc;
    for (LayerIndex layer : base_test.layers) {
        auto r = evaluate_base_with_ft_head(head, base_test, layer);
        acc[layer] = r.accuracy;
        report.ablation.emplace(layer, std::move(r));
    }
    report.ablation_best_layers = best_layers(acc);
    report.finetuned = evaluate_finetuned_reference(head, ft_test);
    return report;
}

// ---------------------------------------------------------------------------
// Aggregated (multi-run) rows

struct AggregateRow {
    Method method = Method::task_matrix;
    std::optional<LayerIndex> layer;
    std::string dataset;
    AggregateResult stats;
};

/// Aggregates repeated core comparisons. Layer-dependent methods are
/// aggregated per layer and the summary keeps the layer with the best
/// mean accuracy.
struct MultiRunSummary {
    std::vector<AggregateRow> per_layer;  // task matrix and ablation, every layer
    std::vector<AggregateRow> summary;    // four rows, same order as summary_rows()
};

inline MultiRunSummary summarize_runs(const std::vector<CoreComparisonReport>& runs) {
    require(!runs.empty(), "summarize_runs: no runs");
    const std::string dataset = runs.front().finetuned.dataset;
    auto collect = [&](auto&& pick) {
        std::vector<double> values;
        for (const auto& run : runs) values.push_back(pick(run));
        return aggregate_ci(values);
    };

    MultiRunSummary out;
    auto layer_rows = [&](Method method, auto&& table) {
        std::map<LayerIndex, double> means;
        AggregateRow best;
        for (const auto& [layer, unused] : table(runs.front())) {
            AggregateRow row{method, layer, dataset,
                             collect([&](const CoreComparisonReport& r) { return table(r).at(layer).accuracy; })};
            means[layer] = row.stats.mean;
            out.per_layer.push_back(row);
        }
        const auto top = best_layers(means).front();
        for (const auto& row : out.per_layer) {
            if (row.method == method && row.layer == top) best = row;
        }
        return best;
    };

    out.summary.push_back(AggregateRow{Method::linear_probe, std::nullopt, dataset,
                                       collect([](const CoreComparisonReport& r) { return r.probe.accuracy; })});
    out.summary.push_back(layer_rows(Method::task_matrix, [](const CoreComparisonReport& r) -> const auto& {
        return r.task_matrix.per_layer;
    }));
    out.summary.push_back(layer_rows(Method::base_with_ft_head, [](const CoreComparisonReport& r) -> const auto& {
        return r.ablation;
    }));
    out.summary.push_back(AggregateRow{Method::finetuned_reference, std::nullopt, dataset,
                                       collect([](const CoreComparisonReport& r) { return r.finetuned.accuracy; })});
    return out;
}

// ---------------------------------------------------------------------------
// Data scarcity

struct ScarcityReport {
    double fraction = 1.0;
    std::vector<std::uint64_t> seeds;
    std::vector<CoreComparisonReport> runs;
    MultiRunSummary aggregate;
};

/// Per seed: one subsample of the training pairs (shared by the probe and
/// the task matrices), then a full core comparison.
inline ScarcityReport run_scarcity(const EmbeddingBundle& base_train, const EmbeddingBundle& ft_train,
                                   const EmbeddingBundle& base_test, const EmbeddingBundle& ft_test,
                                   const ClassifierHead& head, double fraction, const std::vector<std::uint64_t>& seeds,
                                   const CoreComparisonConfig& config = {}, bool stratified = true) {
    require(fraction > 0.0 && fraction <= 1.0, "scarcity: fraction must lie in (0, 1]");
    require(!seeds.empty(), "scarcity: at least one seed required");
    require_aligned(base_train, ft_train, "scarcity");

    ScarcityReport report;
    report.fraction = fraction;
    report.seeds = seeds;
    for (auto seed : seeds) {
        const auto rows = subsample_indices(base_train.labels, SubsampleSpec{fraction, seed, stratified});
        report.runs.push_back(run_core_comparison(take_rows(base_train, rows), take_rows(ft_train, rows), base_test,
                                                  ft_test, head, config));
    }
    report.aggregate = summarize_runs(report.runs);
    return report;
}

// ---------------------------------------------------------------------------
// Multitask grid

struct MultitaskDataset {
    std::string id;
    EmbeddingBundle base_train;
    EmbeddingBundle ft_train;
    EmbeddingBundle base_test;
    ClassifierHead head;
    double reference = 1.0;
};

struct MultitaskGridConfig {
    std::vector<std::size_t> sizes{1, 2};
    LayerIndex layer = 0;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    /// Subset sizes up to this are enumerated exhaustively.
    std::size_t full_enumeration_max_size = 2;
    /// Number of seeded random subsets drawn for larger sizes.
    std::size_t sampled_subsets = 10;
};

struct SubsetResult {
    std::vector<std::string> datasets;
    MultitaskReport report;
};

struct MultitaskGridReport {
    std::map<std::size_t, std::vector<SubsetResult>> by_size;

    double mean_normalized(std::size_t size) const {
        const auto& subsets = by_size.at(size);
        double sum = 0.0;
        for (const auto& s : subsets) sum += s.report.mean_normalized();
        return sum / static_cast<double>(subsets.size());
    }
};

namespace detail {

inline void combinations(std::size_t n, std::size_t s, std::size_t start, std::vector<std::size_t>& current,
                         std::vector<std::vector<std::size_t>>& out) {
    if (current.size() == s) {
        out.push_back(current);
        return;
    }
    for (std::size_t i = start; i + (s - current.size()) <= n; ++i) {
        current.push_back(i);
        combinations(n, s, i + 1, current, out);
        current.pop_back();
    }
}

inline double binomial(std::size_t n, std::size_t s) {
    double c = 1.0;
    for (std::size_t i = 0; i < s; ++i) c = c * static_cast<double>(n - i) / static_cast<double>(i + 1);
    return c;
}

}  // namespace detail

/// Index subsets of size `s` over `n` datasets, in lexicographic order.
inline std::vector<std::vector<std::size_t>> enumerate_subsets(std::size_t n, std::size_t s,
                                                               const MultitaskGridConfig& config) {
    require(s >= 1 && s <= n, "multitask grid: subset size " + std::to_string(s) + " invalid for " +
                                  std::to_string(n) + " datasets");
    std::vector<std::vector<std::size_t>> out;
    if (s <= config.full_enumeration_max_size ||
        detail::binomial(n, s) <= static_cast<double>(config.sampled_subsets)) {
        std::vector<std::size_t> current;
        detail::combinations(n, s, 0, current, out);
        return out;
    }
    std::set<std::vector<std::size_t>> drawn;
    Rng rng(config.seed + 0x51ed27ULL * s);
    while (drawn.size() < config.sampled_subsets) {
        drawn.insert(sample_indices(n, s, rng.below(~std::uint64_t{0})));
    }
    return {drawn.begin(), drawn.end()};
}

inline MultitaskGridReport run_multitask_grid(const std::vector<MultitaskDataset>& datasets,
                                              const MultitaskGridConfig& config) {
    require(!datasets.empty(), "multitask grid: no datasets");
    std::set<std::string> ids;
    for (const auto& ds : datasets) {
        require(ids.insert(ds.id).second, "multitask grid: duplicate dataset id \"" + ds.id + "\"");
        require_aligned(ds.base_train, ds.ft_train, "multitask grid (" + ds.id + ")");
    }

    MultitaskGridReport report;
    for (auto s : config.sizes) {
        for (const auto& subset : enumerate_subsets(datasets.size(), s, config)) {
            JointTrainingSet joint;
            joint.layer = config.layer;
            std::map<std::string, ClassifierHead> heads;
            std::map<std::string, MultitaskTest> tests;
            std::map<std::string, double> references;
            SubsetResult result;
            for (auto i : subset) {
                const auto& ds = datasets[i];
                joint.entries.push_back(JointEntry{ds.id, ds.base_train.layer_matrix(config.layer),
                                                   ds.ft_train.layer_matrix(ds.ft_train.final_layer())});
                heads.emplace(ds.id, ds.head);
                tests.emplace(ds.id, MultitaskTest{ds.base_test, config.layer});
                references.emplace(ds.id, ds.reference);
                result.datasets.push_back(ds.id);
            }
            const auto fit = fit_joint_task_matrix(joint, config.lambda);
            result.report = evaluate_multitask(fit.map, heads, tests, references);
            report.by_size[s].push_back(std::move(result));
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Sample-count curve

struct DoubleDescentPoint {
    LayerIndex layer = 0;
    std::size_t k = 0;
    double accuracy = 0.0;
    double test_residual = 0.0;
    double train_residual = 0.0;
    std::uint64_t rank = 0;
};

struct DoubleDescentCurve {
    std::vector<std::size_t> k_grid;
    double lambda = 0.0;
    std::vector<DoubleDescentPoint> points;

    const DoubleDescentPoint& at(LayerIndex layer, std::size_t k) const {
        for (const auto& p : points) {
            if (p.layer == layer && p.k == k) return p;
        }
        throw ValidationError("double descent curve has no point (layer " + std::to_string(layer) + ", k " +
                              std::to_string(k) + ")");
    }
};

/// Geometric grid from d/8 to 8d in steps of sqrt(2); contains k = d.
inline std::vector<std::size_t> default_k_grid(std::size_t d) {
    std::set<std::size_t> grid;
    for (int j = -6; j <= 6; ++j) {
        const double k = static_cast<double>(d) * std::pow(2.0, j / 2.0);
        grid.insert(std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(k))));
    }
    grid.insert(d);
    return {grid.begin(), grid.end()};
}

/// For each k: draws k training pairs (nested draws: one seed for all k),
/// fits per layer and evaluates on the full test split.
inline DoubleDescentCurve run_double_descent(const EmbeddingBundle& base_train, const EmbeddingBundle& ft_train,
                                             const EmbeddingBundle& base_test, const EmbeddingBundle& ft_test,
                                             const ClassifierHead& head, std::vector<std::size_t> k_grid, double lambda,
                                             std::uint64_t seed, std::vector<LayerIndex> layers = {}) {
    require_aligned(base_train, ft_train, "double descent (train)");
    require_aligned(base_test, ft_test, "double descent (test)");
    const auto d = static_cast<std::size_t>(base_train.hidden_dim);
    if (std::find(k_grid.begin(), k_grid.end(), d) == k_grid.end()) {
        k_grid.push_back(d);
    }
    std::sort(k_grid.begin(), k_grid.end());
    k_grid.erase(std::unique(k_grid.begin(), k_grid.end()), k_grid.end());
    require(k_grid.front() >= 1, "double descent: grid values must be >= 1");
    require(k_grid.back() <= base_train.num_samples,
            "double descent: grid value " + std::to_string(k_grid.back()) + " exceeds the " +
                std::to_string(base_train.num_samples) + " available training samples");
    if (layers.empty()) {
        layers = base_train.layers;
    }

    const Matrix target_all = ft_train.layer_matrix(ft_train.final_layer());
    const Matrix test_target = ft_test.layer_matrix(ft_test.final_layer());

    DoubleDescentCurve curve;
    curve.k_grid = k_grid;
    curve.lambda = lambda;
    for (LayerIndex layer : layers) {
        const Matrix base_all = base_train.layer_matrix(layer);
        const Matrix test_base = base_test.layer_matrix(layer);
        for (auto k : k_grid) {
            const auto rows = sample_indices(static_cast<std::size_t>(base_train.num_samples), k, seed);
            Matrix x(static_cast<Eigen::Index>(k), base_all.cols());
            Matrix y(static_cast<Eigen::Index>(k), target_all.cols());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                x.row(static_cast<Eigen::Index>(i)) = base_all.row(static_cast<Eigen::Index>(rows[i]));
                y.row(static_cast<Eigen::Index>(i)) = target_all.row(static_cast<Eigen::Index>(rows[i]));
            }
            const auto fit = fit_task_matrix(x, y, lambda, layer);
            DoubleDescentPoint p;
            p.layer = layer;
            p.k = k;
            p.accuracy = evaluate_task_matrix(fit.map, head, base_test, layer).accuracy;
            p.test_residual = residual_frobenius(fit.map, test_base, test_target);
            p.train_residual = residual_frobenius(fit.map, x, y);
            p.rank = fit.diagnostics.rank_estimate;
            curve.points.push_back(p);
        }
    }
    return curve;
}

}  // namespace taskmat
