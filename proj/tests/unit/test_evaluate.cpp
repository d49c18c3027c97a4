// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace taskmat;

namespace {

SyntheticSpec planted(std::uint64_t seed) {
    SyntheticSpec s;
    s.d = 24;
    s.k_train = 200;
    s.k_test = 300;
    s.num_classes = 4;
    s.num_layers = 5;
    s.signal_layer = 3;
    s.seed = seed;
    return s;
}

}  // namespace

TEST(Accuracy, Examples) {
    EXPECT_EQ(accuracy({1, 2, 3}, {1, 2, 3}), 1.0);
    EXPECT_EQ(accuracy({0, 0}, {1, 1}), 0.0);
    EXPECT_EQ(accuracy({0, 1, 2, 2}, {0, 1, 1, 2}), 0.75);
    EXPECT_THROW(accuracy({0}, {0, 1}), ValidationError);
    EXPECT_THROW(accuracy({}, {}), ValidationError);
}

TEST(Accuracy, JointPermutationInvariance) {
    Rng rng(1);
    Labels p, g;
    for (int i = 0; i < 50; ++i) {
        p.push_back(static_cast<Label>(rng.below(3)));
        g.push_back(static_cast<Label>(rng.below(3)));
    }
    const double base = accuracy(p, g);
    std::vector<std::size_t> order(p.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    Labels pp, gg;
    for (auto i : order) {
        pp.push_back(p[i]);
        gg.push_back(g[i]);
    }
    EXPECT_EQ(accuracy(pp, gg), base);
}

TEST(EvaluateTaskMatrix, IdentityOnFinetunedFinalEqualsReference) {
    const auto data = generate_synthetic(planted(2));
    const auto tm = TaskMatrix::identity(24, data.ft_test.final_layer());
    EXPECT_EQ(evaluate_task_matrix(tm, data.head, data.ft_test, data.ft_test.final_layer()).accuracy,
              evaluate_finetuned_reference(data.head, data.ft_test).accuracy);
}

TEST(EvaluateTaskMatrix, PlantedPipelineIsPerfect) {
    const auto spec = planted(3);
    const auto data = generate_synthetic(spec);
    const auto fit = fit_task_matrix(data.base_train.layer_matrix(spec.signal_layer),
                                     data.ft_train.layer_matrix(data.ft_train.final_layer()), 0.0, spec.signal_layer);
    const auto r = evaluate_task_matrix(fit.map, data.head, data.base_test, spec.signal_layer);
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.method, Method::task_matrix);
    EXPECT_EQ(r.layer, std::optional<LayerIndex>(spec.signal_layer));
    EXPECT_EQ(r.num_test, 300u);

    // Independent recomputation of the same pipeline.
    const Matrix mapped = data.base_test.layer_matrix(spec.signal_layer) * fit.map.weights.transpose();
    const Matrix z = mapped * data.head.weights.transpose();
    std::size_t hits = 0;
    for (Eigen::Index j = 0; j < z.rows(); ++j) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < z.cols(); ++c) {
            if (z(j, c) > z(j, best)) best = c;
        }
        hits += static_cast<Label>(best) == data.base_test.labels[static_cast<std::size_t>(j)];
    }
    EXPECT_EQ(hits, 300u);
}

TEST(EvaluateTaskMatrix, ZeroMapPredictsBiasArgmax) {
    auto data = generate_synthetic(planted(4));
    data.head.bias << 0.0, 0.5, 2.0, 0.5;
    TaskMatrix zero;
    zero.weights = Matrix::Zero(24, 24);
    const double expected =
        static_cast<double>(std::count(data.base_test.labels.begin(), data.base_test.labels.end(), 2u)) / 300.0;
    EXPECT_EQ(evaluate_task_matrix(zero, data.head, data.base_test, 0).accuracy, expected);
}

TEST(EvaluateTaskMatrix, DimensionChainAndMissingLayer) {
    const auto data = generate_synthetic(planted(5));
    EXPECT_THROW(evaluate_task_matrix(TaskMatrix::identity(23), data.head, data.base_test, 0), DimensionMismatch);
    TaskMatrix wide;
    wide.weights = Matrix::Zero(10, 24);
    EXPECT_THROW(evaluate_task_matrix(wide, data.head, data.base_test, 0), DimensionMismatch);
    EXPECT_THROW(evaluate_task_matrix(TaskMatrix::identity(24), data.head, data.base_test, 9), ValidationError);
}

TEST(Ablation, EqualsExplicitIdentityExactly) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto data = generate_synthetic(planted(seed));
        for (auto layer : data.base_test.layers) {
            const auto a = evaluate_base_with_ft_head(data.head, data.base_test, layer);
            TaskMatrix id;
            id.weights = Matrix::Identity(24, 24);
            const auto b = evaluate_task_matrix(id, data.head, data.base_test, layer);
            EXPECT_EQ(a.accuracy, b.accuracy);
            EXPECT_EQ(a.method, Method::base_with_ft_head);
            EXPECT_EQ(a.layer, b.layer);
        }
    }
}

TEST(Ablation, BelowTaskMatrixUnderRotation) {
    const auto spec = planted(6);
    const auto data = generate_synthetic(spec);
    const auto sweep = layer_sweep(data.base_train, data.ft_train, data.base_test, data.head, 0.0);
    const auto ablation = evaluate_base_with_ft_head(data.head, data.base_test, spec.signal_layer);
    EXPECT_LT(ablation.accuracy, sweep.per_layer.at(spec.signal_layer).accuracy);
}

TEST(Ablation, ConstantHeadScoresClassFrequency) {
    const auto data = generate_synthetic(planted(7));
    ClassifierHead h;
    h.weights = Matrix::Zero(2, 24);
    h.bias = Vector(2);
    h.bias << 1.0, 0.0;
    EmbeddingBundle test = data.base_test;
    test.num_classes = 2;
    for (auto& l : test.labels) l %= 2;
    const double zeros =
        static_cast<double>(std::count(test.labels.begin(), test.labels.end(), 0u)) / static_cast<double>(300);
    EXPECT_EQ(evaluate_base_with_ft_head(h, test, 1).accuracy, zeros);
}

TEST(Sweep, SingleLayerBundle) {
    auto spec = planted(8);
    spec.num_layers = 1;
    spec.signal_layer = 0;
    const auto data = generate_synthetic(spec);
    const auto sweep = layer_sweep(data.base_train, data.ft_train, data.base_test, data.head, 0.0);
    EXPECT_EQ(sweep.per_layer.size(), 1u);
    EXPECT_EQ(sweep.best_layers, std::vector<LayerIndex>{0});
}

TEST(Sweep, FindsTheSignalLayer) {
    const auto spec = planted(9);
    const auto data = generate_synthetic(spec);
    const auto sweep = layer_sweep(data.base_train, data.ft_train, data.base_test, data.head, 0.0);
    EXPECT_EQ(sweep.best_layers, std::vector<LayerIndex>{3});
    EXPECT_EQ(sweep.per_layer.size(), 5u);
    EXPECT_EQ(sweep.diagnostics.size(), 5u);
}

TEST(Sweep, Deterministic) {
    const auto data = generate_synthetic(planted(10));
    const auto a = layer_sweep(data.base_train, data.ft_train, data.base_test, data.head, 0.1);
    const auto b = layer_sweep(data.base_train, data.ft_train, data.base_test, data.head, 0.1);
    ASSERT_EQ(a.best_layers, b.best_layers);
    for (const auto& [layer, r] : a.per_layer) EXPECT_EQ(r.accuracy, b.per_layer.at(layer).accuracy);
}

TEST(Sweep, MoreTrainingDataKeepsTestShape) {
    auto spec = planted(11);
    const auto small = generate_synthetic(spec);
    spec.k_train = 400;
    const auto large = generate_synthetic(spec);
    const auto a = layer_sweep(small.base_train, small.ft_train, small.base_test, small.head, 0.0);
    const auto b = layer_sweep(large.base_train, large.ft_train, large.base_test, large.head, 0.0);
    ASSERT_EQ(a.per_layer.size(), b.per_layer.size());
    for (const auto& [layer, r] : a.per_layer) {
        EXPECT_EQ(r.num_test, b.per_layer.at(layer).num_test);
    }
}

TEST(Sweep, MisalignedTrainingBundles) {
    const auto data = generate_synthetic(planted(12));
    const auto shorter = take_rows(data.ft_train, std::vector<std::size_t>{0, 1, 2});
    EXPECT_THROW(layer_sweep(data.base_train, shorter, data.base_test, data.head, 0.0), ValidationError);
}

TEST(Sweep, ScalingTheHeadChangesNothing) {
    auto data = generate_synthetic(planted(13));
    const auto a = layer_sweep(data.base_train, data.ft_train, data.base_test, data.head, 0.0);
    data.head.weights *= 8.0;
    data.head.bias *= 8.0;
    const auto b = layer_sweep(data.base_train, data.ft_train, data.base_test, data.head, 0.0);
    for (const auto& [layer, r] : a.per_layer) EXPECT_EQ(r.accuracy, b.per_layer.at(layer).accuracy);
}

TEST(BestLayers, TiesWithinReportingPrecision) {
    EXPECT_EQ(best_layers({{4, 0.9}, {5, 0.9004}, {6, 0.9003}, {7, 0.85}}), (std::vector<LayerIndex>{4, 5, 6}));
    EXPECT_EQ(best_layers({{1, 0.5}, {2, 0.6}}), std::vector<LayerIndex>{2});
}

TEST(AggregateCi, Examples) {
    const auto flat = aggregate_ci({0.5, 0.5, 0.5});
    EXPECT_EQ(flat.mean, 0.5);
    EXPECT_EQ(flat.half_width, 0.0);

    const auto two = aggregate_ci({0.0, 1.0});
    EXPECT_EQ(two.mean, 0.5);
    EXPECT_NEAR(two.half_width, 6.353, 1e-3);

    // s = 0.01 exactly: deviations of +-0.01 * sqrt(2) around the mean.
    const double e = 0.01 * std::sqrt(2.0);
    const auto five = aggregate_ci({0.9 - e, 0.9, 0.9, 0.9, 0.9 + e});
    EXPECT_NEAR(five.mean, 0.9, 1e-15);
    EXPECT_NEAR(five.half_width, 0.01242, 1e-5);
    EXPECT_EQ(five.n_runs, 5u);

    EXPECT_EQ(aggregate_ci({0.7}).half_width, 0.0);
    EXPECT_THROW(aggregate_ci({}), ValidationError);
}

TEST(AggregateCi, MatchesPrintedTTable) {
    for (std::size_t n = 2; n <= 10; ++n) {
        EXPECT_NEAR(t_quantile_975(n - 1), oracle::kT975[n - 2], 1e-3) << n;
        std::vector<double> values(n, 0.0);
        values[0] = 1.0;
        values[1] = -1.0;
        const auto r = aggregate_ci(values);
        double ss = 0.0;
        for (double v : values) ss += (v - r.mean) * (v - r.mean);
        const double s = std::sqrt(ss / static_cast<double>(n - 1));
        EXPECT_NEAR(r.half_width, oracle::kT975[n - 2] * s / std::sqrt(static_cast<double>(n)), 1e-3) << n;
    }
}

TEST(Method, NamesRoundTrip) {
    for (auto m : {Method::task_matrix, Method::linear_probe, Method::base_with_ft_head, Method::finetuned_reference}) {
        EXPECT_EQ(parse_method(to_string(m)), m);
        EXPECT_EQ(is_layer_dependent(m), m == Method::task_matrix || m == Method::base_with_ft_head);
    }
    EXPECT_FALSE(parse_method("nope").has_value());
}
