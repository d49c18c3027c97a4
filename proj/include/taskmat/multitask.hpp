// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors

#pragma once

#include <map>
#include <string>
#include <vector>

#include "taskmat/core.hpp"
#include "taskmat/embedding_store.hpp"
#include "taskmat/evaluate.hpp"
#include "taskmat/solver.hpp"

namespace taskmat {

struct JointEntry {
    std::string dataset;
    Matrix base;    // k_i x d, base representations at the shared layer
    Matrix target;  // k_i x d, finetuned final-layer representations
};

struct JointTrainingSet {
    LayerIndex layer = 0;
    std::vector<JointEntry> entries;

    void validate() const {
        require(!entries.empty(), "joint training set: no datasets");
        const auto d_in = entries.front().base.cols();
        const auto d_out = entries.front().target.cols();
        for (const auto& e : entries) {
            if (e.base.cols() != d_in || e.target.cols() != d_out) {
                throw DimensionMismatch("joint training set: dataset \"" + e.dataset +
                                        "\" has a different representation dimension");
            }
            if (e.base.rows() != e.target.rows()) {
                throw DimensionMismatch("joint training set: dataset \"" + e.dataset +
                                        "\" base and target row counts differ");
            }
        }
    }
};

/// One shared map fitted on the row-concatenation of all datasets, with no
/// reweighting.
inline FitResult fit_joint_task_matrix(const JointTrainingSet& joint, double lambda) {
    joint.validate();
    Eigen::Index rows = 0;
    for (const auto& e : joint.entries) {
        rows += e.base.rows();
    }
    require(rows >= 1, "joint training set: no samples");
    if (joint.entries.size() == 1) {
        return fit_task_matrix(joint.entries.front().base, joint.entries.front().target, lambda, joint.layer);
    }
    Matrix base(rows, joint.entries.front().base.cols());
    Matrix target(rows, joint.entries.front().target.cols());
    Eigen::Index at = 0;
    for (const auto& e : joint.entries) {
        base.middleRows(at, e.base.rows()) = e.base;
        target.middleRows(at, e.target.rows()) = e.target;
        at += e.base.rows();
    }
    return fit_task_matrix(base, target, lambda, joint.layer);
}

struct MultitaskScore {
    double raw = 0.0;
    double normalized = 0.0;
};

struct MultitaskReport {
    std::map<std::string, MultitaskScore> per_dataset;
    std::size_t num_tasks = 0;

    double mean_normalized() const {
        double sum = 0.0;
        for (const auto& [id, s] : per_dataset) {
            sum += s.normalized;
        }
        return per_dataset.empty() ? 0.0 : sum / static_cast<double>(per_dataset.size());
    }
};

struct MultitaskTest {
    EmbeddingBundle bundle;
    LayerIndex layer = 0;
};

/// Evaluates one shared map through each dataset's own head; normalized
/// accuracy is raw / finetuned reference.
inline MultitaskReport evaluate_multitask(const TaskMatrix& tm, const std::map<std::string, ClassifierHead>& heads,
                                          const std::map<std::string, MultitaskTest>& tests,
                                          const std::map<std::string, double>& references) {
    require(!tests.empty(), "evaluate_multitask: no datasets");
    MultitaskReport report;
    report.num_tasks = tests.size();
    for (const auto& [id, test] : tests) {
        auto head = heads.find(id);
        require(head != heads.end(), "evaluate_multitask: no head for dataset \"" + id + "\"");
        auto ref = references.find(id);
        require(ref != references.end(), "evaluate_multitask: no reference accuracy for dataset \"" + id + "\"");
        require(ref->second > 0.0, "evaluate_multitask: reference accuracy for \"" + id + "\" must be > 0");
        const double raw = evaluate_task_matrix(tm, head->second, test.bundle, test.layer).accuracy;
        report.per_dataset[id] = MultitaskScore{raw, raw / ref->second};
    }
    return report;
}

}  // namespace taskmat
