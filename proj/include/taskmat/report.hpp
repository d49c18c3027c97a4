// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors
//
// Plain-text report emission. Every writer is deterministic: same records,
// same bytes.

#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "taskmat/evaluate.hpp"
#include "taskmat/experiments.hpp"
#include "taskmat/multitask.hpp"

namespace taskmat {

enum class ReportFormat { csv, json };

inline std::string format_number(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", value);
    return buf;
}

/// One output line of the accuracy table; single evaluations have n = 1.
struct AccuracyRow {
    Method method = Method::task_matrix;
    std::string dataset;
    std::optional<LayerIndex> layer;
    double accuracy = 0.0;
    std::size_t n = 1;
    double ci_half_width = 0.0;

    static AccuracyRow from(const EvalResult& r) { return {r.method, r.dataset, r.layer, r.accuracy, 1, 0.0}; }
    static AccuracyRow from(const AggregateRow& r) {
        return {r.method, r.dataset, r.layer, r.stats.mean, r.stats.n_runs, r.stats.half_width};
    }
};

inline std::string accuracy_table(const std::vector<AccuracyRow>& rows, ReportFormat format) {
    std::ostringstream out;
    if (format == ReportFormat::csv) {
        out << "method,dataset,layer,accuracy,n,ci_half_width\n";
        for (const auto& r : rows) {
            out << to_string(r.method) << ',' << r.dataset << ',' << (r.layer ? std::to_string(*r.layer) : "")
                << ',' << format_number(r.accuracy) << ',' << r.n << ',' << format_number(r.ci_half_width) << '\n';
        }
    } else {
        for (const auto& r : rows) {
            nlohmann::json j = {{"method", to_string(r.method)},
                                {"dataset", r.dataset},
                                {"layer", r.layer ? nlohmann::json(*r.layer) : nlohmann::json(nullptr)},
                                {"accuracy", r.accuracy},
                                {"n", r.n},
                                {"ci_half_width", r.ci_half_width}};
            out << j.dump() << '\n';
        }
    }
    return out.str();
}

inline std::string multitask_table(const MultitaskReport& report, ReportFormat format) {
    std::ostringstream out;
    if (format == ReportFormat::csv) {
        out << "dataset,raw,normalized,num_tasks\n";
        for (const auto& [id, s] : report.per_dataset) {
            out << id << ',' << format_number(s.raw) << ',' << format_number(s.normalized) << ','
                << report.num_tasks << '\n';
        }
    } else {
        for (const auto& [id, s] : report.per_dataset) {
            out << nlohmann::json{{"dataset", id}, {"raw", s.raw}, {"normalized", s.normalized},
                                  {"num_tasks", report.num_tasks}}
                       .dump()
                << '\n';
        }
    }
    return out.str();
}

/// Per-subset rows plus one "mean" row per subset size.
inline std::string multitask_grid_table(const MultitaskGridReport& grid, ReportFormat format) {
    std::ostringstream out;
    if (format == ReportFormat::csv) {
        out << "num_tasks,subset,dataset,raw,normalized\n";
    }
    for (const auto& [size, subsets] : grid.by_size) {
        double raw_sum = 0.0;
        std::size_t raw_count = 0;
        for (const auto& subset : subsets) {
            std::string name;
            for (const auto& id : subset.datasets) {
                name += (name.empty() ? "" : "+") + id;
            }
            for (const auto& [id, s] : subset.report.per_dataset) {
                raw_sum += s.raw;
                ++raw_count;
                if (format == ReportFormat::csv) {
                    out << size << ',' << name << ',' << id << ',' << format_number(s.raw) << ','
                        << format_number(s.normalized) << '\n';
                } else {
                    out << nlohmann::json{{"num_tasks", size}, {"subset", name}, {"dataset", id},
                                          {"raw", s.raw}, {"normalized", s.normalized}}
                               .dump()
                        << '\n';
                }
            }
        }
        const double mean_raw = raw_count ? raw_sum / static_cast<double>(raw_count) : 0.0;
        if (format == ReportFormat::csv) {
            out << size << ",*,mean," << format_number(mean_raw) << ',' << format_number(grid.mean_normalized(size))
                << '\n';
        } else {
            out << nlohmann::json{{"num_tasks", size}, {"subset", "*"}, {"dataset", "mean"}, {"raw", mean_raw},
                                  {"normalized", grid.mean_normalized(size)}, {"num_subsets", subsets.size()}}
                       .dump()
                << '\n';
        }
    }
    return out.str();
}

inline std::string double_descent_table(const DoubleDescentCurve& curve, ReportFormat format) {
    std::ostringstream out;
    if (format == ReportFormat::csv) {
        out << "layer,k,lambda,accuracy,test_residual,train_residual,rank\n";
    }
    for (const auto& p : curve.points) {
        if (format == ReportFormat::csv) {
            out << p.layer << ',' << p.k << ',' << format_number(curve.lambda) << ',' << format_number(p.accuracy)
                << ',' << format_number(p.test_residual) << ',' << format_number(p.train_residual) << ',' << p.rank
                << '\n';
        } else {
            out << nlohmann::json{{"layer", p.layer},
                                  {"k", p.k},
                                  {"lambda", curve.lambda},
                                  {"accuracy", p.accuracy},
                                  {"test_residual", p.test_residual},
                                  {"train_residual", p.train_residual},
                                  {"rank", p.rank}}
                       .dump()
                << '\n';
        }
    }
    return out.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

}  // namespace detail

/// Parses accuracy rows written by accuracy_table (either format).
inline std::vector<AccuracyRow> parse_accuracy_rows(const std::string& text, ReportFormat format) {
    std::vector<AccuracyRow> rows;
    std::istringstream in(text);
    std::string line;
    bool header = format == ReportFormat::csv;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        AccuracyRow r;
        std::string method;
        try {
            if (format == ReportFormat::csv) {
                const auto f = detail::split_csv_line(line);
                if (f.size() != 6) throw ValidationError("expected 6 fields");
                method = f[0];
                r.dataset = f[1];
                if (!f[2].empty()) r.layer = static_cast<LayerIndex>(std::stoul(f[2]));
                r.accuracy = std::stod(f[3]);
                r.n = std::stoul(f[4]);
                r.ci_half_width = std::stod(f[5]);
            } else {
                const auto j = nlohmann::json::parse(line);
                method = j.at("method").get<std::string>();
                r.dataset = j.value("dataset", std::string{});
                if (j.contains("layer") && !j.at("layer").is_null()) r.layer = j.at("layer").get<LayerIndex>();
                r.accuracy = j.at("accuracy").get<double>();
                r.n = j.value("n", std::size_t{1});
                r.ci_half_width = j.value("ci_half_width", 0.0);
            }
        } catch (const ValidationError&) {
            throw ValidationError("record line " + std::to_string(line_no) + ": malformed");
        } catch (const std::exception& e) {
            throw ValidationError("record line " + std::to_string(line_no) + ": " + e.what());
        }
        const auto m = parse_method(method);
        require(m.has_value(), "record line " + std::to_string(line_no) + ": unknown method \"" + method + "\"");
        r.method = *m;
        rows.push_back(r);
    }
    return rows;
}

/// Groups rows by (method, dataset, layer) and aggregates each group's
/// accuracies as independent runs.
inline std::vector<AccuracyRow> aggregate_rows(const std::vector<AccuracyRow>& rows) {
    using Key = std::tuple<int, std::string, long long>;
    std::map<Key, std::vector<double>> groups;
    std::map<Key, AccuracyRow> exemplar;
    for (const auto& r : rows) {
        Key key{static_cast<int>(r.method), r.dataset, r.layer ? static_cast<long long>(*r.layer) : -1};
        groups[key].push_back(r.accuracy);
        exemplar.emplace(key, r);
    }
    std::vector<AccuracyRow> out;
    for (const auto& [key, values] : groups) {
        auto row = exemplar.at(key);
        const auto agg = aggregate_ci(values);
        row.accuracy = agg.mean;
        row.n = agg.n_runs;
        row.ci_half_width = agg.half_width;
        out.push_back(row);
    }
    return out;
}

}  // namespace taskmat
