// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors
//
// taskmat command-line driver. Exit codes: 0 success, 1 validation error,
// 2 I/O or file-format error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "taskmat/taskmat.hpp"

namespace fs = std::filesystem;
using namespace taskmat;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct Options {
    std::string train;
    std::string train_ft;
    std::string test;
    std::string test_ft;
    std::string head;
    std::string tm;
    std::string manifest;
    std::string out;
    std::string format = "csv";
    std::optional<LayerIndex> layer;
    double lambda = 0.0;
    double fraction = 1.0;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<std::size_t> sizes{1, 2};
    std::vector<std::size_t> k_grid;
    std::vector<std::string> inputs;
    bool reference = false;
    bool uniform = false;
    bool per_layer = false;
    ProbeConfig probe;
    SyntheticSpec synth;
    std::string map_kind = "rotation";
    bool identity_head = false;
};

ReportFormat report_format(const Options& o) {
    if (o.format == "csv") return ReportFormat::csv;
    if (o.format == "json") return ReportFormat::json;
    throw ValidationError("--format must be csv or json");
}

void emit(const Options& o, const std::string& text) {
    if (o.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw IoError("cannot open " + o.out + " for writing");
    f << text;
    f.flush();
    if (!f) throw IoError("write failed for " + o.out);
}

std::string need(const std::string& value, const char* flag) {
    require(!value.empty(), std::string("missing required flag ") + flag);
    return value;
}

std::vector<AccuracyRow> to_rows(const std::vector<EvalResult>& results) {
    std::vector<AccuracyRow> rows;
    for (const auto& r : results) rows.push_back(AccuracyRow::from(r));
    return rows;
}

std::vector<AccuracyRow> to_rows(const std::vector<AggregateRow>& results) {
    std::vector<AccuracyRow> rows;
    for (const auto& r : results) rows.push_back(AccuracyRow::from(r));
    return rows;
}

CoreComparisonConfig core_config(const Options& o) {
    CoreComparisonConfig c;
    c.lambda = o.lambda;
    c.probe = o.probe;
    return c;
}

// ---------------------------------------------------------------------------

void cmd_synth(Options& o) {
    auto kind = parse_map_kind(o.map_kind);
    require(kind.has_value(), "--map must be rotation, gaussian or identity");
    o.synth.map_kind = *kind;
    o.synth.seed = o.seed;
    o.synth.head_kind = o.identity_head ? SyntheticHeadKind::identity_rows : SyntheticHeadKind::gaussian;
    const fs::path dir = need(o.out, "--out");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string());

    const auto data = generate_synthetic(o.synth);
    const std::string stem = o.synth.dataset;
    write_bundle(data.base_train, dir / (stem + ".train.base.tmeb"));
    write_bundle(data.ft_train, dir / (stem + ".train.ft.tmeb"));
    write_bundle(data.base_test, dir / (stem + ".test.base.tmeb"));
    write_bundle(data.ft_test, dir / (stem + ".test.ft.tmeb"));
    write_head(data.head, dir / (stem + ".head.tmhd"));
    TaskMatrix planted;
    planted.weights = data.planted_map;
    planted.source_layer = o.synth.signal_layer;
    planted.k_train = 0;
    planted.rank_estimate = o.synth.d;
    write_task_matrix(planted, dir / (stem + ".planted.tmtx"));
}

void cmd_fit(const Options& o) {
    const auto base = read_bundle(need(o.train, "--train"));
    const auto ft = read_bundle(need(o.train_ft, "--train-ft"));
    require_aligned(base, ft, "fit");
    const LayerIndex layer = o.layer.value_or(base.final_layer());
    const auto fit = fit_task_matrix(base.layer_matrix(layer), ft.layer_matrix(ft.final_layer()), o.lambda, layer);
    write_task_matrix(fit.map, need(o.out, "--out"));
    const auto& d = fit.diagnostics;
    std::cout << nlohmann::json{{"layer", layer},
                                {"lambda", o.lambda},
                                {"k_train", fit.map.k_train},
                                {"rank_estimate", d.rank_estimate},
                                {"training_residual_fro", d.training_residual_fro},
                                {"largest_singular_value", d.largest_singular_value},
                                {"smallest_retained_singular_value", d.smallest_retained_singular_value}}
                     .dump()
              << '\n';
}

void cmd_eval(const Options& o) {
    const auto test = read_bundle(need(o.test, "--test"));
    const auto head = read_head(need(o.head, "--head"));
    EvalResult r;
    if (!o.tm.empty()) {
        const auto tm = read_task_matrix(o.tm);
        r = evaluate_task_matrix(tm, head, test, o.layer.value_or(tm.source_layer));
    } else {
        require(o.reference, "eval needs --tm <task matrix> or --reference");
        r = evaluate_finetuned_reference(head, test);
    }
    emit(o, accuracy_table({AccuracyRow::from(r)}, report_format(o)));
}

void cmd_probe(const Options& o) {
    const auto train = read_bundle(need(o.train, "--train"));
    const LayerIndex layer = o.layer.value_or(train.final_layer());
    auto config = o.probe;
    config.seed = o.seed;
    const auto model = fit_linear_probe(train.layer_matrix(layer), train.labels, train.num_classes, config);
    for (const auto& w : model.warnings) std::cerr << "warning: " << w << '\n';
    auto head = model.head;
    head.metadata = {{"dataset", train.dataset()}, {"layer", std::to_string(layer)}};
    write_head(head, need(o.out, "--out"));
    if (!o.test.empty()) {
        const auto test = read_bundle(o.test);
        EvalResult r;
        r.method = Method::linear_probe;
        r.accuracy = accuracy(predict(head, test.layer_matrix(layer)), test.labels);
        r.num_test = test.labels.size();
        r.dataset = test.dataset();
        std::cout << accuracy_table({AccuracyRow::from(r)}, report_format(o));
    }
}

void cmd_sweep(const Options& o) {
    const auto base_train = read_bundle(need(o.train, "--train"));
    const auto ft_train = read_bundle(need(o.train_ft, "--train-ft"));
    const auto base_test = read_bundle(need(o.test, "--test"));
    const auto head = read_head(need(o.head, "--head"));
    const auto sweep = layer_sweep(base_train, ft_train, base_test, head, o.lambda);
    std::vector<EvalResult> rows;
    for (const auto& [layer, r] : sweep.per_layer) rows.push_back(r);
    emit(o, accuracy_table(to_rows(rows), report_format(o)));
    std::cerr << "best layers:";
    for (auto l : sweep.best_layers) std::cerr << ' ' << l;
    std::cerr << '\n';
}

void cmd_ablate(const Options& o) {
    const auto test = read_bundle(need(o.test, "--test"));
    const auto head = read_head(need(o.head, "--head"));
    std::vector<EvalResult> rows;
    if (o.layer) {
        rows.push_back(evaluate_base_with_ft_head(head, test, *o.layer));
    } else {
        for (auto layer : test.layers) rows.push_back(evaluate_base_with_ft_head(head, test, layer));
    }
    emit(o, accuracy_table(to_rows(rows), report_format(o)));
}

void cmd_compare(const Options& o) {
    const auto report = run_core_comparison(read_bundle(need(o.train, "--train")),
                                            read_bundle(need(o.train_ft, "--train-ft")),
                                            read_bundle(need(o.test, "--test")),
                                            read_bundle(need(o.test_ft, "--test-ft")),
                                            read_head(need(o.head, "--head")), core_config(o));
    emit(o, accuracy_table(to_rows(o.per_layer ? report.all_rows() : report.summary_rows()), report_format(o)));
}

void cmd_scarcity(const Options& o) {
    const auto seeds = o.seeds.empty() ? std::vector<std::uint64_t>{o.seed} : o.seeds;
    const auto report = run_scarcity(read_bundle(need(o.train, "--train")), read_bundle(need(o.train_ft, "--train-ft")),
                                     read_bundle(need(o.test, "--test")), read_bundle(need(o.test_ft, "--test-ft")),
                                     read_head(need(o.head, "--head")), o.fraction, seeds, core_config(o), !o.uniform);
    auto rows = to_rows(report.aggregate.summary);
    if (o.per_layer) {
        const auto extra = to_rows(report.aggregate.per_layer);
        rows.insert(rows.end(), extra.begin(), extra.end());
    }
    emit(o, accuracy_table(rows, report_format(o)));
}

void cmd_multitask(const Options& o) {
    const fs::path manifest_path = need(o.manifest, "--manifest");
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open " + manifest_path.string());
    const auto manifest = nlohmann::json::parse(in, nullptr, false);
    require(!manifest.is_discarded() && manifest.contains("datasets") && manifest.at("datasets").is_array(),
            "manifest must be a JSON object with a \"datasets\" array");
    const fs::path root = manifest_path.parent_path();
    auto resolve = [&](const nlohmann::json& entry, const char* key) {
        require(entry.contains(key) && entry.at(key).is_string(),
                std::string("manifest entry lacks string field \"") + key + "\"");
        fs::path p = entry.at(key).get<std::string>();
        return p.is_absolute() ? p : root / p;
    };

    std::vector<MultitaskDataset> datasets;
    for (const auto& entry : manifest.at("datasets")) {
        MultitaskDataset ds;
        require(entry.contains("id") && entry.at("id").is_string(), "manifest entry lacks \"id\"");
        ds.id = entry.at("id").get<std::string>();
        ds.base_train = read_bundle(resolve(entry, "train"));
        ds.ft_train = read_bundle(resolve(entry, "train_ft"));
        ds.base_test = read_bundle(resolve(entry, "test"));
        ds.head = read_head(resolve(entry, "head"));
        if (entry.contains("reference")) {
            require(entry.at("reference").is_number(), "manifest \"reference\" must be a number");
            ds.reference = entry.at("reference").get<double>();
        } else {
            ds.reference = evaluate_finetuned_reference(ds.head, read_bundle(resolve(entry, "test_ft"))).accuracy;
        }
        datasets.push_back(std::move(ds));
    }
    MultitaskGridConfig config;
    config.sizes = o.sizes;
    config.layer = o.layer.value_or(datasets.empty() ? 0 : datasets.front().base_train.final_layer());
    config.lambda = o.lambda;
    config.seed = o.seed;
    emit(o, multitask_grid_table(run_multitask_grid(datasets, config), report_format(o)));
}

void cmd_double_descent(const Options& o) {
    const auto base_train = read_bundle(need(o.train, "--train"));
    const auto grid = o.k_grid.empty() ? default_k_grid(base_train.hidden_dim) : o.k_grid;
    std::vector<LayerIndex> layers;
    if (o.layer) layers.push_back(*o.layer);
    const auto curve = run_double_descent(base_train, read_bundle(need(o.train_ft, "--train-ft")),
                                          read_bundle(need(o.test, "--test")), read_bundle(need(o.test_ft, "--test-ft")),
                                          read_head(need(o.head, "--head")), grid, o.lambda, o.seed, layers);
    emit(o, double_descent_table(curve, report_format(o)));
}

void cmd_report(const Options& o) {
    require(!o.inputs.empty(), "report needs at least one --in file");
    std::vector<AccuracyRow> rows;
    for (const auto& path : o.inputs) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path);
        std::stringstream buf;
        buf << in.rdbuf();
        const auto fmt = fs::path(path).extension() == ".csv" ? ReportFormat::csv : ReportFormat::json;
        auto parsed = parse_accuracy_rows(buf.str(), fmt);
        rows.insert(rows.end(), parsed.begin(), parsed.end());
    }
    emit(o, accuracy_table(aggregate_rows(rows), report_format(o)));
}

// ---------------------------------------------------------------------------

void add_layer(CLI::App* cmd, Options& o) {
    cmd->add_option("--layer", o.layer, "Layer index (zero-indexed)");
}

void add_output(CLI::App* cmd, Options& o) {
    cmd->add_option("--out", o.out, "Output path (stdout when omitted)");
    cmd->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"csv", "json"}));
}

void add_probe_options(CLI::App* cmd, Options& o) {
    cmd->add_option("--lr", o.probe.learning_rate, "Probe initial step size");
    cmd->add_option("--max-iters", o.probe.max_iters, "Probe iteration cap");
    cmd->add_option("--grad-tol", o.probe.grad_tol, "Probe gradient tolerance (inf-norm)");
    cmd->add_option("--l2", o.probe.l2_penalty, "Probe L2 penalty");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"taskmat: task matrices between base and finetuned embeddings"};
    app.require_subcommand(1);
    Options o;

    auto* synth = app.add_subcommand("synth", "Generate planted-map synthetic bundles");
    synth->add_option("--out", o.out, "Output directory")->required();
    synth->add_option("--d", o.synth.d, "Hidden dimension");
    synth->add_option("--k-train", o.synth.k_train, "Training samples");
    synth->add_option("--k-test", o.synth.k_test, "Test samples");
    synth->add_option("--classes", o.synth.num_classes, "Number of classes");
    synth->add_option("--layers", o.synth.num_layers, "Number of base layers");
    synth->add_option("--signal-layer", o.synth.signal_layer, "Base layer carrying the signal");
    synth->add_option("--noise", o.synth.noise_sigma, "Finetuned noise standard deviation");
    synth->add_option("--feature-scale", o.synth.feature_scale, "Per-coordinate feature standard deviation");
    synth->add_option("--map", o.map_kind, "Planted map: rotation, gaussian or identity");
    synth->add_flag("--identity-head", o.identity_head, "Use identity rows as the head");
    synth->add_option("--dataset", o.synth.dataset, "Dataset id (file stem)");
    synth->add_option("--seed", o.seed, "Seed");

    auto* fit = app.add_subcommand("fit", "Fit a task matrix at one layer");
    fit->add_option("--train", o.train, "Base training bundle")->required();
    fit->add_option("--train-ft", o.train_ft, "Finetuned training bundle")->required();
    fit->add_option("--lambda", o.lambda, "Ridge coefficient (0 = least squares)");
    fit->add_option("--out", o.out, "Output .tmtx")->required();
    add_layer(fit, o);

    auto* eval = app.add_subcommand("eval", "Evaluate a task matrix, or the finetuned reference");
    eval->add_option("--test", o.test, "Test bundle")->required();
    eval->add_option("--head", o.head, "Classifier head")->required();
    eval->add_option("--tm", o.tm, "Task matrix (.tmtx)");
    eval->add_flag("--reference", o.reference, "Evaluate the head on the bundle's final layer");
    add_layer(eval, o);
    add_output(eval, o);

    auto* probe = app.add_subcommand("probe", "Train a linear probe on base representations");
    probe->add_option("--train", o.train, "Base training bundle")->required();
    probe->add_option("--test", o.test, "Optional test bundle to score");
    probe->add_option("--out", o.out, "Output .tmhd")->required();
    probe->add_option("--seed", o.seed, "Seed");
    probe->add_option("--format", o.format, "Score format")->check(CLI::IsMember({"csv", "json"}));
    add_layer(probe, o);
    add_probe_options(probe, o);

    auto* sweep = app.add_subcommand("sweep", "Fit and evaluate a task matrix at every layer");
    sweep->add_option("--train", o.train, "Base training bundle")->required();
    sweep->add_option("--train-ft", o.train_ft, "Finetuned training bundle")->required();
    sweep->add_option("--test", o.test, "Base test bundle")->required();
    sweep->add_option("--head", o.head, "Classifier head")->required();
    sweep->add_option("--lambda", o.lambda, "Ridge coefficient");
    add_output(sweep, o);

    auto* ablate = app.add_subcommand("ablate", "Read base representations through the head directly");
    ablate->add_option("--test", o.test, "Base test bundle")->required();
    ablate->add_option("--head", o.head, "Classifier head")->required();
    add_layer(ablate, o);
    add_output(ablate, o);

    auto* compare = app.add_subcommand("compare", "Probe vs task matrix vs ablation vs finetuned");
    compare->add_option("--train", o.train, "Base training bundle")->required();
    compare->add_option("--train-ft", o.train_ft, "Finetuned training bundle")->required();
    compare->add_option("--test", o.test, "Base test bundle")->required();
    compare->add_option("--test-ft", o.test_ft, "Finetuned test bundle")->required();
    compare->add_option("--head", o.head, "Classifier head")->required();
    compare->add_option("--lambda", o.lambda, "Ridge coefficient");
    compare->add_flag("--per-layer", o.per_layer, "Emit every layer, not just the summary");
    add_probe_options(compare, o);
    add_output(compare, o);

    auto* scarcity = app.add_subcommand("scarcity", "Core comparison on subsampled training data");
    scarcity->add_option("--train", o.train, "Base training bundle")->required();
    scarcity->add_option("--train-ft", o.train_ft, "Finetuned training bundle")->required();
    scarcity->add_option("--test", o.test, "Base test bundle")->required();
    scarcity->add_option("--test-ft", o.test_ft, "Finetuned test bundle")->required();
    scarcity->add_option("--head", o.head, "Classifier head")->required();
    scarcity->add_option("--fraction", o.fraction, "Fraction of training samples kept");
    scarcity->add_option("--seed", o.seed, "Seed (when --seeds is absent)");
    scarcity->add_option("--seeds", o.seeds, "Comma-separated seeds, one run each")->delimiter(',');
    scarcity->add_option("--lambda", o.lambda, "Ridge coefficient");
    scarcity->add_flag("--uniform", o.uniform, "Uniform instead of stratified subsampling");
    scarcity->add_flag("--per-layer", o.per_layer, "Also emit per-layer aggregates");
    add_probe_options(scarcity, o);
    add_output(scarcity, o);

    auto* multitask = app.add_subcommand("multitask", "Joint task matrices over dataset subsets");
    multitask->add_option("--manifest", o.manifest, "JSON manifest listing datasets")->required();
    multitask->add_option("--sizes", o.sizes, "Comma-separated subset sizes")->delimiter(',');
    multitask->add_option("--lambda", o.lambda, "Ridge coefficient");
    multitask->add_option("--seed", o.seed, "Seed for sampled subsets");
    add_layer(multitask, o);
    add_output(multitask, o);

    auto* dd = app.add_subcommand("double-descent", "Accuracy and residual against training-set size");
    dd->add_option("--train", o.train, "Base training bundle")->required();
    dd->add_option("--train-ft", o.train_ft, "Finetuned training bundle")->required();
    dd->add_option("--test", o.test, "Base test bundle")->required();
    dd->add_option("--test-ft", o.test_ft, "Finetuned test bundle")->required();
    dd->add_option("--head", o.head, "Classifier head")->required();
    dd->add_option("--lambda", o.lambda, "Ridge coefficient");
    dd->add_option("--seed", o.seed, "Seed for the training draws");
    dd->add_option("--k-grid", o.k_grid, "Comma-separated training counts")->delimiter(',');
    add_layer(dd, o);
    add_output(dd, o);

    auto* report = app.add_subcommand("report", "Aggregate accuracy records into mean and 95% CI");
    report->add_option("--in", o.inputs, "Record files (.csv or JSON lines)")->required();
    add_output(report, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*synth) cmd_synth(o);
        else if (*fit) cmd_fit(o);
        else if (*eval) cmd_eval(o);
        else if (*probe) cmd_probe(o);
        else if (*sweep) cmd_sweep(o);
        else if (*ablate) cmd_ablate(o);
        else if (*compare) cmd_compare(o);
        else if (*scarcity) cmd_scarcity(o);
        else if (*multitask) cmd_multitask(o);
        else if (*dd) cmd_double_descent(o);
        else if (*report) cmd_report(o);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return 0;
}
