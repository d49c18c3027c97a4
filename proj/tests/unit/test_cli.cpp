// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors

#include <cstdlib>
#include <fstream>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace taskmat;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(TASKMAT_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        ASSERT_EQ(run("synth --d 8 --k-train 40 --k-test 40 --layers 2 --signal-layer 0 --out " + dir.path().string()),
                  0);
    }
    std::string at(const std::string& name) const { return (dir / name).string(); }

    fixtures::TempDir dir{"cli"};
};

}  // namespace

TEST_F(Cli, SynthWritesExtractorNames) {
    for (const char* name : {"synthetic.train.base.tmeb", "synthetic.train.ft.tmeb", "synthetic.test.base.tmeb",
                             "synthetic.test.ft.tmeb", "synthetic.head.tmhd"}) {
        EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
    }
    EXPECT_EQ(read_bundle(at("synthetic.train.ft.tmeb")).layers, std::vector<LayerIndex>{1});
}

TEST_F(Cli, FitThenEval) {
    ASSERT_EQ(run("fit --train " + at("synthetic.train.base.tmeb") + " --train-ft " + at("synthetic.train.ft.tmeb") +
                  " --layer 0 --out " + at("tm.tmtx")),
              0);
    const auto tm = read_task_matrix(at("tm.tmtx"));
    EXPECT_EQ(tm.source_layer, 0u);
    EXPECT_EQ(tm.k_train, 40u);
    ASSERT_EQ(run("eval --tm " + at("tm.tmtx") + " --test " + at("synthetic.test.base.tmeb") + " --head " +
                  at("synthetic.head.tmhd") + " --out " + at("eval.csv")),
              0);
    const auto bytes = fixtures::read_bytes(at("eval.csv"));
    const auto rows = parse_accuracy_rows(std::string(bytes.begin(), bytes.end()), ReportFormat::csv);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].method, Method::task_matrix);
    EXPECT_EQ(rows[0].accuracy, 1.0);
}

TEST_F(Cli, ProbeWritesProbeHead) {
    ASSERT_EQ(run("probe --train " + at("synthetic.train.base.tmeb") + " --out " + at("p.tmhd")), 0);
    EXPECT_EQ(read_head(at("p.tmhd")).provenance, HeadProvenance::probe);
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run(""), 1);
    EXPECT_EQ(run("no-such-verb"), 1);
    EXPECT_EQ(run("fit --train " + at("synthetic.train.base.tmeb")), 1);  // missing required flags
    EXPECT_EQ(run("fit --train " + at("synthetic.train.base.tmeb") + " --train-ft " + at("synthetic.train.ft.tmeb") +
                  " --lambda -1 --out " + at("x.tmtx")),
              1);
    EXPECT_EQ(run("sweep --train " + at("synthetic.train.base.tmeb") + " --train-ft " + at("synthetic.test.ft.tmeb") +
                  " --test " + at("synthetic.test.base.tmeb") + " --head " + at("synthetic.head.tmhd")),
              1);  // misaligned pair
    EXPECT_EQ(run("eval --reference --test " + at("missing.tmeb") + " --head " + at("synthetic.head.tmhd")), 2);
    std::ofstream(at("junk.tmeb")) << "JUNKJUNKJUNK";
    EXPECT_EQ(run("ablate --test " + at("junk.tmeb") + " --head " + at("synthetic.head.tmhd")), 2);
    EXPECT_EQ(run("ablate --test " + at("synthetic.test.base.tmeb") + " --head " + at("synthetic.head.tmhd") +
                  " --out " + at("nodir/x.csv")),
              2);
}

TEST_F(Cli, ReportAggregates) {
    std::ofstream(at("runs.jsonl")) << R"({"method":"task_matrix","dataset":"a","layer":3,"accuracy":0.0})" << '\n'
                                    << R"({"method":"task_matrix","dataset":"a","layer":3,"accuracy":1.0})" << '\n';
    ASSERT_EQ(run("report --in " + at("runs.jsonl") + " --out " + at("agg.csv")), 0);
    const auto bytes = fixtures::read_bytes(at("agg.csv"));
    const auto rows = parse_accuracy_rows(std::string(bytes.begin(), bytes.end()), ReportFormat::csv);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].n, 2u);
    EXPECT_NEAR(rows[0].ci_half_width, 6.353, 1e-3);
}
