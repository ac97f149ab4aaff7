#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "tmpdir.hpp"

#ifndef MMF_CLI_PATH
#error "MMF_CLI_PATH must point at the CLI binary"
#endif

namespace {

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run_cli(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    const std::string capture =
        (std::filesystem::temp_directory_path() / ("mmf_cli_out_" + std::to_string(counter++)))
            .string();
    const std::string cmd =
        env + (env.empty() ? "" : " ") + MMF_CLI_PATH + " " + args + " >" + capture + " 2>&1";
    const int raw = std::system(cmd.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    result.output = support::TempDir::read_text(capture);
    std::filesystem::remove(capture);
    return result;
}

std::string prepare_args(const std::string& out_dir, const std::string& seed_flag) {
    return "prepare --synthetic --tasks 6 --valid-tasks 2 --test-tasks 2 --task-rows 12 "
           "--task-cols 12 --rank 2 --density 0.6 --episodes 3 --rows 8 --cols 8 "
           "--holdout 0.5 " +
           seed_flag + " --out-dir " + out_dir;
}

std::string train_args(const std::string& data_dir, const std::string& ckpt) {
    return "train --train-taskset " + data_dir + "/train.taskset --valid-taskset " + data_dir +
           "/valid.taskset --epochs 2 --batches-per-epoch 2 --batch-size 2 --rows 6 --cols 6 "
           "--exml-layers 2 --channels 4 --ff-hidden 4 --ff-weight-layers 2 --factors 3 "
           "--inner-steps 2 --valid-episodes 3 --seed 11 --checkpoint " +
           ckpt;
}

}  // namespace

TEST_CASE("full pipeline: prepare, train, eval, report") {
    support::TempDir dir;
    const std::string data = dir.file("data");

    auto prep = run_cli(prepare_args(data, "--seed 7"));
    REQUIRE(prep.exit_code == 0);
    CHECK(prep.output.find("train: 6 block(s)") != std::string::npos);
    CHECK(prep.output.find("meta-test manifest: 3 episodes") != std::string::npos);
    for (const char* name :
         {"train.taskset", "valid.taskset", "test.taskset", "meta_test.manifest"}) {
        CHECK(std::filesystem::exists(data + "/" + name));
    }

    SUBCASE("prepare is deterministic") {
        const std::string data2 = dir.file("data2");
        REQUIRE(run_cli(prepare_args(data2, "--seed 7")).exit_code == 0);
        for (const char* name :
             {"train.taskset", "valid.taskset", "test.taskset", "meta_test.manifest"}) {
            CHECK(support::TempDir::read_text(data + "/" + name) ==
                  support::TempDir::read_text(data2 + "/" + name));
        }
    }

    SUBCASE("MMF_SEED overrides the seed flag") {
        const std::string env_dir = dir.file("env");
        const std::string flag_dir = dir.file("flag");
        REQUIRE(run_cli(prepare_args(env_dir, "--seed 1"), "MMF_SEED=7").exit_code == 0);
        REQUIRE(run_cli(prepare_args(flag_dir, "--seed 7")).exit_code == 0);
        CHECK(support::TempDir::read_text(env_dir + "/train.taskset") ==
              support::TempDir::read_text(flag_dir + "/train.taskset"));
        const std::string other_dir = dir.file("other");
        REQUIRE(run_cli(prepare_args(other_dir, "--seed 1")).exit_code == 0);
        CHECK(support::TempDir::read_text(other_dir + "/train.taskset") !=
              support::TempDir::read_text(flag_dir + "/train.taskset"));
    }

    const std::string ckpt = dir.file("model.ckpt");
    auto train = run_cli(train_args(data, ckpt));
    REQUIRE(train.exit_code == 0);
    CHECK(std::filesystem::exists(ckpt));
    CHECK(std::filesystem::exists(ckpt + ".log"));
    CHECK(support::TempDir::read_text(ckpt + ".log")
              .rfind("epoch\ttrain_loss\tvalid_loss\n", 0) == 0);

    const std::string report_path = dir.file("report.tsv");
    auto eval = run_cli("eval --checkpoint " + ckpt + " --manifest " + data +
                        "/meta_test.manifest --methods ours,mean --out " + report_path);
    REQUIRE(eval.exit_code == 0);
    CHECK(std::filesystem::exists(report_path));
    CHECK(support::TempDir::read_text(report_path).rfind("# report v1\n", 0) == 0);
    CHECK(eval.output.find("ours\ttest_mse") != std::string::npos);
    CHECK(eval.output.find("mean\ttest_mse") != std::string::npos);

    auto report = run_cli("report --input " + report_path);
    CHECK(report.exit_code == 0);
    CHECK(report.output.rfind("method\tdataset\tmetric\tmean\tstderr\n", 0) == 0);
    CHECK(report.output.find("ours\tdata\ttest_mse") != std::string::npos);

    SUBCASE("inner steps sweep labels every setting") {
        const std::string sweep_path = dir.file("sweep.tsv");
        auto sweep = run_cli("eval --checkpoint " + ckpt + " --manifest " + data +
                             "/meta_test.manifest --methods ours --sweep inner-steps --out " +
                             sweep_path);
        REQUIRE(sweep.exit_code == 0);
        const std::string text = support::TempDir::read_text(sweep_path);
        for (const char* label :
             {"ours:t0", "ours:t1", "ours:t2", "ours:t5", "ours:t10", "ours:t20"}) {
            CHECK(text.find(label) != std::string::npos);
        }
    }
}

TEST_CASE("bad invocations exit nonzero") {
    support::TempDir dir;
    CHECK(run_cli("prepare --synthetic --not-a-flag 3 --out-dir " + dir.file("x")).exit_code !=
          0);
    CHECK(run_cli("train").exit_code != 0);
    CHECK(run_cli("frobnicate").exit_code != 0);
    CHECK(run_cli("").exit_code != 0);
    CHECK(run_cli("report --input /nonexistent/report.tsv").exit_code != 0);
    CHECK(run_cli("eval --checkpoint /nonexistent.ckpt --manifest x --out " + dir.file("r"))
              .exit_code != 0);

    auto both = run_cli("prepare --synthetic --input ratings.tsv --out-dir " + dir.file("y"));
    CHECK(both.exit_code != 0);
    CHECK(both.output.find("exactly one") != std::string::npos);

    auto neither = run_cli("prepare --out-dir " + dir.file("z"));
    CHECK(neither.exit_code != 0);
}

TEST_CASE("eval rejects a manifest with different normalization stats") {
    support::TempDir dir;
    const std::string data = dir.file("data");
    REQUIRE(run_cli(prepare_args(data, "--seed 7")).exit_code == 0);
    const std::string ckpt = dir.file("model.ckpt");
    REQUIRE(run_cli(train_args(data, ckpt)).exit_code == 0);

    const std::string other = dir.file("other");
    REQUIRE(run_cli(prepare_args(other, "--seed 99")).exit_code == 0);
    auto eval = run_cli("eval --checkpoint " + ckpt + " --manifest " + other +
                        "/meta_test.manifest --methods mean --out " + dir.file("r.tsv"));
    CHECK(eval.exit_code != 0);
    CHECK(eval.output.find("do not match") != std::string::npos);
}
