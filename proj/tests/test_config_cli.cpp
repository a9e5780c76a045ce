// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "dualflow/config.hpp"

using namespace dualflow;
namespace fs = std::filesystem;

namespace {

#ifndef DUALFLOW_CLI_PATH
#define DUALFLOW_CLI_PATH ""
#endif

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DUALFLOW_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("empty config resolves to the documented full-scale defaults") {
    const RunConfig c = config_load("", {});
    CHECK(c.profile == "paper");
    CHECK(c.train_lr == 2e-4);
    CHECK(c.train_weight_decay == 2e-5);
    CHECK(c.train_warmup_steps == 1000);
    CHECK(c.train_batch_size == 32);
    CHECK(c.train_epochs == 5000);
    CHECK(c.model_n_blocks == 20);
    CHECK(c.model_latent_dim == 512);
    CHECK(c.model_n_heads == 8);
    CHECK(c.model_ffn_dim == 1024);
    CHECK(c.model_dropout == 0.1);
    CHECK(c.model_conv_kernels == std::vector<int>{7, 11, 21});
    CHECK(c.model_look_ahead == 10);
    CHECK(c.sample_steps == 200);
    CHECK(c.sample_schedule == "cosine");
    CHECK(c.train_p_both == 0.10);
    CHECK(c.train_p_text == 0.20);
    CHECK(c.train_p_music == 0.20);
    CHECK(c.loss_lambda_vel == 30.0);
    CHECK(c.loss_lambda_foot == 30.0);
    CHECK(c.loss_lambda_bl == 10.0);
    CHECK(c.loss_lambda_dm == 3.0);
    CHECK(c.loss_lambda_ro == 0.01);
    CHECK(c.loss_lambda_sync == 5.0);
}

TEST_CASE("desk profile shrinks the model and unlocks fixed steps") {
    const RunConfig c = config_parse("profile = desk\n", {});
    CHECK(c.model_n_blocks == 2);
    CHECK(c.model_latent_dim == 64);
    CHECK(c.model_n_heads == 4);
    CHECK(c.model_ffn_dim == 128);
    CHECK(c.sample_steps == 50);
    CHECK(c.train_batch_size == 8);
    CHECK(c.train_steps == 2000);
    CHECK(c.data_music_dim == 32);

    // profile applies before other file keys regardless of line order
    const RunConfig c2 = config_parse("model.latent_dim = 96\nprofile = desk\n", {});
    CHECK(c2.model_latent_dim == 96);
    CHECK(c2.model_n_blocks == 2);
}

TEST_CASE("precedence: defaults < file < overrides, deterministically") {
    const std::string file = "profile = desk\ntrain.lr = 0.005\n";
    const RunConfig a = config_parse(file, {"train.lr=0.001", "model.n_blocks=3"});
    CHECK(a.train_lr == 0.001);
    CHECK(a.model_n_blocks == 3);

    const RunConfig b = config_parse(file, {"train.lr=0.001", "model.n_blocks=3"});
    CHECK(a.echo() == b.echo());
}

TEST_CASE("unknown keys and malformed values are rejected naming the key") {
    CHECK_THROWS_WITH_AS(config_parse("data.n_clipz = 4\n", {}),
                         doctest::Contains("data.n_clipz"), ValidationError);
    CHECK_THROWS_WITH_AS(config_parse("", {"trian.lr=0.1"}), doctest::Contains("trian.lr"),
                         ValidationError);
    CHECK_THROWS_AS(config_parse("train.lr = fast\n", {}), ValidationError);
    CHECK_THROWS_AS(config_parse("model.n_heads = 2.5\n", {}), ValidationError);
}

TEST_CASE("cross-field validation catches incompatible shapes") {
    CHECK_THROWS_WITH_AS(config_parse("profile = desk\n", {"model.n_heads=3"}),
                         doctest::Contains("divisible"), ValidationError);
    CHECK_THROWS_AS(config_parse("profile = desk\nmodel.conv_kernels = 4,8\n", {}),
                    ValidationError);
    CHECK_THROWS_AS(config_parse("profile = desk\nsample.schedule = quadratic\n", {}),
                    ValidationError);
}

TEST_CASE("echo is a fixed point of parsing") {
    const RunConfig c = config_parse("profile = desk\ntrain.seed = 42\n",
                                     {"model.look_ahead=4", "run.text=a waltz duet"});
    const std::string echo1 = c.echo();
    const RunConfig reparsed = config_parse(echo1, {});
    CHECK(reparsed.echo() == echo1);
    CHECK(reparsed.model_look_ahead == 4);
    CHECK(reparsed.run_text == "a waltz duet");
}

TEST_CASE("epoch-to-step resolution") {
    RunConfig c = config_parse("profile = desk\ntrain.steps = 0\ntrain.epochs = 10\n", {});
    // 16 clips / batch 8 = 2 batches per epoch
    CHECK(c.resolved_train_steps(16) == 20);
    c.train_steps = 500;
    CHECK(c.resolved_train_steps(16) == 500);
}

TEST_CASE("cli exit codes: usage, validation and missing inputs") {
    if (std::string(DUALFLOW_CLI_PATH).empty()) return;
    CHECK(run_cli("bogus-subcommand") == 2);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("train --set model.n_heads=3 --set model.latent_dim=64") == 2);
    CHECK(run_cli("sample --mode reactive --set run.checkpoint=x") == 2);
    CHECK(run_cli("train --set profile=desk") == 2);  // missing --dataset
    CHECK(run_cli("--help") == 0);
}

TEST_CASE("cli make-dataset happy path writes manifest, echo and run info") {
    if (std::string(DUALFLOW_CLI_PATH).empty()) return;
    const auto dir = fs::temp_directory_path() / "dualflow_cli_md";
    fs::remove_all(dir);
    const std::string cfg_path = (dir / "cfg").string();
    fs::create_directories(dir);
    {
        std::ofstream cfg(cfg_path);
        cfg << "profile = desk\ndata.n_clips = 3\ndata.n_frames = 16\n";
    }
    const int code = run_cli("make-dataset --config " + cfg_path + " --out " +
                             (dir / "data").string());
    CHECK(code == 0);
    CHECK(fs::exists(dir / "data" / "manifest.jsonl"));
    CHECK(fs::exists(dir / "data" / "config_echo.cfg"));
    CHECK(fs::exists(dir / "data" / "run_info.json"));
    CHECK(fs::exists(dir / "data" / "clip_00000.dfmo"));
    CHECK(fs::exists(dir / "data" / "music_00002.dfmo"));
    fs::remove_all(dir);
}
