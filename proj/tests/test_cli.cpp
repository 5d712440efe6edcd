#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "../src/cli/cli_common.hpp"
#include "doctest.h"
#include "json.hpp"
#include "sarc/dataset.hpp"
#include "testutil.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "sarcscore");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return sarc::cli::run_main((int)argv.size(), argv.data());
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    return nlohmann::json::parse(in);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("full pipeline: synth, prepare, train, evaluate, predict, ablate, plot") {
    testutil::TempDir tmp;
    const std::string ds = tmp / "ds";
    const std::string stacks = tmp / "stacks";

    // 15 cells, three per level, no label noise: with ~equal third fractions
    // every label bin splits 1/1/1 so all three subsets are populated.
    REQUIRE(run_cli({"--out", ds, "--seed", "4", "synth", "--n", "15", "--height", "64",
                     "--width", "64", "--expert-noise-prob", "0"}) == 0);
    CHECK(fs::exists(ds + "/manifest.csv"));
    CHECK(fs::exists(ds + "/spec.json"));
    CHECK(fs::exists(ds + "/config_resolved.json"));
    auto produced = read_json(ds + "/produced_files.json");
    CHECK(produced.at("command") == "synth");

    const std::string manifest = ds + "/manifest.csv";
    auto m = sarc::load_manifest(manifest);
    REQUIRE(m.records.size() == 15);
    const std::string img0 = (fs::path(ds) / m.records[0].image_path).string();
    const std::string stem0 = fs::path(img0).stem().string();

    // prepare refuses to silently skip the maturity channel...
    CHECK(run_cli({"--out", stacks, "prepare", "--manifest", manifest}) == 2);
    // ...but writes stacks when told to leave it blank.
    REQUIRE(run_cli({"--out", stacks, "prepare", "--manifest", manifest,
                     "--no-maturity"}) == 0);
    const std::string stack0 = stacks + "/" + stem0 + "_stack.tiff";
    REQUIRE(fs::exists(stack0));
    CHECK(fs::exists(stacks + "/" + stem0 + "_stack.json"));

    // A second run leaves up-to-date stacks untouched.
    const auto mtime = fs::last_write_time(stack0);
    REQUIRE(run_cli({"--out", stacks, "prepare", "--manifest", manifest,
                     "--no-maturity"}) == 0);
    CHECK(fs::last_write_time(stack0) == mtime);

    // One-epoch training run at toy scale.
    const std::string train_out = tmp / "train";
    REQUIRE(run_cli({"--out", train_out, "--seed", "1", "train", "--manifest", manifest,
                     "--stacks", stacks, "--epochs", "1", "--batch", "4", "--lr", "1e-4",
                     "--train-frac", "0.34", "--val-frac", "0.33", "--test-frac",
                     "0.33"}) == 0);
    const std::string ckpt = train_out + "/model.ckpt";
    REQUIRE(fs::exists(ckpt));
    CHECK(fs::exists(train_out + "/split.json"));
    auto hist = read_json(train_out + "/history.json");
    CHECK(hist.at("train_loss").size() == 1);
    auto resolved = read_json(train_out + "/config_resolved.json");
    CHECK(resolved.at("train_n") == 5);
    CHECK(resolved.at("val_n") == 5);
    CHECK(resolved.at("test_n") == 5);

    // Held-out evaluation against the training run's split.
    const std::string eval_out = tmp / "eval";
    REQUIRE(run_cli({"--out", eval_out, "evaluate", "--checkpoint", ckpt, "--manifest",
                     manifest, "--stacks", stacks, "--split", train_out + "/split.json",
                     "--plots"}) == 0);
    auto report = read_json(eval_out + "/eval_report.json");
    CHECK(report.at("n") == 5);
    CHECK(report.at("samples").size() == 5);
    CHECK(fs::exists(eval_out + "/scatter.png"));
    CHECK(fs::exists(eval_out + "/label_histogram.png"));

    // Single-image scoring with a precomputed stack.
    const std::string pred_out = tmp / "pred";
    REQUIRE(run_cli({"--out", pred_out, "predict", "--checkpoint", ckpt, "--image", img0,
                     "--stack", stack0}) == 0);
    auto pred = read_json(pred_out + "/" + stem0 + "_prediction.json");
    CHECK(pred.at("id") == stem0);
    const double score = pred.at("clamped_score").get<double>();
    CHECK(score >= 1.0);
    CHECK(score <= 5.0);

    // Patch-classifier training plus a sliding-window inference pass.
    const std::string pn_out = tmp / "patchnet";
    REQUIRE(run_cli({"--out", pn_out, "--seed", "2", "train-patchnet",
                     "--patches-per-class", "2", "--epochs", "1", "--batch", "5", "--lr",
                     "1e-4"}) == 0);
    const std::string pn_ckpt = pn_out + "/patchnet.ckpt";
    REQUIRE(fs::exists(pn_ckpt));
    CHECK(fs::exists(pn_out + "/val_metrics.json"));

    const std::string mm_out = tmp / "maturity";
    REQUIRE(run_cli({"--out", mm_out, "infer-patchnet", "--checkpoint", pn_ckpt, "--image",
                     img0}) == 0);
    CHECK(fs::exists(mm_out + "/" + stem0 + "_maturity.png"));
    auto side = read_json(mm_out + "/" + stem0 + "_maturity.json");
    // 64x64 images are padded to one 96x96 window.
    CHECK(side.at("rows") == 1);
    CHECK(side.at("cols") == 1);

    // A one-variant comparison table.
    const std::string ab_out = tmp / "ablate";
    REQUIRE(run_cli({"--out", ab_out, "ablate", "--manifest", manifest, "--stacks", stacks,
                     "--variants", "full", "--epochs", "1", "--batch", "4", "--lr", "1e-4",
                     "--train-frac", "0.34", "--val-frac", "0.33", "--test-frac",
                     "0.33"}) == 0);
    CHECK(fs::exists(ab_out + "/full.ckpt"));
    auto table = read_json(ab_out + "/ablation.json");
    REQUIRE(table.size() == 1);
    CHECK(table[0].at("variant") == "full");
    CHECK(table[0].at("n") == 5);
    std::ifstream csv(ab_out + "/ablation.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "variant,spearman,mae,mse,r2,n");

    // Plots from the recorded artifacts.
    const std::string plot_out = tmp / "plots";
    REQUIRE(run_cli({"--out", plot_out, "plot", "--history", train_out + "/history.json",
                     "--report", eval_out + "/eval_report.json"}) == 0);
    CHECK(fs::exists(plot_out + "/training_curves.png"));
    CHECK(fs::exists(plot_out + "/scatter.png"));
    CHECK(fs::exists(plot_out + "/label_histogram.png"));
}

TEST_CASE("config file values apply when flags are absent") {
    testutil::TempDir tmp;
    const std::string cfg_path = tmp / "config.json";
    {
        std::ofstream out(cfg_path);
        out << R"({"n": 6, "height": 64, "width": 64, "seed": 12})" << "\n";
    }
    const std::string ds = tmp / "ds";
    REQUIRE(run_cli({"--out", ds, "--config", cfg_path, "synth"}) == 0);
    auto m = sarc::load_manifest(ds + "/manifest.csv");
    CHECK(m.records.size() == 6);
    auto resolved = read_json(ds + "/config_resolved.json");
    CHECK(resolved.at("seed") == 12);

    // An explicit flag still wins over the file.
    const std::string ds2 = tmp / "ds2";
    REQUIRE(run_cli({"--out", ds2, "--config", cfg_path, "synth", "--n", "4"}) == 0);
    auto m2 = sarc::load_manifest(ds2 + "/manifest.csv");
    CHECK(m2.records.size() == 4);
}

TEST_CASE("error paths exit with the documented codes") {
    testutil::TempDir tmp;
    // Artifact-writing commands demand --out (config errors exit 2).
    CHECK(run_cli({"synth", "--n", "4"}) == 2);
    // Unknown enum-ish values are config errors too.
    const std::string ds = tmp / "ds";
    REQUIRE(run_cli({"--out", ds, "synth", "--n", "5", "--height", "64", "--width",
                     "64"}) == 0);
    CHECK(run_cli({"--out", tmp / "t", "train", "--manifest", ds + "/manifest.csv",
                   "--stacks", tmp / "nostacks", "--ablation", "bogus"}) == 2);
    CHECK(run_cli({"--out", tmp / "e", "evaluate", "--checkpoint", tmp / "none.ckpt",
                   "--manifest", ds + "/manifest.csv", "--stacks", tmp / "nostacks",
                   "--subset", "bogus"}) == 2);
    // Missing files surface as io errors (exit 3).
    CHECK(run_cli({"--out", tmp / "p", "plot", "--history", tmp / "none.json"}) == 3);
    // Nothing to do is a config error.
    CHECK(run_cli({"--out", tmp / "p2", "plot"}) == 2);
    // Malformed manifests are parse errors (exit 4).
    const std::string bad = tmp / "bad.csv";
    {
        std::ofstream out(bad);
        out << "image_path,expert1,expert2\nx.png,not_a_number,3\n";
    }
    CHECK(run_cli({"--out", tmp / "s", "prepare", "--manifest", bad, "--no-maturity"}) == 4);
    // CLI11 handles missing required options and unknown subcommands.
    CHECK(run_cli({"train"}) != 0);
    CHECK(run_cli({"frobnicate"}) != 0);
    CHECK(run_cli({}) != 0);
}

}  // TEST_SUITE
