#include "CLI11.hpp"
#include "cli_common.hpp"
#include "sarc/checkpoint.hpp"

namespace sarc::cli {

void register_train(CLI::App& app, GlobalOpts& g) {
    auto* cmd = app.add_subcommand("train", "train the dual-stream score regressor");
    struct State {
        std::string manifest, stacks, split_json, preset, ablation;
        double lr = -1, train_frac = -1, val_frac = -1, test_frac = -1;
        int batch = -1, epochs = -1;
    };
    auto st = std::make_shared<State>();

    cmd->add_option("--manifest", st->manifest, "dataset manifest CSV")->required();
    cmd->add_option("--stacks", st->stacks, "directory of prepared stacks")->required();
    cmd->add_option("--split", st->split_json, "reuse an existing split.json");
    cmd->add_option("--preset", st->preset, "model preset: toy or paper (default toy)");
    cmd->add_option("--ablation", st->ablation, "architecture variant (default full)");
    cmd->add_option("--lr", st->lr, "learning rate");
    cmd->add_option("--batch", st->batch, "batch size");
    cmd->add_option("--epochs", st->epochs, "epoch count");
    cmd->add_option("--train-frac", st->train_frac, "train fraction (default 0.7)");
    cmd->add_option("--val-frac", st->val_frac, "val fraction (default 0.15)");
    cmd->add_option("--test-frac", st->test_frac, "test fraction (default 0.15)");

    cmd->callback([&g, st]() {
        const nlohmann::json cfg = load_config_file(g.config_path);
        TrainConfig tc = train_config_from(g, cfg, st->lr, st->batch, st->epochs, 1);
        const std::string preset =
            !st->preset.empty() ? st->preset : cfg.value("preset", std::string("toy"));
        const std::string ablation =
            !st->ablation.empty() ? st->ablation : cfg.value("ablation", std::string("full"));
        // Architecture knobs are cheap to check; do it before any dataset IO.
        const DSarcNetConfig mc = configure_ablation(dsarcnet_preset(preset), ablation);

        SplitSpec split_spec;
        split_spec.train = st->train_frac > 0 ? st->train_frac : cfg.value("train_frac", 0.7);
        split_spec.val = st->val_frac > 0 ? st->val_frac : cfg.value("val_frac", 0.15);
        split_spec.test = st->test_frac > 0 ? st->test_frac : cfg.value("test_frac", 0.15);
        split_spec.seed = tc.seed;

        Run run(g, "train");
        LoadedData data =
            load_split_samples(st->manifest, st->stacks, split_spec, st->split_json);
        write_split_json(run.file("split.json"), data.cells, data.split, split_spec.seed);

        nn::DualStreamModel<float> model(mc, tc.seed);
        TrainHistory h =
            train_dualstream(model, data.train, data.val, tc, [](int e, const TrainHistory& hh) {
                std::printf("epoch %d: train %.4f, %s %.4f\n", e, hh.train_loss.back(),
                            hh.val_metric_name.c_str(), hh.val_metric.back());
            });

        save_dualstream(run.file("model.ckpt"), model, tc.seed);
        write_train_history(run.file("history.json"), h);

        run.finish(nlohmann::json{{"manifest", st->manifest},
                                  {"stacks", st->stacks},
                                  {"preset", preset},
                                  {"ablation", ablation},
                                  {"lr", tc.lr},
                                  {"batch", tc.batch},
                                  {"epochs", tc.epochs},
                                  {"seed", tc.seed},
                                  {"train_frac", split_spec.train},
                                  {"val_frac", split_spec.val},
                                  {"test_frac", split_spec.test},
                                  {"train_n", (int)data.train.size()},
                                  {"val_n", (int)data.val.size()},
                                  {"test_n", (int)data.test.size()}});
        const double best =
            h.selected_epoch >= 0 ? h.val_metric[h.selected_epoch] : -1.0;
        std::printf("best val mse %.4f at epoch %d; checkpoint at %s/model.ckpt\n", best,
                    h.selected_epoch, run.dir().c_str());
    });
}

}  // namespace sarc::cli
