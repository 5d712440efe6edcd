#include "CLI11.hpp"
#include "cli_common.hpp"
#include "sarc/checkpoint.hpp"
#include "sarc/synthgen.hpp"

namespace sarc::cli {

void register_train_patchnet(CLI::App& app, GlobalOpts& g) {
    auto* cmd = app.add_subcommand("train-patchnet",
                                   "train the five-way patch classifier on synthetic patches");
    struct State {
        int per_class = -1;
        double val_frac = -1;
        std::string preset;
        double lr = -1;
        int batch = -1, epochs = -1;
    };
    auto st = std::make_shared<State>();

    cmd->add_option("--patches-per-class", st->per_class, "fixtures per class (default 40)");
    cmd->add_option("--val-frac", st->val_frac, "validation fraction (default 0.2)");
    cmd->add_option("--preset", st->preset, "model preset: toy or paper (default toy)");
    cmd->add_option("--lr", st->lr, "learning rate");
    cmd->add_option("--batch", st->batch, "batch size");
    cmd->add_option("--epochs", st->epochs, "epoch count");

    cmd->callback([&g, st]() {
        const nlohmann::json cfg = load_config_file(g.config_path);
        const int per_class = st->per_class > 0 ? st->per_class : cfg.value("patches_per_class", 40);
        const double val_frac = st->val_frac > 0 ? st->val_frac : cfg.value("val_frac", 0.2);
        if (val_frac <= 0 || val_frac >= 1) throw ConfigError("val fraction must be in (0,1)");
        const std::string preset =
            !st->preset.empty() ? st->preset : cfg.value("preset", std::string("toy"));
        TrainConfig tc = train_config_from(g, cfg, st->lr, st->batch, st->epochs, 1);

        Run run(g, "train-patchnet");

        auto patches = generate_patches(per_class, tc.seed);
        // Deterministic stratified holdout: the tail of each class block.
        std::vector<PatchExample> train, val;
        const int val_per_class = std::max(1, (int)std::lround(per_class * val_frac));
        for (int c = 0; c < 5; ++c)
            for (int i = 0; i < per_class; ++i) {
                auto& ex = patches[(size_t)c * per_class + i];
                (i >= per_class - val_per_class ? val : train).push_back(std::move(ex));
            }

        nn::PatchNet<float> model(patchnet_preset(preset), tc.seed);
        TrainHistory h = train_patchnet(model, train, val, tc, [](int e, const TrainHistory& hh) {
            std::printf("epoch %d: train %.4f, %s %.4f\n", e, hh.train_loss.back(),
                        hh.val_metric_name.c_str(), hh.val_metric.back());
        });

        save_patchnet(run.file("patchnet.ckpt"), model, tc.seed);
        write_train_history(run.file("history.json"), h);
        PatchMetrics pm = eval_patchnet(model, val);
        {
            nlohmann::json j{{"accuracy", pm.accuracy},
                             {"precision_weighted", pm.precision_weighted},
                             {"recall_weighted", pm.recall_weighted},
                             {"f1_weighted", pm.f1_weighted},
                             {"precision_macro", pm.precision_macro},
                             {"recall_macro", pm.recall_macro},
                             {"f1_macro", pm.f1_macro}};
            std::ofstream out(run.file("val_metrics.json"));
            out << j.dump(2) << "\n";
        }

        run.finish(nlohmann::json{{"patches_per_class", per_class},
                                  {"val_frac", val_frac},
                                  {"preset", preset},
                                  {"lr", tc.lr},
                                  {"batch", tc.batch},
                                  {"epochs", tc.epochs},
                                  {"seed", tc.seed}});
        std::printf("val accuracy %.3f; checkpoint at %s/patchnet.ckpt\n", pm.accuracy,
                    run.dir().c_str());
    });
}

}  // namespace sarc::cli
