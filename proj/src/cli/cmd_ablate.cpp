#include <fstream>

#include "CLI11.hpp"
#include "cli_common.hpp"
#include "sarc/checkpoint.hpp"

namespace sarc::cli {

void register_ablate(CLI::App& app, GlobalOpts& g) {
    auto* cmd = app.add_subcommand(
        "ablate", "train and evaluate the architecture variants on one dataset");
    struct State {
        std::string manifest, stacks, preset, variants;
        double lr = -1, train_frac = -1, val_frac = -1, test_frac = -1;
        int batch = -1, epochs = -1;
    };
    auto st = std::make_shared<State>();

    cmd->add_option("--manifest", st->manifest, "dataset manifest CSV")->required();
    cmd->add_option("--stacks", st->stacks, "directory of prepared stacks")->required();
    cmd->add_option("--preset", st->preset, "model preset (default toy)");
    cmd->add_option("--variants", st->variants,
                    "comma-separated variant list (default: the six dual-stream rows)");
    cmd->add_option("--lr", st->lr, "learning rate");
    cmd->add_option("--batch", st->batch, "batch size");
    cmd->add_option("--epochs", st->epochs, "epoch count per variant");
    cmd->add_option("--train-frac", st->train_frac, "train fraction (default 0.7)");
    cmd->add_option("--val-frac", st->val_frac, "val fraction (default 0.15)");
    cmd->add_option("--test-frac", st->test_frac, "test fraction (default 0.15)");

    cmd->callback([&g, st]() {
        const nlohmann::json cfg = load_config_file(g.config_path);
        TrainConfig tc = train_config_from(g, cfg, st->lr, st->batch, st->epochs, 1);
        const std::string preset =
            !st->preset.empty() ? st->preset : cfg.value("preset", std::string("toy"));

        // The comparison table's default rows: every dual-stream variant.
        std::vector<std::string> variants = {"no_fusion_blocks", "no_postprocessing",
                                             "only_fft",         "only_pattern",
                                             "only_gradient",    "full"};
        if (!st->variants.empty()) {
            variants.clear();
            std::string cur;
            for (char ch : st->variants + ",") {
                if (ch == ',') {
                    if (!cur.empty()) variants.push_back(cur);
                    cur.clear();
                } else {
                    cur += ch;
                }
            }
        }
        for (const auto& v : variants) parse_ablation(v);  // fail fast with the valid list

        SplitSpec split_spec;
        split_spec.train = st->train_frac > 0 ? st->train_frac : cfg.value("train_frac", 0.7);
        split_spec.val = st->val_frac > 0 ? st->val_frac : cfg.value("val_frac", 0.15);
        split_spec.test = st->test_frac > 0 ? st->test_frac : cfg.value("test_frac", 0.15);
        split_spec.seed = tc.seed;
        Run run(g, "ablate");
        LoadedData data = load_split_samples(st->manifest, st->stacks, split_spec, "");
        write_split_json(run.file("split.json"), data.cells, data.split, split_spec.seed);

        nlohmann::json table = nlohmann::json::array();
        std::ofstream csv(run.file("ablation.csv"));
        csv << "variant,spearman,mae,mse,r2,n\n";
        for (const auto& name : variants) {
            std::printf("== variant %s ==\n", name.c_str());
            DSarcNetConfig mc = configure_ablation(dsarcnet_preset(preset), name);
            nn::DualStreamModel<float> model(mc, tc.seed);
            TrainHistory h = train_dualstream(model, data.train, data.val, tc);
            save_dualstream(run.file(name + ".ckpt"), model, tc.seed);
            write_train_history(run.file(name + "_history.json"), h);
            EvalReport r = evaluate_samples(predict_samples(model, data.test, tc.batch));
            csv << name << "," << r.spearman << "," << r.mae << "," << r.mse << "," << r.r2
                << "," << r.n << "\n";
            csv.flush();
            table.push_back({{"variant", name},
                             {"spearman", r.spearman},
                             {"mae", r.mae},
                             {"mse", r.mse},
                             {"r2", r.r2},
                             {"n", r.n}});
            std::printf("%s: spearman=%.4f mae=%.4f mse=%.4f r2=%.4f\n", name.c_str(),
                        r.spearman, r.mae, r.mse, r.r2);
        }
        {
            std::ofstream out(run.file("ablation.json"));
            out << table.dump(2) << "\n";
        }

        run.finish(nlohmann::json{{"manifest", st->manifest},
                                  {"stacks", st->stacks},
                                  {"preset", preset},
                                  {"variants", variants},
                                  {"lr", tc.lr},
                                  {"batch", tc.batch},
                                  {"epochs", tc.epochs},
                                  {"seed", tc.seed},
                                  {"train_frac", split_spec.train},
                                  {"val_frac", split_spec.val},
                                  {"test_frac", split_spec.test}});
    });
}

}  // namespace sarc::cli
