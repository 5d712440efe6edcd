#include "CLI11.hpp"
#include "cli_common.hpp"
#include "sarc/checkpoint.hpp"
#include "sarc/plots.hpp"

namespace sarc::cli {

void register_evaluate(CLI::App& app, GlobalOpts& g) {
    auto* cmd = app.add_subcommand("evaluate", "score a split and report the four metrics");
    struct State {
        std::string ckpt, manifest, stacks, split_json, subset = "test";
        int batch = 16;
        bool plots = false;
    };
    auto st = std::make_shared<State>();

    cmd->add_option("--checkpoint", st->ckpt, "dual-stream model checkpoint")->required();
    cmd->add_option("--manifest", st->manifest, "dataset manifest CSV")->required();
    cmd->add_option("--stacks", st->stacks, "directory of prepared stacks")->required();
    cmd->add_option("--split", st->split_json, "split.json from training");
    cmd->add_option("--subset", st->subset, "train, val, test, or all (default test)");
    cmd->add_option("--batch", st->batch, "prediction batch size");
    cmd->add_flag("--plots", st->plots, "also write scatter and histogram PNGs");

    cmd->callback([&g, st]() {
        const nlohmann::json cfg = load_config_file(g.config_path);
        if (st->subset != "train" && st->subset != "val" && st->subset != "test" &&
            st->subset != "all")
            throw ConfigError("unknown subset '" + st->subset +
                              "' (valid: train, val, test, all)");
        SplitSpec split_spec;
        split_spec.seed = resolve_seed(g, cfg, 1);
        Run run(g, "evaluate");

        LoadedData data =
            load_split_samples(st->manifest, st->stacks, split_spec, st->split_json);
        std::vector<TrainSample>* subset = nullptr;
        std::vector<TrainSample> all;
        if (st->subset == "train") subset = &data.train;
        else if (st->subset == "val") subset = &data.val;
        else if (st->subset == "test") subset = &data.test;
        else {
            for (auto* part : {&data.train, &data.val, &data.test})
                for (auto& s : *part) all.push_back(std::move(s));
            subset = &all;
        }
        if (subset->empty()) throw ValidationError("subset '" + st->subset + "' is empty");

        nn::DualStreamModel<float> model = load_dualstream(st->ckpt);
        EvalReport report = evaluate_samples(predict_samples(model, *subset, st->batch));
        write_eval_report(run.file("eval_report.json"), report);

        if (st->plots) {
            plot_scatter(run.file("scatter.png"), report);
            std::vector<double> labels;
            for (const auto& s : report.samples) labels.push_back(s.label);
            plot_label_histogram(run.file("label_histogram.png"), labels);
        }

        run.finish(nlohmann::json{{"checkpoint", st->ckpt},
                                  {"manifest", st->manifest},
                                  {"stacks", st->stacks},
                                  {"split", st->split_json},
                                  {"subset", st->subset},
                                  {"seed", split_spec.seed}});
        std::printf("%s n=%d spearman=%.4f mae=%.4f mse=%.4f r2=%.4f\n", st->subset.c_str(),
                    report.n, report.spearman, report.mae, report.mse, report.r2);
    });
}

}  // namespace sarc::cli
