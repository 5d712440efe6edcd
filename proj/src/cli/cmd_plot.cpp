#include "CLI11.hpp"
#include "cli_common.hpp"
#include "sarc/checkpoint.hpp"
#include "sarc/plots.hpp"

namespace sarc::cli {

void register_plot(CLI::App& app, GlobalOpts& g) {
    auto* cmd = app.add_subcommand("plot", "render PNG figures from saved run artifacts");
    struct State {
        std::string history, report;
    };
    auto st = std::make_shared<State>();

    cmd->add_option("--history", st->history, "history.json from a training run");
    cmd->add_option("--report", st->report, "eval_report.json from an evaluate run");

    cmd->callback([&g, st]() {
        if (st->history.empty() && st->report.empty())
            throw ConfigError("nothing to plot: pass --history and/or --report");
        Run run(g, "plot");
        if (!st->history.empty()) {
            TrainHistory h = read_train_history(st->history);
            plot_training_curves(run.file("training_curves.png"), h);
        }
        if (!st->report.empty()) {
            EvalReport r = read_eval_report(st->report);
            plot_scatter(run.file("scatter.png"), r);
            std::vector<double> labels;
            for (const auto& s : r.samples) labels.push_back(s.label);
            plot_label_histogram(run.file("label_histogram.png"), labels);
        }
        run.finish(nlohmann::json{{"history", st->history}, {"report", st->report}});
    });
}

}  // namespace sarc::cli
