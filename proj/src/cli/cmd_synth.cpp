#include "CLI11.hpp"
#include "cli_common.hpp"
#include "sarc/synthgen.hpp"

namespace sarc::cli {

void register_synth(CLI::App& app, GlobalOpts& g) {
    auto* cmd = app.add_subcommand("synth", "generate a synthetic cell dataset");
    struct State {
        int n = -1, height = -1, width = -1;
        double noise = -1, expert_noise_prob = -1, exclude_prob = -1;
    };
    auto st = std::make_shared<State>();

    cmd->add_option("--n", st->n, "number of cells (levels cycle 1..5)");
    cmd->add_option("--height", st->height, "image height (default 128)");
    cmd->add_option("--width", st->width, "image width (default 128)");
    cmd->add_option("--noise", st->noise, "pixel noise sigma (default 0.02)");
    cmd->add_option("--expert-noise-prob", st->expert_noise_prob,
                    "probability that expert2 differs by 0.5 (default 0.5)");
    cmd->add_option("--exclude-prob", st->exclude_prob,
                    "probability of a |delta|=1.5 disagreement pair (default 0)");

    cmd->callback([&g, st]() {
        const nlohmann::json cfg = load_config_file(g.config_path);
        DatasetGenOptions o;
        o.n = cfg.value("n", o.n);
        o.height = cfg.value("height", o.height);
        o.width = cfg.value("width", o.width);
        o.noise_sigma = cfg.value("noise_sigma", o.noise_sigma);
        o.expert_noise_prob = cfg.value("expert_noise_prob", o.expert_noise_prob);
        o.exclude_prob = cfg.value("exclude_prob", o.exclude_prob);
        if (st->n >= 0) o.n = st->n;
        if (st->height >= 0) o.height = st->height;
        if (st->width >= 0) o.width = st->width;
        if (st->noise >= 0) o.noise_sigma = st->noise;
        if (st->expert_noise_prob >= 0) o.expert_noise_prob = st->expert_noise_prob;
        if (st->exclude_prob >= 0) o.exclude_prob = st->exclude_prob;
        o.seed = resolve_seed(g, cfg, o.seed);

        Run run(g, "synth");
        GeneratedDataset ds = generate_dataset(run.dir(), o);
        run.file("manifest.csv");
        run.file("spec.json");

        run.finish(nlohmann::json{{"n", o.n},
                                  {"height", o.height},
                                  {"width", o.width},
                                  {"noise_sigma", o.noise_sigma},
                                  {"expert_noise_prob", o.expert_noise_prob},
                                  {"exclude_prob", o.exclude_prob},
                                  {"seed", o.seed}});
        std::printf("wrote %zu images and %s\n", ds.image_paths.size(),
                    ds.manifest_path.c_str());
    });
}

}  // namespace sarc::cli
