#include "cli_common.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "sarc/errors.hpp"
#include "sarc/image.hpp"
#include "sarc/representations.hpp"

namespace sarc::cli {

namespace fs = std::filesystem;

nlohmann::json load_config_file(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config '" + path + "'");
    try {
        nlohmann::json j;
        in >> j;
        if (!j.is_object()) throw ParseError("config '" + path + "' must be a JSON object");
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("config '" + path + "': " + e.what());
    }
}

Run::Run(const GlobalOpts& g, const std::string& command) : command_(command) {
    if (g.out_dir.empty())
        throw ConfigError("'" + command + "' writes artifacts; pass --out <dir>");
    dir_ = g.out_dir;
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir_ + "': " + ec.message());
}

std::string Run::file(const std::string& rel) {
    files_.push_back(rel);
    return (fs::path(dir_) / rel).string();
}

void Run::finish(nlohmann::json resolved_config) {
    resolved_config["command"] = command_;
    {
        std::ofstream out(fs::path(dir_) / "config_resolved.json");
        if (!out) throw IoError("cannot write config snapshot in '" + dir_ + "'");
        out << resolved_config.dump(2) << "\n";
    }
    nlohmann::json idx;
    idx["command"] = command_;
    files_.push_back("config_resolved.json");
    idx["files"] = files_;
    std::ofstream out(fs::path(dir_) / "produced_files.json");
    if (!out) throw IoError("cannot write file index in '" + dir_ + "'");
    out << idx.dump(2) << "\n";
}

uint64_t resolve_seed(const GlobalOpts& g, const nlohmann::json& cfg, uint64_t fallback) {
    if (g.seed_override >= 0) return (uint64_t)g.seed_override;
    if (cfg.contains("seed")) return cfg.at("seed").get<uint64_t>();
    return fallback;
}

TrainConfig train_config_from(const GlobalOpts& g, const nlohmann::json& cfg, double lr_flag,
                              int batch_flag, int epochs_flag, uint64_t default_seed) {
    TrainConfig tc;
    tc.lr = cfg.value("lr", tc.lr);
    tc.batch = cfg.value("batch", tc.batch);
    tc.epochs = cfg.value("epochs", tc.epochs);
    tc.weight_decay = cfg.value("weight_decay", tc.weight_decay);
    tc.lr_schedule = cfg.value("lr_schedule", tc.lr_schedule);
    if (lr_flag > 0) tc.lr = lr_flag;
    if (batch_flag > 0) tc.batch = batch_flag;
    if (epochs_flag >= 0) tc.epochs = epochs_flag;
    tc.seed = resolve_seed(g, cfg, default_seed);
    validate_train_config(tc);
    return tc;
}

uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= (unsigned char)buf[i];
            h *= 1099511628211ull;
        }
        if (!in) break;
    }
    return h;
}

std::vector<TrainSample> load_samples(const std::vector<ScoredCell>& cells,
                                      const std::vector<int>& idx,
                                      const std::string& stacks_dir) {
    std::vector<TrainSample> out;
    out.reserve(idx.size());
    for (int i : idx) {
        const ScoredCell& c = cells[i];
        const fs::path stack_path = fs::path(stacks_dir) / (c.id + "_stack.tiff");
        if (!fs::exists(stack_path))
            throw IoError("no prepared stack for '" + c.id + "' (expected " +
                          stack_path.string() + "); run `sarcscore prepare` first");
        TrainSample s;
        s.id = c.id;
        s.raw = prep_raw_input(load_cell_image(c.image_path));
        s.stack = read_stack_tiff(stack_path.string());
        s.label = (float)c.label;
        out.push_back(std::move(s));
    }
    return out;
}

LoadedData load_split_samples(const std::string& manifest_path, const std::string& stacks_dir,
                              const SplitSpec& spec, const std::string& split_json) {
    LoadedData d;
    auto manifest = load_manifest(manifest_path);
    auto filtered = filter_and_label(manifest);
    d.cells = std::move(filtered.cells);
    if (d.cells.empty())
        throw ValidationError("no cells survive the expert-agreement filter in '" +
                              manifest_path + "'");
    d.split = split_json.empty() ? split_dataset(d.cells, spec)
                                 : read_split_json(split_json, d.cells);
    d.train = load_samples(d.cells, d.split.train, stacks_dir);
    d.val = load_samples(d.cells, d.split.val, stacks_dir);
    d.test = load_samples(d.cells, d.split.test, stacks_dir);
    return d;
}

std::vector<SampleResult> predict_samples(nn::DualStreamModel<float>& model,
                                          const std::vector<TrainSample>& samples, int batch) {
    std::vector<SampleResult> out;
    out.reserve(samples.size());
    const size_t plane = (size_t)3 * 224 * 224;
    for (size_t start = 0; start < samples.size(); start += (size_t)batch) {
        const int nb = (int)std::min((size_t)batch, samples.size() - start);
        Tensor<float> raw({nb, 3, 224, 224}), stack({nb, 3, 224, 224});
        for (int b = 0; b < nb; ++b) {
            const TrainSample& s = samples[start + b];
            std::copy(s.raw.v.begin(), s.raw.v.end(), raw.data() + (size_t)b * plane);
            std::copy(s.stack.v.begin(), s.stack.v.end(), stack.data() + (size_t)b * plane);
        }
        auto preds = model.predict(raw, stack);
        for (int b = 0; b < nb; ++b)
            out.push_back({samples[start + b].id, (double)samples[start + b].label,
                           preds[b].clamped});
    }
    return out;
}

int run_main(int argc, char** argv) {
    CLI::App app{"sarcomere organization scoring pipeline"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "expanded help for every subcommand");

    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON config file (flags override it)")
        ->envname("SARC_CONFIG");
    app.add_option("--seed", g.seed_override, "seed override for the subcommand");
    app.add_option("--out", g.out_dir, "output directory for artifacts");

    register_synth(app, g);
    register_prepare(app, g);
    register_train_patchnet(app, g);
    register_infer_patchnet(app, g);
    register_train(app, g);
    register_predict(app, g);
    register_evaluate(app, g);
    register_ablate(app, g);
    register_plot(app, g);

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::cerr << "error: [" << e.category() << "] " << e.what() << "\n";
        const std::string cat = e.category();
        if (cat == "config") return 2;
        if (cat == "io") return 3;
        if (cat == "parse") return 4;
        if (cat == "validation") return 5;
        if (cat == "shape") return 6;
        if (cat == "train") return 7;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: [internal] " << e.what() << "\n";
        return 1;
    }
}

}  // namespace sarc::cli
