#pragma once

// Shared plumbing for the sarcscore subcommands: global flags, config-file
// handling, run-directory bookkeeping, and dataset loading used by several
// commands. Internal to src/cli.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "sarc/dataset.hpp"
#include "sarc/metrics.hpp"
#include "sarc/trainer.hpp"

namespace CLI {
class App;
}

namespace sarc::cli {

struct GlobalOpts {
    std::string config_path;
    std::string out_dir;
    int64_t seed_override = -1;  // -1 = not given
};

// {} when path is empty; ParseError on malformed JSON.
nlohmann::json load_config_file(const std::string& path);

// Creates the output directory and tracks every produced file so the run
// ends with a config_resolved.json snapshot and a produced_files.json index.
class Run {
  public:
    Run(const GlobalOpts& g, const std::string& command);

    const std::string& dir() const { return dir_; }
    std::string file(const std::string& rel);  // registers and returns dir/rel
    void finish(nlohmann::json resolved_config);

  private:
    std::string dir_, command_;
    std::vector<std::string> files_;
};

// Precedence: --seed flag > config file > fallback.
uint64_t resolve_seed(const GlobalOpts& g, const nlohmann::json& cfg, uint64_t fallback);

// Fill a TrainConfig from the config file, then let explicit CLI flags win.
// Flag values < 0 (or 0 for epochs-like counts) mean "not given".
TrainConfig train_config_from(const GlobalOpts& g, const nlohmann::json& cfg, double lr_flag,
                              int batch_flag, int epochs_flag, uint64_t default_seed);

uint64_t fnv1a_file(const std::string& path);

// Manifest -> filter -> stratified split, with samples assembled from the
// raw images plus the prepared stack files under stacks_dir.
struct LoadedData {
    std::vector<ScoredCell> cells;
    SplitResult split;
    std::vector<TrainSample> train, val, test;
};

LoadedData load_split_samples(const std::string& manifest_path, const std::string& stacks_dir,
                              const SplitSpec& spec, const std::string& split_json);

std::vector<TrainSample> load_samples(const std::vector<ScoredCell>& cells,
                                      const std::vector<int>& idx,
                                      const std::string& stacks_dir);

// Batched clamped-score predictions for one sample list.
std::vector<SampleResult> predict_samples(nn::DualStreamModel<float>& model,
                                          const std::vector<TrainSample>& samples, int batch);

void register_synth(CLI::App& app, GlobalOpts& g);
void register_prepare(CLI::App& app, GlobalOpts& g);
void register_train_patchnet(CLI::App& app, GlobalOpts& g);
void register_infer_patchnet(CLI::App& app, GlobalOpts& g);
void register_train(CLI::App& app, GlobalOpts& g);
void register_predict(CLI::App& app, GlobalOpts& g);
void register_evaluate(CLI::App& app, GlobalOpts& g);
void register_ablate(CLI::App& app, GlobalOpts& g);
void register_plot(CLI::App& app, GlobalOpts& g);

int run_main(int argc, char** argv);

}  // namespace sarc::cli
