#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "cli_common.hpp"
#include "sarc/checkpoint.hpp"
#include "sarc/representations.hpp"

namespace sarc::cli {

namespace fs = std::filesystem;

void register_prepare(CLI::App& app, GlobalOpts& g) {
    auto* cmd = app.add_subcommand(
        "prepare", "compute representation stacks for every image in a manifest");
    struct State {
        std::string manifest;
        std::string patchnet_ckpt;
        bool no_maturity = false;
        bool exclude_dc = false;
        bool force = false;
        int batch = 25;
    };
    auto st = std::make_shared<State>();

    cmd->add_option("--manifest", st->manifest, "dataset manifest CSV")->required();
    cmd->add_option("--patchnet", st->patchnet_ckpt,
                    "patch-classifier checkpoint for the maturity channel");
    cmd->add_flag("--no-maturity", st->no_maturity,
                  "write an all-background maturity channel instead of classifying");
    cmd->add_flag("--exclude-dc", st->exclude_dc, "drop the DC term from window power");
    cmd->add_flag("--force", st->force, "recompute even when a stack is up to date");
    cmd->add_option("--batch", st->batch, "windows per classifier forward pass");

    cmd->callback([&g, st]() {
        const nlohmann::json cfg = load_config_file(g.config_path);
        const bool exclude_dc = st->exclude_dc || cfg.value("exclude_dc", false);
        Run run(g, "prepare");

        if (!st->no_maturity && st->patchnet_ckpt.empty())
            throw ConfigError(
                "the maturity channel needs a patch classifier: pass --patchnet "
                "<checkpoint> (train one with `sarcscore train-patchnet`) or opt out "
                "with --no-maturity");

        nn::PatchNet<float> patchnet;
        if (!st->no_maturity) patchnet = load_patchnet(st->patchnet_ckpt);

        DatasetManifest manifest = load_manifest(st->manifest);
        int written = 0, skipped = 0, failed = 0;
        for (const auto& rec : manifest.records) {
            const fs::path img_path = fs::path(manifest.root) / rec.image_path;
            const std::string id = img_path.stem().string();
            const std::string stack_path = run.file(id + "_stack.tiff");
            const std::string sidecar_path = run.file(id + "_stack.json");
            try {
                const uint64_t hash = fnv1a_file(img_path.string());
                const std::string hash_hex = [&] {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)hash);
                    return std::string(buf);
                }();
                if (!st->force && fs::exists(stack_path) && fs::exists(sidecar_path)) {
                    StackMeta old = read_stack_sidecar(sidecar_path);
                    if (old.source_hash == hash_hex && old.exclude_dc == exclude_dc) {
                        ++skipped;
                        continue;
                    }
                }
                CellImage img = load_cell_image(img_path.string());
                FFTPowerImage fft = fft_power_map(img, exclude_dc);
                GradientMagnitudeImage grad = sobel_gradient_magnitude(img);
                MaturityMap maturity;
                if (st->no_maturity) {
                    maturity.source_id = img.id;
                    maturity.values =
                        Tensor<uint8_t>({fft.values.dim(0), fft.values.dim(1)});
                } else {
                    maturity = infer_maturity_map(patchnet, img, nullptr, st->batch);
                }
                RepresentationStack stack = assemble_stack(fft, maturity, grad);
                stack.meta.source_hash = hash_hex;
                write_stack_tiff(stack_path, stack.chw);
                write_stack_sidecar(sidecar_path, stack.meta);
                ++written;
            } catch (const Error& e) {
                std::cerr << "error: [" << e.category() << "] " << img_path.string() << ": "
                          << e.what() << "\n";
                ++failed;
            }
        }

        run.finish(nlohmann::json{{"manifest", st->manifest},
                                  {"exclude_dc", exclude_dc},
                                  {"maturity", st->no_maturity ? "off" : "patchnet"},
                                  {"patchnet", st->patchnet_ckpt},
                                  {"batch", st->batch}});
        std::printf("prepared %d stacks (%d up to date, %d failed)\n", written, skipped,
                    failed);
        if (failed > 0)
            throw IoError(std::to_string(failed) + " of " +
                          std::to_string(manifest.records.size()) +
                          " images failed; see messages above");
    });
}

}  // namespace sarc::cli
