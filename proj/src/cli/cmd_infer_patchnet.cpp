#include <fstream>

#include "CLI11.hpp"
#include "cli_common.hpp"
#include "sarc/checkpoint.hpp"

namespace sarc::cli {

void register_infer_patchnet(CLI::App& app, GlobalOpts& g) {
    auto* cmd = app.add_subcommand("infer-patchnet",
                                   "classify sliding windows of one image into a maturity map");
    struct State {
        std::string ckpt, image, mask;
        int batch = 25;
    };
    auto st = std::make_shared<State>();

    cmd->add_option("--checkpoint", st->ckpt, "patch-classifier checkpoint")->required();
    cmd->add_option("--image", st->image, "input cell image")->required();
    cmd->add_option("--mask", st->mask, "optional 8-bit cell mask (nonzero = cell)");
    cmd->add_option("--batch", st->batch, "windows per forward pass");

    cmd->callback([&g, st]() {
        Run run(g, "infer-patchnet");
        nn::PatchNet<float> model = load_patchnet(st->ckpt);
        CellImage img = load_cell_image(st->image);

        MaturityMap map;
        if (st->mask.empty()) {
            map = infer_maturity_map(model, img, nullptr, st->batch);
        } else {
            Tensor<uint8_t> mask = read_class_png(st->mask);
            map = infer_maturity_map(model, img, &mask, st->batch);
        }

        write_class_png(run.file(img.id + "_maturity.png"), map.values);
        std::array<int, 6> counts{};
        for (uint8_t v : map.values.v) counts[v]++;
        nlohmann::json j{{"source_id", map.source_id},
                         {"rows", map.values.dim(0)},
                         {"cols", map.values.dim(1)},
                         {"window", 96},
                         {"step", 8},
                         {"class_counts", counts}};
        std::ofstream side(run.file(img.id + "_maturity.json"));
        side << j.dump(2) << "\n";

        run.finish(nlohmann::json{{"checkpoint", st->ckpt},
                                  {"image", st->image},
                                  {"mask", st->mask},
                                  {"batch", st->batch}});
        std::printf("maturity map %dx%d written to %s\n", map.values.dim(0),
                    map.values.dim(1), run.dir().c_str());
    });
}

}  // namespace sarc::cli
