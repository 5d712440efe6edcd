#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "cli_common.hpp"
#include "sarc/checkpoint.hpp"

namespace sarc::cli {

void register_predict(CLI::App& app, GlobalOpts& g) {
    auto* cmd = app.add_subcommand("predict", "score one cell image");
    struct State {
        std::string ckpt, image, stack, patchnet;
        bool exclude_dc = false;
    };
    auto st = std::make_shared<State>();

    cmd->add_option("--checkpoint", st->ckpt, "dual-stream model checkpoint")->required();
    cmd->add_option("--image", st->image, "input cell image")->required();
    cmd->add_option("--stack", st->stack, "precomputed representation stack (TIFF)");
    cmd->add_option("--patchnet", st->patchnet,
                    "patch classifier for the maturity channel (when no --stack)");
    cmd->add_flag("--exclude-dc", st->exclude_dc, "drop the DC term from window power");

    cmd->callback([&g, st]() {
        nn::DualStreamModel<float> model = load_dualstream(st->ckpt);
        CellImage img = load_cell_image(st->image);

        Tensor<float> stack;
        if (!st->stack.empty()) {
            stack = read_stack_tiff(st->stack);
        } else {
            FFTPowerImage fft = fft_power_map(img, st->exclude_dc);
            GradientMagnitudeImage grad = sobel_gradient_magnitude(img);
            MaturityMap maturity;
            if (st->patchnet.empty()) {
                std::cerr << "warning: no --patchnet given; the maturity channel is "
                             "all background\n";
                maturity.source_id = img.id;
                maturity.values = Tensor<uint8_t>({fft.values.dim(0), fft.values.dim(1)});
            } else {
                nn::PatchNet<float> pn = load_patchnet(st->patchnet);
                maturity = infer_maturity_map(pn, img);
            }
            stack = assemble_stack(fft, maturity, grad).chw;
        }

        Tensor<float> raw1 = prep_raw_input(img);
        Tensor<float> raw({1, 3, 224, 224}), stack4({1, 3, 224, 224});
        raw.v = raw1.v;
        check_shape(stack, {3, 224, 224}, "stack");
        stack4.v = stack.v;
        ScorePrediction pred = model.predict(raw, stack4)[0];

        nlohmann::json j{{"id", img.id},
                         {"raw_score", pred.raw},
                         {"clamped_score", pred.clamped}};
        std::cout << j.dump(2) << "\n";
        if (!g.out_dir.empty()) {
            Run run(g, "predict");
            std::ofstream out(run.file(img.id + "_prediction.json"));
            out << j.dump(2) << "\n";
            run.finish(nlohmann::json{{"checkpoint", st->ckpt},
                                      {"image", st->image},
                                      {"stack", st->stack},
                                      {"patchnet", st->patchnet},
                                      {"exclude_dc", st->exclude_dc}});
        }
    });
}

}  // namespace sarc::cli
