#pragma once

#include <string>
#include <vector>

#include "sarc/dualstream.hpp"
#include "sarc/patchnet.hpp"
#include "sarc/trainer.hpp"

namespace sarc {

// Versioned binary weight file: a JSON header (kind, seed, model config,
// tensor directory) followed by raw float32 data, with a checksum trailer.
// Writes go to a temp file in the same directory and are renamed into place,
// so a crash can't leave a half-written checkpoint under the final name.

struct CheckpointMeta {
    int version = 1;
    std::string kind;  // "dualstream" or "patchnet"
    uint64_t seed = 0;
    std::string config_json;
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     nn::ParamMap<float>& params);

// Header only — cheap way to learn kind/config before building a model.
CheckpointMeta peek_checkpoint(const std::string& path);

// Copies stored tensors into an already-built model's parameters/buffers.
// Name, order, or shape mismatches are validation errors.
CheckpointMeta load_checkpoint(const std::string& path, nn::ParamMap<float>& params);

std::string dsarcnet_config_to_json(const DSarcNetConfig& cfg);
DSarcNetConfig dsarcnet_config_from_json(const std::string& js);
std::string patchnet_config_to_json(const PatchNetConfig& cfg);
PatchNetConfig patchnet_config_from_json(const std::string& js);

void save_dualstream(const std::string& path, nn::DualStreamModel<float>& model,
                     uint64_t seed);
nn::DualStreamModel<float> load_dualstream(const std::string& path,
                                           CheckpointMeta* meta_out = nullptr);

void save_patchnet(const std::string& path, nn::PatchNet<float>& model, uint64_t seed);
nn::PatchNet<float> load_patchnet(const std::string& path, CheckpointMeta* meta_out = nullptr);

void write_train_history(const std::string& path, const TrainHistory& h);
TrainHistory read_train_history(const std::string& path);

}  // namespace sarc
