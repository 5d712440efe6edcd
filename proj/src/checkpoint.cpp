#include "sarc/checkpoint.hpp"

#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace sarc {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'R', 'C', 'K', 'P', 'T', '\n'};
constexpr uint32_t kVersion = 1;

uint64_t fnv1a(const void* data, size_t len, uint64_t h = 1469598103934665603ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ParseError("checkpoint '" + path + "' is truncated");
    return v;
}

nlohmann::json read_header(std::istream& in, const std::string& path) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw ParseError("'" + path + "' is not a checkpoint file");
    const auto version = get<uint32_t>(in, path);
    if (version != kVersion)
        throw ParseError("checkpoint '" + path + "' has version " + std::to_string(version) +
                         "; this build reads version " + std::to_string(kVersion));
    const auto jlen = get<uint64_t>(in, path);
    if (jlen > (1ull << 30)) throw ParseError("checkpoint '" + path + "' header is implausibly large");
    std::string js(jlen, '\0');
    in.read(js.data(), (std::streamsize)jlen);
    if (!in) throw ParseError("checkpoint '" + path + "' is truncated");
    try {
        return nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint '" + path + "' header: " + e.what());
    }
}

CheckpointMeta meta_from_header(const nlohmann::json& j, const std::string& path) {
    CheckpointMeta m;
    try {
        m.kind = j.at("kind").get<std::string>();
        m.seed = j.at("seed").get<uint64_t>();
        m.config_json = j.at("config").dump();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint '" + path + "' header: " + e.what());
    }
    return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     nn::ParamMap<float>& params) {
    nlohmann::json header;
    header["kind"] = meta.kind;
    header["seed"] = meta.seed;
    try {
        header["config"] = nlohmann::json::parse(meta.config_json.empty() ? "{}"
                                                                          : meta.config_json);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint config is not valid JSON: ") + e.what());
    }
    nlohmann::json dir = nlohmann::json::array();
    for (auto& [name, p] : params.params)
        dir.push_back({{"name", name}, {"shape", p.val().shape}, {"buffer", false}});
    for (auto& [name, b] : params.buffers)
        dir.push_back({{"name", name}, {"shape", b->shape}, {"buffer", true}});
    header["tensors"] = dir;
    const std::string js = header.dump();

    const std::filesystem::path target(path);
    const std::filesystem::path tmp =
        target.parent_path() /
        (target.filename().string() + ".tmp-" + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write checkpoint '" + tmp.string() + "'");
        out.write(kMagic, 8);
        put(out, kVersion);
        put(out, (uint64_t)js.size());
        out.write(js.data(), (std::streamsize)js.size());
        uint64_t sum = fnv1a(nullptr, 0);
        auto dump = [&](const Tensor<float>& t) {
            out.write(reinterpret_cast<const char*>(t.data()), (std::streamsize)(t.numel() * 4));
            sum = fnv1a(t.data(), (size_t)t.numel() * 4, sum);
        };
        for (auto& [name, p] : params.params) dump(p.val());
        for (auto& [name, b] : params.buffers) dump(*b);
        put(out, sum);
        out.flush();
        if (!out) throw IoError("write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot move checkpoint into place at '" + path + "': " + ec.message());
    }
}

CheckpointMeta peek_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint '" + path + "'");
    return meta_from_header(read_header(in, path), path);
}

CheckpointMeta load_checkpoint(const std::string& path, nn::ParamMap<float>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint '" + path + "'");
    nlohmann::json header = read_header(in, path);
    CheckpointMeta meta = meta_from_header(header, path);

    const auto& dir = header.at("tensors");
    const size_t expected = params.params.size() + params.buffers.size();
    if (dir.size() != expected)
        throw ValidationError("checkpoint '" + path + "' stores " + std::to_string(dir.size()) +
                              " tensors; the model has " + std::to_string(expected));

    uint64_t sum = fnv1a(nullptr, 0);
    size_t k = 0;
    auto pull = [&](const std::string& name, Tensor<float>& t, bool is_buffer) {
        const auto& e = dir.at(k++);
        const std::string ename = e.at("name").get<std::string>();
        const auto eshape = e.at("shape").get<std::vector<int>>();
        if (ename != name)
            throw ValidationError("checkpoint '" + path + "' tensor " + std::to_string(k - 1) +
                                  " is '" + ename + "'; the model expects '" + name + "'");
        if (e.at("buffer").get<bool>() != is_buffer)
            throw ValidationError("checkpoint '" + path + "': '" + name +
                                  "' param/buffer role mismatch");
        if (eshape != t.shape)
            throw ValidationError("checkpoint '" + path + "': '" + name + "' has shape " +
                                  shape_str(eshape) + "; the model expects " +
                                  shape_str(t.shape));
        in.read(reinterpret_cast<char*>(t.data()), (std::streamsize)(t.numel() * 4));
        if (!in) throw ParseError("checkpoint '" + path + "' is truncated");
        sum = fnv1a(t.data(), (size_t)t.numel() * 4, sum);
    };
    for (auto& [name, p] : params.params) pull(name, p.val(), false);
    for (auto& [name, b] : params.buffers) pull(name, *b, true);
    const auto stored = get<uint64_t>(in, path);
    if (stored != sum) throw ParseError("checkpoint '" + path + "' failed its checksum");
    return meta;
}

std::string dsarcnet_config_to_json(const DSarcNetConfig& cfg) {
    nlohmann::json j;
    j["preset"] = cfg.preset;
    j["channels"] = cfg.channels;
    j["depths_a"] = cfg.depths_a;
    j["depths_b"] = cfg.depths_b;
    j["heads"] = cfg.heads;
    j["window"] = cfg.window;
    j["layerscale_eps"] = cfg.layerscale_eps;
    j["head_widths"] = cfg.head_widths;
    j["ablation"] = ablation_name(cfg.ablation);
    return j.dump();
}

DSarcNetConfig dsarcnet_config_from_json(const std::string& js) {
    DSarcNetConfig cfg;
    try {
        nlohmann::json j = nlohmann::json::parse(js);
        cfg.preset = j.at("preset").get<std::string>();
        cfg.channels = j.at("channels").get<std::array<int, 4>>();
        cfg.depths_a = j.at("depths_a").get<std::array<int, 4>>();
        cfg.depths_b = j.at("depths_b").get<std::array<int, 4>>();
        cfg.heads = j.at("heads").get<std::array<int, 4>>();
        cfg.window = j.at("window").get<int>();
        cfg.layerscale_eps = j.at("layerscale_eps").get<float>();
        cfg.head_widths = j.at("head_widths").get<std::vector<int>>();
        cfg.ablation = parse_ablation(j.at("ablation").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model config: ") + e.what());
    }
    return cfg;
}

std::string patchnet_config_to_json(const PatchNetConfig& cfg) {
    nlohmann::json j;
    j["channels"] = cfg.backbone.channels;
    j["depths"] = cfg.backbone.depths;
    j["layerscale_eps"] = cfg.backbone.layerscale_eps;
    j["num_classes"] = cfg.num_classes;
    return j.dump();
}

PatchNetConfig patchnet_config_from_json(const std::string& js) {
    PatchNetConfig cfg;
    cfg.backbone.in_channels = 1;
    try {
        nlohmann::json j = nlohmann::json::parse(js);
        cfg.backbone.channels = j.at("channels").get<std::array<int, 4>>();
        cfg.backbone.depths = j.at("depths").get<std::array<int, 4>>();
        cfg.backbone.layerscale_eps = j.at("layerscale_eps").get<float>();
        cfg.num_classes = j.at("num_classes").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("patch classifier config: ") + e.what());
    }
    return cfg;
}

void save_dualstream(const std::string& path, nn::DualStreamModel<float>& model,
                     uint64_t seed) {
    CheckpointMeta meta;
    meta.kind = "dualstream";
    meta.seed = seed;
    meta.config_json = dsarcnet_config_to_json(model.cfg);
    auto pmap = model.named_params();
    save_checkpoint(path, meta, pmap);
}

nn::DualStreamModel<float> load_dualstream(const std::string& path, CheckpointMeta* meta_out) {
    CheckpointMeta meta = peek_checkpoint(path);
    if (meta.kind != "dualstream")
        throw ValidationError("checkpoint '" + path + "' holds a '" + meta.kind +
                              "' model, not the dual-stream regressor");
    nn::DualStreamModel<float> model(dsarcnet_config_from_json(meta.config_json), meta.seed);
    auto pmap = model.named_params();
    load_checkpoint(path, pmap);
    if (meta_out) *meta_out = meta;
    return model;
}

void save_patchnet(const std::string& path, nn::PatchNet<float>& model, uint64_t seed) {
    CheckpointMeta meta;
    meta.kind = "patchnet";
    meta.seed = seed;
    meta.config_json = patchnet_config_to_json(model.cfg);
    auto pmap = model.named_params();
    save_checkpoint(path, meta, pmap);
}

nn::PatchNet<float> load_patchnet(const std::string& path, CheckpointMeta* meta_out) {
    CheckpointMeta meta = peek_checkpoint(path);
    if (meta.kind != "patchnet")
        throw ValidationError("checkpoint '" + path + "' holds a '" + meta.kind +
                              "' model, not the patch classifier");
    nn::PatchNet<float> model(patchnet_config_from_json(meta.config_json), meta.seed);
    auto pmap = model.named_params();
    load_checkpoint(path, pmap);
    if (meta_out) *meta_out = meta;
    return model;
}

void write_train_history(const std::string& path, const TrainHistory& h) {
    nlohmann::json j;
    j["train_loss"] = h.train_loss;
    j["val_metric"] = h.val_metric;
    j["seconds"] = h.seconds;
    j["val_metric_name"] = h.val_metric_name;
    j["selected_epoch"] = h.selected_epoch;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write history '" + path + "'");
    out << j.dump(2) << "\n";
}

TrainHistory read_train_history(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read history '" + path + "'");
    TrainHistory h;
    try {
        nlohmann::json j;
        in >> j;
        h.train_loss = j.at("train_loss").get<std::vector<double>>();
        h.val_metric = j.at("val_metric").get<std::vector<double>>();
        h.seconds = j.at("seconds").get<std::vector<double>>();
        h.val_metric_name = j.at("val_metric_name").get<std::string>();
        h.selected_epoch = j.at("selected_epoch").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("history '" + path + "': " + e.what());
    }
    return h;
}

}  // namespace sarc
