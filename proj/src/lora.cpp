#include "octasam/lora.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

#include "binary_io.hpp"
#include "json_config.hpp"
#include "octasam/errors.hpp"
#include "octasam/rng.hpp"

namespace octasam::lora {

namespace {

constexpr char kAdapterMagic[9] = "OCTASAMA";
constexpr std::uint32_t kAdapterVersion = 1;

bool trainable_group(const nn::NamedParam& p, const LoraConfig& cfg) {
    switch (p.group) {
        case nn::ParamGroup::Adapter: return true;
        case nn::ParamGroup::Decoder: return cfg.unfreeze_decoder;
        // the Fourier projection is a fixed buffer
        case nn::ParamGroup::PromptEncoder: return cfg.unfreeze_prompt_encoder && p.name != "prompt.pe_gaussian";
        case nn::ParamGroup::Encoder: return false;
    }
    return false;
}

std::string shape_string(Eigen::Index r, Eigen::Index c) { return std::to_string(r) + "x" + std::to_string(c); }

}  // namespace

void LoraConfig::validate() const {
    if (rank < 1) throw ConfigError("LoRA rank must be >= 1");
    if (!target_q && !target_v) throw ConfigError("LoRA targets must be nonempty");
    if (!(init_std >= 0.0)) throw ConfigError("LoRA init_std must be non-negative");
}

std::vector<std::string> LoraConfig::targets() const {
    std::vector<std::string> t;
    if (target_q) t.emplace_back("q");
    if (target_v) t.emplace_back("v");
    return t;
}

std::int64_t AdapterState::parameter_count() const {
    const std::int64_t d = embed_dim;
    const std::int64_t r = config.rank;
    const std::int64_t out = config.fused_add ? 3 * d : d;
    const std::int64_t n_targets = static_cast<std::int64_t>(config.targets().size());
    return blocks * n_targets * (d * r + r * out);
}

AdapterState inject(nn::SamModel& model, const LoraConfig& cfg) {
    cfg.validate();
    const int d = model.config().encoder.embed_dim;
    if (cfg.rank >= d)
        throw ConfigError("LoRA rank " + std::to_string(cfg.rank) + " must be smaller than embed_dim " + std::to_string(d));
    auto& blocks = model.blocks();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& w = blocks[i].qkv.weight;
        if (w.rows() != d || w.cols() != 3 * d)
            throw ShapeError("encoder block " + std::to_string(i) + " has no fused qkv projection of shape " +
                             shape_string(d, 3 * d));
    }
    Rng rng(cfg.seed);
    const int out = cfg.fused_add ? 3 * d : d;
    auto make_a = [&] {
        ag::Matrix a(d, cfg.rank);
        for (Eigen::Index r = 0; r < a.rows(); ++r)
            for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = cfg.init_std * rng.normal();
        return ag::leaf(std::move(a), true);
    };
    auto make_b = [&] { return ag::leaf(ag::Matrix::Zero(cfg.rank, out), true); };
    for (auto& b : blocks) {
        nn::QkvAdapter ad;
        ad.scale = cfg.scale;
        ad.fused_add = cfg.fused_add;
        if (cfg.target_q) {
            ad.a_q = make_a();
            ad.b_q = make_b();
        }
        if (cfg.target_v) {
            ad.a_v = make_a();
            ad.b_v = make_b();
        }
        b.adapter = std::move(ad);
    }
    for (auto& p : model.parameters()) p.var.set_requires_grad(trainable_group(p, cfg));
    return {static_cast<int>(blocks.size()), d, cfg};
}

bool injected(const nn::SamModel& model) {
    for (const auto& b : model.blocks())
        if (b.adapter) return true;
    return false;
}

std::vector<nn::NamedParam> trainable_parameters(const nn::SamModel& model) {
    std::vector<nn::NamedParam> out;
    for (auto& p : model.parameters())
        if (p.var.requires_grad()) out.push_back(p);
    if (out.empty()) throw ConfigError("no trainable parameters");
    return out;
}

std::vector<nn::NamedParam> frozen_parameters(const nn::SamModel& model) {
    std::vector<nn::NamedParam> out;
    for (auto& p : model.parameters())
        if (!p.var.requires_grad()) out.push_back(p);
    return out;
}

void save_adapter(const std::filesystem::path& path, const nn::SamModel& model, const LoraConfig& cfg) {
    if (!injected(model)) throw ConfigError("model has no adapters to save");
    const auto params = trainable_parameters(model);
    nlohmann::json header;
    header["lora"] = cfg;
    header["model"] = model.config();
    header["blocks"] = model.blocks().size();
    header["embed_dim"] = model.config().encoder.embed_dim;
    header["params"] = nlohmann::json::array();
    for (const auto& p : params) header["params"].push_back({{"name", p.name}, {"rows", p.var.rows()}, {"cols", p.var.cols()}});
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(kAdapterMagic, 8);
    binio::write_u32(out, kAdapterVersion);
    binio::write_blob(out, header.dump());
    for (const auto& p : params) binio::write_matrix(out, p.var.value());
    if (!out) throw Error("write failed: " + path.string());
}

namespace {

nlohmann::json read_header_json(std::istream& in, const std::filesystem::path& path) {
    binio::expect_magic(in, kAdapterMagic, path.string());
    const auto version = binio::read_u32(in, "version");
    if (version != kAdapterVersion) throw ParseError("unsupported adapter version " + std::to_string(version));
    try {
        return nlohmann::json::parse(binio::read_blob(in, "header"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad adapter header: ") + e.what());
    }
}

AdapterHeader to_header(const nlohmann::json& j) {
    try {
        AdapterHeader h;
        h.config = j.at("lora").get<LoraConfig>();
        h.model = j.at("model").get<nn::ModelConfig>();
        h.blocks = j.at("blocks").get<int>();
        h.embed_dim = j.at("embed_dim").get<int>();
        return h;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad adapter header: ") + e.what());
    }
}

}  // namespace

AdapterHeader read_adapter_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open adapter " + path.string());
    return to_header(read_header_json(in, path));
}

void load_adapter(const std::filesystem::path& path, nn::SamModel& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open adapter " + path.string());
    const auto json = read_header_json(in, path);
    const auto header = to_header(json);
    if (!injected(model)) throw ConfigError("load_adapter needs an injected model");
    if (header.blocks != static_cast<int>(model.blocks().size()) || header.embed_dim != model.config().encoder.embed_dim)
        throw ShapeError("adapter file has " + std::to_string(header.blocks) + " blocks of width " +
                         std::to_string(header.embed_dim) + ", model expects " + std::to_string(model.blocks().size()) +
                         " blocks of width " + std::to_string(model.config().encoder.embed_dim));

    std::map<std::string, nn::Var> by_name;
    for (auto& p : model.parameters()) by_name.emplace(p.name, p.var);
    // every adapter matrix of the model must be present in the file
    std::map<std::string, bool> adapter_seen;
    for (auto& p : model.parameters())
        if (p.group == nn::ParamGroup::Adapter) adapter_seen[p.name] = false;

    std::vector<std::pair<nn::Var, ag::Matrix>> staged;
    for (const auto& en : json.at("params")) {
        const auto name = en.at("name").get<std::string>();
        const auto rows = en.at("rows").get<Eigen::Index>();
        const auto cols = en.at("cols").get<Eigen::Index>();
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw ShapeError("adapter file entry " + name + " has no counterpart in the model");
        if (rows != it->second.rows() || cols != it->second.cols())
            throw ShapeError(name + ": expected shape " + shape_string(it->second.rows(), it->second.cols()) +
                             ", file has " + shape_string(rows, cols));
        staged.emplace_back(it->second, binio::read_matrix(in, rows, cols, name));
        if (adapter_seen.count(name)) adapter_seen[name] = true;
    }
    for (const auto& [name, seen] : adapter_seen)
        if (!seen) {
            const auto& v = by_name.at(name);
            throw ShapeError(name + ": missing from adapter file (expected shape " + shape_string(v.rows(), v.cols()) + ")");
        }
    char extra;
    if (in.read(&extra, 1); in.gcount() != 0) throw ParseError("trailing bytes in adapter file " + path.string());

    for (auto& [var, value] : staged) var.mutable_value() = std::move(value);
    for (auto& b : model.blocks())
        if (b.adapter) b.adapter->scale = header.config.scale;
}

}  // namespace octasam::lora
