#pragma once

// JSON mappings for configuration structs (used by checkpoints, run configs and manifests).

#include <json.hpp>

#include "octasam/backbone.hpp"
#include "octasam/errors.hpp"

namespace octasam::nn {

inline void to_json(nlohmann::json& j, const EncoderDescription& e) {
    j = {{"patch_size", e.patch_size}, {"embed_dim", e.embed_dim}, {"depth", e.depth},
         {"heads", e.heads},           {"input_side", e.input_side}, {"mlp_ratio", e.mlp_ratio}};
}

inline void from_json(const nlohmann::json& j, EncoderDescription& e) {
    e.patch_size = j.value("patch_size", e.patch_size);
    e.embed_dim = j.value("embed_dim", e.embed_dim);
    e.depth = j.value("depth", e.depth);
    e.heads = j.value("heads", e.heads);
    e.input_side = j.value("input_side", e.input_side);
    e.mlp_ratio = j.value("mlp_ratio", e.mlp_ratio);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"variant", c.variant},
         {"encoder", c.encoder},
         {"prompt_dim", c.prompt_dim},
         {"decoder_depth", c.decoder_depth},
         {"decoder_heads", c.decoder_heads},
         {"decoder_mlp_dim", c.decoder_mlp_dim},
         {"multimask", c.multimask},
         {"upscale_stages", c.upscale_stages},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.variant = j.value("variant", c.variant);
    if (j.contains("encoder")) j.at("encoder").get_to(c.encoder);
    c.prompt_dim = j.value("prompt_dim", c.prompt_dim);
    c.decoder_depth = j.value("decoder_depth", c.decoder_depth);
    c.decoder_heads = j.value("decoder_heads", c.decoder_heads);
    c.decoder_mlp_dim = j.value("decoder_mlp_dim", c.decoder_mlp_dim);
    c.multimask = j.value("multimask", c.multimask);
    c.upscale_stages = j.value("upscale_stages", c.upscale_stages);
    c.seed = j.value("seed", c.seed);
}

}  // namespace octasam::nn

#include "octasam/lora.hpp"

namespace octasam::lora {

inline void to_json(nlohmann::json& j, const LoraConfig& c) {
    j = {{"rank", c.rank},         {"targets", c.targets()},     {"scale", c.scale},
         {"fused_add", c.fused_add}, {"init_std", c.init_std}, {"seed", c.seed},
         {"unfreeze_decoder", c.unfreeze_decoder}, {"unfreeze_prompt_encoder", c.unfreeze_prompt_encoder}};
}

inline void from_json(const nlohmann::json& j, LoraConfig& c) {
    c.rank = j.value("rank", c.rank);
    if (j.contains("targets")) {
        c.target_q = c.target_v = false;
        for (const auto& t : j.at("targets")) {
            const auto s = t.get<std::string>();
            if (s == "q") c.target_q = true;
            else if (s == "v") c.target_v = true;
            else throw ConfigError("unknown LoRA target '" + s + "' (expected q or v)");
        }
    }
    c.scale = j.value("scale", c.scale);
    c.fused_add = j.value("fused_add", c.fused_add);
    c.init_std = j.value("init_std", c.init_std);
    c.seed = j.value("seed", c.seed);
    c.unfreeze_decoder = j.value("unfreeze_decoder", c.unfreeze_decoder);
    c.unfreeze_prompt_encoder = j.value("unfreeze_prompt_encoder", c.unfreeze_prompt_encoder);
}

}  // namespace octasam::lora
