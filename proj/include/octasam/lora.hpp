#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "octasam/backbone.hpp"

namespace octasam::lora {

struct LoraConfig {
    int rank = 4;
    bool target_q = true;
    bool target_v = true;
    double scale = 1.0;
    /// Add each branch over the whole fused qkv output instead of its own slice.
    bool fused_add = false;
    double init_std = 0.01;
    std::uint64_t seed = 0;
    bool unfreeze_decoder = false;
    bool unfreeze_prompt_encoder = false;

    void validate() const;
    std::vector<std::string> targets() const;
};

/// Shapes of the injected matrices, one entry per encoder block.
struct AdapterState {
    int blocks = 0;
    int embed_dim = 0;
    LoraConfig config;

    /// depth * |targets| * (d*r + r*out), out = d (slice) or 3d (fused).
    std::int64_t parameter_count() const;
};

/// Adds zero-output adapters to every encoder block, marks them trainable and freezes the
/// rest of the model (except groups unfrozen by the config). Re-injecting replaces adapters.
AdapterState inject(nn::SamModel& model, const LoraConfig& cfg);

/// True when any block carries an adapter.
bool injected(const nn::SamModel& model);

/// Parameters with requires_grad set. Throws when nothing is trainable.
std::vector<nn::NamedParam> trainable_parameters(const nn::SamModel& model);
std::vector<nn::NamedParam> frozen_parameters(const nn::SamModel& model);

/// Adapter checkpoint: every trainable parameter plus the adapter and base-model configuration.
void save_adapter(const std::filesystem::path& path, const nn::SamModel& model, const LoraConfig& cfg);

struct AdapterHeader {
    LoraConfig config;
    nn::ModelConfig model;
    int blocks = 0;
    int embed_dim = 0;
};

/// Reads only the header.
AdapterHeader read_adapter_header(const std::filesystem::path& path);

/// Loads into an already injected model whose configuration must match the file. The model
/// is left untouched if anything is wrong with the file.
void load_adapter(const std::filesystem::path& path, nn::SamModel& model);

}  // namespace octasam::lora
