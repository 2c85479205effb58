#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "octasam/autograd.hpp"
#include "octasam/dataio.hpp"
#include "octasam/promptgen.hpp"

namespace octasam::nn {

using ag::Var;

struct EncoderDescription {
    int patch_size = 4;
    int embed_dim = 64;
    int depth = 4;
    int heads = 4;
    int input_side = 64;
    int mlp_ratio = 4;

    int grid() const { return input_side / patch_size; }
    int qkv_width() const { return 3 * embed_dim; }
    void validate() const;
};

struct ModelConfig {
    std::string variant = "tiny";
    EncoderDescription encoder;
    int prompt_dim = 32;         // neck output / prompt embedding width
    int decoder_depth = 1;       // two-way attention blocks
    int decoder_heads = 2;
    int decoder_mlp_dim = 64;
    int multimask = 3;           // candidate masks per prediction
    int upscale_stages = 2;      // each doubles the token grid
    std::uint64_t seed = 0;      // initialisation seed for the base weights

    int decoder_side() const { return encoder.grid() << upscale_stages; }
    void validate() const;

    /// input 64, patch 4, d 64, depth 4, heads 4: CPU-sized with the full block structure.
    static ModelConfig tiny(std::uint64_t seed = 0);
    /// ViT-H sized encoder at 1024 px; only practical when loaded from a weight file.
    static ModelConfig full();
};

enum class ParamGroup { Encoder, PromptEncoder, Decoder, Adapter };

std::string_view to_string(ParamGroup group);

struct NamedParam {
    std::string name;
    ParamGroup group;
    Var var;
};

struct Linear {
    Var weight;  // in x out
    Var bias;    // 1 x out
    Var operator()(const Var& x) const;
};

struct LayerNorm {
    Var gamma;
    Var beta;
    Var operator()(const Var& x) const;
};

/// Low-rank bypass for one block's fused qkv projection. In slice mode the q and v branches
/// write into their thirds of the qkv output; in fused mode each branch spans the whole
/// output width.
struct QkvAdapter {
    std::optional<Var> a_q, b_q, a_v, b_v;
    double scale = 1.0;
    bool fused_add = false;
};

struct EncoderBlock {
    LayerNorm norm1;
    Linear qkv;
    Linear proj;
    LayerNorm norm2;
    Linear mlp1;
    Linear mlp2;
    int heads = 1;
    std::optional<QkvAdapter> adapter;

    Var qkv_projection(const Var& x) const;
    Var operator()(const Var& x) const;
};

/// Image embedding: a grid x grid token matrix (row-major tokens) of width prompt_dim.
struct Latent {
    Var tokens;
    int grid = 0;
};

struct PromptEmbedding {
    Var sparse;          // one row per point, or the single "no prompt" row
    int count = 0;       // number of prompt points (0 for the no-prompt embedding)
    bool no_prompt = false;
};

struct MaskPrediction {
    Var logits;                          // (side*side) x multimask, row-major pixels
    Var confidence;                      // 1 x multimask
    int side = 0;
    std::vector<Eigen::MatrixXd> masks;  // sigmoid of the logits, side x side
    std::vector<double> confidences;

    std::size_t size() const { return confidences.size(); }
};

struct BestMask {
    std::size_t index = 0;
    Eigen::MatrixXd mask;
    double confidence = 0.0;
};

/// Highest-confidence candidate; ties go to the lowest index.
std::size_t best_index(const std::vector<double>& confidences);
BestMask select_best(const MaskPrediction& pred);

/// Promptable segmentation model: image encoder, point prompt encoder, mask decoder.
/// Forward passes never mutate the model.
class SamModel {
public:
    explicit SamModel(const ModelConfig& cfg);
    ~SamModel();
    SamModel(SamModel&&) noexcept;
    SamModel& operator=(SamModel&&) noexcept;
    SamModel(const SamModel&) = delete;
    SamModel& operator=(const SamModel&) = delete;

    const ModelConfig& config() const { return cfg_; }

    /// Image must be input_side x input_side x 3.
    Latent encode_image(const Image& image) const;
    /// Points in original image space; `transform` maps them to encoder space.
    PromptEmbedding encode_prompts(const std::vector<promptgen::PromptPoint>& points,
                                   const dataio::GeometricTransform& transform) const;
    MaskPrediction decode_mask(const Latent& latent, const PromptEmbedding& prompt) const;

    /// Every parameter, base and adapter, in a fixed order.
    std::vector<NamedParam> parameters() const;
    std::vector<EncoderBlock>& blocks();
    const std::vector<EncoderBlock>& blocks() const;

    /// Base weights (no adapters).
    void save_weights(const std::filesystem::path& path) const;
    static SamModel load_weights(const std::filesystem::path& path);

    /// Dense positional encoding of the image token grid (grid*grid x prompt_dim).
    ag::Matrix dense_positional_encoding() const;
    /// Random Fourier positional encoding of points in encoder pixel space.
    ag::Matrix encode_coordinates(const std::vector<PointF>& points) const;

private:
    struct Impl;
    ModelConfig cfg_;
    std::unique_ptr<Impl> impl_;
};

/// FNV-1a over the raw bytes of the given parameters, in order.
std::uint64_t checksum(const std::vector<NamedParam>& params);

}  // namespace octasam::nn
