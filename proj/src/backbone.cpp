#include "octasam/backbone.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "json_config.hpp"
#include "octasam/errors.hpp"
#include "octasam/rng.hpp"

namespace octasam::nn {

namespace {

constexpr double kTwoPi = 6.283185307179586;
constexpr char kWeightsMagic[9] = "OCTASAMW";
constexpr std::uint32_t kWeightsVersion = 1;

Var param(ag::Matrix value) { return ag::leaf(std::move(value), false); }

ag::Matrix normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double std) {
    ag::Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = std * rng.normal();
    return m;
}

Linear make_linear(Rng& rng, int in, int out) {
    return {param(normal_matrix(rng, in, out, 1.0 / std::sqrt(static_cast<double>(in)))),
            param(ag::Matrix::Zero(1, out))};
}

LayerNorm make_norm(int width) {
    return {param(ag::Matrix::Ones(1, width)), param(ag::Matrix::Zero(1, width))};
}

/// Multi-head scaled dot-product attention over already projected q, k, v.
Var attend(const Var& q, const Var& k, const Var& v, int heads) {
    const auto width = q.cols();
    const auto dh = width / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const Var qh = ag::slice_cols(q, h * dh, dh);
        const Var kh = ag::slice_cols(k, h * dh, dh);
        const Var vh = ag::slice_cols(v, h * dh, dh);
        const Var att = ag::softmax_rows(ag::scale(ag::matmul(qh, ag::transpose(kh)), inv));
        outs.push_back(ag::matmul(att, vh));
    }
    return heads == 1 ? outs.front() : ag::concat_cols(outs);
}

struct Mlp {
    std::vector<Linear> layers;
    bool gelu = false;

    Var operator()(Var x) const {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            x = layers[i](x);
            if (i + 1 < layers.size()) x = gelu ? ag::gelu(x) : ag::relu(x);
        }
        return x;
    }
};

Mlp make_mlp(Rng& rng, const std::vector<int>& widths, bool gelu) {
    Mlp m;
    m.gelu = gelu;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) m.layers.push_back(make_linear(rng, widths[i], widths[i + 1]));
    return m;
}

}  // namespace

std::string_view to_string(ParamGroup group) {
    switch (group) {
        case ParamGroup::Encoder: return "encoder";
        case ParamGroup::PromptEncoder: return "prompt_encoder";
        case ParamGroup::Decoder: return "decoder";
        case ParamGroup::Adapter: return "adapter";
    }
    return "unknown";
}

void EncoderDescription::validate() const {
    if (patch_size <= 0 || embed_dim <= 0 || depth <= 0 || heads <= 0 || input_side <= 0 || mlp_ratio <= 0)
        throw ConfigError("encoder sizes must be positive");
    if (input_side % patch_size != 0) throw ConfigError("encoder input_side must be a multiple of patch_size");
    if (embed_dim % heads != 0) throw ConfigError("encoder embed_dim must be divisible by heads");
}

void ModelConfig::validate() const {
    encoder.validate();
    if (prompt_dim <= 0 || prompt_dim % 2 != 0) throw ConfigError("prompt_dim must be positive and even");
    if (decoder_depth <= 0 || decoder_heads <= 0 || decoder_mlp_dim <= 0) throw ConfigError("decoder sizes must be positive");
    if ((prompt_dim / 2) % decoder_heads != 0) throw ConfigError("prompt_dim/2 must be divisible by decoder_heads");
    if (multimask <= 0) throw ConfigError("multimask must be positive");
    if (upscale_stages < 0 || upscale_stages > 6) throw ConfigError("upscale_stages must be in [0, 6]");
}

ModelConfig ModelConfig::tiny(std::uint64_t seed) {
    ModelConfig c;
    c.seed = seed;
    return c;
}

ModelConfig ModelConfig::full() {
    ModelConfig c;
    c.variant = "vit-h";
    c.encoder = {16, 1280, 32, 16, 1024, 4};
    c.prompt_dim = 256;
    c.decoder_depth = 2;
    c.decoder_heads = 8;
    c.decoder_mlp_dim = 2048;
    c.upscale_stages = 2;
    return c;
}

Var Linear::operator()(const Var& x) const { return ag::add_row(ag::matmul(x, weight), bias); }

Var LayerNorm::operator()(const Var& x) const { return ag::add_row(ag::mul_row(ag::normalize_rows(x), gamma), beta); }

Var EncoderBlock::qkv_projection(const Var& x) const {
    Var y = qkv(x);
    if (!adapter) return y;
    const QkvAdapter& ad = *adapter;
    const auto n = x.rows();
    const auto d = y.cols() / 3;
    auto branch = [&](const std::optional<Var>& a, const std::optional<Var>& b) -> std::optional<Var> {
        if (!a || !b) return std::nullopt;
        Var out = ag::matmul(ag::matmul(x, *a), *b);
        return ad.scale == 1.0 ? out : ag::scale(out, ad.scale);
    };
    const auto dq = branch(ad.a_q, ad.b_q);
    const auto dv = branch(ad.a_v, ad.b_v);
    if (ad.fused_add) {
        if (dq) y = ag::add(y, *dq);
        if (dv) y = ag::add(y, *dv);
        return y;
    }
    if (!dq && !dv) return y;
    const Var zero = ag::constant(ag::Matrix::Zero(n, d));
    const Var parts[3] = {dq ? *dq : zero, zero, dv ? *dv : zero};
    return ag::add(y, ag::concat_cols(parts));
}

Var EncoderBlock::operator()(const Var& x) const {
    const Var h = qkv_projection(norm1(x));
    const auto d = h.cols() / 3;
    const Var att = attend(ag::slice_cols(h, 0, d), ag::slice_cols(h, d, d), ag::slice_cols(h, 2 * d, d), heads);
    const Var x1 = ag::add(x, proj(att));
    return ag::add(x1, mlp2(ag::gelu(mlp1(norm2(x1)))));
}

std::size_t best_index(const std::vector<double>& confidences) {
    if (confidences.empty()) throw DataError("no candidate masks");
    std::size_t best = 0;
    for (std::size_t i = 1; i < confidences.size(); ++i)
        if (confidences[i] > confidences[best]) best = i;
    return best;
}

BestMask select_best(const MaskPrediction& pred) {
    const auto i = best_index(pred.confidences);
    return {i, pred.masks[i], pred.confidences[i]};
}

// Decoder attention with an internal width reduced by `downsample`.
struct DecoderAttention {
    Linear q, k, v, out;
    int heads = 1;

    Var operator()(const Var& qx, const Var& kx, const Var& vx) const {
        return out(attend(q(qx), k(kx), v(vx), heads));
    }
};

struct TwoWayBlock {
    DecoderAttention self_attn, cross_token_to_image, cross_image_to_token;
    LayerNorm norm1, norm2, norm3, norm4;
    Mlp mlp;
    bool skip_first_pe = false;
};

struct SamModel::Impl {
    // image encoder
    Linear patch_embed;
    Var pos_embed;
    std::vector<EncoderBlock> blocks;
    Linear neck;
    LayerNorm neck_norm;
    // prompt encoder
    Var pe_gaussian;  // 2 x prompt_dim/2
    Var point_embed[2];
    Var not_a_point;
    Var no_mask;
    // mask decoder
    Var iou_token;
    Var mask_tokens;
    std::vector<TwoWayBlock> layers;
    DecoderAttention final_attn;
    LayerNorm norm_final;
    std::vector<Linear> upscale;
    std::vector<LayerNorm> upscale_norm;
    std::vector<Mlp> hyper;
    Mlp iou_head;

    template <class F>
    void visit(F&& f) const {
        auto lin = [&](const std::string& n, ParamGroup g, const Linear& l) {
            f(n + ".weight", g, l.weight);
            f(n + ".bias", g, l.bias);
        };
        auto norm = [&](const std::string& n, ParamGroup g, const LayerNorm& l) {
            f(n + ".gamma", g, l.gamma);
            f(n + ".beta", g, l.beta);
        };
        auto mlp = [&](const std::string& n, ParamGroup g, const Mlp& m) {
            for (std::size_t i = 0; i < m.layers.size(); ++i) lin(n + "." + std::to_string(i), g, m.layers[i]);
        };
        auto attn = [&](const std::string& n, const DecoderAttention& a) {
            lin(n + ".q", ParamGroup::Decoder, a.q);
            lin(n + ".k", ParamGroup::Decoder, a.k);
            lin(n + ".v", ParamGroup::Decoder, a.v);
            lin(n + ".out", ParamGroup::Decoder, a.out);
        };
        const auto E = ParamGroup::Encoder;
        lin("encoder.patch_embed", E, patch_embed);
        f("encoder.pos_embed", E, pos_embed);
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto n = "encoder.blocks." + std::to_string(i);
            const auto& b = blocks[i];
            norm(n + ".norm1", E, b.norm1);
            lin(n + ".qkv", E, b.qkv);
            lin(n + ".proj", E, b.proj);
            norm(n + ".norm2", E, b.norm2);
            lin(n + ".mlp1", E, b.mlp1);
            lin(n + ".mlp2", E, b.mlp2);
        }
        lin("encoder.neck", E, neck);
        norm("encoder.neck_norm", E, neck_norm);
        const auto P = ParamGroup::PromptEncoder;
        f("prompt.pe_gaussian", P, pe_gaussian);
        f("prompt.point_embed.0", P, point_embed[0]);
        f("prompt.point_embed.1", P, point_embed[1]);
        f("prompt.not_a_point", P, not_a_point);
        f("prompt.no_mask", P, no_mask);
        const auto D = ParamGroup::Decoder;
        f("decoder.iou_token", D, iou_token);
        f("decoder.mask_tokens", D, mask_tokens);
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto n = "decoder.layers." + std::to_string(i);
            const auto& l = layers[i];
            attn(n + ".self_attn", l.self_attn);
            norm(n + ".norm1", D, l.norm1);
            attn(n + ".cross_token_to_image", l.cross_token_to_image);
            norm(n + ".norm2", D, l.norm2);
            mlp(n + ".mlp", D, l.mlp);
            norm(n + ".norm3", D, l.norm3);
            attn(n + ".cross_image_to_token", l.cross_image_to_token);
            norm(n + ".norm4", D, l.norm4);
        }
        attn("decoder.final_attn", final_attn);
        norm("decoder.norm_final", D, norm_final);
        for (std::size_t i = 0; i < upscale.size(); ++i) lin("decoder.upscale." + std::to_string(i), D, upscale[i]);
        for (std::size_t i = 0; i < upscale_norm.size(); ++i)
            norm("decoder.upscale_norm." + std::to_string(i), D, upscale_norm[i]);
        for (std::size_t i = 0; i < hyper.size(); ++i) mlp("decoder.hyper." + std::to_string(i), D, hyper[i]);
        mlp("decoder.iou_head", D, iou_head);
    }
};

namespace {

DecoderAttention make_attention(Rng& rng, int width, int downsample, int heads) {
    const int inner = width / downsample;
    return {make_linear(rng, width, inner), make_linear(rng, width, inner), make_linear(rng, width, inner),
            make_linear(rng, inner, width), heads};
}

}  // namespace

SamModel::SamModel(const ModelConfig& cfg) : cfg_(cfg), impl_(std::make_unique<Impl>()) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    Impl& m = *impl_;
    const auto& e = cfg_.encoder;
    const int d = e.embed_dim;
    const int c = cfg_.prompt_dim;
    const int tokens = e.grid() * e.grid();

    m.patch_embed = make_linear(rng, 3 * e.patch_size * e.patch_size, d);
    m.pos_embed = param(normal_matrix(rng, tokens, d, 0.02));
    for (int i = 0; i < e.depth; ++i) {
        EncoderBlock b;
        b.norm1 = make_norm(d);
        b.qkv = make_linear(rng, d, 3 * d);
        b.proj = make_linear(rng, d, d);
        b.norm2 = make_norm(d);
        b.mlp1 = make_linear(rng, d, d * e.mlp_ratio);
        b.mlp2 = make_linear(rng, d * e.mlp_ratio, d);
        b.heads = e.heads;
        m.blocks.push_back(std::move(b));
    }
    m.neck = make_linear(rng, d, c);
    m.neck_norm = make_norm(c);

    m.pe_gaussian = param(normal_matrix(rng, 2, c / 2, 1.0));
    m.point_embed[0] = param(normal_matrix(rng, 1, c, 1.0));
    m.point_embed[1] = param(normal_matrix(rng, 1, c, 1.0));
    m.not_a_point = param(normal_matrix(rng, 1, c, 1.0));
    m.no_mask = param(normal_matrix(rng, 1, c, 1.0));

    m.iou_token = param(normal_matrix(rng, 1, c, 1.0));
    m.mask_tokens = param(normal_matrix(rng, cfg_.multimask, c, 1.0));
    for (int i = 0; i < cfg_.decoder_depth; ++i) {
        TwoWayBlock l;
        l.self_attn = make_attention(rng, c, 1, cfg_.decoder_heads);
        l.norm1 = make_norm(c);
        l.cross_token_to_image = make_attention(rng, c, 2, cfg_.decoder_heads);
        l.norm2 = make_norm(c);
        l.mlp = make_mlp(rng, {c, cfg_.decoder_mlp_dim, c}, false);
        l.norm3 = make_norm(c);
        l.cross_image_to_token = make_attention(rng, c, 2, cfg_.decoder_heads);
        l.norm4 = make_norm(c);
        l.skip_first_pe = i == 0;
        m.layers.push_back(std::move(l));
    }
    m.final_attn = make_attention(rng, c, 2, cfg_.decoder_heads);
    m.norm_final = make_norm(c);
    int width = c;
    for (int s = 0; s < cfg_.upscale_stages; ++s) {
        const int next = std::max(width / 2, 8);
        m.upscale.push_back(make_linear(rng, width, 4 * next));
        if (s + 1 < cfg_.upscale_stages) m.upscale_norm.push_back(make_norm(next));
        width = next;
    }
    for (int i = 0; i < cfg_.multimask; ++i) m.hyper.push_back(make_mlp(rng, {c, c, c, width}, false));
    m.iou_head = make_mlp(rng, {c, c, c, cfg_.multimask}, false);
}

SamModel::~SamModel() = default;
SamModel::SamModel(SamModel&&) noexcept = default;
SamModel& SamModel::operator=(SamModel&&) noexcept = default;

std::vector<EncoderBlock>& SamModel::blocks() { return impl_->blocks; }
const std::vector<EncoderBlock>& SamModel::blocks() const { return impl_->blocks; }

std::vector<NamedParam> SamModel::parameters() const {
    std::vector<NamedParam> out;
    impl_->visit([&](const std::string& name, ParamGroup g, const Var& v) { out.push_back({name, g, v}); });
    for (std::size_t i = 0; i < impl_->blocks.size(); ++i) {
        const auto& ad = impl_->blocks[i].adapter;
        if (!ad) continue;
        const auto n = "adapter.blocks." + std::to_string(i);
        if (ad->a_q) out.push_back({n + ".a_q", ParamGroup::Adapter, *ad->a_q});
        if (ad->b_q) out.push_back({n + ".b_q", ParamGroup::Adapter, *ad->b_q});
        if (ad->a_v) out.push_back({n + ".a_v", ParamGroup::Adapter, *ad->a_v});
        if (ad->b_v) out.push_back({n + ".b_v", ParamGroup::Adapter, *ad->b_v});
    }
    return out;
}

Latent SamModel::encode_image(const Image& image) const {
    const auto& e = cfg_.encoder;
    const int s = e.input_side;
    if (image.height() != s || image.width() != s || image.channels() != 3)
        throw ShapeError("encoder expects a " + std::to_string(s) + "x" + std::to_string(s) + "x3 image, got " +
                         std::to_string(image.height()) + "x" + std::to_string(image.width()) + "x" +
                         std::to_string(image.channels()));
    const int p = e.patch_size;
    const int g = e.grid();
    ag::Matrix patches(g * g, 3 * p * p);
    for (int gy = 0; gy < g; ++gy)
        for (int gx = 0; gx < g; ++gx) {
            Eigen::Index col = 0;
            for (int dy = 0; dy < p; ++dy)
                for (int dx = 0; dx < p; ++dx)
                    for (int ch = 0; ch < 3; ++ch) patches(gy * g + gx, col++) = image.at(gy * p + dy, gx * p + dx, ch);
        }
    const Impl& m = *impl_;
    Var x = ag::add(m.patch_embed(ag::constant(std::move(patches))), m.pos_embed);
    for (const auto& b : m.blocks) x = b(x);
    return {m.neck_norm(m.neck(x)), g};
}

ag::Matrix SamModel::encode_coordinates(const std::vector<PointF>& points) const {
    const auto& gauss = impl_->pe_gaussian.value();
    const double side = cfg_.encoder.input_side;
    const auto half = gauss.cols();
    ag::Matrix out(static_cast<Eigen::Index>(points.size()), 2 * half);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double u = 2.0 * ((points[i].x + 0.5) / side) - 1.0;
        const double v = 2.0 * ((points[i].y + 0.5) / side) - 1.0;
        for (Eigen::Index j = 0; j < half; ++j) {
            const double a = kTwoPi * (u * gauss(0, j) + v * gauss(1, j));
            out(static_cast<Eigen::Index>(i), j) = std::sin(a);
            out(static_cast<Eigen::Index>(i), half + j) = std::cos(a);
        }
    }
    return out;
}

ag::Matrix SamModel::dense_positional_encoding() const {
    const int g = cfg_.encoder.grid();
    const double cell = static_cast<double>(cfg_.encoder.input_side) / g;
    std::vector<PointF> centres;
    centres.reserve(static_cast<std::size_t>(g * g));
    // grid cell centres expressed in pixel coordinates so both encodings share one normalisation
    for (int y = 0; y < g; ++y)
        for (int x = 0; x < g; ++x) centres.push_back({(x + 0.5) * cell - 0.5, (y + 0.5) * cell - 0.5});
    return encode_coordinates(centres);
}

PromptEmbedding SamModel::encode_prompts(const std::vector<promptgen::PromptPoint>& points,
                                         const dataio::GeometricTransform& transform) const {
    const Impl& m = *impl_;
    if (points.empty()) return {m.not_a_point, 0, true};
    const double side = cfg_.encoder.input_side;
    std::vector<PointF> mapped;
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& pt = points[i];
        if (pt.polarity != 0 && pt.polarity != 1) throw DataError("point " + std::to_string(i) + " has polarity " + std::to_string(pt.polarity));
        const PointF q = transform.apply({static_cast<double>(pt.x), static_cast<double>(pt.y)});
        // in bounds of the source image (when known) and of the encoder input
        const bool in_source = transform.src_width <= 0 ||
                               (pt.x >= 0 && pt.y >= 0 && pt.x < transform.src_width && pt.y < transform.src_height);
        if (!in_source || !(q.x >= -0.5 && q.y >= -0.5 && q.x < side - 0.5 && q.y < side - 0.5)) bad.push_back(i);
        mapped.push_back(q);
    }
    if (!bad.empty()) {
        std::string list;
        for (auto i : bad) list += (list.empty() ? "" : ",") + std::to_string(i);
        throw DataError("prompt points outside the image: indices [" + list + "]");
    }
    std::vector<Var> labels;
    labels.reserve(points.size());
    for (const auto& pt : points) labels.push_back(m.point_embed[pt.polarity]);
    const Var sparse = ag::add(ag::constant(encode_coordinates(mapped)), ag::concat_rows(labels));
    return {sparse, static_cast<int>(points.size()), false};
}

MaskPrediction SamModel::decode_mask(const Latent& latent, const PromptEmbedding& prompt) const {
    const Impl& m = *impl_;
    const int c = cfg_.prompt_dim;
    if (latent.grid != cfg_.encoder.grid() || latent.tokens.cols() != c)
        throw ShapeError("latent does not match the model configuration");
    if (prompt.sparse.cols() != c) throw ShapeError("prompt embedding width mismatch");
    const int M = cfg_.multimask;

    const Var parts[3] = {m.iou_token, m.mask_tokens, prompt.sparse};
    const Var token_pe = ag::concat_rows(parts);
    const Var key_pe = ag::constant(dense_positional_encoding());
    Var queries = token_pe;
    Var keys = ag::add_row(latent.tokens, m.no_mask);

    for (const auto& l : m.layers) {
        if (l.skip_first_pe) {
            queries = l.self_attn(queries, queries, queries);
        } else {
            const Var q = ag::add(queries, token_pe);
            queries = ag::add(queries, l.self_attn(q, q, queries));
        }
        queries = l.norm1(queries);
        Var q = ag::add(queries, token_pe);
        Var k = ag::add(keys, key_pe);
        queries = l.norm2(ag::add(queries, l.cross_token_to_image(q, k, keys)));
        queries = l.norm3(ag::add(queries, l.mlp(queries)));
        q = ag::add(queries, token_pe);
        k = ag::add(keys, key_pe);
        keys = l.norm4(ag::add(keys, l.cross_image_to_token(k, q, queries)));
    }
    {
        const Var q = ag::add(queries, token_pe);
        const Var k = ag::add(keys, key_pe);
        queries = m.norm_final(ag::add(queries, m.final_attn(q, k, keys)));
    }
    const Var iou_out = ag::slice_rows(queries, 0, 1);
    const Var mask_out = ag::slice_rows(queries, 1, M);

    Var up = keys;
    int g = latent.grid;
    for (std::size_t s = 0; s < m.upscale.size(); ++s) {
        up = ag::pixel_shuffle(m.upscale[s](up), g, g);
        g *= 2;
        if (s < m.upscale_norm.size()) up = m.upscale_norm[s](up);
        up = ag::gelu(up);
    }
    std::vector<Var> hyper;
    hyper.reserve(static_cast<std::size_t>(M));
    for (int i = 0; i < M; ++i) hyper.push_back(m.hyper[static_cast<std::size_t>(i)](ag::slice_rows(mask_out, i, 1)));
    const Var logits = ag::matmul(up, ag::transpose(ag::concat_rows(hyper)));
    const Var confidence = m.iou_head(iou_out);

    MaskPrediction pred;
    pred.logits = logits;
    pred.confidence = confidence;
    pred.side = g;
    const auto& lv = logits.value();
    for (int j = 0; j < M; ++j) {
        Eigen::MatrixXd mask(g, g);
        for (int y = 0; y < g; ++y)
            for (int x = 0; x < g; ++x) mask(y, x) = 1.0 / (1.0 + std::exp(-lv(y * g + x, j)));
        pred.masks.push_back(std::move(mask));
        pred.confidences.push_back(confidence.value()(0, j));
    }
    return pred;
}

void SamModel::save_weights(const std::filesystem::path& path) const {
    nlohmann::json header;
    header["config"] = cfg_;
    std::vector<NamedParam> base;
    for (auto& p : parameters())
        if (p.group != ParamGroup::Adapter) base.push_back(p);
    for (const auto& p : base) header["params"].push_back({{"name", p.name}, {"rows", p.var.rows()}, {"cols", p.var.cols()}});
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(kWeightsMagic, 8);
    binio::write_u32(out, kWeightsVersion);
    binio::write_blob(out, header.dump());
    for (const auto& p : base) binio::write_matrix(out, p.var.value());
    if (!out) throw Error("write failed: " + path.string());
}

SamModel SamModel::load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open weights " + path.string());
    binio::expect_magic(in, kWeightsMagic, path.string());
    const auto version = binio::read_u32(in, "version");
    if (version != kWeightsVersion) throw ParseError("unsupported weights version " + std::to_string(version));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(binio::read_blob(in, "header"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad weights header: ") + e.what());
    }
    SamModel model(header.at("config").get<ModelConfig>());
    const auto params = model.parameters();
    const auto& entries = header.at("params");
    if (entries.size() != params.size()) throw ParseError("weights parameter count mismatch in " + path.string());
    std::vector<ag::Matrix> values;
    values.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& en = entries[i];
        const auto name = en.at("name").get<std::string>();
        const auto rows = en.at("rows").get<Eigen::Index>();
        const auto cols = en.at("cols").get<Eigen::Index>();
        if (name != params[i].name || rows != params[i].var.rows() || cols != params[i].var.cols())
            throw ParseError("weights entry " + name + " does not match " + params[i].name + " (" +
                             std::to_string(params[i].var.rows()) + "x" + std::to_string(params[i].var.cols()) + ")");
        values.push_back(binio::read_matrix(in, rows, cols, name));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Var v = params[i].var;
        v.mutable_value() = std::move(values[i]);
    }
    return model;
}

std::uint64_t checksum(const std::vector<NamedParam>& params) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& p : params) {
        const auto& v = p.var.value();
        const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
        const auto n = static_cast<std::size_t>(v.size()) * sizeof(double);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    }
    return h;
}

}  // namespace octasam::nn
