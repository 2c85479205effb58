#include "octasam/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "json_config.hpp"
#include "octasam/errors.hpp"
#include "octasam/log.hpp"
#include "octasam/rng.hpp"

namespace octasam::train {

using nlohmann::json;

// ---------------------------------------------------------------- schedule

std::string_view to_string(ScheduleMode mode) { return mode == ScheduleMode::Literal ? "literal" : "interpreted"; }

ScheduleMode parse_schedule_mode(std::string_view name) {
    if (name == "interpreted") return ScheduleMode::Interpreted;
    if (name == "literal") return ScheduleMode::Literal;
    throw ConfigError("unknown schedule mode '" + std::string(name) + "' (expected interpreted or literal)");
}

void ScheduleConfig::validate() const {
    if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
    if (!(peak_lr > 0.0) || !(floor_lr >= 0.0)) throw ConfigError("learning rates must be positive");
    if (floor_lr > peak_lr) throw ConfigError("floor_lr must not exceed peak_lr");
    if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("decay must be in (0, 1)");
}

double lr_at_epoch(int t, const ScheduleConfig& cfg) {
    if (t < 1) throw ConfigError("epoch index must be >= 1");
    const int w = cfg.warmup_epochs;
    // t / (w / peak) rather than t * peak / w: with the defaults the divisor is exactly 1e4
    if (t <= w) return static_cast<double>(t) / (static_cast<double>(w) / cfg.peak_lr);
    const double k = static_cast<double>(t - w);
    const double v = cfg.mode == ScheduleMode::Interpreted ? cfg.peak_lr * std::pow(cfg.decay, k)
                                                           : std::pow(10.0, std::log10(cfg.peak_lr) * cfg.decay * k);
    return std::max(cfg.floor_lr, v);
}

// ---------------------------------------------------------------- config

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
void take(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json prompt_json(const promptgen::PromptConfig& p) {
    return {{"n_pos", p.n_pos},
            {"n_total", p.n_total},
            {"mode", promptgen::to_string(p.mode)},
            {"min_area_px", p.min_area_px},
            {"neighborhood_radius_px", p.neighborhood_radius_px},
            {"av_opposite_fraction", p.av_opposite_fraction}};
}

void read_prompt(const json& j, promptgen::PromptConfig& p) {
    check_keys(j, {"n_pos", "n_total", "mode", "min_area_px", "neighborhood_radius_px", "av_opposite_fraction"}, "prompt");
    take(j, "n_pos", p.n_pos);
    take(j, "n_total", p.n_total);
    if (j.contains("mode")) p.mode = promptgen::parse_mode(j.at("mode").get<std::string>());
    take(j, "min_area_px", p.min_area_px);
    take(j, "neighborhood_radius_px", p.neighborhood_radius_px);
    take(j, "av_opposite_fraction", p.av_opposite_fraction);
}

json augment_json(const dataio::AugmentConfig& a) {
    return {{"hflip", a.hflip},
            {"hflip_p", a.hflip_p},
            {"brightness_contrast", a.brightness_contrast},
            {"brightness_limit", a.brightness_limit},
            {"contrast_limit", a.contrast_limit},
            {"rotation", a.rotation},
            {"max_rotation_deg", a.max_rotation_deg}};
}

void read_augment(const json& j, dataio::AugmentConfig& a) {
    check_keys(j, {"hflip", "hflip_p", "brightness_contrast", "brightness_limit", "contrast_limit", "rotation", "max_rotation_deg"},
               "augment");
    take(j, "hflip", a.hflip);
    take(j, "hflip_p", a.hflip_p);
    take(j, "brightness_contrast", a.brightness_contrast);
    take(j, "brightness_limit", a.brightness_limit);
    take(j, "contrast_limit", a.contrast_limit);
    take(j, "rotation", a.rotation);
    take(j, "max_rotation_deg", a.max_rotation_deg);
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (skeleton_iterations && *skeleton_iterations < 0) throw ConfigError("skeleton_iterations must be >= 0");
    if (!(augment.hflip_p >= 0.0 && augment.hflip_p <= 1.0)) throw ConfigError("augment.hflip_p must be in [0, 1]");
    if (!(augment.brightness_limit >= 0.0 && augment.contrast_limit >= 0.0 && augment.max_rotation_deg >= 0.0))
        throw ConfigError("augmentation limits must be non-negative");
    optimizer.validate();
    schedule.validate();
    prompt.validate();
    lora.validate();
    model.validate();
    if (lora.rank >= model.encoder.embed_dim) throw ConfigError("lora.rank must be smaller than the encoder width");
}

std::string TrainConfig::to_json_string() const {
    json j = {{"task", to_string(task)},
              {"epochs", epochs},
              {"optimizer",
               {{"name", "adamw"},
                {"beta1", optimizer.beta1},
                {"beta2", optimizer.beta2},
                {"eps", optimizer.eps},
                {"weight_decay", optimizer.weight_decay}}},
              {"schedule",
               {{"warmup_epochs", schedule.warmup_epochs},
                {"peak_lr", schedule.peak_lr},
                {"floor_lr", schedule.floor_lr},
                {"decay", schedule.decay},
                {"mode", to_string(schedule.mode)}}},
              {"batch_size", batch_size},
              {"seed", seed},
              {"prompt", prompt_json(prompt)},
              {"lora", lora},
              {"folds", folds},
              {"augment", augment_json(augment)},
              {"model", model},
              {"base_weights", base_weights},
              {"skeleton_iterations", skeleton_iterations ? json(*skeleton_iterations) : json(nullptr)},
              {"crop_local", crop_local}};
    return j.dump(2);
}

TrainConfig TrainConfig::from_json_string(const std::string& text, const TrainConfig& defaults) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    TrainConfig c = defaults;
    try {
        check_keys(j, {"task", "epochs", "optimizer", "schedule", "batch_size", "seed", "prompt", "lora", "folds", "augment",
                       "model", "base_weights", "skeleton_iterations", "crop_local"},
                   "config");
        if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
        take(j, "epochs", c.epochs);
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            check_keys(o, {"name", "beta1", "beta2", "eps", "weight_decay"}, "optimizer");
            if (o.contains("name") && o.at("name").get<std::string>() != "adamw")
                throw ConfigError("only the adamw optimizer is supported");
            take(o, "beta1", c.optimizer.beta1);
            take(o, "beta2", c.optimizer.beta2);
            take(o, "eps", c.optimizer.eps);
            take(o, "weight_decay", c.optimizer.weight_decay);
        }
        if (j.contains("schedule")) {
            const auto& s = j.at("schedule");
            check_keys(s, {"warmup_epochs", "peak_lr", "floor_lr", "decay", "mode"}, "schedule");
            take(s, "warmup_epochs", c.schedule.warmup_epochs);
            take(s, "peak_lr", c.schedule.peak_lr);
            take(s, "floor_lr", c.schedule.floor_lr);
            take(s, "decay", c.schedule.decay);
            if (s.contains("mode")) c.schedule.mode = parse_schedule_mode(s.at("mode").get<std::string>());
        }
        take(j, "batch_size", c.batch_size);
        take(j, "seed", c.seed);
        if (j.contains("prompt")) read_prompt(j.at("prompt"), c.prompt);
        if (j.contains("lora")) {
            check_keys(j.at("lora"), {"rank", "targets", "scale", "fused_add", "init_std", "seed", "unfreeze_decoder",
                                      "unfreeze_prompt_encoder"},
                       "lora");
            lora::from_json(j.at("lora"), c.lora);
        }
        take(j, "folds", c.folds);
        if (j.contains("augment")) read_augment(j.at("augment"), c.augment);
        if (j.contains("model")) {
            const auto& m = j.at("model");
            check_keys(m, {"variant", "encoder", "prompt_dim", "decoder_depth", "decoder_heads", "decoder_mlp_dim", "multimask",
                           "upscale_stages", "seed"},
                       "model");
            const auto variant = m.value("variant", c.model.variant);
            if (variant != c.model.variant) {
                if (variant == "tiny") c.model = nn::ModelConfig::tiny(c.model.seed);
                else if (variant == "vit-h") c.model = nn::ModelConfig::full();
                else throw ConfigError("unknown model variant '" + variant + "' (expected tiny or vit-h)");
            }
            nn::from_json(m, c.model);
        }
        take(j, "base_weights", c.base_weights);
        if (j.contains("skeleton_iterations")) {
            const auto& s = j.at("skeleton_iterations");
            c.skeleton_iterations = s.is_null() ? std::nullopt : std::optional<int>(s.get<int>());
        }
        take(j, "crop_local", c.crop_local);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::from_json_string(const std::string& text) { return from_json_string(text, TrainConfig{}); }

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) { return from_file(path, TrainConfig{}); }

TrainConfig TrainConfig::from_file(const std::filesystem::path& path, const TrainConfig& defaults) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_string(ss.str(), defaults);
}

std::string to_record(const EpochRecord& r) { return json{{"epoch", r.epoch}, {"lr", r.lr}, {"loss", r.loss}}.dump(); }

// ---------------------------------------------------------------- prediction

namespace {

/// Bilinear maps from the decoder grid onto an output grid whose pixels reach encoder space
/// through the axis-aligned transform `t`. prob = Sy * logits * Sx^T.
struct GridMap {
    Eigen::MatrixXd sy, sx;
    std::vector<char> row_inside, col_inside;
};

GridMap grid_map(const dataio::GeometricTransform& t, int height, int width, int enc_side, int dec_side) {
    if (t.forward(0, 1) != 0.0 || t.forward(1, 0) != 0.0) throw Error("grid_map needs an axis-aligned transform");
    const double f = static_cast<double>(dec_side) / enc_side;
    GridMap g;
    std::vector<double> ys(static_cast<std::size_t>(height)), xs(static_cast<std::size_t>(width));
    for (int y = 0; y < height; ++y) {
        const double e = t.forward(1, 1) * y + t.forward(1, 2);
        ys[static_cast<std::size_t>(y)] = (e + 0.5) * f - 0.5;
        g.row_inside.push_back(e >= -0.5 && e <= enc_side - 0.5);
    }
    for (int x = 0; x < width; ++x) {
        const double e = t.forward(0, 0) * x + t.forward(0, 2);
        xs[static_cast<std::size_t>(x)] = (e + 0.5) * f - 0.5;
        g.col_inside.push_back(e >= -0.5 && e <= enc_side - 0.5);
    }
    g.sy = dataio::sampling_matrix(ys, dec_side);
    g.sx = dataio::sampling_matrix(xs, dec_side);
    return g;
}

Eigen::MatrixXd logit_image(const Eigen::MatrixXd& logits, Eigen::Index column, int side) {
    Eigen::MatrixXd img(side, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) img(y, x) = logits(static_cast<Eigen::Index>(y) * side + x, column);
    return img;
}

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

std::optional<BBox> mask_bbox(const Mask& m) {
    BBox b{m.width(), m.height(), -1, -1};
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.at(y, x)) {
                b.x0 = std::min(b.x0, x);
                b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x);
                b.y1 = std::max(b.y1, y);
            }
    if (b.x1 < 0) return std::nullopt;
    return b;
}

}  // namespace

EncodedImage encode_for_prediction(const nn::SamModel& model, const Image& image, const std::optional<BBox>& crop_bbox) {
    ag::NoGradGuard no_grad;
    const int side = model.config().encoder.input_side;
    EncodedImage out;
    out.height = image.height();
    out.width = image.width();
    if (crop_bbox) {
        const auto crop = dataio::crop_local(image, *crop_bbox);
        const auto padded = dataio::resize_and_pad(crop.image, side);
        out.to_encoder = crop.transform.then(padded.transform);
        out.latent = model.encode_image(padded.image);
    } else {
        const auto padded = dataio::resize_and_pad(image, side);
        out.to_encoder = padded.transform;
        out.latent = model.encode_image(padded.image);
    }
    return out;
}

Prediction predict(const nn::SamModel& model, const EncodedImage& encoded, const std::vector<promptgen::PromptPoint>& points) {
    ag::NoGradGuard no_grad;
    const int h = encoded.height;
    const int w = encoded.width;
    const auto pred = model.decode_mask(encoded.latent, model.encode_prompts(points, encoded.to_encoder));
    const auto best = nn::best_index(pred.confidences);
    const auto map = grid_map(encoded.to_encoder, h, w, model.config().encoder.input_side, pred.side);
    Prediction out;
    out.index = best;
    out.confidence = pred.confidences[best];
    out.probability =
        sigmoid(map.sy * logit_image(pred.logits.value(), static_cast<Eigen::Index>(best), pred.side) * map.sx.transpose());
    out.mask = Mask(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!map.row_inside[static_cast<std::size_t>(y)] || !map.col_inside[static_cast<std::size_t>(x)]) {
                out.probability(y, x) = 0.0;
                continue;
            }
            out.mask.at(y, x) = out.probability(y, x) > 0.5 ? 1 : 0;
        }
    return out;
}

Prediction predict(const nn::SamModel& model, const Image& image, const std::vector<promptgen::PromptPoint>& points,
                   const std::optional<BBox>& crop_bbox) {
    return predict(model, encode_for_prediction(model, image, crop_bbox), points);
}

PromptedTarget prompted_target(const OctaSample& sample, const TrainConfig& cfg, Rng& rng) {
    if (!sample.has_label(cfg.task))
        throw DataError("sample " + sample.id + " has no " + std::string(to_string(cfg.task)) + " label");
    PromptedTarget out;
    try {
        out.prompts = promptgen::generate_for_task(sample, cfg.task, cfg.prompt, rng);
    } catch (const DataError& e) {
        // a label without usable components is still a valid (empty) training target
        if (std::string_view(e.what()).find("no components") == std::string_view::npos) throw;
        out.prompts = {};
    }
    out.target = out.prompts.target_mask ? *out.prompts.target_mask : sample.label(cfg.task);
    if (cfg.crop_local && cfg.prompt.mode == promptgen::Mode::Local && out.prompts.target_mask)
        out.crop_bbox = mask_bbox(*out.prompts.target_mask);
    return out;
}

nn::SamModel build_model(const TrainConfig& cfg) {
    nn::SamModel model = cfg.base_weights.empty() ? nn::SamModel(cfg.model) : nn::SamModel::load_weights(cfg.base_weights);
    lora::inject(model, cfg.lora);
    return model;
}

nn::SamModel load_checkpoint(const std::filesystem::path& adapter, const std::string& base_weights) {
    const auto header = lora::read_adapter_header(adapter);
    nn::SamModel model = base_weights.empty() ? nn::SamModel(header.model) : nn::SamModel::load_weights(base_weights);
    lora::inject(model, header.config);
    lora::load_adapter(adapter, model);
    return model;
}

// ---------------------------------------------------------------- training

Trainer::Trainer(nn::SamModel& model, TrainConfig cfg)
    : model_(model), cfg_(std::move(cfg)), opt_(lora::trainable_parameters(model), cfg_.optimizer) {
    cfg_.validate();
    if (cfg_.schedule.mode == ScheduleMode::Literal)
        log::warn("literal learning-rate schedule selected: it reaches the floor two epochs after warm-up");
}

double Trainer::accumulate(const OctaSample& sample, Rng& rng, double weight) {
    auto aug = dataio::augment(sample, rng, cfg_.augment);
    const auto pt = prompted_target(aug.sample, cfg_, rng);

    Image work = aug.sample.image;
    Mask target = pt.target;
    dataio::GeometricTransform to_work = dataio::GeometricTransform::identity(work.height(), work.width());
    if (pt.crop_bbox) {
        auto crop = dataio::crop_local(work, *pt.crop_bbox);
        to_work = crop.transform;
        target = dataio::warp_mask(target, crop.transform);
        work = std::move(crop.image);
    }
    const int side = model_.config().encoder.input_side;
    const auto padded = dataio::resize_and_pad(work, side);
    const auto pred = model_.decode_mask(model_.encode_image(padded.image),
                                         model_.encode_prompts(pt.prompts.points, to_work.then(padded.transform)));
    const auto best = nn::best_index(pred.confidences);
    const auto map = grid_map(padded.transform, work.height(), work.width(), side, pred.side);

    const auto j = static_cast<Eigen::Index>(best);
    const Eigen::MatrixXd prob = sigmoid(map.sy * logit_image(pred.logits.value(), j, pred.side) * map.sx.transpose());
    losses::TaskLoss loss;
    loss.kind = losses::loss_for_task(cfg_.task);
    loss.skeleton = cfg_.skeleton_iterations ? losses::SkeletonConfig{*cfg_.skeleton_iterations, 3}
                                             : losses::SkeletonConfig::for_side(std::max(work.height(), work.width()));
    const auto lv = loss(prob, target.to_soft());
    if (!std::isfinite(lv.value)) return lv.value;

    const Eigen::MatrixXd g_logit = map.sy.transpose() *
                                    (lv.grad.array() * prob.array() * (1.0 - prob.array())).matrix() * map.sx;
    ag::Matrix grad = ag::Matrix::Zero(pred.logits.rows(), pred.logits.cols());
    const int s = pred.side;
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) grad(static_cast<Eigen::Index>(y) * s + x, j) = weight * g_logit(y, x);
    ag::backward(ag::external_scalar(pred.logits, weight * lv.value, std::move(grad)));
    return lv.value;
}

double Trainer::train_step(const std::vector<const OctaSample*>& batch, double lr, Rng& rng) {
    if (batch.empty()) throw ConfigError("empty batch");
    ++step_;
    opt_.zero_grad();
    const double weight = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto* s : batch) {
        const double v = accumulate(*s, rng, weight);
        if (!std::isfinite(v)) {
            std::string ids;
            for (const auto* b : batch) ids += (ids.empty() ? "" : ",") + b->id;
            throw Error("non-finite loss at step " + std::to_string(step_) + " (batch [" + ids + "], seed " +
                        std::to_string(cfg_.seed) + ", sample " + s->id + ")");
        }
        total += v;
    }
    opt_.step(lr);
    return total * weight;
}

std::vector<EpochRecord> Trainer::fit(const std::vector<OctaSample>& samples,
                                      const std::function<void(const EpochRecord&)>& on_epoch,
                                      const std::function<bool(const EpochRecord&)>& stop) {
    if (samples.empty()) throw DataError("no training samples");
    Rng rng(Rng::mix(cfg_.seed ^ 0x7472616eULL));
    std::vector<std::size_t> order(samples.size());
    std::vector<EpochRecord> history;
    for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(order));
        const double lr = lr_at_epoch(epoch, cfg_.schedule);
        double sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
            std::vector<const OctaSample*> batch;
            for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size)); ++i)
                batch.push_back(&samples[order[i]]);
            sum += train_step(batch, lr, rng) * static_cast<double>(batch.size());
        }
        const EpochRecord rec{epoch, lr, sum / static_cast<double>(samples.size())};
        history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (stop && stop(rec)) break;
    }
    return history;
}

// ---------------------------------------------------------------- evaluation

std::uint64_t evaluation_seed(const std::string& id, std::uint64_t seed) { return Rng::mix(stable_hash(id) ^ seed); }

std::vector<metrics::SampleMetrics> evaluate(const nn::SamModel& model, const std::vector<OctaSample>& samples,
                                             const TrainConfig& cfg, int fold) {
    std::vector<metrics::SampleMetrics> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        Rng rng(evaluation_seed(s.id, cfg.seed));
        const auto pt = prompted_target(s, cfg, rng);
        const auto pred = predict(model, s.image, pt.prompts.points, pt.crop_bbox);
        out.push_back(metrics::evaluate_sample(s.id, fold, pred.mask, pt.target));
    }
    return out;
}

CrossValidationResult cross_validate(const std::vector<OctaSample>& samples, const TrainConfig& cfg,
                                     const std::optional<std::filesystem::path>& run_dir,
                                     const std::function<void(int, const EpochRecord&)>& on_epoch) {
    cfg.validate();
    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.id);
    if (static_cast<int>(ids.size()) < cfg.folds)
        throw ConfigError("cross-validation needs at least " + std::to_string(cfg.folds) + " samples, got " +
                          std::to_string(ids.size()));
    const auto folds = dataio::kfold_split(ids, cfg.folds, cfg.seed);
    std::map<std::string, const OctaSample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;

    CrossValidationResult result;
    std::vector<metrics::SampleMetrics> all;
    for (std::size_t i = 0; i < folds.size(); ++i) {
        const int fold = static_cast<int>(i);
        try {
            std::vector<OctaSample> train_set, val_set;
            for (const auto& id : folds[i].train_ids) train_set.push_back(*by_id.at(id));
            for (const auto& id : folds[i].val_ids) val_set.push_back(*by_id.at(id));

            TrainConfig fold_cfg = cfg;
            fold_cfg.seed = Rng::mix(cfg.seed + static_cast<std::uint64_t>(i) + 1);
            fold_cfg.lora.seed = Rng::mix(cfg.lora.seed ^ fold_cfg.seed);
            nn::SamModel model = build_model(fold_cfg);

            std::filesystem::path dir;
            std::ofstream train_log;
            if (run_dir) {
                dir = *run_dir / ("fold" + std::to_string(i));
                std::filesystem::create_directories(dir);
                train_log.open(dir / "train.log");
            }
            Trainer trainer(model, fold_cfg);
            trainer.fit(train_set, [&](const EpochRecord& r) {
                if (train_log) train_log << to_record(r) << '\n' << std::flush;
                if (on_epoch) on_epoch(fold, r);
            });
            // validation prompts depend on the run seed, not the fold seed
            auto metrics_i = evaluate(model, val_set, cfg, fold);
            if (run_dir) {
                lora::save_adapter(dir / "adapter.bin", model, fold_cfg.lora);
                std::ofstream rec(dir / "metrics.records");
                rec << metrics::aggregate(metrics_i, std::string(to_string(cfg.task))).to_records();
            }
            all.insert(all.end(), metrics_i.begin(), metrics_i.end());
        } catch (const std::exception& e) {
            log::error("fold " + std::to_string(i) + " failed: " + e.what());
            result.failures.push_back({fold, e.what()});
        }
    }
    result.report = metrics::aggregate(all, std::string(to_string(cfg.task)));
    for (const auto& f : result.failures) result.report.incomplete_folds.push_back(f.fold);
    return result;
}

}  // namespace octasam::train
