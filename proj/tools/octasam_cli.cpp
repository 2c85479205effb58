// octasam command-line entry point.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "octasam/dataio.hpp"
#include "octasam/fixtures.hpp"
#include "octasam/http.hpp"
#include "octasam/log.hpp"
#include "octasam/lora.hpp"
#include "octasam/metrics.hpp"
#include "octasam/promptgen.hpp"
#include "octasam/service.hpp"
#include "octasam/trainer.hpp"
#include "octasam/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace octasam;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

/// manifest.json: written before any work, completed at the end.
class Manifest {
public:
    Manifest(fs::path run_dir, std::string command, json config, std::uint64_t seed, std::vector<std::string> argv)
        : dir_(std::move(run_dir)) {
        j_ = {{"command", std::move(command)}, {"argv", std::move(argv)},   {"config", std::move(config)},
              {"seed", seed},                  {"code_version", version()}, {"started", utc_now()},
              {"finished", nullptr},           {"status", "running"},       {"outputs", json::array()}};
        fs::create_directories(dir_);
        flush();
    }
    void output(const fs::path& p) { j_["outputs"].push_back(p.string()); }
    void set(const std::string& key, json value) { j_[key] = std::move(value); }
    void finish(const std::string& status) {
        j_["status"] = status;
        j_["finished"] = utc_now();
        flush();
    }
    const fs::path& dir() const { return dir_; }

private:
    void flush() { write_text(dir_ / "manifest.json", j_.dump(2) + "\n"); }
    fs::path dir_;
    json j_;
};

// ---------------------------------------------------------------- training flags

/// Command-line overrides for TrainConfig; unset values leave the file/default value alone.
struct TrainFlags {
    std::string config_path;
    std::optional<std::string> task, mode, schedule_mode, targets, model_variant, base_weights;
    std::optional<int> epochs, batch_size, folds, warmup, n_pos, n_total, min_area, radius, rank, skeleton_iterations;
    std::optional<std::uint64_t> seed, lora_seed, model_seed;
    std::optional<double> peak_lr, floor_lr, decay, beta1, beta2, eps, weight_decay, av_opposite, lora_scale, init_std;
    std::optional<bool> fused_add, unfreeze_decoder, unfreeze_prompt_encoder, hflip, rotation, brightness_contrast, crop_local;

    void add(CLI::App& app, const train::TrainConfig& d) {
        auto* g = &app;
        g->add_option("--config", config_path, "JSON run config (flags override its values)");
        g->add_option("--task", task, "rv | faz | capillary | artery | vein")->default_str(std::string(to_string(d.task)));
        g->add_option("--epochs", epochs, "training epochs")->default_str(std::to_string(d.epochs));
        g->add_option("--batch-size", batch_size, "samples per optimizer step")->default_str(std::to_string(d.batch_size));
        g->add_option("--seed", seed, "run seed (folds, augmentation, prompts)")->default_str(std::to_string(d.seed));
        g->add_option("--folds", folds, "cross-validation folds")->default_str(std::to_string(d.folds));
        g->add_option("--peak-lr", peak_lr, "learning rate at the end of warm-up")->default_str(json(d.schedule.peak_lr).dump());
        g->add_option("--floor-lr", floor_lr, "learning-rate floor")->default_str(json(d.schedule.floor_lr).dump());
        g->add_option("--decay", decay, "per-epoch decay after warm-up")->default_str(json(d.schedule.decay).dump());
        g->add_option("--warmup-epochs", warmup, "linear warm-up epochs")->default_str(std::to_string(d.schedule.warmup_epochs));
        g->add_option("--schedule-mode", schedule_mode, "interpreted | literal")
            ->default_str(std::string(train::to_string(d.schedule.mode)));
        g->add_option("--beta1", beta1, "AdamW beta1")->default_str(json(d.optimizer.beta1).dump());
        g->add_option("--beta2", beta2, "AdamW beta2")->default_str(json(d.optimizer.beta2).dump());
        g->add_option("--eps", eps, "AdamW epsilon")->default_str(json(d.optimizer.eps).dump());
        g->add_option("--weight-decay", weight_decay, "AdamW decoupled weight decay")->default_str(json(d.optimizer.weight_decay).dump());
        g->add_option("--pos", n_pos, "positive points per component")->default_str(std::to_string(d.prompt.n_pos));
        g->add_option("--total", n_total, "total points per image")->default_str(std::to_string(d.prompt.n_total));
        g->add_option("--mode", mode, "global | local")->default_str(std::string(promptgen::to_string(d.prompt.mode)));
        g->add_option("--min-area", min_area, "components smaller than this are ignored (px)")
            ->default_str(std::to_string(d.prompt.min_area_px));
        g->add_option("--radius", radius, "negative-point neighbourhood radius (px)")
            ->default_str(std::to_string(d.prompt.neighborhood_radius_px));
        g->add_option("--av-opposite", av_opposite, "artery/vein: fraction of negatives on the other vessel class")
            ->default_str(json(d.prompt.av_opposite_fraction).dump());
        g->add_option("--rank", rank, "LoRA rank")->default_str(std::to_string(d.lora.rank));
        g->add_option("--targets", targets, "LoRA targets: q, v or q,v")->default_str("q,v");
        g->add_option("--lora-scale", lora_scale, "LoRA output multiplier")->default_str(json(d.lora.scale).dump());
        g->add_option("--lora-init-std", init_std, "std of the LoRA A initialisation")->default_str(json(d.lora.init_std).dump());
        g->add_option("--lora-seed", lora_seed, "LoRA initialisation seed")->default_str(std::to_string(d.lora.seed));
        g->add_option("--fused-add", fused_add, "add LoRA output over the whole fused qkv width")->default_str("false");
        g->add_option("--unfreeze-decoder", unfreeze_decoder, "also train the mask decoder")->default_str("false");
        g->add_option("--unfreeze-prompt-encoder", unfreeze_prompt_encoder, "also train the prompt embeddings")->default_str("false");
        g->add_option("--hflip", hflip, "random horizontal flips")->default_str("false");
        g->add_option("--rotation", rotation, "random rotations")->default_str("false");
        g->add_option("--brightness-contrast", brightness_contrast, "brightness/contrast jitter")->default_str("false");
        g->add_option("--crop-local", crop_local, "local mode: crop around the chosen component")->default_str("false");
        g->add_option("--skeleton-iterations", skeleton_iterations, "soft-skeleton iterations (default from image side)");
        g->add_option("--model", model_variant, "tiny | vit-h")->default_str(d.model.variant);
        g->add_option("--model-seed", model_seed, "base-model initialisation seed")->default_str(std::to_string(d.model.seed));
        g->add_option("--base-weights", base_weights, "base-model weight file");
    }

    train::TrainConfig resolve() const {
        train::TrainConfig c;
        if (!config_path.empty()) c = train::TrainConfig::from_file(config_path);
        if (task) c.task = parse_task(*task);
        if (epochs) c.epochs = *epochs;
        if (batch_size) c.batch_size = *batch_size;
        if (seed) c.seed = *seed;
        if (folds) c.folds = *folds;
        if (peak_lr) c.schedule.peak_lr = *peak_lr;
        if (floor_lr) c.schedule.floor_lr = *floor_lr;
        if (decay) c.schedule.decay = *decay;
        if (warmup) c.schedule.warmup_epochs = *warmup;
        if (schedule_mode) c.schedule.mode = train::parse_schedule_mode(*schedule_mode);
        if (beta1) c.optimizer.beta1 = *beta1;
        if (beta2) c.optimizer.beta2 = *beta2;
        if (eps) c.optimizer.eps = *eps;
        if (weight_decay) c.optimizer.weight_decay = *weight_decay;
        if (n_pos) c.prompt.n_pos = *n_pos;
        if (n_total) c.prompt.n_total = *n_total;
        if (mode) c.prompt.mode = promptgen::parse_mode(*mode);
        if (min_area) c.prompt.min_area_px = *min_area;
        if (radius) c.prompt.neighborhood_radius_px = *radius;
        if (av_opposite) c.prompt.av_opposite_fraction = *av_opposite;
        if (rank) c.lora.rank = *rank;
        if (targets) {
            c.lora.target_q = targets->find('q') != std::string::npos;
            c.lora.target_v = targets->find('v') != std::string::npos;
            for (char ch : *targets)
                if (ch != 'q' && ch != 'v' && ch != ',') throw ConfigError("--targets accepts q, v or q,v");
        }
        if (lora_scale) c.lora.scale = *lora_scale;
        if (init_std) c.lora.init_std = *init_std;
        if (lora_seed) c.lora.seed = *lora_seed;
        if (fused_add) c.lora.fused_add = *fused_add;
        if (unfreeze_decoder) c.lora.unfreeze_decoder = *unfreeze_decoder;
        if (unfreeze_prompt_encoder) c.lora.unfreeze_prompt_encoder = *unfreeze_prompt_encoder;
        if (hflip) c.augment.hflip = *hflip;
        if (rotation) c.augment.rotation = *rotation;
        if (brightness_contrast) c.augment.brightness_contrast = *brightness_contrast;
        if (crop_local) c.crop_local = *crop_local;
        if (skeleton_iterations) c.skeleton_iterations = *skeleton_iterations;
        if (model_variant && *model_variant != c.model.variant) {
            if (*model_variant == "tiny") c.model = nn::ModelConfig::tiny(c.model.seed);
            else if (*model_variant == "vit-h") c.model = nn::ModelConfig::full();
            else throw ConfigError("unknown model variant '" + *model_variant + "'");
        }
        if (model_seed) c.model.seed = *model_seed;
        if (base_weights) c.base_weights = *base_weights;
        c.validate();
        return c;
    }
};

/// Where training data comes from: a dataset directory or generated fixtures.
struct DataFlags {
    std::string root;
    std::string layout;
    int fixtures = 0;
    int fixture_size = 64;
    std::uint64_t fixture_seed = 1;

    void add(CLI::App& app) {
        app.add_option("--data", root, "dataset root directory");
        app.add_option("--layout", layout, "dataset layout JSON (default: <data>/layout.json)");
        app.add_option("--fixtures", fixtures, "use N generated synthetic subjects instead of --data")->capture_default_str();
        app.add_option("--fixture-size", fixture_size, "side of generated subjects")->capture_default_str();
        app.add_option("--fixture-seed", fixture_seed, "seed of generated subjects")->capture_default_str();
    }

    json describe() const {
        if (fixtures > 0) return {{"fixtures", fixtures}, {"size", fixture_size}, {"seed", fixture_seed}};
        return {{"root", root}, {"layout", layout.empty() ? (fs::path(root) / "layout.json").string() : layout}};
    }

    void check() const {
        if (fixtures <= 0 && root.empty()) throw ConfigError("either --data or --fixtures is required");
        if (fixtures > 0 && !root.empty()) throw ConfigError("--data and --fixtures are mutually exclusive");
    }

    std::vector<OctaSample> load() const {
        check();
        if (fixtures > 0) {
            fixtures::FixtureConfig fc;
            fc.count = fixtures;
            fc.size = fixture_size;
            fc.seed = fixture_seed;
            return fixtures::make_dataset(fc);
        }
        const fs::path layout_path = layout.empty() ? fs::path(root) / "layout.json" : fs::path(layout);
        const auto result = dataio::load_dataset(root, dataio::DatasetLayout::from_json_file(layout_path));
        for (const auto& w : result.warnings) log::warn(w);
        for (const auto& f : result.failures) log::warn("skipped " + f.id + " (" + f.file.string() + "): " + f.message);
        if (result.samples.empty()) throw DataError("no usable samples under " + root);
        return result.samples;
    }
};

fs::path default_run_dir(const std::string& command) {
    std::string stamp = utc_now();
    for (char& c : stamp)
        if (c == ':') c = '-';
    return fs::path("runs") / (command + "-" + stamp);
}

json report_json(const metrics::MetricReport& r) {
    return {{"task", r.task},
            {"dice", {{"mean", r.dice.mean}, {"std", r.dice.std}}},
            {"jaccard", {{"mean", r.jaccard.mean}, {"std", r.jaccard.std}}},
            {"hd_px", {{"mean", r.hd_px.mean}, {"std", r.hd_px.std}}},
            {"missing_hd", r.missing_hd},
            {"incomplete_folds", r.incomplete_folds}};
}

std::vector<promptgen::PromptPoint> read_points(const std::string& path, const std::vector<std::string>& inline_points) {
    std::vector<promptgen::PromptPoint> out;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open points file " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        out = promptgen::parse_text(ss.str()).points;
    }
    for (const auto& s : inline_points) {
        promptgen::PromptPoint p;
        char c1 = 0, c2 = 0;
        std::istringstream in(s);
        if (!(in >> p.x >> c1 >> p.y) || c1 != ',') throw ConfigError("--point expects x,y[,polarity], got '" + s + "'");
        if (in >> c2) {
            if (c2 != ',' || !(in >> p.polarity)) throw ConfigError("--point expects x,y[,polarity], got '" + s + "'");
        }
        out.push_back(p);
    }
    return out;
}

Image load_input_image(const std::string& path) {
    Image img = io::read_image(path);
    if (img.channels() == 1) return dataio::stack_layers({img.channel(0)});
    if (img.channels() == 4) {
        Image rgb(img.height(), img.width(), 3);
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x)
                for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = img.at(y, x, c);
        return rgb;
    }
    return img;
}

std::vector<std::string> g_argv;

// ---------------------------------------------------------------- subcommands

int run_train(const TrainFlags& tf, const DataFlags& df, std::string run_dir, bool dry_run) {
    const auto cfg = tf.resolve();
    df.check();
    if (run_dir.empty()) run_dir = default_run_dir("train").string();
    Manifest manifest(run_dir, "train", json::parse(cfg.to_json_string()), cfg.seed, g_argv);
    manifest.set("data", df.describe());
    write_text(manifest.dir() / "config.json", cfg.to_json_string() + "\n");
    manifest.output(manifest.dir() / "config.json");
    if (dry_run) {
        manifest.set("dry_run", true);
        manifest.finish("dry-run");
        std::cout << json{{"status", "dry-run"}, {"run_dir", run_dir}}.dump() << "\n";
        return 0;
    }
    try {
        const auto samples = df.load();
        auto model = train::build_model(cfg);
        train::Trainer trainer(model, cfg);
        std::ofstream log_out(manifest.dir() / "train.log");
        manifest.output(manifest.dir() / "train.log");
        trainer.fit(samples, [&](const train::EpochRecord& r) {
            log_out << train::to_record(r) << '\n' << std::flush;
            log::info(train::to_record(r));
        });
        lora::save_adapter(manifest.dir() / "adapter.bin", model, cfg.lora);
        manifest.output(manifest.dir() / "adapter.bin");
        const auto report = metrics::aggregate(train::evaluate(model, samples, cfg), std::string(to_string(cfg.task)));
        write_text(manifest.dir() / "metrics.records", report.to_records());
        manifest.output(manifest.dir() / "metrics.records");
        manifest.finish("ok");
        std::cout << report.to_table();
    } catch (...) {
        manifest.finish("failed");
        throw;
    }
    return 0;
}

int run_cross_validate(const TrainFlags& tf, const DataFlags& df, std::string run_dir, bool dry_run) {
    const auto cfg = tf.resolve();
    df.check();
    if (run_dir.empty()) run_dir = default_run_dir("cross-validate").string();
    Manifest manifest(run_dir, "cross-validate", json::parse(cfg.to_json_string()), cfg.seed, g_argv);
    manifest.set("data", df.describe());
    write_text(manifest.dir() / "config.json", cfg.to_json_string() + "\n");
    manifest.output(manifest.dir() / "config.json");
    if (dry_run) {
        manifest.set("dry_run", true);
        manifest.finish("dry-run");
        std::cout << json{{"status", "dry-run"}, {"run_dir", run_dir}}.dump() << "\n";
        return 0;
    }
    try {
        const auto samples = df.load();
        const auto result = train::cross_validate(samples, cfg, manifest.dir(), [](int fold, const train::EpochRecord& r) {
            log::info("fold " + std::to_string(fold) + " " + train::to_record(r));
        });
        write_text(manifest.dir() / "metrics.records", result.report.to_records());
        manifest.output(manifest.dir() / "metrics.records");
        for (int i = 0; i < cfg.folds; ++i) manifest.output(manifest.dir() / ("fold" + std::to_string(i)));
        json failures = json::array();
        for (const auto& f : result.failures) failures.push_back({{"fold", f.fold}, {"message", f.message}});
        manifest.set("fold_failures", failures);
        manifest.finish(result.failures.empty() ? "ok" : "incomplete");
        std::cout << result.report.to_table();
        return result.failures.empty() ? 0 : kExitRuntime;
    } catch (...) {
        manifest.finish("failed");
        throw;
    }
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 0; i < argc; ++i) g_argv.emplace_back(argv[i]);
    CLI::App app{"Promptable OCTA vessel/FAZ segmentation with low-rank adapters"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(version()));
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "log progress to stderr");

    const train::TrainConfig defaults;

    // train / cross-validate
    TrainFlags train_flags, cv_flags;
    DataFlags train_data, cv_data;
    std::string train_run, cv_run;
    bool train_dry = false, cv_dry = false;
    auto* train_cmd = app.add_subcommand("train", "fine-tune adapters on a dataset");
    train_flags.add(*train_cmd, defaults);
    train_data.add(*train_cmd);
    train_cmd->add_option("--run-dir", train_run, "output directory (default runs/train-<time>)");
    train_cmd->add_flag("--dry-run", train_dry, "validate the configuration and write only the manifest");
    auto* cv_cmd = app.add_subcommand("cross-validate", "k-fold training and evaluation");
    cv_flags.add(*cv_cmd, defaults);
    cv_data.add(*cv_cmd);
    cv_cmd->add_option("--run-dir", cv_run, "output directory (default runs/cross-validate-<time>)");
    cv_cmd->add_flag("--dry-run", cv_dry, "validate the configuration and write only the manifest");

    // eval
    std::string eval_pred, eval_gt, eval_ckpt, eval_base, eval_run;
    DataFlags eval_data;
    TrainFlags eval_flags;
    auto* eval_cmd = app.add_subcommand("eval", "score masks, or a checkpoint on a dataset");
    eval_cmd->add_option("--pred", eval_pred, "predicted mask (with --gt)");
    eval_cmd->add_option("--gt", eval_gt, "ground-truth mask (with --pred)");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "adapter checkpoint to evaluate on --data/--fixtures");
    eval_cmd->add_option("--run-dir", eval_run, "write manifest and metrics.records here");
    eval_data.add(*eval_cmd);
    eval_cmd->add_option("--task", eval_flags.task, "task to evaluate")->default_str("rv");
    eval_cmd->add_option("--mode", eval_flags.mode, "prompt mode")->default_str("global");
    eval_cmd->add_option("--pos", eval_flags.n_pos, "positive points per component")->default_str("2");
    eval_cmd->add_option("--total", eval_flags.n_total, "total points")->default_str("5");
    eval_cmd->add_option("--seed", eval_flags.seed, "prompt seed")->default_str("0");
    eval_cmd->add_option("--base-weights", eval_base, "base-model weight file");

    // predict
    std::string pred_ckpt, pred_base, pred_image, pred_points, pred_out, pred_crop;
    std::vector<std::string> pred_inline;
    auto* pred_cmd = app.add_subcommand("predict", "segment one image from prompt points");
    pred_cmd->add_option("--checkpoint", pred_ckpt, "adapter checkpoint (default: $OCTASAM_CHECKPOINT)");
    pred_cmd->add_option("--base-weights", pred_base, "base-model weight file");
    pred_cmd->add_option("--image", pred_image, "input image")->required();
    pred_cmd->add_option("--points", pred_points, "points file: lines of 'x y polarity'");
    pred_cmd->add_option("--point", pred_inline, "inline point x,y[,polarity] (repeatable)");
    pred_cmd->add_option("--crop", pred_crop, "local crop box x0,y0,x1,y1");
    pred_cmd->add_option("--out", pred_out, "output mask PNG")->required();

    // gen-prompts
    std::string gp_mask, gp_av, gp_target = "artery", gp_out, gp_format = "text";
    promptgen::PromptConfig gp_cfg;
    std::string gp_mode = "global";
    std::uint64_t gp_seed = 0;
    auto* gp_cmd = app.add_subcommand("gen-prompts", "sample prompt points from a label mask");
    gp_cmd->add_option("--mask", gp_mask, "binary label mask");
    gp_cmd->add_option("--av", gp_av, "artery/vein class mask (0/1/2) instead of --mask");
    gp_cmd->add_option("--target", gp_target, "artery | vein (with --av)")->capture_default_str();
    gp_cmd->add_option("--mode", gp_mode, "global | local")->capture_default_str();
    gp_cmd->add_option("--pos", gp_cfg.n_pos, "positive points per component")->capture_default_str();
    gp_cmd->add_option("--total", gp_cfg.n_total, "total points")->capture_default_str();
    gp_cmd->add_option("--min-area", gp_cfg.min_area_px, "minimum component area (px)")->capture_default_str();
    gp_cmd->add_option("--radius", gp_cfg.neighborhood_radius_px, "negative neighbourhood radius (px)")->capture_default_str();
    gp_cmd->add_option("--av-opposite", gp_cfg.av_opposite_fraction, "fraction of negatives on the other vessel")
        ->capture_default_str();
    gp_cmd->add_option("--seed", gp_seed, "sampling seed")->capture_default_str();
    gp_cmd->add_option("--format", gp_format, "text | jsonl")->capture_default_str();
    gp_cmd->add_option("--out", gp_out, "output file (default stdout)");

    // gen-fixtures
    fixtures::FixtureConfig fx_cfg;
    std::string fx_out, fx_fov = "3M";
    auto* fx_cmd = app.add_subcommand("gen-fixtures", "write a synthetic dataset tree");
    fx_cmd->add_option("--out", fx_out, "output directory")->required();
    fx_cmd->add_option("--count", fx_cfg.count, "subjects")->capture_default_str();
    fx_cmd->add_option("--size", fx_cfg.size, "image side")->capture_default_str();
    fx_cmd->add_option("--seed", fx_cfg.seed, "generator seed")->capture_default_str();
    fx_cmd->add_option("--fov", fx_fov, "3M | 6M")->capture_default_str();

    // serve
    std::string sv_host = "127.0.0.1", sv_ckpt, sv_base, sv_task = "rv";
    int sv_port = 8080;
    service::ServiceConfig sv_cfg;
    auto* sv_cmd = app.add_subcommand("serve", "run the interactive segmentation HTTP service");
    sv_cmd->add_option("--host", sv_host, "bind address")->capture_default_str();
    sv_cmd->add_option("--port", sv_port, "port")->capture_default_str();
    sv_cmd->add_option("--checkpoint", sv_ckpt, "adapter checkpoint (default: $OCTASAM_CHECKPOINT)");
    sv_cmd->add_option("--base-weights", sv_base, "base-model weight file");
    sv_cmd->add_option("--task", sv_task, "default task for new sessions")->capture_default_str();
    sv_cmd->add_option("--workers", sv_cfg.workers, "concurrent inferences before answering busy")->capture_default_str();
    sv_cmd->add_option("--history", sv_cfg.history_depth, "undo depth per session")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
        return kExitUsage;
    }

    if (verbose)
        log::set_sink([](log::Level, std::string_view msg) { std::cerr << msg << "\n"; });

    try {
        if (*train_cmd) return run_train(train_flags, train_data, train_run, train_dry);
        if (*cv_cmd) return run_cross_validate(cv_flags, cv_data, cv_run, cv_dry);

        if (*eval_cmd) {
            if (!eval_pred.empty() || !eval_gt.empty()) {
                if (eval_pred.empty() || eval_gt.empty()) throw ConfigError("--pred and --gt go together");
                const auto pred = io::read_mask(eval_pred);
                const auto gt = io::read_mask(eval_gt);
                const auto m = metrics::evaluate_sample(fs::path(eval_pred).stem().string(), 0, pred, gt);
                json out = {{"dice", m.dice}, {"jaccard", m.jaccard}, {"hd", m.hd_px ? json(*m.hd_px) : json(nullptr)}};
                if (!eval_run.empty()) {
                    Manifest manifest(eval_run, "eval", {{"pred", eval_pred}, {"gt", eval_gt}}, 0, g_argv);
                    write_text(manifest.dir() / "metrics.json", out.dump(2) + "\n");
                    manifest.output(manifest.dir() / "metrics.json");
                    manifest.finish("ok");
                }
                std::cout << out.dump() << "\n";
                return 0;
            }
            if (eval_ckpt.empty()) throw ConfigError("eval needs --pred/--gt or --checkpoint");
            eval_data.check();
            train::TrainConfig cfg;
            const auto header = lora::read_adapter_header(eval_ckpt);
            cfg.model = header.model;
            cfg.lora = header.config;
            if (eval_flags.task) cfg.task = parse_task(*eval_flags.task);
            if (eval_flags.mode) cfg.prompt.mode = promptgen::parse_mode(*eval_flags.mode);
            if (eval_flags.n_pos) cfg.prompt.n_pos = *eval_flags.n_pos;
            if (eval_flags.n_total) cfg.prompt.n_total = *eval_flags.n_total;
            if (eval_flags.seed) cfg.seed = *eval_flags.seed;
            cfg.prompt.validate();
            std::optional<Manifest> manifest;
            if (!eval_run.empty()) {
                manifest.emplace(eval_run, "eval", json::parse(cfg.to_json_string()), cfg.seed, g_argv);
                manifest->set("checkpoint", eval_ckpt);
                manifest->set("data", eval_data.describe());
            }
            const auto model = train::load_checkpoint(eval_ckpt, eval_base);
            const auto report = metrics::aggregate(train::evaluate(model, eval_data.load(), cfg), std::string(to_string(cfg.task)));
            if (manifest) {
                write_text(manifest->dir() / "metrics.records", report.to_records());
                manifest->output(manifest->dir() / "metrics.records");
                manifest->finish("ok");
            }
            std::cout << report_json(report).dump() << "\n";
            return 0;
        }

        if (*pred_cmd) {
            if (pred_ckpt.empty())
                if (const char* env = std::getenv("OCTASAM_CHECKPOINT")) pred_ckpt = env;
            if (pred_ckpt.empty()) throw ConfigError("predict needs --checkpoint or OCTASAM_CHECKPOINT");
            const auto points = read_points(pred_points, pred_inline);
            std::optional<BBox> crop;
            if (!pred_crop.empty()) {
                BBox b;
                char c1, c2, c3;
                std::istringstream in(pred_crop);
                if (!(in >> b.x0 >> c1 >> b.y0 >> c2 >> b.x1 >> c3 >> b.y1) || c1 != ',' || c2 != ',' || c3 != ',')
                    throw ConfigError("--crop expects x0,y0,x1,y1");
                crop = b;
            }
            const auto image = load_input_image(pred_image);
            const auto model = train::load_checkpoint(pred_ckpt, pred_base);
            const auto pred = train::predict(model, image, points, crop);
            io::write_mask(pred_out, pred.mask);
            std::cout << json{{"out", pred_out},
                              {"confidence", pred.confidence},
                              {"candidate", pred.index},
                              {"foreground_px", pred.mask.count_nonzero()}}
                             .dump()
                      << "\n";
            return 0;
        }

        if (*gp_cmd) {
            gp_cfg.mode = promptgen::parse_mode(gp_mode);
            gp_cfg.validate();
            if (gp_format != "text" && gp_format != "jsonl") throw ConfigError("--format must be text or jsonl");
            if (gp_mask.empty() == gp_av.empty()) throw ConfigError("give exactly one of --mask and --av");
            Rng rng(gp_seed);
            promptgen::PromptPointSet set;
            if (!gp_mask.empty()) {
                const auto mask = io::read_mask(gp_mask);
                set = gp_cfg.mode == promptgen::Mode::Local ? promptgen::generate_local(mask, gp_cfg, rng)
                                                            : promptgen::generate_global(mask, gp_cfg, rng);
            } else {
                const auto av = io::read_mask(gp_av, true);
                if (gp_target != "artery" && gp_target != "vein") throw ConfigError("--target must be artery or vein");
                set = promptgen::generate_av(av.select(1), av.select(2),
                                             gp_target == "artery" ? promptgen::VesselClass::Artery : promptgen::VesselClass::Vein,
                                             gp_cfg, rng);
            }
            for (const auto& n : set.notes) log::warn(n);
            const auto text = gp_format == "text" ? promptgen::to_text(set) : promptgen::to_records(set);
            if (gp_out.empty()) std::cout << text;
            else write_text(gp_out, text);
            return 0;
        }

        if (*fx_cmd) {
            fx_cfg.fov = parse_fov(fx_fov);
            Manifest manifest(fx_out, "gen-fixtures",
                              {{"count", fx_cfg.count}, {"size", fx_cfg.size}, {"seed", fx_cfg.seed}, {"fov", fx_fov}},
                              fx_cfg.seed, g_argv);
            fixtures::write_tree(fx_out, fx_cfg);
            manifest.output(fs::path(fx_out) / "layout.json");
            manifest.finish("ok");
            std::cout << json{{"out", fx_out}, {"count", fx_cfg.count}}.dump() << "\n";
            return 0;
        }

        if (*sv_cmd) {
            if (sv_ckpt.empty())
                if (const char* env = std::getenv("OCTASAM_CHECKPOINT")) sv_ckpt = env;
            service::ModelInfo info;
            sv_cfg.default_task = parse_task(sv_task);
            info.task = std::string(to_string(sv_cfg.default_task));
            std::shared_ptr<nn::SamModel> model;
            if (sv_ckpt.empty()) {
                log::warn("no checkpoint given: serving an untrained tiny model");
                train::TrainConfig cfg;
                model = std::make_shared<nn::SamModel>(train::build_model(cfg));
                info.rank = cfg.lora.rank;
            } else {
                const auto header = lora::read_adapter_header(sv_ckpt);
                model = std::make_shared<nn::SamModel>(train::load_checkpoint(sv_ckpt, sv_base));
                info.rank = header.config.rank;
            }
            info.variant = model->config().variant;
            std::ostringstream hash;
            hash << std::hex << std::setw(16) << std::setfill('0') << nn::checksum(model->parameters());
            info.checkpoint_hash = hash.str();
            service::InferenceService svc(model, sv_cfg, info);
            std::cerr << json{{"listening", sv_host + ":" + std::to_string(sv_port)}}.dump() << "\n";
            service::serve(svc, sv_host, sv_port);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << json{{"error", "config"}, {"message", e.what()}}.dump() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "runtime"}, {"message", e.what()}}.dump() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
