#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "octasam/backbone.hpp"
#include "octasam/dataio.hpp"
#include "octasam/lora.hpp"
#include "octasam/losses.hpp"
#include "octasam/metrics.hpp"
#include "octasam/optim.hpp"
#include "octasam/promptgen.hpp"

namespace octasam::train {

enum class ScheduleMode { Interpreted, Literal };

std::string_view to_string(ScheduleMode mode);
ScheduleMode parse_schedule_mode(std::string_view name);

struct ScheduleConfig {
    int warmup_epochs = 10;
    double peak_lr = 1e-3;
    double floor_lr = 1e-5;
    double decay = 0.98;
    ScheduleMode mode = ScheduleMode::Interpreted;

    void validate() const;
};

/// Linear warm-up to the peak over `warmup_epochs`, then decay with a floor.
/// Interpreted: peak * decay^(t - w). Literal: 10^(log10(peak) * decay * (t - w)).
double lr_at_epoch(int t, const ScheduleConfig& cfg);

struct TrainConfig {
    Task task = Task::RV;
    int epochs = 50;
    optim::AdamWConfig optimizer;
    ScheduleConfig schedule;
    int batch_size = 4;
    std::uint64_t seed = 0;
    promptgen::PromptConfig prompt;
    lora::LoraConfig lora;
    int folds = 10;
    dataio::AugmentConfig augment;
    nn::ModelConfig model;
    std::string base_weights;               // empty: seeded random initialisation
    std::optional<int> skeleton_iterations;  // default chosen from the image side
    bool crop_local = false;                 // local mode: crop around the chosen component

    void validate() const;
    std::string to_json_string() const;
    /// Values present in `text` override `defaults`. Unknown keys are rejected.
    static TrainConfig from_json_string(const std::string& text);
    static TrainConfig from_json_string(const std::string& text, const TrainConfig& defaults);
    static TrainConfig from_file(const std::filesystem::path& path);
    static TrainConfig from_file(const std::filesystem::path& path, const TrainConfig& defaults);
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
};

std::string to_record(const EpochRecord& r);

struct Prediction {
    Mask mask;                    // original image resolution
    double confidence = 0.0;
    std::size_t index = 0;        // chosen candidate
    Eigen::MatrixXd probability;  // original image resolution
};

/// Image preprocessed and encoded once, reusable across prompt edits. With a crop box the
/// model sees the local crop around it.
struct EncodedImage {
    int height = 0;
    int width = 0;
    dataio::GeometricTransform to_encoder;  // original pixels -> encoder input pixels
    nn::Latent latent;
};

EncodedImage encode_for_prediction(const nn::SamModel& model, const Image& image,
                                   const std::optional<BBox>& crop_bbox = std::nullopt);

/// Decode, keep the most confident candidate and map it back to the original grid;
/// foreground where the probability exceeds 0.5. Pixels outside a crop are background.
Prediction predict(const nn::SamModel& model, const EncodedImage& encoded,
                   const std::vector<promptgen::PromptPoint>& points);

Prediction predict(const nn::SamModel& model, const Image& image, const std::vector<promptgen::PromptPoint>& points,
                   const std::optional<BBox>& crop_bbox = std::nullopt);

/// Prompts and supervision target for one sample under `cfg` (evaluation and training share it).
struct PromptedTarget {
    promptgen::PromptPointSet prompts;
    Mask target;
    std::optional<BBox> crop_bbox;
};

PromptedTarget prompted_target(const OctaSample& sample, const TrainConfig& cfg, Rng& rng);

/// Model for `cfg`: base weights (file or seeded init) with adapters injected.
nn::SamModel build_model(const TrainConfig& cfg);

/// Rebuilds a trained model from an adapter checkpoint. Without `base_weights` the base model
/// is re-initialised from the seed recorded in the checkpoint.
nn::SamModel load_checkpoint(const std::filesystem::path& adapter, const std::string& base_weights = {});

class Trainer {
public:
    /// The model must already carry adapters.
    Trainer(nn::SamModel& model, TrainConfig cfg);

    /// One optimizer step on the mean loss over `batch`; returns that mean.
    double train_step(const std::vector<const OctaSample*>& batch, double lr, Rng& rng);
    /// Loss and gradients for one sample without stepping (gradients accumulate).
    double accumulate(const OctaSample& sample, Rng& rng, double weight);

    /// Runs cfg.epochs epochs, or fewer when `stop` returns true after an epoch.
    std::vector<EpochRecord> fit(const std::vector<OctaSample>& samples,
                                 const std::function<void(const EpochRecord&)>& on_epoch = {},
                                 const std::function<bool(const EpochRecord&)>& stop = {});

    const TrainConfig& config() const { return cfg_; }
    optim::AdamW& optimizer() { return opt_; }

private:
    nn::SamModel& model_;
    TrainConfig cfg_;
    optim::AdamW opt_;
    long step_ = 0;
};

/// Fixed per-sample prompt seed (independent of epoch and order).
std::uint64_t evaluation_seed(const std::string& id, std::uint64_t seed);

std::vector<metrics::SampleMetrics> evaluate(const nn::SamModel& model, const std::vector<OctaSample>& samples,
                                             const TrainConfig& cfg, int fold = 0);

struct FoldFailure {
    int fold = 0;
    std::string message;
};

struct CrossValidationResult {
    metrics::MetricReport report;
    std::vector<FoldFailure> failures;
};

/// Trains one fresh model per fold and evaluates it on the held-out fold. With `run_dir` each
/// fold writes `fold{i}/adapter.bin`, `fold{i}/metrics.records` and `fold{i}/train.log`.
CrossValidationResult cross_validate(const std::vector<OctaSample>& samples, const TrainConfig& cfg,
                                     const std::optional<std::filesystem::path>& run_dir = std::nullopt,
                                     const std::function<void(int, const EpochRecord&)>& on_epoch = {});

}  // namespace octasam::train
