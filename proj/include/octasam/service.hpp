#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "octasam/backbone.hpp"
#include "octasam/errors.hpp"
#include "octasam/promptgen.hpp"
#include "octasam/rle.hpp"
#include "octasam/trainer.hpp"

namespace octasam::service {

class NotFound : public Error {
public:
    using Error::Error;
};

/// All inference workers are occupied.
class Busy : public Error {
public:
    using Error::Error;
};

struct ServiceConfig {
    int workers = 2;
    int history_depth = 50;
    Task default_task = Task::RV;
};

struct ModelInfo {
    std::string variant;
    int rank = 0;
    std::string task;
    std::string checkpoint_hash;
};

struct MaskState {
    std::vector<promptgen::PromptPoint> points;
    std::optional<rle::Encoded> mask;
    double confidence = 0.0;

    friend bool operator==(const MaskState&, const MaskState&) = default;
};

struct SegmentResult {
    MaskState state;
    double ms = 0.0;
};

struct UndoResult {
    MaskState state;
    bool noop = false;  // nothing to undo
};

struct SessionView {
    std::string id;
    Task task = Task::RV;
    promptgen::Mode mode = promptgen::Mode::Global;
    int height = 0;
    int width = 0;
    MaskState state;
    std::size_t history = 0;
};

/// Session-based interactive segmentation over a read-only model. Calls on one session are
/// serialised; calls on different sessions run concurrently up to `workers` inferences.
class InferenceService {
public:
    InferenceService(std::shared_ptr<const nn::SamModel> model, ServiceConfig cfg, ModelInfo info);
    ~InferenceService();

    /// Grayscale images are replicated to three channels; values are scaled to [0, 1].
    std::string create_session(const Image& image, Task task, promptgen::Mode mode = promptgen::Mode::Global);
    /// Throws ParseError for undecodable bytes, ConfigError for unknown task or mode names.
    std::string create_session(const std::string& image_bytes, std::string_view task, std::string_view mode);

    /// Replaces the session's points and returns the new mask. Throws DataError listing the
    /// indices of out-of-bounds points, NotFound for unknown sessions, Busy when saturated.
    SegmentResult segment(const std::string& id, const std::vector<promptgen::PromptPoint>& points,
                          std::optional<promptgen::Mode> mode = std::nullopt);
    UndoResult undo(const std::string& id);
    SessionView view(const std::string& id) const;
    bool remove(const std::string& id);
    std::size_t session_count() const;

    const ModelInfo& model_info() const { return info_; }
    const ServiceConfig& config() const { return cfg_; }

private:
    struct Session;
    std::shared_ptr<Session> find(const std::string& id) const;

    std::shared_ptr<const nn::SamModel> model_;
    ServiceConfig cfg_;
    ModelInfo info_;
    struct Gate;
    std::unique_ptr<Gate> gate_;
    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t next_id_ = 1;
};

/// Keeps only the connected components of `mask` that contain a positive point.
Mask keep_prompted_components(const Mask& mask, const std::vector<promptgen::PromptPoint>& points);

}  // namespace octasam::service
