#include "octasam/service.hpp"

#include <deque>
#include <semaphore>

namespace octasam::service {

struct InferenceService::Gate {
    explicit Gate(int n) : slots(n) {}
    std::counting_semaphore<1024> slots;
};

namespace {

class Slot {
public:
    explicit Slot(std::counting_semaphore<1024>& s) : s_(s) {
        if (!s_.try_acquire()) throw Busy("all inference workers are busy");
    }
    ~Slot() { s_.release(); }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

private:
    std::counting_semaphore<1024>& s_;
};

Image to_three_channels(const Image& in) {
    if (in.channels() == 3) return in;
    if (in.channels() != 1 && in.channels() != 4)
        throw DataError("unsupported channel count " + std::to_string(in.channels()));
    Image out(in.height(), in.width(), 3);
    for (int y = 0; y < in.height(); ++y)
        for (int x = 0; x < in.width(); ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = in.at(y, x, in.channels() == 1 ? 0 : c);
    return out;
}

}  // namespace

struct InferenceService::Session {
    std::mutex mutex;
    std::string id;
    Task task = Task::RV;
    promptgen::Mode mode = promptgen::Mode::Global;
    int height = 0;
    int width = 0;
    train::EncodedImage encoded;
    MaskState state;
    std::deque<MaskState> history;
};

Mask keep_prompted_components(const Mask& mask, const std::vector<promptgen::PromptPoint>& points) {
    const auto cm = promptgen::label_components(mask);
    std::vector<char> keep(cm.count() + 1, 0);
    for (const auto& p : points)
        if (p.polarity == 1 && mask.contains(p.x, p.y)) keep[static_cast<std::size_t>(cm.label_at(p.x, p.y))] = 1;
    keep[0] = 0;
    Mask out(mask.height(), mask.width());
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            out.at(y, x) = keep[static_cast<std::size_t>(cm.label_at(x, y))] ? 1 : 0;
    return out;
}

InferenceService::InferenceService(std::shared_ptr<const nn::SamModel> model, ServiceConfig cfg, ModelInfo info)
    : model_(std::move(model)), cfg_(cfg), info_(std::move(info)) {
    if (!model_) throw ConfigError("service needs a model");
    if (cfg_.workers < 1 || cfg_.workers > 1024) throw ConfigError("workers must be in [1, 1024]");
    if (cfg_.history_depth < 1) throw ConfigError("history_depth must be >= 1");
    gate_ = std::make_unique<Gate>(cfg_.workers);
}

InferenceService::~InferenceService() = default;

std::string InferenceService::create_session(const Image& image, Task task, promptgen::Mode mode) {
    if (image.empty()) throw DataError("empty image");
    auto s = std::make_shared<Session>();
    s->task = task;
    s->mode = mode;
    s->height = image.height();
    s->width = image.width();
    {
        Slot slot(gate_->slots);
        s->encoded = train::encode_for_prediction(*model_, to_three_channels(image));
    }
    std::unique_lock lock(sessions_mutex_);
    s->id = "s" + std::to_string(next_id_++);
    sessions_[s->id] = s;
    return s->id;
}

std::string InferenceService::create_session(const std::string& image_bytes, std::string_view task, std::string_view mode) {
    const Task t = task.empty() ? cfg_.default_task : parse_task(task);
    const auto m = mode.empty() ? promptgen::Mode::Global : promptgen::parse_mode(mode);
    return create_session(io::decode_image(image_bytes), t, m);
}

std::shared_ptr<InferenceService::Session> InferenceService::find(const std::string& id) const {
    std::shared_lock lock(sessions_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("unknown session " + id);
    return it->second;
}

SegmentResult InferenceService::segment(const std::string& id, const std::vector<promptgen::PromptPoint>& points,
                                        std::optional<promptgen::Mode> mode) {
    const auto s = find(id);
    std::lock_guard lock(s->mutex);
    std::string bad;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        if (p.x < 0 || p.y < 0 || p.x >= s->width || p.y >= s->height || (p.polarity != 0 && p.polarity != 1))
            bad += (bad.empty() ? "" : ",") + std::to_string(i);
    }
    if (!bad.empty()) throw DataError("invalid points (out of bounds or bad polarity) at indices [" + bad + "]");

    const auto start = std::chrono::steady_clock::now();
    train::Prediction pred;
    {
        Slot slot(gate_->slots);
        pred = train::predict(*model_, s->encoded, points);
    }
    if (mode) s->mode = *mode;
    Mask mask = s->mode == promptgen::Mode::Local ? keep_prompted_components(pred.mask, points) : pred.mask;
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    s->history.push_back(s->state);
    while (s->history.size() > static_cast<std::size_t>(cfg_.history_depth)) s->history.pop_front();
    s->state = {points, rle::encode(mask), pred.confidence};
    return {s->state, ms};
}

UndoResult InferenceService::undo(const std::string& id) {
    const auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (s->history.empty()) return {s->state, true};
    s->state = s->history.back();
    s->history.pop_back();
    return {s->state, false};
}

SessionView InferenceService::view(const std::string& id) const {
    const auto s = find(id);
    std::lock_guard lock(s->mutex);
    return {s->id, s->task, s->mode, s->height, s->width, s->state, s->history.size()};
}

bool InferenceService::remove(const std::string& id) {
    std::unique_lock lock(sessions_mutex_);
    return sessions_.erase(id) > 0;
}

std::size_t InferenceService::session_count() const {
    std::shared_lock lock(sessions_mutex_);
    return sessions_.size();
}

}  // namespace octasam::service
