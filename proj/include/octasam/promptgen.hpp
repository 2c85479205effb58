#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "octasam/dataio.hpp"
#include "octasam/image.hpp"
#include "octasam/rng.hpp"

namespace octasam::promptgen {

struct Component {
    int id = 0;  // 1-based, contiguous
    std::size_t area = 0;
    BBox bbox;
    std::vector<Point> pixels;  // row-major order
};

/// 8-connected labeling of a binary mask. labels[y*width + x] is 0 for background or the
/// id of the owning component. Ids follow the row-major order of each component's first pixel.
struct ComponentMap {
    int height = 0;
    int width = 0;
    std::vector<int> labels;
    std::vector<Component> components;

    int label_at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count() const { return components.size(); }
    const Component& component(int id) const { return components.at(static_cast<std::size_t>(id - 1)); }
    Mask component_mask(int id) const;
    Mask foreground() const;
};

ComponentMap label_components(const Mask& mask);

/// Drops components with area < min_area_px; their pixels become background. Ids are
/// recompacted preserving order.
ComponentMap filter_small(const ComponentMap& cm, std::size_t min_area_px);

/// Background pixels within chessboard distance `radius_px` of the listed components,
/// excluding every foreground pixel of the map. Row-major order.
std::vector<Point> neighborhood(const ComponentMap& cm, const std::vector<int>& ids, int radius_px);

enum class Mode { Global, Local };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);

struct PromptPoint {
    int x = 0;
    int y = 0;
    int polarity = 1;  // 1 positive (foreground), 0 negative (background)
    friend bool operator==(const PromptPoint&, const PromptPoint&) = default;
};

struct PromptConfig {
    int n_pos = 2;
    int n_total = 5;
    Mode mode = Mode::Global;
    int min_area_px = 10;
    int neighborhood_radius_px = 10;
    double av_opposite_fraction = 0.5;

    void validate() const;
};

/// Positives first, then negatives.
struct PromptPointSet {
    std::vector<PromptPoint> points;
    std::optional<Mask> target_mask;  // local mode: the chosen component
    std::vector<std::string> notes;   // sampling reports (truncation, replacement, fallbacks)

    std::size_t positives() const;
    std::size_t negatives() const { return points.size() - positives(); }
};

PromptPointSet generate_global(const Mask& label, const PromptConfig& cfg, Rng& rng);
PromptPointSet generate_local(const Mask& label, const PromptConfig& cfg, Rng& rng);

enum class VesselClass { Artery, Vein };

/// Positives from the target vessel mask; a fraction of negatives on the other vessel class.
PromptPointSet generate_av(const Mask& artery, const Mask& vein, VesselClass target, const PromptConfig& cfg,
                           Rng& rng);

/// Dispatch on cfg.mode for a sample/task; artery and vein tasks use generate_av when both
/// masks are available (global mode).
PromptPointSet generate_for_task(const OctaSample& sample, Task task, const PromptConfig& cfg, Rng& rng);

/// Max kept-component count per task across a dataset.
using ComponentStats = std::map<std::string, int>;

ComponentStats max_component_counts(const std::vector<OctaSample>& samples, int min_area_px);

/// Total point budget for global mode: n_pos * max_count rounded up to a multiple of 5 (below 50)
/// or 10 (otherwise), always leaving room for at least one negative.
int recommend_total(int n_pos, int max_component_count);
int recommend_total(std::string_view task, const ComponentStats& stats, int n_pos);

/// `x y polarity` per line.
std::string to_text(const PromptPointSet& set);
PromptPointSet parse_text(std::string_view text);
/// One JSON object per line: {"x":..,"y":..,"polarity":..}.
std::string to_records(const PromptPointSet& set);

}  // namespace octasam::promptgen
