#include "octasam/promptgen.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "octasam/errors.hpp"

namespace octasam::promptgen {

// ---------------------------------------------------------------- components

namespace {

struct DisjointSet {
    std::vector<int> parent;

    int make() {
        parent.push_back(static_cast<int>(parent.size()));
        return parent.back();
    }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b)
            parent[b] = a;
        else
            parent[a] = b;
    }
};

void rebuild_components(ComponentMap& cm) {
    int k = 0;
    for (int v : cm.labels) k = std::max(k, v);
    cm.components.assign(k, {});
    for (int i = 0; i < k; ++i) {
        cm.components[i].id = i + 1;
        cm.components[i].bbox = {cm.width, cm.height, -1, -1};
    }
    for (int y = 0; y < cm.height; ++y)
        for (int x = 0; x < cm.width; ++x) {
            const int id = cm.label_at(x, y);
            if (id == 0) continue;
            auto& c = cm.components[id - 1];
            c.pixels.push_back({x, y});
            c.bbox.x0 = std::min(c.bbox.x0, x);
            c.bbox.y0 = std::min(c.bbox.y0, y);
            c.bbox.x1 = std::max(c.bbox.x1, x);
            c.bbox.y1 = std::max(c.bbox.y1, y);
        }
    for (auto& c : cm.components) c.area = c.pixels.size();
}

}  // namespace

Mask ComponentMap::component_mask(int id) const {
    Mask m(height, width);
    for (std::size_t i = 0; i < labels.size(); ++i) m.data()[i] = labels[i] == id ? 1 : 0;
    return m;
}

Mask ComponentMap::foreground() const {
    Mask m(height, width);
    for (std::size_t i = 0; i < labels.size(); ++i) m.data()[i] = labels[i] != 0 ? 1 : 0;
    return m;
}

ComponentMap label_components(const Mask& mask) {
    ComponentMap cm;
    cm.height = mask.height();
    cm.width = mask.width();
    cm.labels.assign(mask.size(), 0);

    // First pass: provisional labels from the already-visited half of the 8-neighbourhood
    // (W, NW, N, NE), recording equivalences.
    DisjointSet ds;
    ds.make();  // 0 = background
    const int w = cm.width;
    for (int y = 0; y < cm.height; ++y)
        for (int x = 0; x < w; ++x) {
            if (mask.at(y, x) == 0) continue;
            int label = 0;
            const int nbrs[4][2] = {{-1, 0}, {-1, -1}, {0, -1}, {1, -1}};
            for (const auto& d : nbrs) {
                const int nx = x + d[0], ny = y + d[1];
                if (!mask.contains(nx, ny)) continue;
                const int l = cm.labels[static_cast<std::size_t>(ny) * w + nx];
                if (l == 0) continue;
                if (label == 0)
                    label = l;
                else
                    ds.unite(label, l);
            }
            if (label == 0) label = ds.make();
            cm.labels[static_cast<std::size_t>(y) * w + x] = label;
        }

    // Second pass: resolve to roots and renumber in row-major order of first appearance.
    std::vector<int> remap(ds.parent.size(), 0);
    int next = 0;
    for (int& l : cm.labels) {
        if (l == 0) continue;
        const int root = ds.find(l);
        if (remap[root] == 0) remap[root] = ++next;
        l = remap[root];
    }
    rebuild_components(cm);
    return cm;
}

ComponentMap filter_small(const ComponentMap& cm, std::size_t min_area_px) {
    std::vector<int> remap(cm.components.size() + 1, 0);
    int next = 0;
    for (const auto& c : cm.components)
        if (c.area >= min_area_px) remap[c.id] = ++next;
    ComponentMap out;
    out.height = cm.height;
    out.width = cm.width;
    out.labels.resize(cm.labels.size());
    for (std::size_t i = 0; i < cm.labels.size(); ++i) out.labels[i] = remap[cm.labels[i]];
    rebuild_components(out);
    return out;
}

std::vector<Point> neighborhood(const ComponentMap& cm, const std::vector<int>& ids, int radius_px) {
    if (radius_px < 1) throw ConfigError("neighborhood radius must be at least 1");
    const int w = cm.width, h = cm.height;
    std::vector<int> dist(cm.labels.size(), -1);
    std::deque<Point> queue;
    for (int id : ids) {
        if (id < 1 || id > static_cast<int>(cm.count())) throw DataError("neighborhood: unknown component id");
        for (const Point& p : cm.component(id).pixels) {
            dist[static_cast<std::size_t>(p.y) * w + p.x] = 0;
            queue.push_back(p);
        }
    }
    // multi-source BFS over the 8-neighbour grid; hop count equals chessboard distance
    while (!queue.empty()) {
        const Point p = queue.front();
        queue.pop_front();
        const int d = dist[static_cast<std::size_t>(p.y) * w + p.x];
        if (d == radius_px) continue;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = p.x + dx, ny = p.y + dy;
                if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                auto& nd = dist[static_cast<std::size_t>(ny) * w + nx];
                if (nd >= 0) continue;
                nd = d + 1;
                queue.push_back({nx, ny});
            }
    }
    std::vector<Point> out;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto i = static_cast<std::size_t>(y) * w + x;
            if (dist[i] > 0 && cm.labels[i] == 0) out.push_back({x, y});
        }
    return out;
}

// ---------------------------------------------------------------- sampling

std::string_view to_string(Mode mode) { return mode == Mode::Global ? "global" : "local"; }

Mode parse_mode(std::string_view name) {
    if (name == "global") return Mode::Global;
    if (name == "local") return Mode::Local;
    throw ConfigError("unknown prompt mode '" + std::string(name) + "' (expected global or local)");
}

void PromptConfig::validate() const {
    if (n_pos < 0) throw ConfigError("number of positive points must be non-negative");
    if (n_total < 0) throw ConfigError("total number of points must be non-negative");
    if (min_area_px < 0) throw ConfigError("min_area_px must be non-negative");
    if (neighborhood_radius_px < 1) throw ConfigError("neighborhood radius must be at least 1");
    if (!(av_opposite_fraction >= 0.0 && av_opposite_fraction <= 1.0))
        throw ConfigError("av_opposite_fraction must lie in [0,1]");
}

std::size_t PromptPointSet::positives() const {
    return static_cast<std::size_t>(
        std::count_if(points.begin(), points.end(), [](const PromptPoint& p) { return p.polarity == 1; }));
}

namespace {

void add_positives(PromptPointSet& set, const Component& c, int n_pos, Rng& rng) {
    const auto picks = rng.sample_without_replacement(c.pixels.size(), static_cast<std::size_t>(n_pos));
    for (auto i : picks) set.points.push_back({c.pixels[i].x, c.pixels[i].y, 1});
}

// Negatives from `pool`: without replacement when it is large enough, otherwise every pool
// pixel once and the remainder drawn with replacement.
void add_negatives(PromptPointSet& set, const std::vector<Point>& pool, std::size_t count, Rng& rng,
                   std::string_view what) {
    if (count == 0) return;
    if (pool.empty()) throw DataError(std::string("no pixels available for negative points (") + std::string(what) + ")");
    if (pool.size() >= count) {
        for (auto i : rng.sample_without_replacement(pool.size(), count))
            set.points.push_back({pool[i].x, pool[i].y, 0});
        return;
    }
    set.notes.push_back(std::string(what) + " region has " + std::to_string(pool.size()) + " pixels for " +
                        std::to_string(count) + " negatives; sampling with replacement");
    for (auto i : rng.sample_without_replacement(pool.size(), pool.size()))
        set.points.push_back({pool[i].x, pool[i].y, 0});
    for (std::size_t k = pool.size(); k < count; ++k) {
        const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1));
        set.points.push_back({pool[i].x, pool[i].y, 0});
    }
}

// Neighbourhood of `ids`, falling back to all background pixels when it is empty.
std::vector<Point> negative_pool(const ComponentMap& cm, const std::vector<int>& ids, int radius,
                                 PromptPointSet& set) {
    auto pool = neighborhood(cm, ids, radius);
    if (!pool.empty()) return pool;
    for (int y = 0; y < cm.height; ++y)
        for (int x = 0; x < cm.width; ++x)
            if (cm.label_at(x, y) == 0) pool.push_back({x, y});
    if (!pool.empty()) set.notes.push_back("empty neighbourhood; negatives drawn from the whole background");
    return pool;
}

ComponentMap kept_components(const Mask& label, const PromptConfig& cfg) {
    if (label.max_value() > 1) throw DataError("prompt generation expects a binary label mask");
    return filter_small(label_components(label), static_cast<std::size_t>(cfg.min_area_px));
}

// Global-mode positives; returns the number of negatives still owed.
std::size_t global_positives(const ComponentMap& cm, const PromptConfig& cfg, PromptPointSet& set, Rng& rng) {
    for (const auto& c : cm.components) add_positives(set, c, cfg.n_pos, rng);
    const std::size_t pos = set.points.size();
    const auto total = static_cast<std::size_t>(cfg.n_total);
    if (pos >= total) {
        if (pos > total)
            set.notes.push_back(std::to_string(pos) + " positives exceed the total of " + std::to_string(total) +
                                "; no negatives sampled");
        return 0;
    }
    return total - pos;
}

std::vector<int> all_ids(const ComponentMap& cm) {
    std::vector<int> ids(cm.count());
    std::iota(ids.begin(), ids.end(), 1);
    return ids;
}

}  // namespace

PromptPointSet generate_global(const Mask& label, const PromptConfig& cfg, Rng& rng) {
    cfg.validate();
    PromptPointSet set;
    if (cfg.n_total == 0) return set;
    const ComponentMap cm = kept_components(label, cfg);
    if (cm.count() == 0) throw DataError("no components in label");
    const std::size_t owed = global_positives(cm, cfg, set, rng);
    if (owed > 0) add_negatives(set, negative_pool(cm, all_ids(cm), cfg.neighborhood_radius_px, set), owed, rng, "neighbourhood");
    return set;
}

PromptPointSet generate_local(const Mask& label, const PromptConfig& cfg, Rng& rng) {
    cfg.validate();
    const ComponentMap cm = kept_components(label, cfg);
    if (cm.count() == 0) throw DataError("no components in label");
    PromptPointSet set;
    const int id = static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(cm.count())));
    const Component& c = cm.component(id);
    add_positives(set, c, cfg.n_pos, rng);
    const auto pos = static_cast<int>(set.points.size());
    const int owed = std::max(0, cfg.n_total - pos);
    if (owed > 0)
        add_negatives(set, negative_pool(cm, {id}, cfg.neighborhood_radius_px, set), static_cast<std::size_t>(owed),
                      rng, "neighbourhood");
    set.target_mask = cm.component_mask(id);
    return set;
}

PromptPointSet generate_av(const Mask& artery, const Mask& vein, VesselClass target, const PromptConfig& cfg,
                           Rng& rng) {
    cfg.validate();
    if (artery.height() != vein.height() || artery.width() != vein.width())
        throw ShapeError("artery and vein masks differ in shape");
    const Mask& target_mask = target == VesselClass::Artery ? artery : vein;
    const Mask& other_mask = target == VesselClass::Artery ? vein : artery;

    PromptPointSet set;
    if (cfg.n_total == 0) return set;
    const ComponentMap cm = kept_components(target_mask, cfg);
    if (cm.count() == 0) throw DataError("no components in target vessel mask");

    const std::size_t owed = global_positives(cm, cfg, set, rng);
    const auto opposite = static_cast<std::size_t>(std::lround(cfg.av_opposite_fraction * static_cast<double>(owed)));
    const std::size_t background = owed - opposite;

    // Background draws come first so a zero opposite fraction reproduces generate_global exactly.
    if (background > 0)
        add_negatives(set, negative_pool(cm, all_ids(cm), cfg.neighborhood_radius_px, set), background, rng,
                      "neighbourhood");
    if (opposite > 0) {
        std::vector<Point> pool;
        for (int y = 0; y < other_mask.height(); ++y)
            for (int x = 0; x < other_mask.width(); ++x)
                if (other_mask.at(y, x) != 0 && cm.label_at(x, y) == 0) pool.push_back({x, y});
        if (pool.empty()) {
            set.notes.push_back("opposite vessel mask is empty; its negatives come from the neighbourhood");
            pool = negative_pool(cm, all_ids(cm), cfg.neighborhood_radius_px, set);
        }
        add_negatives(set, pool, opposite, rng, "opposite vessel");
    }
    return set;
}

PromptPointSet generate_for_task(const OctaSample& sample, Task task, const PromptConfig& cfg, Rng& rng) {
    if (cfg.mode == Mode::Local) return generate_local(sample.label(task), cfg, rng);
    if ((task == Task::Artery || task == Task::Vein) && sample.has_label(Task::Artery) &&
        sample.has_label(Task::Vein))
        return generate_av(sample.label(Task::Artery), sample.label(Task::Vein),
                           task == Task::Artery ? VesselClass::Artery : VesselClass::Vein, cfg, rng);
    return generate_global(sample.label(task), cfg, rng);
}

ComponentStats max_component_counts(const std::vector<OctaSample>& samples, int min_area_px) {
    ComponentStats stats;
    for (const auto& s : samples)
        for (const auto& [task, mask] : s.labels) {
            const auto n = static_cast<int>(
                filter_small(label_components(mask), static_cast<std::size_t>(min_area_px)).count());
            auto& slot = stats[std::string(to_string(task))];
            slot = std::max(slot, n);
        }
    return stats;
}

int recommend_total(int n_pos, int max_component_count) {
    const int raw = n_pos * max_component_count;
    const int step = raw < 50 ? 5 : 10;
    const int need = raw + 1;
    return (need + step - 1) / step * step;
}

int recommend_total(std::string_view task, const ComponentStats& stats, int n_pos) {
    auto it = stats.find(std::string(to_string(parse_task(task))));
    if (it == stats.end()) throw DataError("no component statistics for task " + std::string(task));
    return recommend_total(n_pos, it->second);
}

std::string to_text(const PromptPointSet& set) {
    std::ostringstream out;
    for (const auto& p : set.points) out << p.x << ' ' << p.y << ' ' << p.polarity << '\n';
    return out.str();
}

PromptPointSet parse_text(std::string_view text) {
    PromptPointSet set;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        std::istringstream ls(line);
        PromptPoint p;
        if (!(ls >> p.x >> p.y >> p.polarity) || (p.polarity != 0 && p.polarity != 1))
            throw ParseError("points line " + std::to_string(lineno) + ": expected 'x y polarity'");
        set.points.push_back(p);
    }
    return set;
}

std::string to_records(const PromptPointSet& set) {
    std::string out;
    for (const auto& p : set.points)
        out += nlohmann::json{{"x", p.x}, {"y", p.y}, {"polarity", p.polarity}}.dump() + "\n";
    return out;
}

}  // namespace octasam::promptgen
