#include "octasam/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <Eigen/LU>
#include <json.hpp>

#include "octasam/errors.hpp"
#include "octasam/log.hpp"

namespace octasam {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

}  // namespace

std::string_view to_string(Task task) {
    switch (task) {
        case Task::RV: return "RV";
        case Task::FAZ: return "FAZ";
        case Task::Capillary: return "capillary";
        case Task::Artery: return "artery";
        case Task::Vein: return "vein";
    }
    return "?";
}

Task parse_task(std::string_view name) {
    const std::string n = lower(name);
    if (n == "rv") return Task::RV;
    if (n == "faz") return Task::FAZ;
    if (n == "capillary") return Task::Capillary;
    if (n == "artery") return Task::Artery;
    if (n == "vein") return Task::Vein;
    throw ConfigError("unknown task '" + std::string(name) + "' (expected RV, FAZ, capillary, artery, vein)");
}

bool is_tubular(Task task) { return task == Task::RV || task == Task::Artery || task == Task::Vein; }

std::string_view to_string(Fov fov) {
    switch (fov) {
        case Fov::M3: return "3M";
        case Fov::M6: return "6M";
        case Fov::Other: return "other";
    }
    return "other";
}

Fov parse_fov(std::string_view name) {
    const std::string n = lower(name);
    if (n == "3m") return Fov::M3;
    if (n == "6m") return Fov::M6;
    if (n == "other" || n.empty()) return Fov::Other;
    throw ConfigError("unknown field of view '" + std::string(name) + "'");
}

void OctaSample::validate() const {
    if (image.channels() != 3) throw ShapeError("sample " + id + ": image must have 3 channels");
    if (!image.all_finite_in_unit_range())
        throw DataError("sample " + id + ": intensities must be finite and within [0,1]");
    for (const auto& [task, mask] : labels) {
        if (mask.height() != image.height() || mask.width() != image.width())
            throw ShapeError("sample " + id + ": label " + std::string(to_string(task)) +
                             " does not match the image shape");
        if (mask.max_value() > 1)
            throw DataError("sample " + id + ": label " + std::string(to_string(task)) + " is not binary");
    }
}

const Mask& OctaSample::label(Task task) const {
    auto it = labels.find(task);
    if (it == labels.end())
        throw DataError("sample " + id + " has no " + std::string(to_string(task)) + " label");
    return it->second;
}

}  // namespace octasam

namespace octasam::dataio {

// ---------------------------------------------------------------- transforms

PointF GeometricTransform::apply(PointF p) const {
    return {forward(0, 0) * p.x + forward(0, 1) * p.y + forward(0, 2),
            forward(1, 0) * p.x + forward(1, 1) * p.y + forward(1, 2)};
}

PointF GeometricTransform::invert(PointF p) const {
    const Eigen::Matrix2d lin = forward.leftCols<2>();
    const Eigen::Vector2d v = lin.inverse() * (Eigen::Vector2d(p.x, p.y) - forward.col(2));
    return {v.x(), v.y()};
}

GeometricTransform GeometricTransform::then(const GeometricTransform& next) const {
    GeometricTransform out = next;
    const Eigen::Matrix2d a = forward.leftCols<2>();
    const Eigen::Matrix2d b = next.forward.leftCols<2>();
    out.forward.leftCols<2>() = b * a;
    out.forward.col(2) = b * forward.col(2) + next.forward.col(2);
    out.scale = scale * next.scale;
    out.flip_h = flip_h != next.flip_h;
    out.rotation_deg = rotation_deg + next.rotation_deg;
    out.crop_left = crop_left;
    out.crop_top = crop_top;
    out.src_height = src_height;
    out.src_width = src_width;
    return out;
}

bool GeometricTransform::is_identity() const {
    return src_height == dst_height && src_width == dst_width &&
           (forward - Eigen::Matrix<double, 2, 3>::Identity()).cwiseAbs().maxCoeff() < 1e-12;
}

GeometricTransform GeometricTransform::identity(int height, int width) {
    GeometricTransform t;
    t.src_height = t.dst_height = height;
    t.src_width = t.dst_width = width;
    return t;
}

GeometricTransform GeometricTransform::scale_pad(int src_h, int src_w, double s, int dst_h, int dst_w,
                                                 int pad_left, int pad_top) {
    GeometricTransform t;
    t.scale = s;
    t.pad_left = pad_left;
    t.pad_top = pad_top;
    t.src_height = src_h;
    t.src_width = src_w;
    t.dst_height = dst_h;
    t.dst_width = dst_w;
    // pixel centres: x' + 0.5 = (x + 0.5) * s + pad
    t.forward << s, 0.0, 0.5 * s - 0.5 + pad_left,  //
        0.0, s, 0.5 * s - 0.5 + pad_top;
    return t;
}

GeometricTransform GeometricTransform::hflip(int height, int width) {
    GeometricTransform t = identity(height, width);
    t.flip_h = true;
    t.forward << -1.0, 0.0, width - 1.0,  //
        0.0, 1.0, 0.0;
    return t;
}

GeometricTransform GeometricTransform::rotation(int height, int width, double degrees) {
    GeometricTransform t = identity(height, width);
    t.rotation_deg = degrees;
    const double r = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(r), s = std::sin(r);
    const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
    t.forward << c, -s, cx - c * cx + s * cy,  //
        s, c, cy - s * cx - c * cy;
    return t;
}

namespace {

double bilinear(const Image& img, double sx, double sy, int c) {
    const int w = img.width(), h = img.height();
    if (sx < -0.5 || sy < -0.5 || sx > w - 0.5 || sy > h - 0.5) return 0.0;
    sx = std::clamp(sx, 0.0, w - 1.0);
    sy = std::clamp(sy, 0.0, h - 1.0);
    const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double fx = sx - x0, fy = sy - y0;
    const double top = img.at(y0, x0, c) * (1 - fx) + img.at(y0, x1, c) * fx;
    const double bot = img.at(y1, x0, c) * (1 - fx) + img.at(y1, x1, c) * fx;
    return top * (1 - fy) + bot * fy;
}

}  // namespace

Image warp_image(const Image& image, const GeometricTransform& t) {
    if (t.is_identity() && t.src_height == image.height() && t.src_width == image.width()) return image;
    Image out(t.dst_height, t.dst_width, image.channels());
    for (int y = 0; y < t.dst_height; ++y)
        for (int x = 0; x < t.dst_width; ++x) {
            const PointF s = t.invert({static_cast<double>(x), static_cast<double>(y)});
            for (int c = 0; c < image.channels(); ++c) out.at(y, x, c) = bilinear(image, s.x, s.y, c);
        }
    return out;
}

Mask warp_mask(const Mask& mask, const GeometricTransform& t) {
    if (t.is_identity() && t.src_height == mask.height() && t.src_width == mask.width()) return mask;
    Mask out(t.dst_height, t.dst_width);
    for (int y = 0; y < t.dst_height; ++y)
        for (int x = 0; x < t.dst_width; ++x) {
            const PointF s = t.invert({static_cast<double>(x), static_cast<double>(y)});
            const int sx = static_cast<int>(std::floor(s.x + 0.5));
            const int sy = static_cast<int>(std::floor(s.y + 0.5));
            if (mask.contains(sx, sy)) out.at(y, x) = mask.at(sy, sx);
        }
    return out;
}

Eigen::MatrixXd sampling_matrix(const std::vector<double>& coords, int src_len) {
    if (src_len <= 0) throw ShapeError("sampling_matrix: empty source");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(coords.size()), src_len);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const double c = std::clamp(coords[i], 0.0, src_len - 1.0);
        const int i0 = static_cast<int>(std::floor(c));
        const int i1 = std::min(i0 + 1, src_len - 1);
        const double f = c - i0;
        m(static_cast<Eigen::Index>(i), i0) += 1.0 - f;
        m(static_cast<Eigen::Index>(i), i1) += f;
    }
    return m;
}

// ---------------------------------------------------------------- preprocessing

Image stack_layers(const std::vector<Eigen::MatrixXd>& layers, const LayerPolicy& policy) {
    if (layers.empty()) throw DataError("stack_layers: at least one layer is required");
    std::vector<int> order = policy.order;
    if (order.empty())
        for (int i = 0; i < static_cast<int>(layers.size()); ++i) order.push_back(i);
    for (int idx : order)
        if (idx < 0 || idx >= static_cast<int>(layers.size()))
            throw ConfigError("stack_layers: layer index " + std::to_string(idx) + " out of range");
    const auto h = layers[0].rows(), w = layers[0].cols();
    for (const auto& l : layers)
        if (l.rows() != h || l.cols() != w) throw ShapeError("stack_layers: layers differ in shape");

    Image out(static_cast<int>(h), static_cast<int>(w), 3);
    for (int c = 0; c < 3; ++c) {
        const int pick = order[std::min<std::size_t>(c, order.size() - 1)];
        out.set_channel(c, layers[pick]);
    }
    return out;
}

PaddedImage resize_and_pad(const Image& image, int target_side) {
    if (image.height() <= 0 || image.width() <= 0 || target_side <= 0)
        throw ShapeError("resize_and_pad: non-positive dimensions");
    const double s = static_cast<double>(target_side) / std::max(image.height(), image.width());
    auto t = GeometricTransform::scale_pad(image.height(), image.width(), s, target_side, target_side);
    return {warp_image(image, t), t};
}

Augmented augment(const OctaSample& sample, Rng& rng, const AugmentConfig& cfg) {
    const int h = sample.image.height(), w = sample.image.width();
    auto t = GeometricTransform::identity(h, w);
    if (cfg.hflip && rng.bernoulli(cfg.hflip_p)) t = t.then(GeometricTransform::hflip(h, w));
    if (cfg.rotation) {
        const double deg = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
        t = t.then(GeometricTransform::rotation(h, w, deg));
    }

    Augmented out{sample, t};
    if (!t.is_identity()) {
        out.sample.image = warp_image(sample.image, t);
        for (auto& [task, mask] : out.sample.labels) mask = warp_mask(sample.labels.at(task), t);
    }
    if (cfg.brightness_contrast) {
        const double alpha = 1.0 + rng.uniform(-cfg.contrast_limit, cfg.contrast_limit);
        const double beta = rng.uniform(-cfg.brightness_limit, cfg.brightness_limit);
        for (double& v : out.sample.image.data()) v = std::clamp(alpha * v + beta, 0.0, 1.0);
    }
    return out;
}

std::vector<Fold> kfold_split(const std::vector<std::string>& sample_ids, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("kfold_split: k must be at least 2");
    const auto n = static_cast<int>(sample_ids.size());
    if (n < k)
        throw ConfigError("kfold_split: " + std::to_string(k) + " folds requested for " + std::to_string(n) +
                          " samples");
    std::vector<std::string> shuffled = sample_ids;
    Rng rng(seed);
    rng.shuffle(shuffled);

    std::vector<Fold> folds(k);
    int pos = 0;
    for (int i = 0; i < k; ++i) {
        const int size = n / k + (i < n % k ? 1 : 0);
        auto& fold = folds[i];
        fold.val_ids.assign(shuffled.begin() + pos, shuffled.begin() + pos + size);
        fold.train_ids.insert(fold.train_ids.end(), shuffled.begin(), shuffled.begin() + pos);
        fold.train_ids.insert(fold.train_ids.end(), shuffled.begin() + pos + size, shuffled.end());
        std::sort(fold.val_ids.begin(), fold.val_ids.end());
        std::sort(fold.train_ids.begin(), fold.train_ids.end());
        pos += size;
    }
    return folds;
}

double crop_fraction(int image_width, const BBox& bbox) {
    const int extent = std::max(bbox.width(), bbox.height());
    for (double f : kCropFractions)
        if (f * image_width >= extent) return f;
    return 1.0;
}

CropResult crop_local(const Image& image, const BBox& bbox) {
    const int h = image.height(), w = image.width();
    CropResult out;
    out.fraction = crop_fraction(w, bbox);
    if (out.fraction >= 1.0) {
        out.image = image;
        out.transform = GeometricTransform::identity(h, w);
        out.side = w;
        return out;
    }
    const int side = static_cast<int>(std::lround(out.fraction * w));
    const int side_x = std::min(side, w), side_y = std::min(side, h);
    const double cx = (bbox.x0 + bbox.x1 + 1) / 2.0;
    const double cy = (bbox.y0 + bbox.y1 + 1) / 2.0;
    out.side = side;
    out.left = std::clamp(static_cast<int>(std::lround(cx - side_x / 2.0)), 0, w - side_x);
    out.top = std::clamp(static_cast<int>(std::lround(cy - side_y / 2.0)), 0, h - side_y);

    const double sx = static_cast<double>(w) / side_x, sy = static_cast<double>(h) / side_y;
    auto& t = out.transform;
    t = GeometricTransform::identity(h, w);
    t.scale = sx;
    t.crop_left = out.left;
    t.crop_top = out.top;
    t.forward << sx, 0.0, (0.5 - out.left) * sx - 0.5,  //
        0.0, sy, (0.5 - out.top) * sy - 0.5;
    out.image = warp_image(image, t);
    return out;
}

// ---------------------------------------------------------------- dataset layout

DatasetLayout DatasetLayout::from_json_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("dataset layout is not valid JSON: ") + e.what());
    }
    DatasetLayout layout;
    try {
        layout.name = j.value("name", "");
        layout.fov = parse_fov(j.value("fov", "other"));
        layout.layers = j.at("layers").get<std::vector<std::string>>();
        if (j.contains("layer_order")) layout.policy.order = j["layer_order"].get<std::vector<int>>();
        if (j.contains("labels"))
            for (const auto& [task, dir] : j["labels"].items()) layout.labels[parse_task(task)] = dir.get<std::string>();
        if (j.contains("av_labels") && !j["av_labels"].is_null()) layout.av_labels = j["av_labels"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("dataset layout: ") + e.what());
    }
    if (layout.layers.empty()) throw ConfigError("dataset layout lists no layer directories");
    return layout;
}

DatasetLayout DatasetLayout::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset layout " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_string(ss.str());
}

std::string DatasetLayout::to_json_string() const {
    nlohmann::json j;
    j["name"] = name;
    j["fov"] = std::string(to_string(fov));
    j["layers"] = layers;
    if (!policy.order.empty()) j["layer_order"] = policy.order;
    nlohmann::json labels_json = nlohmann::json::object();
    for (const auto& [task, dir] : labels) labels_json[std::string(to_string(task))] = dir;
    j["labels"] = labels_json;
    j["av_labels"] = av_labels ? nlohmann::json(*av_labels) : nlohmann::json(nullptr);
    return j.dump(2);
}

namespace {

using RasterIndex = std::map<std::string, std::filesystem::path>;

RasterIndex index_rasters(const std::filesystem::path& dir) {
    RasterIndex idx;
    if (!std::filesystem::is_directory(dir)) return idx;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = lower(entry.path().extension().string());
        if (ext == ".png" || ext == ".bmp") idx.emplace(entry.path().stem().string(), entry.path());
    }
    return idx;
}

}  // namespace

LoadResult load_dataset(const std::filesystem::path& root, const DatasetLayout& layout) {
    if (!std::filesystem::is_directory(root)) throw ConfigError("dataset root does not exist: " + root.string());
    if (layout.layers.empty()) throw ConfigError("dataset layout lists no layer directories");

    LoadResult result;
    std::vector<RasterIndex> layer_index;
    for (const auto& dir : layout.layers) {
        if (!std::filesystem::is_directory(root / dir))
            result.warnings.push_back("layer directory missing: " + (root / dir).string());
        layer_index.push_back(index_rasters(root / dir));
    }
    std::map<Task, RasterIndex> label_index;
    for (const auto& [task, dir] : layout.labels) label_index[task] = index_rasters(root / dir);
    RasterIndex av_index;
    if (layout.av_labels) av_index = index_rasters(root / *layout.av_labels);

    for (const auto& [id, first_path] : layer_index.front()) {
        OctaSample sample;
        sample.id = id;
        sample.fov = layout.fov;
        sample.source = layout.name;
        std::filesystem::path current = first_path;
        try {
            std::vector<Eigen::MatrixXd> layers;
            for (std::size_t li = 0; li < layer_index.size(); ++li) {
                auto it = layer_index[li].find(id);
                if (it == layer_index[li].end()) {
                    current = root / layout.layers[li] / id;
                    throw DataError("missing layer file");
                }
                current = it->second;
                layers.push_back(io::read_gray(current));
                if (layers.back().rows() != layers.front().rows() || layers.back().cols() != layers.front().cols())
                    throw ShapeError("layer shape differs from the first layer");
            }
            sample.image = stack_layers(layers, layout.policy);

            auto check_shape = [&](const Mask& m) {
                if (m.height() != sample.image.height() || m.width() != sample.image.width())
                    throw ShapeError("label shape " + std::to_string(m.height()) + "x" + std::to_string(m.width()) +
                                     " does not match image " + std::to_string(sample.image.height()) + "x" +
                                     std::to_string(sample.image.width()));
            };
            for (const auto& [task, index] : label_index) {
                auto it = index.find(id);
                if (it == index.end()) {
                    result.missing_labels.push_back({id, task});
                    continue;
                }
                current = it->second;
                Mask m = io::read_mask(current);
                check_shape(m);
                sample.labels[task] = std::move(m);
            }
            if (layout.av_labels) {
                auto it = av_index.find(id);
                if (it == av_index.end()) {
                    result.missing_labels.push_back({id, Task::Artery});
                    result.missing_labels.push_back({id, Task::Vein});
                } else {
                    current = it->second;
                    Mask av = io::read_mask(current, true);
                    check_shape(av);
                    if (av.max_value() > 2) throw DataError("artery/vein mask values must be in {0,1,2}");
                    sample.labels[Task::Artery] = av.select(1);
                    sample.labels[Task::Vein] = av.select(2);
                }
            }
            result.samples.push_back(std::move(sample));
        } catch (const Error& e) {
            result.failures.push_back({id, current, e.what()});
        }
    }

    for (const auto& miss : result.missing_labels)
        log::warn("sample " + miss.id + " has no " + std::string(to_string(miss.task)) + " label");
    for (const auto& f : result.failures) log::warn("sample " + f.id + ": " + f.file.string() + ": " + f.message);
    if (result.samples.empty() && result.failures.empty()) {
        result.warnings.push_back("no samples found under " + root.string());
    }
    for (const auto& w : result.warnings) log::warn(w);
    return result;
}

}  // namespace octasam::dataio
