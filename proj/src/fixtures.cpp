#include "octasam/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "octasam/errors.hpp"

namespace octasam::fixtures {
namespace {

struct Canvas {
    int size;
    Eigen::MatrixXd vessel;    // class id per pixel: 0, 1 artery, 2 vein
    Eigen::MatrixXd capillary;
};

void stamp(Eigen::MatrixXd& m, double cx, double cy, double radius, double value) {
    const int r = static_cast<int>(std::ceil(radius));
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            const int x = static_cast<int>(std::lround(cx)) + dx, y = static_cast<int>(std::lround(cy)) + dy;
            if (x < 0 || y < 0 || x >= m.cols() || y >= m.rows()) continue;
            const double ddx = x - cx, ddy = y - cy;
            if (ddx * ddx + ddy * ddy <= radius * radius + 0.25 && m(y, x) == 0.0) m(y, x) = value;
        }
}

void grow(Canvas& c, Rng& rng, double x, double y, double angle, double length, double radius, double cls,
          double faz_r, int depth) {
    const double centre = (c.size - 1) / 2.0;
    for (double walked = 0; walked < length; walked += 0.5) {
        x += 0.5 * std::cos(angle);
        y += 0.5 * std::sin(angle);
        if (x < 0 || y < 0 || x > c.size - 1 || y > c.size - 1) return;
        if (std::hypot(x - centre, y - centre) < faz_r + radius + 1.0) return;
        stamp(c.vessel, x, y, radius, cls);
        angle += rng.uniform(-0.08, 0.08);
        if (depth < 2 && rng.bernoulli(0.012)) {
            const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
            grow(c, rng, x, y, angle + side * rng.uniform(0.5, 0.9), (length - walked) * 0.6,
                 std::max(0.8, radius * 0.8), cls, faz_r, depth + 1);
        }
    }
}

Mask to_mask(const Eigen::MatrixXd& m, double value) {
    Mask out(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x) out.at(y, x) = m(y, x) == value ? 1 : 0;
    return out;
}

Eigen::MatrixXd box_blur(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out = m;
    for (Eigen::Index y = 0; y < m.rows(); ++y)
        for (Eigen::Index x = 0; x < m.cols(); ++x) {
            double s = 0;
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const auto yy = y + dy, xx = x + dx;
                    if (yy < 0 || xx < 0 || yy >= m.rows() || xx >= m.cols()) continue;
                    s += m(yy, xx);
                    ++n;
                }
            out(y, x) = s / n;
        }
    return out;
}

}  // namespace

SyntheticSubject make_subject(const FixtureConfig& cfg, Rng& rng, std::string id) {
    const int n = cfg.size;
    if (n < 16) throw ConfigError("fixture size must be at least 16");
    const double radius = cfg.vessel_radius > 0 ? cfg.vessel_radius : std::max(0.9, n / 56.0);
    const double faz_r = n * rng.uniform(0.07, 0.11);
    const double centre = (n - 1) / 2.0;

    Canvas c{n, Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
    for (int t = 0; t < cfg.trees; ++t) {
        // start on the border, aim roughly at the centre
        const double theta = 2 * std::numbers::pi * (t + rng.uniform(0.0, 0.8)) / cfg.trees;
        const double sx = std::clamp(centre + std::cos(theta) * centre, 0.0, n - 1.0);
        const double sy = std::clamp(centre + std::sin(theta) * centre, 0.0, n - 1.0);
        const double angle = std::atan2(centre - sy, centre - sx) + rng.uniform(-0.35, 0.35);
        grow(c, rng, sx, sy, angle, n * rng.uniform(0.45, 0.7), radius, (t % 2 == 0) ? 1.0 : 2.0, faz_r, 0);
    }
    const int strokes = std::max(4, n / 8);
    for (int s = 0; s < strokes; ++s) {
        double x = rng.uniform(0, n - 1), y = rng.uniform(0, n - 1), a = rng.uniform(0, 2 * std::numbers::pi);
        const double len = rng.uniform(n * 0.05, n * 0.15);
        for (double w = 0; w < len; w += 0.5) {
            x += 0.5 * std::cos(a);
            y += 0.5 * std::sin(a);
            a += rng.uniform(-0.2, 0.2);
            const int ix = static_cast<int>(std::lround(x)), iy = static_cast<int>(std::lround(y));
            if (ix < 0 || iy < 0 || ix >= n || iy >= n) break;
            if (std::hypot(x - centre, y - centre) < faz_r) break;
            if (c.vessel(iy, ix) == 0.0) c.capillary(iy, ix) = 1.0;
        }
    }

    SyntheticSubject s;
    s.id = std::move(id);
    s.artery_vein = Mask(n, n);
    s.faz = Mask(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            s.artery_vein.at(y, x) = static_cast<std::uint8_t>(c.vessel(y, x));
            s.faz.at(y, x) = std::hypot(x - centre, y - centre) <= faz_r ? 1 : 0;
        }
    s.rv = to_mask((c.vessel.array() > 0).cast<double>().matrix(), 1.0);
    s.capillary = to_mask(c.capillary, 1.0);

    const Eigen::MatrixXd vessels = (c.vessel.array() > 0).cast<double>().matrix();
    Eigen::MatrixXd base = 0.12 * Eigen::MatrixXd::Ones(n, n) + 0.7 * vessels + 0.3 * c.capillary;
    for (int k = 0; k < 3; ++k) {
        Eigen::MatrixXd layer = k == 1 ? box_blur(base) : base;
        if (k == 2) layer = 0.1 * Eigen::MatrixXd::Ones(n, n) + 0.8 * vessels;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) layer(y, x) = std::clamp(layer(y, x) + cfg.noise * rng.normal(), 0.0, 1.0);
        s.layers.push_back(std::move(layer));
    }
    return s;
}

OctaSample to_sample(const SyntheticSubject& subject, Fov fov) {
    OctaSample sample;
    sample.id = subject.id;
    sample.image = dataio::stack_layers(subject.layers);
    sample.fov = fov;
    sample.source = "synthetic";
    sample.labels[Task::RV] = subject.rv;
    sample.labels[Task::FAZ] = subject.faz;
    sample.labels[Task::Capillary] = subject.capillary;
    sample.labels[Task::Artery] = subject.artery_vein.select(1);
    sample.labels[Task::Vein] = subject.artery_vein.select(2);
    return sample;
}

namespace {
std::string subject_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05d", 10001 + i);
    return buf;
}
}  // namespace

std::vector<OctaSample> make_dataset(const FixtureConfig& cfg) {
    Rng rng(cfg.seed);
    std::vector<OctaSample> out;
    for (int i = 0; i < cfg.count; ++i) out.push_back(to_sample(make_subject(cfg, rng, subject_id(i)), cfg.fov));
    return out;
}

dataio::DatasetLayout fixture_layout(Fov fov) {
    dataio::DatasetLayout layout;
    layout.name = "synthetic";
    layout.fov = fov;
    layout.layers = {"OCTA_FULL", "OCTA_ILM_OPL", "OCTA_OPL_BM"};
    layout.labels = {{Task::RV, "GT_RV"}, {Task::FAZ, "GT_FAZ"}, {Task::Capillary, "GT_Capillary"}};
    layout.av_labels = "GT_ArteryVein";
    return layout;
}

void write_tree(const std::filesystem::path& root, const FixtureConfig& cfg,
                const std::vector<std::string>& omit_rv_for) {
    const dataio::DatasetLayout layout = fixture_layout(cfg.fov);
    for (const auto& d : layout.layers) std::filesystem::create_directories(root / d);
    for (const auto& [task, d] : layout.labels) std::filesystem::create_directories(root / d);
    std::filesystem::create_directories(root / *layout.av_labels);

    Rng rng(cfg.seed);
    for (int i = 0; i < cfg.count; ++i) {
        const SyntheticSubject s = make_subject(cfg, rng, subject_id(i));
        const std::string file = s.id + ".png";
        for (std::size_t k = 0; k < s.layers.size(); ++k) {
            Image layer(cfg.size, cfg.size, 1);
            layer.set_channel(0, s.layers[k]);
            io::write_image(root / layout.layers[k] / file, layer);
        }
        if (std::find(omit_rv_for.begin(), omit_rv_for.end(), s.id) == omit_rv_for.end())
            io::write_mask(root / layout.labels.at(Task::RV) / file, s.rv);
        io::write_mask(root / layout.labels.at(Task::FAZ) / file, s.faz);
        io::write_mask(root / layout.labels.at(Task::Capillary) / file, s.capillary);
        io::write_mask(root / *layout.av_labels / file, s.artery_vein, true);
    }
    std::ofstream(root / "layout.json") << layout.to_json_string() << '\n';
}

}  // namespace octasam::fixtures
