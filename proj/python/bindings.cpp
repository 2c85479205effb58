#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "octasam/dataio.hpp"
#include "octasam/errors.hpp"
#include "octasam/fixtures.hpp"
#include "octasam/lora.hpp"
#include "octasam/losses.hpp"
#include "octasam/metrics.hpp"
#include "octasam/promptgen.hpp"
#include "octasam/rle.hpp"
#include "octasam/service.hpp"
#include "octasam/trainer.hpp"
#include "octasam/version.hpp"

namespace py = pybind11;
using namespace octasam;

namespace {

using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using ImageArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using PointTuple = std::tuple<int, int, int>;

Mask to_mask(const MaskArray& a) {
    if (a.ndim() != 2) throw ShapeError("mask must be a 2-D array");
    Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.data().begin());
    return m;
}

py::array_t<std::uint8_t> from_mask(const Mask& m) {
    py::array_t<std::uint8_t> out({m.height(), m.width()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

// H x W arrays become three identical channels; H x W x C is taken as is.
Image to_image(const ImageArray& a) {
    if (a.ndim() == 2) {
        Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), 1);
        std::copy(a.data(), a.data() + a.size(), img.data().begin());
        return dataio::stack_layers({img.channel(0)});
    }
    if (a.ndim() != 3) throw ShapeError("image must be H x W or H x W x C");
    Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
    std::copy(a.data(), a.data() + a.size(), img.data().begin());
    return img;
}

py::array_t<double> from_image(const Image& img) {
    py::array_t<double> out({img.height(), img.width(), img.channels()});
    std::copy(img.data().begin(), img.data().end(), out.mutable_data());
    return out;
}

std::vector<promptgen::PromptPoint> to_points(const std::vector<PointTuple>& pts) {
    std::vector<promptgen::PromptPoint> out;
    for (const auto& [x, y, p] : pts) out.push_back({x, y, p});
    return out;
}

std::vector<PointTuple> from_points(const std::vector<promptgen::PromptPoint>& pts) {
    std::vector<PointTuple> out;
    for (const auto& p : pts) out.emplace_back(p.x, p.y, p.polarity);
    return out;
}

py::dict sample_dict(const OctaSample& s) {
    py::dict labels;
    for (const auto& [task, mask] : s.labels) labels[py::str(std::string(to_string(task)))] = from_mask(mask);
    py::dict d;
    d["id"] = s.id;
    d["image"] = from_image(s.image);
    d["labels"] = labels;
    return d;
}

// A model together with the configuration it was built and trained with.
struct PyModel {
    train::TrainConfig cfg;
    nn::SamModel model;

    explicit PyModel(const std::string& config_json)
        : cfg(train::TrainConfig::from_json_string(config_json)), model(train::build_model(cfg)) {}
    PyModel(train::TrainConfig c, nn::SamModel m) : cfg(std::move(c)), model(std::move(m)) {}
};

std::vector<OctaSample> fixture_samples(int count, int size, std::uint64_t seed) {
    fixtures::FixtureConfig fc;
    fc.count = count;
    fc.size = size;
    fc.seed = seed;
    return fixtures::make_dataset(fc);
}

}  // namespace

PYBIND11_MODULE(_octasam, m) {
    m.doc() = "Promptable OCTA segmentation with low-rank adapters (native core)";
    m.def("version", [] { return std::string(version()); });

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", error.ptr());
    py::register_exception<ParseError>(m, "ParseError", error.ptr());
    py::register_exception<DataError>(m, "DataError", error.ptr());

    // losses
    m.def("dice_loss", &losses::dice_loss, py::arg("pred"), py::arg("gt"));
    m.def(
        "soft_skeleton", [](const Eigen::MatrixXd& x, int iterations) { return losses::soft_skeleton(x, {iterations, 3}); },
        py::arg("mask"), py::arg("iterations") = 3);
    m.def(
        "cl_dice_loss",
        [](const Eigen::MatrixXd& p, const Eigen::MatrixXd& g, int iterations) { return losses::cl_dice_loss(p, g, {iterations, 3}); },
        py::arg("pred"), py::arg("gt"), py::arg("iterations") = 3);
    m.def(
        "combined_loss",
        [](const Eigen::MatrixXd& p, const Eigen::MatrixXd& g, int iterations, double w_dice, double w_cl) {
            return losses::combined_loss(p, g, {iterations, 3}, {w_dice, w_cl});
        },
        py::arg("pred"), py::arg("gt"), py::arg("iterations") = 3, py::arg("dice_weight") = 0.8, py::arg("cl_dice_weight") = 0.2);
    m.def(
        "combined_loss_grad",
        [](const Eigen::MatrixXd& p, const Eigen::MatrixXd& g, int iterations) {
            const auto v = losses::combined_loss_grad(p, g, {iterations, 3});
            return py::make_tuple(v.value, v.grad);
        },
        py::arg("pred"), py::arg("gt"), py::arg("iterations") = 3, "(value, d value / d pred)");

    // metrics
    m.def("dice_score", [](const MaskArray& p, const MaskArray& g) { return metrics::dice_score(to_mask(p), to_mask(g)); });
    m.def("jaccard_score", [](const MaskArray& p, const MaskArray& g) { return metrics::jaccard_score(to_mask(p), to_mask(g)); });
    m.def("hausdorff", [](const MaskArray& p, const MaskArray& g) { return metrics::hausdorff(to_mask(p), to_mask(g)); });

    // prompts
    m.def(
        "label_components",
        [](const MaskArray& a) {
            const auto cm = promptgen::label_components(to_mask(a));
            py::array_t<int> labels({cm.height, cm.width});
            std::copy(cm.labels.begin(), cm.labels.end(), labels.mutable_data());
            return py::make_tuple(labels, cm.count());
        },
        "(labels, count) with 8-connectivity; ids follow row-major order of first pixels");
    m.def(
        "generate_prompts",
        [](const MaskArray& a, int n_pos, int n_total, const std::string& mode, int min_area, int radius, std::uint64_t seed) {
            promptgen::PromptConfig cfg;
            cfg.n_pos = n_pos;
            cfg.n_total = n_total;
            cfg.mode = promptgen::parse_mode(mode);
            cfg.min_area_px = min_area;
            cfg.neighborhood_radius_px = radius;
            Rng rng(seed);
            const Mask mask = to_mask(a);
            const auto set = cfg.mode == promptgen::Mode::Local ? promptgen::generate_local(mask, cfg, rng)
                                                                : promptgen::generate_global(mask, cfg, rng);
            return py::make_tuple(from_points(set.points), set.notes);
        },
        py::arg("mask"), py::arg("n_pos") = 2, py::arg("n_total") = 5, py::arg("mode") = "global", py::arg("min_area") = 10,
        py::arg("radius") = 10, py::arg("seed") = 0, "([(x, y, polarity)], notes); positives first");
    m.def("recommend_total", py::overload_cast<int, int>(&promptgen::recommend_total), py::arg("n_pos"),
          py::arg("max_component_count"));

    // geometry and encoding
    m.def(
        "crop_fraction",
        [](int width, std::tuple<int, int, int, int> b) {
            const auto [x0, y0, x1, y1] = b;
            return dataio::crop_fraction(width, BBox{x0, y0, x1, y1});
        },
        py::arg("width"), py::arg("bbox"));
    m.def("rle_encode", [](const MaskArray& a) { return rle::encode(to_mask(a)).runs; });
    m.def(
        "rle_decode",
        [](const std::vector<std::uint32_t>& runs, int h, int w) { return from_mask(rle::decode({h, w, runs})); },
        py::arg("runs"), py::arg("height"), py::arg("width"));

    // schedule
    m.def(
        "lr_at_epoch",
        [](int t, const std::string& mode, double peak, double floor, double decay, int warmup) {
            train::ScheduleConfig c;
            c.mode = train::parse_schedule_mode(mode);
            c.peak_lr = peak;
            c.floor_lr = floor;
            c.decay = decay;
            c.warmup_epochs = warmup;
            return train::lr_at_epoch(t, c);
        },
        py::arg("t"), py::arg("mode") = "interpreted", py::arg("peak_lr") = 1e-3, py::arg("floor_lr") = 1e-5,
        py::arg("decay") = 0.98, py::arg("warmup_epochs") = 10);

    // data
    m.def(
        "make_fixtures",
        [](int count, int size, std::uint64_t seed) {
            py::list out;
            for (const auto& s : fixture_samples(count, size, seed)) out.append(sample_dict(s));
            return out;
        },
        py::arg("count") = 8, py::arg("size") = 64, py::arg("seed") = 1);
    m.def("default_config", [] { return train::TrainConfig{}.to_json_string(); });

    // model
    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::string&>(), py::arg("config_json") = "{}",
             "Base model (seeded or from base_weights) with adapters injected")
        .def_static(
            "load",
            [](const std::filesystem::path& adapter, const std::string& base_weights) {
                const auto header = lora::read_adapter_header(adapter);
                train::TrainConfig cfg;
                cfg.model = header.model;
                cfg.lora = header.config;
                return PyModel(cfg, train::load_checkpoint(adapter, base_weights));
            },
            py::arg("adapter"), py::arg("base_weights") = "")
        .def_property_readonly("config_json", [](const PyModel& self) { return self.cfg.to_json_string(); })
        .def_property_readonly("trainable_parameters",
                               [](const PyModel& self) {
                                   std::int64_t n = 0;
                                   for (const auto& p : lora::trainable_parameters(self.model)) n += p.var.value().size();
                                   return n;
                               })
        .def(
            "fit_fixtures",
            [](PyModel& self, int count, int size, std::uint64_t seed) {
                const auto samples = fixture_samples(count, size, seed);
                std::vector<double> losses;
                py::gil_scoped_release release;
                train::Trainer trainer(self.model, self.cfg);
                for (const auto& r : trainer.fit(samples)) losses.push_back(r.loss);
                return losses;
            },
            py::arg("count") = 8, py::arg("size") = 64, py::arg("seed") = 1, "Train on generated subjects; per-epoch losses")
        .def(
            "evaluate_fixtures",
            [](const PyModel& self, int count, int size, std::uint64_t seed) {
                const auto report = metrics::aggregate(train::evaluate(self.model, fixture_samples(count, size, seed), self.cfg));
                py::dict d;
                d["dice"] = report.dice.mean;
                d["jaccard"] = report.jaccard.mean;
                d["hd_px"] = report.hd_px.mean;
                return d;
            },
            py::arg("count") = 8, py::arg("size") = 64, py::arg("seed") = 1)
        .def(
            "predict",
            [](const PyModel& self, const ImageArray& image, const std::vector<PointTuple>& points) {
                const auto pred = train::predict(self.model, to_image(image), to_points(points));
                return py::make_tuple(from_mask(pred.mask), pred.confidence);
            },
            py::arg("image"), py::arg("points"), "(mask, confidence) at the image resolution")
        .def("save_adapter",
             [](const PyModel& self, const std::filesystem::path& path) { lora::save_adapter(path, self.model, self.cfg.lora); });
}
