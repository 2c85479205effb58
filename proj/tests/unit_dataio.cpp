#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "octasam/dataio.hpp"
#include "octasam/errors.hpp"
#include "octasam/fixtures.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace octasam;
using namespace octasam::dataio;

namespace {

Image random_image(Rng& rng, int h, int w) {
    Image img(h, w, 3);
    for (auto& v : img.data()) v = rng.uniform();
    return img;
}

Eigen::MatrixXd constant_layer(int h, int w, double v) { return Eigen::MatrixXd::Constant(h, w, v); }

double distance(PointF a, PointF b) { return std::hypot(a.x - b.x, a.y - b.y); }

OctaSample labelled_sample(Rng& rng, int h, int w) {
    OctaSample s;
    s.id = "s";
    s.image = random_image(rng, h, w);
    s.labels[Task::RV] = oracle::random_mask(rng, h, w, 0.3);
    Mask av(h, w);
    for (auto& v : av.data()) v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
    s.labels[Task::Artery] = av;  // a class-valued mask exercises value closure
    return s;
}

}  // namespace

TEST_SUITE("rng") {
    TEST_CASE("same seed gives the same stream") {
        Rng a(42), b(42), c(43);
        for (int i = 0; i < 100; ++i) {
            const auto x = a.next_u64();
            CHECK(x == b.next_u64());
            (void)c.next_u64();
        }
        CHECK(Rng(42).next_u64() != Rng(43).next_u64());
    }

    TEST_CASE("uniform_int stays within bounds and hits both ends") {
        Rng rng(1);
        std::set<std::int64_t> seen;
        for (int i = 0; i < 2000; ++i) {
            const auto v = rng.uniform_int(-3, 3);
            CHECK(v >= -3);
            CHECK(v <= 3);
            seen.insert(v);
        }
        CHECK(seen.size() == 7);
    }

    TEST_CASE("sampling without replacement yields distinct indices") {
        Rng rng(9);
        for (std::size_t n : {1u, 5u, 40u}) {
            const auto picks = rng.sample_without_replacement(n, n / 2 + 1);
            std::set<std::size_t> uniq(picks.begin(), picks.end());
            CHECK(uniq.size() == picks.size());
            for (auto p : picks) CHECK(p < n);
        }
        CHECK(rng.sample_without_replacement(3, 10).size() == 3);
    }
}

TEST_SUITE("dataio") {
    TEST_CASE("task and fov names") {
        CHECK(parse_task("rv") == Task::RV);
        CHECK(parse_task("Capillary") == Task::Capillary);
        CHECK(to_string(Task::FAZ) == "FAZ");
        CHECK_THROWS_AS(parse_task("lesion"), ConfigError);
        CHECK(parse_fov("3M") == Fov::M3);
        CHECK(parse_fov("6M") == Fov::M6);
        CHECK(is_tubular(Task::Vein));
        CHECK_FALSE(is_tubular(Task::FAZ));
    }

    TEST_CASE("sample validation") {
        Rng rng(1);
        OctaSample s = labelled_sample(rng, 8, 8);
        s.labels.erase(Task::Artery);
        CHECK_NOTHROW(s.validate());
        s.labels[Task::FAZ] = Mask(8, 9);
        CHECK_THROWS_AS(s.validate(), ShapeError);
        s.labels.erase(Task::FAZ);
        s.image.at(0, 0, 0) = 1.5;
        CHECK_THROWS_AS(s.validate(), DataError);
    }

    TEST_CASE("stacking layers") {
        const auto l1 = constant_layer(4, 5, 0.1), l2 = constant_layer(4, 5, 0.2), l3 = constant_layer(4, 5, 0.3);
        auto channels = [](const Image& img) {
            return std::vector<double>{img.at(0, 0, 0), img.at(0, 0, 1), img.at(0, 0, 2)};
        };
        CHECK(channels(stack_layers({l1, l2, l3})) == std::vector<double>{0.1, 0.2, 0.3});
        CHECK(channels(stack_layers({l1})) == std::vector<double>{0.1, 0.1, 0.1});
        CHECK(channels(stack_layers({l1, l2})) == std::vector<double>{0.1, 0.2, 0.2});
        CHECK(channels(stack_layers({l1, l2, l3}, {{2, 0}})) == std::vector<double>{0.3, 0.1, 0.1});
        CHECK_THROWS_AS(stack_layers({}), DataError);
        CHECK_THROWS_AS(stack_layers({l1, constant_layer(5, 5, 0.0)}), ShapeError);
        CHECK_THROWS_AS(stack_layers({l1}, {{3}}), ConfigError);
    }

    TEST_CASE("resize and pad examples") {
        Rng rng(4);
        const auto a = resize_and_pad(Image(304, 304, 3, 0.5), 1024);
        CHECK(a.transform.scale == doctest::Approx(1024.0 / 304.0));
        CHECK(a.image.height() == 1024);
        CHECK(a.image.width() == 1024);
        CHECK(a.image.at(1023, 1023, 0) == doctest::Approx(0.5));  // no padding

        const Image big = random_image(rng, 16, 16);
        const auto id = resize_and_pad(big, 16);
        CHECK(id.transform.is_identity());
        CHECK(id.image == big);

        const auto b = resize_and_pad(Image(400, 200, 3, 1.0), 1024);
        CHECK(b.transform.scale == doctest::Approx(2.56));
        // the 200 columns become 512: the right 512 columns are padding
        CHECK(b.image.at(500, 511, 0) == doctest::Approx(1.0));
        CHECK(b.image.at(500, 512, 0) == 0.0);
        CHECK(b.image.at(1023, 0, 0) == doctest::Approx(1.0));
        CHECK_THROWS_AS(resize_and_pad(Image(), 1024), ShapeError);
    }

    TEST_CASE("every transform round-trips in-bounds coordinates") {
        Rng rng(5);
        std::vector<GeometricTransform> ts{
            GeometricTransform::identity(30, 40),
            GeometricTransform::hflip(30, 40),
            GeometricTransform::rotation(30, 40, 7.5),
            GeometricTransform::rotation(30, 40, -10.0),
            resize_and_pad(Image(30, 40, 3), 64).transform,
            GeometricTransform::hflip(30, 40).then(GeometricTransform::rotation(30, 40, 3.0)),
        };
        for (const auto& t : ts)
            for (int i = 0; i < 200; ++i) {
                const PointF p{rng.uniform(0, 39), rng.uniform(0, 29)};
                CHECK(distance(t.invert(t.apply(p)), p) <= 0.5);
                CHECK(distance(t.invert(t.apply(p)), p) <= 1e-9);
            }
    }

    TEST_CASE("hflip moves (x, y) to (W-1-x, y)") {
        const auto t = GeometricTransform::hflip(6, 9);
        const PointF q = t.apply({2, 4});
        CHECK(q.x == 6.0);
        CHECK(q.y == 4.0);
        Mask m(6, 9);
        m.at(4, 2) = 1;
        CHECK(warp_mask(m, t).at(4, 6) == 1);
        CHECK(warp_mask(m, t).count_nonzero() == 1);
    }

    TEST_CASE("augment: disabled is identity, flip is applied to image and every mask") {
        Rng data(7);
        const OctaSample s = labelled_sample(data, 12, 10);
        Rng rng(1);
        const auto none = augment(s, rng, {});
        CHECK(none.transform.is_identity());
        CHECK(none.sample.image == s.image);
        CHECK(none.sample.labels == s.labels);

        AugmentConfig flip;
        flip.hflip = true;
        flip.hflip_p = 1.0;
        const auto f = augment(s, rng, flip);
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 10; ++x) {
                CHECK(f.sample.image.at(y, 9 - x, 1) == doctest::Approx(s.image.at(y, x, 1)));
                for (const auto& [task, m] : s.labels) CHECK(f.sample.labels.at(task).at(y, 9 - x) == m.at(y, x));
            }
    }

    TEST_CASE("augment is deterministic under a seed and preserves mask value sets") {
        Rng data(8);
        const OctaSample s = labelled_sample(data, 20, 24);
        Rng a(7), b(7);
        const auto x = augment(s, a, AugmentConfig::all_enabled());
        const auto y = augment(s, b, AugmentConfig::all_enabled());
        CHECK(x.sample.image == y.sample.image);
        CHECK(x.sample.labels == y.sample.labels);

        Rng rng(3);
        for (int i = 0; i < 20; ++i) {
            const auto out = augment(s, rng, AugmentConfig::all_enabled());
            CHECK(std::abs(out.transform.rotation_deg) <= 10.0);
            CHECK(out.sample.labels.at(Task::RV).max_value() <= 1);
            CHECK(out.sample.labels.at(Task::Artery).max_value() <= 2);
            CHECK(out.sample.image.all_finite_in_unit_range());
        }
    }

    TEST_CASE("nearest-neighbour resize keeps the value set") {
        Rng rng(6);
        Mask m(37, 23);
        for (auto& v : m.data()) v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
        const auto t = resize_and_pad(Image(37, 23, 3), 100).transform;
        const Mask out = warp_mask(m, t);
        for (auto v : out.data()) CHECK(v <= 2);
        std::set<int> before(m.data().begin(), m.data().end()), after(out.data().begin(), out.data().end());
        CHECK(before == after);
    }

    TEST_CASE("k-fold partitions") {
        auto ids = [](int n) {
            std::vector<std::string> v;
            for (int i = 0; i < n; ++i) v.push_back("id" + std::to_string(i));
            return v;
        };
        for (auto [n, k] : std::vector<std::pair<int, int>>{{500, 10}, {10, 10}, {39, 10}, {7, 2}}) {
            const auto folds = kfold_split(ids(n), k, 3);
            REQUIRE(folds.size() == static_cast<std::size_t>(k));
            std::multiset<std::string> all;
            std::size_t lo = n, hi = 0;
            for (const auto& f : folds) {
                all.insert(f.val_ids.begin(), f.val_ids.end());
                lo = std::min(lo, f.val_ids.size());
                hi = std::max(hi, f.val_ids.size());
                CHECK(f.train_ids.size() + f.val_ids.size() == static_cast<std::size_t>(n));
                for (const auto& v : f.val_ids)
                    CHECK(std::find(f.train_ids.begin(), f.train_ids.end(), v) == f.train_ids.end());
            }
            CHECK(all.size() == static_cast<std::size_t>(n));
            CHECK(std::set<std::string>(all.begin(), all.end()).size() == static_cast<std::size_t>(n));
            CHECK(hi - lo <= 1);
        }
        const auto f39 = kfold_split(ids(39), 10, 0);
        int fours = 0, threes = 0;
        for (const auto& f : f39) (f.val_ids.size() == 4 ? fours : threes) += 1;
        CHECK(fours == 9);
        CHECK(threes == 1);
        for (const auto& f : kfold_split(ids(500), 10, 1)) CHECK(f.val_ids.size() == 50);
        CHECK(kfold_split(ids(20), 4, 9)[2].val_ids == kfold_split(ids(20), 4, 9)[2].val_ids);
        CHECK_THROWS_AS(kfold_split(ids(5), 6, 0), ConfigError);
        CHECK_THROWS_AS(kfold_split(ids(5), 1, 0), ConfigError);
    }

    TEST_CASE("crop fraction examples and minimality") {
        CHECK(crop_fraction(400, {0, 0, 89, 59}) == 0.25);
        CHECK(crop_fraction(400, {10, 10, 259, 39}) == 0.75);
        CHECK(crop_fraction(400, {0, 0, 399, 399}) == 1.0);
        CHECK(crop_fraction(400, {0, 0, 100, 0}) == 0.5);  // 101 px needs more than a quarter

        Rng rng(12);
        for (int i = 0; i < 300; ++i) {
            const int w = i % 2 ? 304 : 400;
            const int x0 = static_cast<int>(rng.uniform_int(0, w - 1)), y0 = static_cast<int>(rng.uniform_int(0, w - 1));
            const BBox b{x0, y0, static_cast<int>(rng.uniform_int(x0, w - 1)), static_cast<int>(rng.uniform_int(y0, w - 1))};
            const double f = crop_fraction(w, b);
            CHECK(f == oracle::crop_fraction(w, b.width(), b.height()));
            if (f > 0.25) CHECK((f - 0.25) * w < std::max(b.width(), b.height()));
        }
    }

    TEST_CASE("crop_local examples") {
        Rng rng(2);
        const Image img = random_image(rng, 40, 40);
        const auto whole = crop_local(img, {0, 0, 39, 39});
        CHECK(whole.fraction == 1.0);
        CHECK(whole.image == img);

        const auto c = crop_local(img, {14, 16, 21, 21});  // 8x6 box -> a quarter, side 10
        CHECK(c.fraction == 0.25);
        CHECK(c.side == 10);
        CHECK(c.image.height() == 40);
        CHECK(c.image.width() == 40);
        // the crop contains the bbox
        CHECK(c.left <= 14);
        CHECK(c.left + c.side - 1 >= 21);
        CHECK(c.top <= 16);
        CHECK(c.top + c.side - 1 >= 21);

        // clamped at the border
        const auto edge = crop_local(img, {0, 0, 3, 3});
        CHECK(edge.left == 0);
        CHECK(edge.top == 0);
        const auto far = crop_local(img, {36, 36, 39, 39});
        CHECK(far.left == 30);
        CHECK(far.top == 30);
    }

    TEST_CASE("crop transform round-trips within half a pixel") {
        Rng rng(13);
        for (int side : {304, 400}) {
            const Image img(side, side, 3);
            for (int i = 0; i < 50; ++i) {
                const int x0 = static_cast<int>(rng.uniform_int(0, side - 20));
                const int y0 = static_cast<int>(rng.uniform_int(0, side - 20));
                const BBox b{x0, y0, x0 + static_cast<int>(rng.uniform_int(0, 19)), y0 + static_cast<int>(rng.uniform_int(0, 19))};
                const auto c = crop_local(img, b);
                for (int k = 0; k < 20; ++k) {
                    const PointF p{static_cast<double>(rng.uniform_int(c.left, c.left + c.side - 1)),
                                   static_cast<double>(rng.uniform_int(c.top, c.top + c.side - 1))};
                    const PointF q = c.transform.apply(p);
                    const PointF snapped{std::round(q.x), std::round(q.y)};
                    CHECK(distance(c.transform.invert(snapped), p) <= 0.5);
                    CHECK(distance(c.transform.invert(q), p) <= 1e-9);
                }
            }
        }
    }

    TEST_CASE("sampling matrix interpolates and clamps") {
        const auto m = sampling_matrix({-1.0, 0.0, 0.25, 2.0, 9.0}, 3);
        CHECK(m(0, 0) == 1.0);
        CHECK(m(1, 0) == 1.0);
        CHECK(m(2, 0) == 0.75);
        CHECK(m(2, 1) == 0.25);
        CHECK(m(3, 2) == 1.0);
        CHECK(m(4, 2) == 1.0);
        for (int r = 0; r < 5; ++r) CHECK(m.row(r).sum() == doctest::Approx(1.0));
    }

    TEST_CASE("layout descriptor round trip and validation") {
        const auto layout = fixtures::fixture_layout(Fov::M6);
        const auto back = DatasetLayout::from_json_string(layout.to_json_string());
        CHECK(back.layers == layout.layers);
        CHECK(back.labels == layout.labels);
        CHECK(back.av_labels == layout.av_labels);
        CHECK(back.fov == Fov::M6);
        CHECK_THROWS_AS(DatasetLayout::from_json_string("{"), ConfigError);
        CHECK_THROWS_AS(DatasetLayout::from_json_string(R"({"name":"x","layers":[]})"), ConfigError);
        CHECK_THROWS_AS(DatasetLayout::from_json_file("/nonexistent/layout.json"), ConfigError);
    }
}

TEST_SUITE("dataset loading") {
    TEST_CASE("missing root is a configuration error, empty root warns") {
        testing::TempDir dir("empty");
        testing::LogCapture logs;
        CHECK_THROWS_AS(load_dataset(dir / "absent", fixtures::fixture_layout(Fov::M3)), ConfigError);
        const auto r = load_dataset(dir.path(), fixtures::fixture_layout(Fov::M3));
        CHECK(r.samples.empty());
        CHECK_FALSE(r.warnings.empty());
        CHECK(logs.contains("no samples"));
    }

    TEST_CASE("fixture tree with a missing label is reported, not dropped") {
        testing::TempDir dir("missing");
        testing::LogCapture logs;
        fixtures::FixtureConfig cfg;
        cfg.count = 4;
        cfg.size = 32;
        fixtures::write_tree(dir.path(), cfg, {"10002"});
        const auto layout = DatasetLayout::from_json_file(dir / "layout.json");
        const auto r = load_dataset(dir.path(), layout);
        REQUIRE(r.samples.size() == 4);
        REQUIRE(r.missing_labels.size() == 1);
        CHECK(r.missing_labels[0].id == "10002");
        CHECK(r.missing_labels[0].task == Task::RV);
        CHECK(r.failures.empty());
        CHECK_FALSE(r.samples[1].has_label(Task::RV));
        CHECK(r.samples[0].id < r.samples[1].id);

        // the loaded rasters reproduce the in-memory fixtures
        const auto mem = fixtures::make_dataset(cfg);
        for (std::size_t i = 0; i < 4; ++i) {
            const auto& s = r.samples[i];
            CHECK(s.id == mem[i].id);
            CHECK(s.image.height() == 32);
            CHECK(s.label(Task::FAZ) == mem[i].label(Task::FAZ));
            CHECK(s.label(Task::Artery) == mem[i].label(Task::Artery));
            CHECK(s.label(Task::Vein) == mem[i].label(Task::Vein));
            CHECK_NOTHROW(s.validate());
        }
    }

    TEST_CASE("label with the wrong shape fails that sample and names the file") {
        testing::TempDir dir("shape");
        testing::LogCapture logs;
        fixtures::FixtureConfig cfg;
        cfg.count = 3;
        cfg.size = 24;
        fixtures::write_tree(dir.path(), cfg);
        io::write_mask(dir / "GT_FAZ/10003.png", Mask(10, 10));
        const auto r = load_dataset(dir.path(), fixtures::fixture_layout(Fov::M3));
        CHECK(r.samples.size() == 2);
        REQUIRE(r.failures.size() == 1);
        CHECK(r.failures[0].id == "10003");
        CHECK(r.failures[0].file.filename() == "10003.png");
        CHECK(r.failures[0].message.find("shape") != std::string::npos);
    }

    TEST_CASE("a 3M-shaped tree of 200 subjects loads at 304 x 304") {
        testing::TempDir dir("octa500");
        testing::LogCapture logs;
        fixtures::FixtureConfig cfg;
        cfg.count = 200;
        cfg.size = 304;
        fixtures::write_tree(dir.path(), cfg);
        const auto r = load_dataset(dir.path(), fixtures::fixture_layout(Fov::M3));
        REQUIRE(r.samples.size() == 200);
        for (const auto& s : r.samples) {
            CHECK(s.image.height() == 304);
            CHECK(s.image.width() == 304);
            CHECK(s.fov == Fov::M3);
        }
    }

    TEST_CASE("raster io round trip") {
        testing::TempDir dir("io");
        Rng rng(1);
        const Mask m = oracle::random_mask(rng, 9, 7, 0.5);
        io::write_mask(dir / "m.png", m);
        CHECK(io::read_mask(dir / "m.png") == m);
        Mask av(5, 5);
        av.at(1, 1) = 1;
        av.at(2, 3) = 2;
        io::write_mask(dir / "av.png", av, true);
        CHECK(io::read_mask(dir / "av.png", true) == av);
        CHECK_THROWS_AS(io::decode_image("not an image"), ParseError);
        const Image decoded = io::decode_image(io::encode_png(m));
        CHECK(decoded.height() == 9);
        CHECK(decoded.at(0, 0, 0) == (m.at(0, 0) ? 1.0 : 0.0));
    }
}
