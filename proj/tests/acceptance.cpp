// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero on any failure.
// Pass criterion names (or prefixes) as arguments to run a subset.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "octasam/backbone.hpp"
#include "octasam/dataio.hpp"
#include "octasam/fixtures.hpp"
#include "octasam/lora.hpp"
#include "octasam/losses.hpp"
#include "octasam/metrics.hpp"
#include "octasam/optim.hpp"
#include "octasam/promptgen.hpp"
#include "octasam/rle.hpp"
#include "octasam/service.hpp"
#include "octasam/trainer.hpp"
#include "oracles.hpp"

using namespace octasam;
using Grid = Eigen::MatrixXd;
using Clock = std::chrono::steady_clock;

namespace {

struct LrRow {
    int t;
    double interpreted;
    double literal;
};

constexpr LrRow kLrTable[] = {
#include "lr_table.inc"
};

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double distance(PointF a, PointF b) { return std::hypot(a.x - b.x, a.y - b.y); }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Image random_image(Rng& rng, int side) {
    Image img(side, side, 3);
    for (auto& v : img.data()) v = rng.uniform();
    return img;
}

// ---------------------------------------------------------------- losses

Outcome loss_oracle() {
    Rng rng(101);
    const losses::SkeletonConfig sk{3, 3};
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const Grid p = oracle::random_soft(rng, 16, 16);
        // half the pairs use a soft target, half a binary one
        const Grid g = i % 2 ? oracle::random_soft(rng, 16, 16) : oracle::random_binary_soft(rng, 16, 16, 0.3);
        worst = std::max({worst, std::abs(losses::dice_loss(p, g) - oracle::dice_loss(p, g)),
                          std::abs(losses::cl_dice_loss(p, g, sk) - oracle::cl_dice_loss(p, g, 3)),
                          std::abs(losses::combined_loss(p, g, sk) - oracle::combined_loss(p, g, 3))});
    }
    return {worst <= 1e-6, fmt("50 pairs 16x16, max |lib - oracle| = %.3g (tol 1e-6)", worst)};
}

Outcome gradient_checks() {
    Rng rng(202);
    const losses::SkeletonConfig sk{3, 3};
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        const Grid p = oracle::separated_soft(rng, 8, 8);
        const Grid g = oracle::random_binary_soft(rng, 8, 8, 0.4);
        const Grid fd_dice = oracle::finite_difference([&](const Grid& x) { return losses::dice_loss(x, g); }, p);
        const Grid fd_cl = oracle::finite_difference([&](const Grid& x) { return losses::cl_dice_loss(x, g, sk); }, p);
        const Grid fd_comb = oracle::finite_difference([&](const Grid& x) { return losses::combined_loss(x, g, sk); }, p);
        worst = std::max({worst, oracle::relative_error(losses::dice_loss_grad(p, g).grad, fd_dice),
                          oracle::relative_error(losses::cl_dice_loss_grad(p, g, sk).grad, fd_cl),
                          oracle::relative_error(losses::combined_loss_grad(p, g, sk).grad, fd_comb)});
    }
    return {worst <= 1e-3, fmt("10 instances 8x8 (tie-free values), 3 losses, h=1e-4, max relative error = %.3g (tol 1e-3)", worst)};
}

// ---------------------------------------------------------------- metrics

Outcome metric_oracle() {
    long mismatches = 0, pairs = 0, hd_pairs = 0, identity_fail = 0;
    auto check_pair = [&](const Mask& a, const Mask& b) {
        ++pairs;
        const auto c = oracle::count(a, b);
        const double d = metrics::dice_score(a, b);
        const double j = metrics::jaccard_score(a, b);
        if (d != oracle::dice(c) || j != oracle::jaccard(c)) ++mismatches;
        if (c.pred > 0 && c.gt > 0) {
            ++hd_pairs;
            if (metrics::hausdorff(a, b) != oracle::hausdorff(a, b)) ++mismatches;
        }
        // J = D / (2 - D) on integer counts: I / (P+G-I) == (2I/(P+G)) / (2 - 2I/(P+G)),
        // i.e. I * (2(P+G) - 2I) == 2I * (P+G-I) after clearing denominators
        const long s = c.pred + c.gt, u = s - c.inter;
        if (s > 0 && c.inter * (2 * s - 2 * c.inter) != 2 * c.inter * u) ++identity_fail;
        if (s > 0 && (j != static_cast<double>(c.inter) / static_cast<double>(u))) ++identity_fail;
    };

    // every 4x4 mask paired with a shuffled partner, with itself and with its complement
    std::vector<Mask> all;
    all.reserve(1u << 16);
    for (std::uint32_t bits = 0; bits < (1u << 16); ++bits) all.push_back(oracle::mask_from_bits(bits, 4, 4));
    std::vector<std::size_t> partner(all.size());
    std::iota(partner.begin(), partner.end(), std::size_t{0});
    Rng rng(303);
    rng.shuffle(partner);
    for (std::size_t i = 0; i < all.size(); ++i) {
        check_pair(all[i], all[partner[i]]);
        check_pair(all[i], all[i]);
        check_pair(all[i], all[0xFFFFu ^ i]);
    }
    // every joint configuration of a pair of 2x4 masks
    for (std::uint32_t bits = 0; bits < (1u << 16); ++bits)
        check_pair(oracle::mask_from_bits(bits & 0xFFu, 2, 4), oracle::mask_from_bits(bits >> 8, 2, 4));
    const long exhaustive = pairs;
    for (int i = 0; i < 100; ++i)
        check_pair(oracle::random_mask(rng, 32, 32, rng.uniform(0.02, 0.6)), oracle::random_mask(rng, 32, 32, rng.uniform(0.02, 0.6)));
    return {mismatches == 0 && identity_fail == 0,
            fmt("%ld exhaustive pairs (each 4x4 mask vs shuffled partner, itself, complement; all joint 2x4 pairs) + 100 random 32x32, %ld with HD: %ld mismatches, %ld identity failures",
                exhaustive, hd_pairs, mismatches, identity_fail)};
}

// ---------------------------------------------------------------- components

Outcome component_labeling() {
    Rng rng(404);
    long bad = 0;
    auto agrees = [&](const Mask& m) {
        int n = 0;
        const auto want = oracle::flood_fill_labels(m, &n);
        const auto got = promptgen::label_components(m);
        return got.labels == want && static_cast<int>(got.count()) == n;
    };
    for (int i = 0; i < 1000; ++i) {
        const int h = static_cast<int>(rng.uniform_int(1, 64));
        const int w = static_cast<int>(rng.uniform_int(1, 64));
        if (!agrees(oracle::random_mask(rng, h, w, rng.uniform(0.05, 0.7)))) ++bad;
    }
    Mask diag(3, 3);
    diag.at(0, 0) = diag.at(1, 1) = diag.at(2, 2) = 1;
    const bool diagonal = agrees(diag) && promptgen::label_components(diag).count() == 1;
    return {bad == 0 && diagonal, fmt("1000 random masks up to 64x64: %ld disagreements; diagonal touch one component: %s", bad,
                                      diagonal ? "yes" : "no")};
}

// ---------------------------------------------------------------- prompts

struct KeptOracle {
    std::vector<int> labels;  // flood-fill labels
    std::vector<std::size_t> area;
    std::size_t min_area = 0;
    int width = 0;
    bool kept_at(int x, int y) const {
        const int l = labels[static_cast<std::size_t>(y) * width + x];
        return l > 0 && area[static_cast<std::size_t>(l)] >= min_area;
    }
};

KeptOracle kept_oracle(const Mask& m, std::size_t min_area) {
    KeptOracle k;
    int n = 0;
    k.labels = oracle::flood_fill_labels(m, &n);
    k.area.assign(static_cast<std::size_t>(n) + 1, 0);
    for (int l : k.labels)
        if (l) ++k.area[static_cast<std::size_t>(l)];
    k.min_area = min_area;
    k.width = m.width();
    return k;
}

Outcome prompt_properties() {
    Rng rng(505);
    long violations = 0, exact_total_cases = 0, av_cases = 0, local_cases = 0;
    for (int i = 0; i < 1000; ++i) {
        const int h = static_cast<int>(rng.uniform_int(12, 64));
        const int w = static_cast<int>(rng.uniform_int(12, 64));
        const Mask label = oracle::random_mask(rng, h, w, rng.uniform(0.05, 0.45));
        promptgen::PromptConfig cfg;
        cfg.n_pos = static_cast<int>(rng.uniform_int(1, 3));
        cfg.min_area_px = static_cast<int>(rng.uniform_int(1, 8));
        cfg.neighborhood_radius_px = static_cast<int>(rng.uniform_int(1, 10));
        const auto kept = kept_oracle(label, static_cast<std::size_t>(cfg.min_area_px));
        std::size_t positives = 0;
        for (std::size_t l = 1; l < kept.area.size(); ++l)
            if (kept.area[l] >= kept.min_area) positives += std::min<std::size_t>(kept.area[l], static_cast<std::size_t>(cfg.n_pos));
        if (positives == 0) {
            --i;  // nothing survives the area filter; draw again
            continue;
        }
        // the total leaves room for every intended positive, as a valid configuration must
        cfg.n_total = static_cast<int>(positives + static_cast<std::size_t>(rng.uniform_int(0, 15)));

        auto check_polarity = [&](const promptgen::PromptPointSet& s, const Mask* target) {
            for (const auto& p : s.points) {
                if (p.x < 0 || p.y < 0 || p.x >= w || p.y >= h) {
                    ++violations;
                    continue;
                }
                const bool inside = kept.kept_at(p.x, p.y);
                if (p.polarity == 1 && (!inside || (target && target->at(p.y, p.x) == 0))) ++violations;
                if (p.polarity == 0 && inside) ++violations;
            }
        };

        const auto global = promptgen::generate_global(label, cfg, rng);
        check_polarity(global, nullptr);
        if (global.points.size() != static_cast<std::size_t>(cfg.n_total) || global.positives() != positives) ++violations;
        ++exact_total_cases;

        cfg.mode = promptgen::Mode::Local;
        const auto local = promptgen::generate_local(label, cfg, rng);
        if (!local.target_mask) ++violations;
        else check_polarity(local, &*local.target_mask);
        ++local_cases;

        // artery/vein: split the foreground at random into two disjoint vessel masks
        Mask artery(h, w), vein(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (label.at(y, x)) (rng.bernoulli(0.5) ? artery : vein).at(y, x) = 1;
        promptgen::PromptConfig av = cfg;
        av.mode = promptgen::Mode::Global;
        av.min_area_px = 1;
        av.av_opposite_fraction = 1.0;
        if (artery.count_nonzero() > 0 && vein.count_nonzero() > 0) {
            const auto s = promptgen::generate_av(artery, vein, promptgen::VesselClass::Artery, av, rng);
            for (const auto& p : s.points) {
                if (p.polarity == 1 && artery.at(p.y, p.x) == 0) ++violations;
                if (p.polarity == 0 && vein.at(p.y, p.x) == 0) ++violations;
            }
            ++av_cases;
        }
    }
    const bool totals = promptgen::recommend_total(2, 19) == 40 && promptgen::recommend_total(2, 44) == 90 &&
                        promptgen::recommend_total(2, 1) == 5;
    return {violations == 0 && totals,
            fmt("1000 masks: %ld global (exact N_total), %ld local, %ld artery/vein: %ld violations; "
                "recommended totals 19->%d 44->%d 1->%d",
                exact_total_cases, local_cases, av_cases, violations, promptgen::recommend_total(2, 19),
                promptgen::recommend_total(2, 44), promptgen::recommend_total(2, 1))};
}

// ---------------------------------------------------------------- adapters

nn::ModelConfig sized_model(int d, int depth) {
    auto cfg = nn::ModelConfig::tiny(3);
    cfg.encoder.embed_dim = d;
    cfg.encoder.depth = depth;
    cfg.encoder.heads = 2;
    cfg.encoder.input_side = 32;
    cfg.upscale_stages = 1;
    return cfg;
}

Outcome lora_invariants() {
    // neutrality
    nn::SamModel base(nn::ModelConfig::tiny(7)), adapted(nn::ModelConfig::tiny(7));
    lora::LoraConfig lc;
    lc.seed = 9;
    lora::inject(adapted, lc);
    Rng rng(606);
    const auto t = dataio::GeometricTransform::identity(64, 64);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        const Image img = random_image(rng, 64);
        std::vector<promptgen::PromptPoint> pts;
        for (int k = 0, n = static_cast<int>(rng.uniform_int(1, 4)); k < n; ++k)
            pts.push_back({static_cast<int>(rng.uniform_int(0, 63)), static_cast<int>(rng.uniform_int(0, 63)),
                           static_cast<int>(rng.uniform_int(0, 1))});
        const auto a = base.decode_mask(base.encode_image(img), base.encode_prompts(pts, t));
        const auto b = adapted.decode_mask(adapted.encode_image(img), adapted.encode_prompts(pts, t));
        worst = std::max({worst, (a.logits.value() - b.logits.value()).cwiseAbs().maxCoeff(),
                          (a.confidence.value() - b.confidence.value()).cwiseAbs().maxCoeff()});
    }

    // frozen parameters after 100 optimizer steps through the training path
    train::TrainConfig cfg;
    cfg.seed = 4;
    cfg.batch_size = 1;
    auto model = train::build_model(cfg);
    const auto frozen_before = nn::checksum(lora::frozen_parameters(model));
    const auto trainable_before = nn::checksum(lora::trainable_parameters(model));
    train::Trainer trainer(model, cfg);
    const auto samples = fixtures::make_dataset({64, 2, 5});
    Rng step_rng(12);
    for (int s = 0; s < 100; ++s) trainer.train_step({&samples[static_cast<std::size_t>(s % 2)]}, 1e-3, step_rng);
    const bool frozen_same = nn::checksum(lora::frozen_parameters(model)) == frozen_before;
    const bool trained = nn::checksum(lora::trainable_parameters(model)) != trainable_before;
    const long steps = trainer.optimizer().steps();

    // parameter count
    std::string counts;
    bool count_ok = true;
    for (auto [d, r] : std::vector<std::pair<int, int>>{{16, 1}, {32, 4}, {48, 8}}) {
        const int depth = 3;
        nn::SamModel m(sized_model(d, depth));
        lora::LoraConfig c;
        c.rank = r;
        lora::inject(m, c);
        std::int64_t n = 0;
        for (const auto& p : lora::trainable_parameters(m)) n += p.var.value().size();
        const std::int64_t want = std::int64_t{depth} * 2 * 2 * d * r;
        count_ok &= n == want;
        counts += fmt(" (d=%d,r=%d)->%lld/%lld", d, r, static_cast<long long>(n), static_cast<long long>(want));
    }
    return {worst <= 1e-6 && frozen_same && trained && steps == 100 && count_ok,
            fmt("neutrality max dev %.3g on 10 inputs (tol 1e-6); frozen checksum after %ld steps %s, adapters moved %s;",
                worst, steps, frozen_same ? "identical" : "CHANGED", trained ? "yes" : "no") +
                " count" + counts};
}

// ---------------------------------------------------------------- schedule

Outcome lr_schedule() {
    train::ScheduleConfig interp, literal;
    literal.mode = train::ScheduleMode::Literal;
    double worst = 0.0;
    int rows = 0;
    for (const auto& row : kLrTable) {
        worst = std::max({worst, std::abs(train::lr_at_epoch(row.t, interp) - row.interpreted) / row.interpreted,
                          std::abs(train::lr_at_epoch(row.t, literal) - row.literal) / row.literal});
        ++rows;
    }
    const bool warmup = train::lr_at_epoch(5, interp) == 5e-4 && train::lr_at_epoch(10, interp) == 1e-3 &&
                        train::lr_at_epoch(5, literal) == 5e-4 && train::lr_at_epoch(10, literal) == 1e-3;
    return {rows == 60 && worst <= 1e-12 && warmup,
            fmt("%d epochs x 2 modes, max relative error %.3g (tol 1e-12); t=5 and t=10 exact: %s", rows, worst,
                warmup ? "yes" : "no")};
}

// ---------------------------------------------------------------- overfit

train::TrainConfig overfit_config() {
    train::TrainConfig cfg;
    cfg.task = Task::RV;
    cfg.epochs = 200;
    cfg.batch_size = 4;
    cfg.seed = 11;
    cfg.schedule.warmup_epochs = 1;
    cfg.schedule.peak_lr = 3e-3;
    cfg.schedule.floor_lr = 1e-6;
    cfg.schedule.decay = 0.9999;
    cfg.lora.rank = 4;
    cfg.lora.unfreeze_decoder = true;
    return cfg;
}

Outcome overfit_smoke() {
    const auto t0 = Clock::now();
    const auto samples = fixtures::make_dataset({64, 8, 1});
    const auto cfg = overfit_config();
    auto model = train::build_model(cfg);
    train::Trainer trainer(model, cfg);
    double dice = 0.0, loss = 1.0;
    int stopped = 0;
    const auto history = trainer.fit(samples, {}, [&](const train::EpochRecord& r) {
        loss = r.loss;
        if (r.epoch % 10 != 0) return false;
        dice = metrics::aggregate(train::evaluate(model, samples, cfg)).dice.mean;
        std::fprintf(stderr, "  overfit epoch %d: loss %.4f, dice %.4f\n", r.epoch, r.loss, dice);
        stopped = r.epoch;
        return r.loss < 0.15 && dice > 0.85;
    });
    const double elapsed = seconds_since(t0);
    const bool met = loss < 0.15 && dice > 0.85 && stopped <= 200;

    // same seed, fresh model: the first epochs must repeat bit for bit
    auto short_run = [&] {
        auto c = cfg;
        c.epochs = 3;
        auto m = train::build_model(c);
        train::Trainer t(m, c);
        const auto h = t.fit(samples);
        return std::make_pair(h, nn::checksum(m.parameters()));
    };
    const auto [h1, c1] = short_run();
    const auto [h2, c2] = short_run();
    bool deterministic = c1 == c2 && h1.size() == 3 && h2.size() == 3;
    for (std::size_t i = 0; deterministic && i < 3; ++i)
        deterministic = h1[i].loss == h2[i].loss && h1[i].loss == history[i].loss;

    return {met && elapsed < 600.0 && deterministic,
            fmt("8 fixtures 64px, stopped at epoch %d: loss %.4f (< 0.15), dice %.4f (> 0.85), %.0f s (< 600); "
                "repeat runs identical: %s",
                stopped, loss, dice, elapsed, deterministic ? "yes" : "no")};
}

// ---------------------------------------------------------------- crop

Outcome crop_local() {
    Rng rng(808);
    long fraction_bad = 0, roundtrip_bad = 0, boxes = 0;
    double worst = 0.0, worst_euclid = 0.0;
    for (int side : {304, 400}) {
        const Image img(side, side, 1);
        for (int i = 0; i < 200; ++i, ++boxes) {
            const int x0 = static_cast<int>(rng.uniform_int(0, side - 1));
            const int y0 = static_cast<int>(rng.uniform_int(0, side - 1));
            // mix of small and large boxes so every fraction is reached
            const int span = i % 2 ? side : side / 4;
            const BBox b{x0, y0, std::min(side - 1, x0 + static_cast<int>(rng.uniform_int(0, span))),
                         std::min(side - 1, y0 + static_cast<int>(rng.uniform_int(0, span)))};
            if (dataio::crop_fraction(side, b) != oracle::crop_fraction(side, b.width(), b.height())) ++fraction_bad;
            const auto c = dataio::crop_local(img, b);
            for (int k = 0; k < 10; ++k) {
                const PointF p{static_cast<double>(rng.uniform_int(c.left, c.left + c.side - 1)),
                               static_cast<double>(rng.uniform_int(c.top, c.top + c.side - 1))};
                const PointF q = c.transform.apply(p);
                // snap to the resized grid, map back, compare each coordinate
                const PointF back = c.transform.invert({std::round(q.x), std::round(q.y)});
                const double err = std::max(std::abs(back.x - p.x), std::abs(back.y - p.y));
                worst = std::max(worst, err);
                worst_euclid = std::max(worst_euclid, distance(back, p));
                if (err > 0.5) ++roundtrip_bad;
            }
        }
    }
    return {fraction_bad == 0 && roundtrip_bad == 0,
            fmt("%ld boxes in 304/400 px images: %ld fraction mismatches; round trip max per-coordinate error %.3f px "
                "(tol 0.5), euclidean %.3f px",
                boxes, fraction_bad, worst, worst_euclid)};
}

// ---------------------------------------------------------------- service

bool webui_present(const std::filesystem::path& build_dir) {
    std::error_code ec;
    for (auto it = std::filesystem::recursive_directory_iterator(build_dir, ec);
         it != std::filesystem::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) break;
        if (it->path().filename().string().find("webui") != std::string::npos) return true;
    }
    return false;
}

Outcome service_contract() {
    Rng rng(909);
    long rle_bad = 0;
    for (int i = 0; i < 500; ++i) {
        const Mask m = oracle::random_mask(rng, static_cast<int>(rng.uniform_int(1, 64)), static_cast<int>(rng.uniform_int(1, 64)),
                                           rng.uniform());
        if (rle::decode(rle::encode(m)) != m) ++rle_bad;
    }

    auto model = std::make_shared<nn::SamModel>(nn::ModelConfig::tiny(2));
    lora::inject(*model, {});
    service::InferenceService svc(model, {2, 10, Task::RV}, {"tiny", 4, "RV", "acceptance"});
    long differ = 0, requests = 0;
    const auto images = fixtures::make_dataset({48, 5, 3});
    for (const auto& s : images) {
        const auto a = svc.create_session(s.image, Task::RV);
        const auto b = svc.create_session(s.image, Task::RV);
        for (int k = 0; k < 4; ++k) {
            std::vector<promptgen::PromptPoint> pts;
            for (int n = 0, count = static_cast<int>(rng.uniform_int(1, 5)); n < count; ++n)
                pts.push_back({static_cast<int>(rng.uniform_int(0, 47)), static_cast<int>(rng.uniform_int(0, 47)),
                               static_cast<int>(rng.uniform_int(0, 1))});
            const auto first = svc.segment(a, pts).state;
            for (const auto& id : {a, a, b}) {
                ++requests;
                if (!(svc.segment(id, pts).state == first)) ++differ;
            }
        }
    }
    const bool no_webui = !webui_present(OCTASAM_BINARY_DIR);
    return {rle_bad == 0 && differ == 0 && no_webui,
            fmt("RLE round trip on 500 masks: %ld failures; %ld repeated segment requests: %ld differ; no webui in build: %s",
                rle_bad, requests, differ, no_webui ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"loss-oracle", loss_oracle},
        {"gradient-check", gradient_checks},
        {"metric-oracle", metric_oracle},
        {"component-labeling", component_labeling},
        {"prompt-properties", prompt_properties},
        {"lora-invariants", lora_invariants},
        {"lr-schedule", lr_schedule},
        {"overfit-smoke", overfit_smoke},
        {"crop-local", crop_local},
        {"service-contract", service_contract},
    };
    auto selected = [&](const std::string& name) {
        if (argc < 2) return true;
        for (int i = 1; i < argc; ++i)
            if (name.rfind(argv[i], 0) == 0) return true;
        return false;
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        if (!selected(name)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s %-20s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
