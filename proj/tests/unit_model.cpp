#include <doctest.h>

#include <cmath>
#include <fstream>

#include "octasam/autograd.hpp"
#include "octasam/backbone.hpp"
#include "octasam/errors.hpp"
#include "octasam/fixtures.hpp"
#include "octasam/lora.hpp"
#include "octasam/optim.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace octasam;
using ag::Matrix;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

Image random_image(Rng& rng, int side) {
    Image img(side, side, 3);
    for (auto& v : img.data()) v = rng.uniform();
    return img;
}

// Gradient of f(leaf) by backprop against central differences, norm-wise relative error.
double grad_error(const std::function<ag::Var(const ag::Var&)>& f, const Matrix& x0) {
    auto x = ag::leaf(x0, true);
    ag::backward(f(x));
    const Matrix analytic = x.grad();
    Matrix numeric(x0.rows(), x0.cols());
    Matrix probe = x0;
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < probe.size(); ++i) {
        const double orig = probe.data()[i];
        probe.data()[i] = orig + h;
        const double up = f(ag::constant(probe)).value()(0, 0);
        probe.data()[i] = orig - h;
        const double down = f(ag::constant(probe)).value()(0, 0);
        probe.data()[i] = orig;
        numeric.data()[i] = (up - down) / (2 * h);
    }
    return oracle::relative_error(analytic, numeric);
}

nn::ModelConfig small_model(int d, int depth, std::uint64_t seed = 3) {
    auto cfg = nn::ModelConfig::tiny(seed);
    cfg.encoder.embed_dim = d;
    cfg.encoder.depth = depth;
    cfg.encoder.heads = 2;
    cfg.encoder.input_side = 32;
    cfg.upscale_stages = 1;
    return cfg;
}

double max_abs_diff(const nn::MaskPrediction& a, const nn::MaskPrediction& b) {
    return std::max((a.logits.value() - b.logits.value()).cwiseAbs().maxCoeff(),
                    (a.confidence.value() - b.confidence.value()).cwiseAbs().maxCoeff());
}

}  // namespace

TEST_SUITE("autograd") {
    TEST_CASE("elementary ops backpropagate correctly") {
        Rng rng(1);
        const Matrix w = random_matrix(rng, 4, 3);
        const Matrix row = random_matrix(rng, 1, 3);
        const Matrix other = random_matrix(rng, 5, 3);
        const Matrix x0 = random_matrix(rng, 5, 4);
        const Matrix weights6x4 = random_matrix(rng, 6, 4);
        const Matrix weights5x4 = random_matrix(rng, 5, 4);

        CHECK(grad_error([&](const ag::Var& x) { return ag::sum(ag::matmul(x, ag::constant(w))); }, x0) < 1e-7);
        CHECK(grad_error([&](const ag::Var& x) { return ag::sum(ag::gelu(ag::matmul(x, ag::constant(w)))); }, x0) < 1e-7);
        CHECK(grad_error([&](const ag::Var& x) {
                  return ag::sum(ag::mul(ag::softmax_rows(ag::matmul(x, ag::constant(w))), ag::constant(other)));
              }, x0) < 1e-7);
        CHECK(grad_error([&](const ag::Var& x) {
                  return ag::sum(ag::mul(ag::normalize_rows(x), ag::constant(weights5x4)));
              }, x0) < 1e-6);
        CHECK(grad_error([&](const ag::Var& x) {
                  auto y = ag::add_row(ag::matmul(x, ag::constant(w)), ag::constant(row));
                  return ag::sum(ag::mul(ag::sigmoid(y), ag::mul_row(y, ag::constant(row))));
              }, x0) < 1e-7);
        CHECK(grad_error([&](const ag::Var& x) {
                  const ag::Var cols[] = {ag::slice_cols(x, 0, 1), ag::slice_cols(x, 2, 2)};
                  const ag::Var rows[] = {ag::slice_rows(x, 3, 2), ag::transpose(ag::slice_rows(x, 0, 4))};
                  return ag::add(ag::sum(ag::mul(ag::concat_cols(cols), ag::constant(other))),
                                 ag::sum(ag::mul(ag::concat_rows(rows), ag::constant(weights6x4))));
              }, x0) < 1e-7);
    }

    TEST_CASE("pixel shuffle rearranges and backpropagates") {
        Rng rng(2);
        const Matrix x0 = random_matrix(rng, 4, 8);  // 2x2 grid, 4*2 channels
        const auto y = ag::pixel_shuffle(ag::constant(x0), 2, 2);
        CHECK(y.rows() == 16);
        CHECK(y.cols() == 2);
        const Matrix weights = random_matrix(rng, 16, 2);
        CHECK(grad_error([&](const ag::Var& x) { return ag::sum(ag::mul(ag::pixel_shuffle(x, 2, 2), ag::constant(weights))); },
                         x0) < 1e-7);
    }

    TEST_CASE("no-grad guard skips graph construction") {
        auto x = ag::leaf(Matrix::Ones(2, 2), true);
        {
            ag::NoGradGuard guard;
            CHECK_FALSE(ag::grad_enabled());
            auto y = ag::scale(x, 2.0);
            CHECK(y.node()->parents.empty());
        }
        CHECK(ag::grad_enabled());
    }

    TEST_CASE("gradients accumulate until zeroed") {
        auto x = ag::leaf(Matrix::Ones(1, 1), true);
        ag::backward(ag::scale(x, 3.0));
        ag::backward(ag::scale(x, 3.0));
        CHECK(x.grad()(0, 0) == 6.0);
        x.zero_grad();
        CHECK(x.grad().size() == 0);
    }
}

TEST_SUITE("backbone") {
    TEST_CASE("config validation") {
        auto cfg = nn::ModelConfig::tiny();
        CHECK_NOTHROW(cfg.validate());
        CHECK(cfg.decoder_side() == 64);
        cfg.encoder.input_side = 30;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = nn::ModelConfig::tiny();
        cfg.encoder.heads = 3;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        const auto full = nn::ModelConfig::full();
        CHECK(full.encoder.embed_dim == 1280);
        CHECK(full.encoder.depth == 32);
        CHECK(full.encoder.input_side == 1024);
    }

    TEST_CASE("shapes through encode, prompt and decode") {
        nn::SamModel model(nn::ModelConfig::tiny(1));
        Rng rng(1);
        const auto latent = model.encode_image(random_image(rng, 64));
        CHECK(latent.grid == 16);
        CHECK(latent.tokens.rows() == 256);
        CHECK(latent.tokens.cols() == 32);
        const auto t = dataio::GeometricTransform::identity(64, 64);
        const auto prompt = model.encode_prompts({{3, 4, 1}, {40, 50, 0}}, t);
        CHECK(prompt.count == 2);
        const auto pred = model.decode_mask(latent, prompt);
        CHECK(pred.side == 64);
        CHECK(pred.size() == 3);
        CHECK(pred.masks[0].rows() == 64);
        for (const auto& m : pred.masks) {
            CHECK(m.minCoeff() >= 0.0);
            CHECK(m.maxCoeff() <= 1.0);
        }
        const auto best = nn::select_best(pred);
        CHECK(best.index == nn::best_index(pred.confidences));
        CHECK_THROWS_AS(model.encode_image(random_image(rng, 32)), ShapeError);
    }

    TEST_CASE("empty prompt list uses the no-prompt embedding") {
        nn::SamModel model(nn::ModelConfig::tiny(1));
        const auto p = model.encode_prompts({}, dataio::GeometricTransform::identity(64, 64));
        CHECK(p.no_prompt);
        CHECK(p.count == 0);
        CHECK(p.sparse.rows() == 1);
    }

    TEST_CASE("out-of-bounds points are listed by index") {
        nn::SamModel model(nn::ModelConfig::tiny(1));
        const auto t = dataio::GeometricTransform::identity(64, 64);
        CHECK_THROWS_WITH_AS(model.encode_prompts({{1, 1, 1}, {64, 0, 1}, {-1, 3, 0}}, t),
                             doctest::Contains("indices [1,2]"), DataError);
    }

    TEST_CASE("best index prefers the first of equal confidences") {
        CHECK(nn::best_index({0.2, 0.7, 0.7}) == 1);
        CHECK(nn::best_index({0.9}) == 0);
        CHECK_THROWS_AS(nn::best_index({}), DataError);
    }

    TEST_CASE("same seed gives the same weights, forward passes are pure") {
        nn::SamModel a(nn::ModelConfig::tiny(5)), b(nn::ModelConfig::tiny(5)), c(nn::ModelConfig::tiny(6));
        CHECK(nn::checksum(a.parameters()) == nn::checksum(b.parameters()));
        CHECK(nn::checksum(a.parameters()) != nn::checksum(c.parameters()));
        Rng rng(3);
        const Image img = random_image(rng, 64);
        const auto before = nn::checksum(a.parameters());
        const auto l1 = a.encode_image(img);
        const auto l2 = a.encode_image(img);
        CHECK(l1.tokens.value() == l2.tokens.value());
        CHECK(nn::checksum(a.parameters()) == before);
    }

    TEST_CASE("weights round trip through a file") {
        testing::TempDir dir("weights");
        nn::SamModel a(nn::ModelConfig::tiny(8));
        a.save_weights(dir / "w.bin");
        const auto b = nn::SamModel::load_weights(dir / "w.bin");
        CHECK(nn::checksum(a.parameters()) == nn::checksum(b.parameters()));
        CHECK(b.config().seed == 8);

        // truncation is a parse error
        std::ifstream in(dir / "w.bin", std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        std::ofstream(dir / "cut.bin", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
        CHECK_THROWS_AS(nn::SamModel::load_weights(dir / "cut.bin"), ParseError);
        std::ofstream(dir / "junk.bin", std::ios::binary) << "OCTASAMX";
        CHECK_THROWS_AS(nn::SamModel::load_weights(dir / "junk.bin"), ParseError);
        CHECK_THROWS_AS(nn::SamModel::load_weights(dir / "absent.bin"), ConfigError);
    }
}

TEST_SUITE("lora") {
    TEST_CASE("zero-initialised adapters leave outputs unchanged") {
        nn::SamModel base(nn::ModelConfig::tiny(2)), adapted(nn::ModelConfig::tiny(2));
        lora::LoraConfig cfg;
        cfg.seed = 4;
        lora::inject(adapted, cfg);
        Rng rng(5);
        const auto t = dataio::GeometricTransform::identity(64, 64);
        for (int i = 0; i < 3; ++i) {
            const Image img = random_image(rng, 64);
            const std::vector<promptgen::PromptPoint> pts{{static_cast<int>(rng.uniform_int(0, 63)), 10, 1}};
            const auto a = base.decode_mask(base.encode_image(img), base.encode_prompts(pts, t));
            const auto b = adapted.decode_mask(adapted.encode_image(img), adapted.encode_prompts(pts, t));
            CHECK(max_abs_diff(a, b) <= 1e-6);
        }
    }

    TEST_CASE("fused mode is also neutral at initialisation") {
        nn::SamModel base(nn::ModelConfig::tiny(2)), adapted(nn::ModelConfig::tiny(2));
        lora::LoraConfig cfg;
        cfg.fused_add = true;
        lora::inject(adapted, cfg);
        Rng rng(6);
        const Image img = random_image(rng, 64);
        CHECK((base.encode_image(img).tokens.value() - adapted.encode_image(img).tokens.value()).cwiseAbs().maxCoeff() <=
              1e-12);
    }

    TEST_CASE("trainable parameter count follows depth x targets x (d r + r out)") {
        for (auto [d, r] : std::vector<std::pair<int, int>>{{16, 1}, {32, 4}, {48, 8}}) {
            nn::SamModel model(small_model(d, 3));
            lora::LoraConfig cfg;
            cfg.rank = r;
            const auto state = lora::inject(model, cfg);
            std::int64_t n = 0;
            for (const auto& p : lora::trainable_parameters(model)) n += p.var.value().size();
            CHECK(n == 3LL * 2 * 2 * d * r);
            CHECK(state.parameter_count() == n);
        }
        nn::SamModel model(small_model(16, 2));
        lora::LoraConfig fused;
        fused.rank = 2;
        fused.fused_add = true;
        fused.target_v = false;
        CHECK(lora::inject(model, fused).parameter_count() == 2LL * (16 * 2 + 2 * 48));
    }

    TEST_CASE("injection freezes everything else unless asked") {
        nn::SamModel model(nn::ModelConfig::tiny(1));
        CHECK_FALSE(lora::injected(model));
        CHECK_THROWS_AS(lora::trainable_parameters(model), ConfigError);
        lora::LoraConfig cfg;
        lora::inject(model, cfg);
        CHECK(lora::injected(model));
        for (const auto& p : lora::trainable_parameters(model)) CHECK(p.group == nn::ParamGroup::Adapter);
        cfg.unfreeze_decoder = true;
        lora::inject(model, cfg);
        bool decoder = false;
        for (const auto& p : lora::trainable_parameters(model)) {
            CHECK(p.group != nn::ParamGroup::Encoder);
            decoder |= p.group == nn::ParamGroup::Decoder;
        }
        CHECK(decoder);
        for (const auto& p : lora::frozen_parameters(model)) CHECK_FALSE(p.var.requires_grad());

        cfg.rank = 64;
        CHECK_THROWS_AS(lora::inject(model, cfg), ConfigError);
        cfg.rank = 0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }

    TEST_CASE("optimizer steps move only trainable parameters") {
        nn::SamModel model(nn::ModelConfig::tiny(1));
        lora::inject(model, {});
        const auto frozen = nn::checksum(lora::frozen_parameters(model));
        const auto trainable_before = nn::checksum(lora::trainable_parameters(model));
        optim::AdamW opt(lora::trainable_parameters(model));
        Rng rng(2);
        const Image img = random_image(rng, 64);
        const auto t = dataio::GeometricTransform::identity(64, 64);
        for (int i = 0; i < 3; ++i) {
            opt.zero_grad();
            const auto pred = model.decode_mask(model.encode_image(img), model.encode_prompts({{5, 5, 1}}, t));
            ag::backward(ag::sum(pred.logits));
            opt.step(1e-2);
        }
        CHECK(opt.steps() == 3);
        CHECK(nn::checksum(lora::frozen_parameters(model)) == frozen);
        CHECK(nn::checksum(lora::trainable_parameters(model)) != trainable_before);
    }

    TEST_CASE("adapter checkpoint round trip and failure modes") {
        testing::TempDir dir("adapter");
        lora::LoraConfig cfg;
        cfg.seed = 3;
        nn::SamModel model(nn::ModelConfig::tiny(1));
        lora::inject(model, cfg);
        // move the adapters away from zero so the round trip is meaningful
        for (auto& p : lora::trainable_parameters(model)) p.var.mutable_value().array() += 0.25;
        lora::save_adapter(dir / "a.bin", model, cfg);

        const auto header = lora::read_adapter_header(dir / "a.bin");
        CHECK(header.config.rank == 4);
        CHECK(header.blocks == 4);
        CHECK(header.model.seed == 1);

        nn::SamModel other(nn::ModelConfig::tiny(1));
        lora::inject(other, cfg);
        lora::load_adapter(dir / "a.bin", other);
        CHECK(nn::checksum(lora::trainable_parameters(other)) == nn::checksum(lora::trainable_parameters(model)));

        // rank mismatch names the parameter and both shapes
        nn::SamModel wrong(nn::ModelConfig::tiny(1));
        lora::LoraConfig r8 = cfg;
        r8.rank = 8;
        lora::inject(wrong, r8);
        const auto before = nn::checksum(wrong.parameters());
        CHECK_THROWS_WITH_AS(lora::load_adapter(dir / "a.bin", wrong), doctest::Contains("expected shape 64x8"), ShapeError);
        CHECK(nn::checksum(wrong.parameters()) == before);

        // truncated file leaves the model untouched
        std::ifstream in(dir / "a.bin", std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        std::ofstream(dir / "cut.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 100);
        nn::SamModel target(nn::ModelConfig::tiny(1));
        lora::inject(target, cfg);
        const auto target_before = nn::checksum(target.parameters());
        CHECK_THROWS_AS(lora::load_adapter(dir / "cut.bin", target), ParseError);
        CHECK(nn::checksum(target.parameters()) == target_before);

        std::ofstream(dir / "long.bin", std::ios::binary) << bytes << "x";
        CHECK_THROWS_AS(lora::load_adapter(dir / "long.bin", target), ParseError);
        CHECK(nn::checksum(target.parameters()) == target_before);

        nn::SamModel plain(nn::ModelConfig::tiny(1));
        CHECK_THROWS_AS(lora::load_adapter(dir / "a.bin", plain), ConfigError);
        CHECK_THROWS_AS(lora::save_adapter(dir / "b.bin", plain, cfg), ConfigError);
    }
}

TEST_SUITE("optimizer") {
    TEST_CASE("first AdamW step moves each coordinate by about lr") {
        auto p = ag::leaf(Matrix::Constant(2, 2, 1.0), true);
        optim::AdamW opt({{"p", nn::ParamGroup::Adapter, p}}, {0.9, 0.999, 1e-8, 0.0});
        ag::backward(ag::sum(ag::scale(p, 3.0)));
        opt.step(0.1);
        CHECK(p.value()(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
    }

    TEST_CASE("decoupled weight decay shrinks parameters without gradients' help") {
        auto p = ag::leaf(Matrix::Constant(1, 1, 2.0), true);
        optim::AdamW opt({{"p", nn::ParamGroup::Adapter, p}}, {0.9, 0.999, 1e-8, 0.5});
        p.node()->grad = Matrix::Zero(1, 1);
        opt.step(0.1);
        CHECK(p.value()(0, 0) == doctest::Approx(2.0 * (1 - 0.05)).epsilon(1e-9));
    }

    TEST_CASE("parameters without a gradient are skipped, bad configs rejected") {
        auto p = ag::leaf(Matrix::Constant(1, 1, 2.0), true);
        optim::AdamW opt({{"p", nn::ParamGroup::Adapter, p}});
        opt.step(0.1);
        CHECK(p.value()(0, 0) == 2.0);
        CHECK_THROWS_AS(optim::AdamWConfig({1.0, 0.9, 1e-8, 0}).validate(), ConfigError);
        CHECK_THROWS_AS(optim::AdamWConfig({0.9, 0.9, 0.0, 0}).validate(), ConfigError);
    }
}
