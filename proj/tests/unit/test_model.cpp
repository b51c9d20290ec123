#include "maldef/error.hpp"
#include "maldef/model.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <vector>

using namespace maldef;

namespace {

ResizedImage random_image(std::mt19937_64& rng, std::size_t side) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ResizedImage img{side, std::vector<double>(side * side)};
    for (auto& p : img.pixels) p = u(rng);
    return img;
}

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8);
}

// Two-class toy set: bright images vs dark images with noise.
std::vector<LabeledImage> toy_set(std::mt19937_64& rng, std::size_t n, std::size_t side) {
    std::uniform_real_distribution<double> noise(-0.1, 0.1);
    std::vector<LabeledImage> out;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % 2;
        ResizedImage img{side, std::vector<double>(side * side)};
        for (std::size_t p = 0; p < img.pixels.size(); ++p) {
            const bool stripe = (p / side) % 4 < 2;
            img.pixels[p] = std::clamp((label ? (stripe ? 0.8 : 0.6) : (stripe ? 0.2 : 0.4)) + noise(rng), 0.0, 1.0);
        }
        out.push_back({img, label});
    }
    return out;
}

} // namespace

TEST_CASE("architecture and parameter layout") {
    const Classifier m(64, 4, 1);
    CHECK(Classifier::architecture().size() == 11);
    CHECK(Classifier::architecture().front() == "conv3x3(8)");
    CHECK(Classifier::architecture().back() == "softmax");
    CHECK(m.flat_features() == 16 * 16 * 16);
    const std::size_t expect = (8 * 9 + 8) + (16 * 8 * 9 + 16) + (64 * 4096 + 64) + (4 * 64 + 4);
    CHECK(m.parameter_count() == expect);
    const auto& L = m.layout();
    CHECK(L.b4 + 4 == L.total);
    // odd extents floor at each pool
    CHECK(Classifier(10, 2, 1).flat_features() == 16 * 2 * 2);
}

TEST_CASE("constructor preconditions") {
    CHECK_THROWS_AS(Classifier(3, 2, 1), PreconditionError);
    CHECK_THROWS_AS(Classifier(8, 1, 1), PreconditionError);
    CHECK(Classifier(8, 2, 5) == Classifier(8, 2, 5));
    CHECK(!(Classifier(8, 2, 5) == Classifier(8, 2, 6)));
}

TEST_CASE("biases start at zero and weights within the fan-in bound") {
    const Classifier m(16, 3, 9);
    const auto& L = m.layout();
    const auto p = m.parameters();
    for (std::size_t i = L.b1; i < L.w2; ++i) CHECK(p[i] == 0.0);
    for (std::size_t i = L.w2; i < L.b2; ++i) CHECK(std::abs(p[i]) <= std::sqrt(6.0 / 72.0));
}

TEST_CASE("softmax and cross entropy") {
    const std::vector<double> z{1.0, 2.0, 3.0};
    const auto p = softmax(z);
    CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0));
    const std::vector<double> shifted{1001.0, 1002.0, 1003.0};
    const auto q = softmax(shifted);
    for (int i = 0; i < 3; ++i) CHECK(q[i] == doctest::Approx(p[i]).epsilon(1e-12));
    CHECK(cross_entropy(std::vector<double>{0.25, 0.75}, 1) == doctest::Approx(-std::log(0.75)));
    CHECK_THROWS_AS(cross_entropy(p, 3), PreconditionError);
}

TEST_CASE("a zeroed output layer predicts uniformly") {
    Classifier m(16, 4, 2);
    m.zero_output_layer();
    std::mt19937_64 rng(1);
    const auto img = random_image(rng, 16);
    for (double v : m.forward(img)) CHECK(v == doctest::Approx(0.25));
    const std::vector<LabeledImage> batch{{img, 2}};
    CHECK(loss(m, batch) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("forward checks the input shape") {
    const Classifier m(16, 2, 1);
    CHECK_THROWS_AS(m.forward(ResizedImage{8, std::vector<double>(64)}), ShapeError);
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(m.backprop(random_image(rng, 16), 2, {}), PreconditionError);
}

// Central difference at the largest of 1e-3 and finer steps whose probes do not
// change the activation pattern. Returns the step used.
template <typename Set, typename Loss, typename Pattern>
double smooth_difference(double& slot, Set set, Loss loss, Pattern pattern, double& out) {
    const double keep = slot;
    const auto base = pattern();
    for (double h = 1e-3; h >= 1e-7; h /= 10) {
        set(keep + h);
        const auto pu = pattern();
        const double up = loss();
        set(keep - h);
        const auto pd = pattern();
        const double down = loss();
        set(keep);
        if (pu == base && pd == base) {
            out = (up - down) / (2 * h);
            return h;
        }
    }
    out = 0.0;
    return 0.0;
}

TEST_CASE("parameter gradients match central differences") {
    std::mt19937_64 rng(31);
    std::size_t at_full_step = 0;
    for (int model = 0; model < 5; ++model) {
        Classifier m(16, 3, rng());
        const auto img = random_image(rng, 16);
        const std::size_t label = rng() % 3;
        std::vector<double> g(m.parameter_count(), 0.0);
        m.backprop(img, label, g);
        const auto& L = m.layout();
        const std::size_t bounds[] = {L.w1, L.b1, L.w2, L.b2, L.w3, L.b3, L.w4, L.b4, L.total};
        for (int c = 0; c < 20; ++c) {
            const std::size_t block = rng() % 8;
            const std::size_t i = bounds[block] + rng() % (bounds[block + 1] - bounds[block]);
            double numeric = 0.0;
            const double h = smooth_difference(
                m.parameters()[i], [&](double v) { m.parameters()[i] = v; },
                [&] { return m.backprop(img, label, {}); }, [&] { return m.activation_pattern(img); }, numeric);
            REQUIRE(h > 0.0);
            at_full_step += h == 1e-3;
            CHECK(relative_error(g[i], numeric) <= 1e-3);
        }
    }
    CHECK(at_full_step >= 80);
}

TEST_CASE("input gradients match central differences") {
    std::mt19937_64 rng(32);
    std::size_t at_full_step = 0;
    for (int model = 0; model < 5; ++model) {
        const Classifier m(16, 3, rng());
        auto img = random_image(rng, 16);
        const std::size_t label = rng() % 3;
        std::vector<double> grad;
        m.backprop(img, label, {}, &grad);
        REQUIRE(grad.size() == 256);
        for (int c = 0; c < 20; ++c) {
            const std::size_t i = rng() % 256;
            double numeric = 0.0;
            const double h = smooth_difference(
                img.pixels[i], [&](double v) { img.pixels[i] = v; }, [&] { return m.backprop(img, label, {}); },
                [&] { return m.activation_pattern(img); }, numeric);
            REQUIRE(h > 0.0);
            at_full_step += h == 1e-3;
            CHECK(relative_error(grad[i], numeric) <= 1e-3);
        }
    }
    CHECK(at_full_step >= 80);
}

TEST_CASE("activation pattern moves only across a kink") {
    Classifier m(8, 2, 5);
    std::mt19937_64 rng(2);
    const auto img = random_image(rng, 8);
    const auto base = m.activation_pattern(img);
    CHECK(base == m.activation_pattern(img));
    // pushing every first-layer bias far negative switches all first-layer units off
    for (std::size_t i = m.layout().b1; i < m.layout().w2; ++i) m.parameters()[i] = -100.0;
    CHECK(m.activation_pattern(img) != base);
}

TEST_CASE("step decay schedule") {
    TrainConfig cfg;
    CHECK(cfg.learning_rate_at(0) == 0.1);
    CHECK(cfg.learning_rate_at(4) == 0.1);
    CHECK(cfg.learning_rate_at(5) == doctest::Approx(0.06));
    CHECK(cfg.learning_rate_at(12) == doctest::Approx(0.1 * 0.36));
    CHECK(TrainConfig::desk_scale().epochs == 30);
    CHECK(cfg.epochs == 100);
    CHECK(cfg.clip_norm == 0.0);
    CHECK(TrainConfig::desk_scale().clip_norm == 5.0);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ManifestError);
    cfg = {};
    cfg.clip_norm = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ManifestError);
}

TEST_CASE("gradient clipping bounds one step") {
    std::mt19937_64 rng(41);
    const auto tr = toy_set(rng, 16, 8);
    const Classifier init(8, 2, 9);
    std::vector<double> g(init.parameter_count(), 0.0);
    for (const auto& ex : tr) init.backprop(ex.image, ex.label, g);
    double grad_norm = 0.0;
    for (double v : g) grad_norm += (v / 16) * (v / 16);
    grad_norm = std::sqrt(grad_norm);
    REQUIRE(grad_norm > 1e-2);

    // one full-batch step; a single epoch always returns the stepped model
    auto step_norm = [&](double clip) {
        TrainConfig cfg;
        cfg.epochs = 1;
        cfg.batch_size = 16;
        cfg.clip_norm = clip;
        const auto after = train(init, tr, tr, cfg).model;
        double s = 0.0;
        for (std::size_t i = 0; i < init.parameter_count(); ++i) {
            const double d = after.parameters()[i] - init.parameters()[i];
            s += d * d;
        }
        return std::sqrt(s);
    };
    CHECK(step_norm(0.0) == doctest::Approx(0.1 * grad_norm).epsilon(1e-9));
    CHECK(step_norm(1e-2) == doctest::Approx(0.1 * 1e-2).epsilon(1e-9));
    CHECK(step_norm(1e6) == doctest::Approx(0.1 * grad_norm).epsilon(1e-9));
}

TEST_CASE("training learns a separable toy set and is deterministic") {
    std::mt19937_64 rng(40);
    const auto tr = toy_set(rng, 64, 8);
    const auto va = toy_set(rng, 32, 8);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 8;
    cfg.seed = 3;
    const Classifier init(8, 2, 4);
    const auto a = train(init, tr, va, cfg);
    CHECK(a.history.size() == 8);
    CHECK(accuracy(a.model, va) >= 0.95);
    CHECK(a.history[a.best_epoch].validation_accuracy == accuracy(a.model, va));
    for (const auto& e : a.history)
        if (e.epoch < a.best_epoch) CHECK(e.validation_accuracy < a.history[a.best_epoch].validation_accuracy);
    const auto b = train(init, tr, va, cfg);
    CHECK(a.model == b.model);
    CHECK(a.history.back().train_loss == b.history.back().train_loss);
}

TEST_CASE("non-finite training aborts with the epoch") {
    std::mt19937_64 rng(41);
    const auto tr = toy_set(rng, 8, 8);
    Classifier init(8, 2, 1);
    init.parameters()[init.layout().b4] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg;
    cfg.epochs = 2;
    try {
        train(init, tr, tr, cfg);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(e.epoch() == 0);
    }
    CHECK_THROWS_AS(train(Classifier(8, 2, 1), {}, tr, cfg), PreconditionError);
}

TEST_CASE("input gradient signs cover every byte") {
    const Classifier m(16, 2, 7);
    std::vector<std::uint8_t> x(700);
    std::mt19937_64 rng(2);
    for (auto& b : x) b = static_cast<std::uint8_t>(rng());
    const auto g = input_gradient(m, x, 1);
    CHECK(g.sign.size() == 700);
    CHECK(g.pixel_gradient.size() == 256);
    std::size_t nonzero = 0;
    for (auto s : g.sign) nonzero += s != 0;
    CHECK(nonzero > 0);

    Classifier flat(16, 2, 7);
    flat.zero_output_layer();
    for (auto s : input_gradient(flat, x, 1).sign) CHECK(s == 0);
    CHECK_THROWS_AS(input_gradient(m, {}, 0), PreconditionError);
}

TEST_CASE("checkpoint round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "maldef_ckpt_test";
    std::filesystem::create_directories(dir);
    Checkpoint ck{"P+OM", Classifier(16, 3, 12), {{0, 0.1, 1.5, 0.5}, {1, 0.1, 0.75, 0.625}}, {"a", "b", "c"},
                  PreprocessConfig{1.0, 256, true}};
    save_checkpoint(dir / "m.json", ck);
    const auto back = load_checkpoint(dir / "m.json");
    CHECK(back.tag == "P+OM");
    CHECK(back.model == ck.model);
    CHECK(back.class_names == ck.class_names);
    REQUIRE(back.preprocess.has_value());
    CHECK(back.preprocess->chunk_length == 256);
    REQUIRE(back.history.size() == 2);
    CHECK(back.history[1].validation_accuracy == 0.625);

    std::ofstream(dir / "bad.json") << R"({"format": "something-else", "version": 1})";
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), Error);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), Error);
    std::filesystem::remove_all(dir);
}
