#include "holmes/error.hpp"
#include "holmes/netcore.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace holmes;
using namespace holmes::net;

namespace {

Head single_linear(std::size_t n, std::size_t classes) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < classes; ++c) names.push_back("c" + std::to_string(c));
    return Head({n, 1, 1}, {Layer::flatten(), Layer::linear(n, classes)}, names);
}

std::vector<FeatureSample> separable(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<FeatureSample> out;
    for (int i = 0; i < n; ++i) {
        const std::size_t label = static_cast<std::size_t>(i % 2);
        Tensor t({2, 2, 2});
        for (auto& v : t.values()) v = static_cast<float>(rng.normal() * 0.3);
        t[label == 0 ? 0 : 7] += 2.0f;
        out.push_back({label, {t}});
    }
    return out;
}

}  // namespace

TEST_CASE("identity linear layer") {
    Head h = single_linear(3, 3);
    auto& l = h.mutable_layers()[1];
    l.weight = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    l.bias = {0, 0, 0};
    const Tensor x({3, 1, 1}, {0.5f, -2.0f, 7.0f});
    CHECK(head_forward(h, x, Mode::Eval).values() == std::vector<float>{0.5f, -2.0f, 7.0f});
}

TEST_CASE("relu zeros negatives") {
    Head h({4, 1, 1}, {Layer::flatten(), Layer::relu(), Layer::linear(4, 2)}, {"a", "b"});
    h.initialize(1);
    ForwardCache cache;
    head_forward(h, Tensor({4, 1, 1}, {-1.0f, -2.0f, -0.5f, -3.0f}), Mode::Eval, &cache);
    CHECK(cache.inputs[2].values() == std::vector<float>(4, 0.0f));
}

TEST_CASE("forward matches dense oracle") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Head h = testing::random_head(100 + s);
        const Tensor x = testing::random_input(h.input_shape(), 200 + s);
        const Tensor y = head_forward(h, x, Mode::Eval);
        const auto ref = testing::DenseOracle(h, nullptr).forward({x.values().begin(), x.values().end()});
        REQUIRE(ref.size() == y.size());
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y[i] - ref[i]) <= 1e-5 * std::max(1.0, std::abs(ref[i])));
    }
}

TEST_CASE("zero upstream gradient") {
    const Head h = testing::random_head(5);
    ForwardCache cache;
    const Tensor y = head_forward(h, testing::random_input(h.input_shape(), 6), Mode::Train, &cache, {3, 4});
    const auto g = head_backward(h, cache, Tensor({y.size()}));
    for (float v : g.input.values()) CHECK(v == 0.0f);
    for (const auto& w : g.weight)
        for (float v : w) CHECK(v == 0.0f);
}

TEST_CASE("linear input gradient is the transpose product") {
    Head h = single_linear(3, 2);
    h.initialize(8);
    ForwardCache cache;
    head_forward(h, Tensor({3, 1, 1}, {1.0f, 2.0f, 3.0f}), Mode::Eval, &cache);
    const Tensor d({2}, {0.5f, -1.5f});
    const auto g = head_backward(h, cache, d);
    const auto& w = h.layers()[1].weight;
    for (std::size_t i = 0; i < 3; ++i) CHECK(g.input[i] == doctest::Approx(w[i] * 0.5f + w[3 + i] * -1.5f).epsilon(1e-6));
}

TEST_CASE("gradients match central differences") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Head h = testing::random_head(s);
        const auto res = testing::check_gradients(h, testing::random_input(h.input_shape(), 1000 + s), 77 + s);
        CHECK(res.max_rel_error < 1e-3);
        CHECK(res.checked > 10 * res.skipped);
    }
}

TEST_CASE("stale cache is rejected") {
    Head h = testing::random_head(2);
    ForwardCache cache;
    head_forward(h, testing::random_input(h.input_shape(), 1), Mode::Eval, &cache);
    h.mutable_layers();
    CHECK_THROWS_AS(head_backward(h, cache, Tensor({h.num_classes()})), ValidationError);
}

TEST_CASE("softmax cross entropy") {
    auto r = softmax_xent(Tensor({2}, {0.0f, 0.0f}), 0);
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(r.probabilities[0] == doctest::Approx(0.5));

    r = softmax_xent(Tensor({2}, {1000.0f, 0.0f}), 0);
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss < 1e-12);
    CHECK(r.d_logits[0] == doctest::Approx(0.0));

    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
        Tensor z({5});
        for (auto& v : z.values()) v = static_cast<float>(rng.uniform(-30, 30));
        const std::size_t label = rng.below(5);
        long double m = z[0], sum = 0;
        for (float v : z.values()) m = std::max<long double>(m, v);
        for (float v : z.values()) sum += std::exp(static_cast<long double>(v) - m);
        const long double loss = m + std::log(sum) - static_cast<long double>(z[label]);
        const auto got = softmax_xent(z, label);
        CHECK(std::abs(got.loss - static_cast<double>(loss)) < 1e-6);
        for (std::size_t i = 0; i < 5; ++i) {
            const long double p = std::exp(static_cast<long double>(z[i]) - m) / sum;
            CHECK(std::abs(got.probabilities[i] - static_cast<double>(p)) < 1e-6);
        }
    }
}

TEST_CASE("calibrated F1") {
    CHECK(calibrated_f1({{5, 0, 0}, {0, 50, 0}, {0, 0, 1}}) == std::vector<double>{1.0, 1.0, 1.0});

    const auto f = calibrated_f1({{8, 2}, {1, 9}});
    // Rows rescaled to unit mass: tp 0.8 / fp 0.1 / fn 0.2 and tp 0.9 / fp 0.2 / fn 0.1.
    CHECK(f[0] == doctest::Approx(1.6 / 1.9).epsilon(1e-12));
    CHECK(f[1] == doctest::Approx(1.8 / 2.1).epsilon(1e-12));

    const auto scaled = calibrated_f1({{80, 20}, {1, 9}});
    CHECK(scaled[0] == doctest::Approx(f[0]).epsilon(1e-12));
    CHECK(scaled[1] == doctest::Approx(f[1]).epsilon(1e-12));

    CHECK_THROWS_AS(calibrated_f1({{1, 0}, {0, 0}}), ValidationError);
}

TEST_CASE("fit_head on separable features") {
    Head tmpl = Head::classifier({2, 2, 2}, 16, {"a", "b"}, 0.0, 1);
    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.batch = 8;
    cfg.patience = 100;
    cfg.seed = 3;
    TrainHistory hist;
    const Head h = fit_head(tmpl, separable(60, 1), separable(20, 2), cfg, &hist);
    bool perfect = false;
    for (const auto& e : hist.epochs) perfect = perfect || (e.val_accuracy == 1.0 && e.epoch < 100);
    CHECK(perfect);

    TrainHistory again;
    CHECK(fit_head(tmpl, separable(60, 1), separable(20, 2), cfg, &again).same_parameters(h));
}

TEST_CASE("early stopping with zero patience") {
    Head tmpl = Head::classifier({2, 2, 2}, 8, {"a", "b"}, 0.0, 1);
    auto val = separable(20, 2);
    for (auto& s : val) s.label ^= 1;  // validation disagrees with training
    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.patience = 0;
    cfg.seed = 1;
    TrainHistory hist;
    fit_head(tmpl, separable(60, 1), val, cfg, &hist);
    CHECK(hist.stopped_epoch == 2);
    CHECK(hist.best_epoch == 1);
}

TEST_CASE("head save and load") {
    testing::TempDir dir("head");
    Head h = testing::random_head(12);
    save_head(h, dir / "head.json");
    CHECK(load_head(dir / "head.json") == h);
}
