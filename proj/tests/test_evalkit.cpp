#include "holmes/error.hpp"
#include "holmes/evalkit.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace holmes;
using namespace holmes::eval;

namespace {

sal::Heatmap box_indicator(int w, int h, const BBox& b) {
    sal::Heatmap hm(w, h);
    for (int y = b.y_min; y < b.y_max; ++y)
        for (int x = b.x_min; x < b.x_max; ++x) hm.values[y * w + x] = 1.0f;
    return hm;
}

double trapezoid(const std::vector<double>& y) {
    double s = 0.0;
    const double dx = 1.0 / (y.size() - 1);
    for (std::size_t i = 1; i < y.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * dx;
    return s;
}

// Box pixels are ranked first, so after removing c pixels the stub sees
// max(0, B - c) live pixels out of B.
std::vector<double> box_stub_deletion(int n, int box_pixels, int steps) {
    std::vector<double> y;
    for (int k = 0; k <= steps; ++k) {
        const long c = static_cast<long>(k) * n / steps;
        y.push_back(static_cast<double>(std::max<long>(0, box_pixels - c)) / box_pixels);
    }
    return y;
}

double brute_auc(const std::vector<float>& v, const std::vector<bool>& pos) {
    long twice = 0, pairs = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!pos[i]) continue;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (pos[j]) continue;
            twice += v[i] > v[j] ? 2 : (v[i] == v[j] ? 1 : 0);
            ++pairs;
        }
    }
    return static_cast<double>(twice) / static_cast<double>(2 * pairs);
}

}  // namespace

TEST_CASE("pixel auc") {
    const BBox box{2, 1, 5, 4};
    CHECK(pixel_auc(box_indicator(8, 6, box), {box}) == 1.0);
    CHECK(pixel_auc(sal::Heatmap(8, 6, 0.3f), {box}) == 0.5);

    sal::Heatmap hm(3, 3);
    hm.values = {0.1f, 0.5f, 0.2f, 0.5f, 0.9f, 0.5f, 0.0f, 0.3f, 0.5f};
    // Centre cell 0.9 beats all eight negatives.
    CHECK(pixel_auc(hm, {{1, 1, 2, 2}}) == 1.0);
    // Top-right cell 0.2 beats 0.1 and 0.0, loses to the rest.
    CHECK(pixel_auc(hm, {{2, 0, 3, 1}}) == doctest::Approx(2.0 / 8.0));
    // Cell (1,0) = 0.5 ties three 0.5 cells, beats 0.1, 0.2, 0.0, 0.3, loses to 0.9.
    CHECK(pixel_auc(hm, {{1, 0, 2, 1}}) == doctest::Approx((4 + 1.5) / 8.0));

    Rng rng(11);
    for (int t = 0; t < 50; ++t) {
        const int w = 1 + static_cast<int>(rng.below(8)), h = 2 + static_cast<int>(rng.below(7));
        sal::Heatmap r(w, h);
        for (auto& v : r.values) v = static_cast<float>(rng.below(5)) / 4.0f;
        const int bx = static_cast<int>(rng.below(w)), by = static_cast<int>(rng.below(h - 1));
        const BBox b{bx, by, bx + 1, by + 1};
        std::vector<bool> pos(r.size());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) pos[y * w + x] = b.contains(x, y);
        CHECK(pixel_auc(r, {b}) == brute_auc(r.values, pos));
    }
}

TEST_CASE("trapezoid of a constant") {
    std::vector<double> f, s;
    for (int k = 0; k <= 37; ++k) f.push_back(k / 37.0), s.push_back(0.734);
    CHECK(std::abs(trapezoid_auc(f, s) - 0.734) <= 1e-12);
}

TEST_CASE("pixel order") {
    CHECK(pixel_order({0.2f, 0.9f, 0.2f, 0.5f}) == std::vector<std::size_t>{1, 3, 0, 2});
}

TEST_CASE("box stub curves") {
    const int W = 10, H = 10, steps = 20;
    const BBox box{2, 3, 7, 7};  // 20 pixels
    const testing::BoxCountStub stub(box);
    const Image img = testing::solid_image(W, H);
    const auto hm = box_indicator(W, H, box);
    CurveConfig cfg;
    cfg.steps = steps;

    const auto del = deletion_curve(stub, img, hm, 0, cfg);
    const auto want = box_stub_deletion(W * H, 20, steps);
    REQUIRE(del.scores.size() == want.size());
    for (std::size_t k = 0; k < want.size(); ++k) CHECK(del.scores[k] == doctest::Approx(want[k]).epsilon(1e-12));
    CHECK(del.auc == doctest::Approx(trapezoid(want)).epsilon(1e-12));
    CHECK(del.scores.front() == stub.probabilities(img)[0]);
    CHECK(del.scores.back() == stub.probabilities(Image(W, H, kAblationFill))[0]);

    const auto ins = insertion_curve(stub, img, hm, 0, cfg);
    for (std::size_t k = 0; k < want.size(); ++k) CHECK(ins.scores[k] == doctest::Approx(1.0 - want[k]).epsilon(1e-12));
    CHECK(ins.scores.front() == 0.0);
    CHECK(ins.scores.back() == 1.0);

    const auto pres = preservation_curve(stub, img, hm, 0, cfg);
    CHECK(pres.scores == ins.scores);
    CHECK(pres.scores.back() == stub.probabilities(img)[0]);

    const auto all = all_curves(stub, img, hm, 0, cfg);
    CHECK(all.deletion.scores == del.scores);
    CHECK(all.preservation.scores == pres.scores);
}

TEST_CASE("constant stub curves are flat") {
    const testing::ConstantStub stub(0.37);
    const Image img = testing::noise_image(8, 8, 1);
    const auto hm = box_indicator(8, 8, {0, 0, 3, 3});
    const auto c = all_curves(stub, img, hm, 0);
    CHECK(c.deletion.auc == doctest::Approx(0.37).epsilon(1e-12));
    CHECK(c.insertion.auc == doctest::Approx(0.37).epsilon(1e-12));
    const auto b = random_baseline(stub, img, 0, 4, 9);
    CHECK(b.deletion.auc == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("random superpixel baseline") {
    const auto a = random_superpixel_ranking(32, 32, 8, 5);
    CHECK(a.values == random_superpixel_ranking(32, 32, 8, 5).values);
    CHECK(a.values != random_superpixel_ranking(32, 32, 8, 6).values);
    // Constant within each cell.
    CHECK(a.at(0, 0) == a.at(7, 7));
    CHECK_THROWS_AS(random_superpixel_ranking(30, 32, 8, 1), ValidationError);

    // With cell-aligned steps the expected deletion curve of the box stub is
    // 1 - c/N at every step, so its expected trapezoid area is exactly 0.5.
    const BBox box{8, 8, 24, 16};
    const testing::BoxCountStub stub(box);
    const Image img = testing::solid_image(32, 32);
    CurveConfig cfg;
    cfg.steps = 16;
    double sum = 0.0;
    const int seeds = 1000;
    for (int s = 0; s < seeds; ++s) sum += random_baseline(stub, img, 0, 8, s, cfg).deletion.auc;
    CHECK(std::abs(sum / seeds - 0.5) < 0.02);
}

TEST_CASE("curve ratios") {
    Curve a{{0, 1}, {0.6, 0.6}, 0.6}, b{{0, 1}, {0.3, 0.3}, 0.3}, z{{0, 1}, {0, 0}, 0.0};
    CHECK(curve_ratio(a, a) == 1.0);
    CHECK(curve_ratio(a, b) == doctest::Approx(2.0));
    CHECK_THROWS_AS(curve_ratio(a, z), ValidationError);
}

TEST_CASE("tune percentile") {
    testing::MicroWorld w(2, {"alpha", "beta"}, 0);
    const std::vector<Image> imgs{testing::noise_image(16, 16, 1), testing::noise_image(16, 16, 2)};
    CurveConfig cfg;
    cfg.steps = 8;
    const auto one = tune_percentile(w.pipeline, imgs, 83, 83, explain::ExplainConfig{}, cfg);
    CHECK(one.best_q == 83);
    CHECK(one.rows.size() == 1);

    const auto grid = tune_percentile(w.pipeline, imgs, 75, 80, explain::ExplainConfig{}, cfg, 2);
    REQUIRE(grid.rows.size() == 6);
    double best = -1e9;
    int best_q = 0;
    for (const auto& r : grid.rows) {
        CHECK(r.objective == doctest::Approx(r.insertion - r.deletion + r.preservation));
        if (r.objective > best) best = r.objective, best_q = r.q;
    }
    CHECK(grid.best_q == best_q);
    CHECK_THROWS_AS(tune_percentile(w.pipeline, imgs, 80, 75, explain::ExplainConfig{}, cfg), ValidationError);
}

TEST_CASE("curve svg") {
    Curve a{{0, 0.5, 1}, {1, 0.5, 0}, 0.5};
    const auto svg = curve_svg({{"deletion", &a}}, "t");
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("deletion") != std::string::npos);
}
