#include "holmes/error.hpp"
#include "holmes/saliency.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace holmes;
using namespace holmes::sal;
using namespace holmes::net;

namespace {

// Flatten + single linear layer with the given class-0 weights.
Head linear_head(std::vector<std::size_t> shape, std::vector<float> w0) {
    const std::size_t n = w0.size();
    Head h(shape, {Layer::flatten(), Layer::linear(n, 2)}, {"a", "b"});
    auto& l = h.mutable_layers()[1];
    l.weight.assign(2 * n, 0.1f);
    std::copy(w0.begin(), w0.end(), l.weight.begin());
    l.bias = {0.0f, 0.0f};
    return h;
}

// Bilinear resample of a fw x fh grid to a w x h image whose crop equals the
// whole image, then min-max normalisation.
std::vector<float> upsample_oracle(const std::vector<double>& grid, int fw, int fh, int w, int h) {
    std::vector<double> out(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = std::clamp((x + 0.5) * fw / w - 0.5, 0.0, fw - 1.0);
            const double gy = std::clamp((y + 0.5) * fh / h - 0.5, 0.0, fh - 1.0);
            const int x0 = static_cast<int>(std::floor(gx)), y0 = static_cast<int>(std::floor(gy));
            const int x1 = std::min(x0 + 1, fw - 1), y1 = std::min(y0 + 1, fh - 1);
            const double tx = gx - x0, ty = gy - y0;
            out[y * w + x] = (1 - ty) * ((1 - tx) * grid[y0 * fw + x0] + tx * grid[y0 * fw + x1]) +
                             ty * ((1 - tx) * grid[y1 * fw + x0] + tx * grid[y1 * fw + x1]);
        }
    }
    const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
    const double a = *lo, b = *hi;
    std::vector<float> r(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) r[i] = static_cast<float>((out[i] - a) / (b - a));
    return r;
}

}  // namespace

TEST_CASE("zero class weights give a zero heatmap") {
    const Head h = linear_head({1, 2, 2}, {0, 0, 0, 0});
    const Tensor A({1, 2, 2}, {1, 2, 3, 4});
    const auto geo = crop_geometry(8, 8, PreprocessConfig{8, 8});
    CHECK(gradcam_from_features(A, h, 0, geo, 8, 8).is_zero());
}

TEST_CASE("hand-computed 2x2 grad-cam") {
    // Class-0 weights average to alpha = 0.2 over the single channel.
    const Head h = linear_head({1, 2, 2}, {0.4f, 0.0f, 0.2f, 0.2f});
    const Tensor A({1, 2, 2}, {1, 2, 3, 4});
    const auto raw = gradcam_raw(A, h, 0);
    REQUIRE(raw.size() == 4);
    CHECK(raw[0] == doctest::Approx(0.2));
    CHECK(raw[1] == doctest::Approx(0.4));
    CHECK(raw[2] == doctest::Approx(0.6));
    CHECK(raw[3] == doctest::Approx(0.8));

    // Two channels: alpha = (1, -2), relu clips the first cell.
    const Head h2 = linear_head({2, 2, 2}, {1, 1, 1, 1, -2, -2, -2, -2});
    const Tensor A2({2, 2, 2}, {1, 2, 3, 4, 4, 0, 0, 1});
    const auto raw2 = gradcam_raw(A2, h2, 0);
    CHECK(raw2 == std::vector<float>{0.0f, 2.0f, 3.0f, 2.0f});

    const auto geo = crop_geometry(8, 8, PreprocessConfig{8, 8});
    const Heatmap hm = gradcam_from_features(A2, h2, 0, geo, 8, 8);
    const auto want = upsample_oracle({0, 2, 3, 2}, 2, 2, 8, 8);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(hm.values[i] == doctest::Approx(want[i]).epsilon(1e-6));
}

TEST_CASE("single channel grad-cam is the normalised activation") {
    Rng rng(2);
    Tensor A({1, 3, 3});
    for (auto& v : A.values()) v = static_cast<float>(rng.uniform(0.0, 5.0));
    const Head h = linear_head({1, 3, 3}, std::vector<float>(9, 0.3f));
    const auto geo = crop_geometry(12, 12, PreprocessConfig{12, 12});
    const Heatmap hm = gradcam_from_features(A, h, 0, geo, 12, 12);
    const auto want = upsample_oracle({A.values().begin(), A.values().end()}, 3, 3, 12, 12);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(hm.values[i] == doctest::Approx(want[i]).epsilon(1e-5));
}

TEST_CASE("grad-cam is zero outside the crop window") {
    const auto fe = ConvStackExtractor::random({4}, 1, PreprocessConfig{16, 16});
    Head h = Head::classifier(fe->output_shape(), 8, {"a", "b"}, 0.0, 16);
    h.initialize(4);
    const Image img = testing::noise_image(24, 16, 3);
    const Heatmap hm = gradcam(*fe, h, img, 0);
    REQUIRE(hm.width == 24);
    for (int y = 0; y < 16; ++y) {
        CHECK(hm.at(0, y) == 0.0f);
        CHECK(hm.at(23, y) == 0.0f);
    }
}

TEST_CASE("nearest-rank binarisation") {
    Heatmap hm(10, 1);
    for (int i = 0; i < 10; ++i) hm.values[i] = 0.1f * (i + 1);
    CHECK(binarize(hm, 80).count() == 3);

    CHECK(binarize(Heatmap(7, 5, 0.4f), 83).count() == 35);

    Heatmap big(224, 224);
    Rng rng(9);
    std::vector<float> pool(big.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<float>(i) / pool.size();
    rng.shuffle(pool);
    big.values = pool;
    const auto mask = binarize(big, 83);
    auto sorted = pool;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t rank = static_cast<std::size_t>(std::ceil(0.83 * sorted.size()));
    const float t = sorted[rank - 1];
    std::size_t expect = 0;
    for (float v : pool) expect += v >= t ? 1 : 0;
    CHECK(mask.count() == expect);
    CHECK(std::abs(mask.coverage() - 0.17) <= 1.0 / big.size() + 1e-12);
}

TEST_CASE("ablation") {
    const Image img = testing::solid_image(6, 4);
    CHECK(ablate(img, BinaryMask(6, 4, false)) == img);
    CHECK(ablate(img, BinaryMask(6, 4, true)) == Image(6, 4, kAblationFill));
    BinaryMask checker(6, 4);
    for (int i = 0; i < 24; ++i) checker.bits[i] = ((i % 6) + (i / 6)) % 2 == 0;
    const Image out = ablate(img, checker);
    int changed = 0;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 6; ++x) changed += out.get(x, y) == img.get(x, y) ? 0 : 1;
    CHECK(changed == 12);
    CHECK_THROWS_AS(ablate(img, BinaryMask(5, 4)), ValidationError);
}

TEST_CASE("score drop") {
    CHECK(score_drop(0.8, 0.4) == doctest::Approx(50.0));
    CHECK(score_drop(0.4, 0.6) == doctest::Approx(-50.0));
    CHECK_THROWS_AS(score_drop(0.0, 0.1), PipelineError);
    const testing::BoxCountStub stub({0, 0, 4, 4});
    CHECK(score_drop(stub, testing::solid_image(8, 8), BinaryMask(8, 8), 0) == 0.0);
}

TEST_CASE("heatmap exports") {
    Heatmap hm(5, 3);
    for (std::size_t i = 0; i < hm.size(); ++i) hm.values[i] = static_cast<float>(i) / 14.0f;
    const Heatmap back = heatmap_from_tensor(heatmap_tensor(hm));
    CHECK(back.values == hm.values);
    const Image png = decode_image(heatmap_png(hm));
    CHECK(png.width() == 5);
    CHECK(png.get(4, 2).r == 255);
    CHECK(png.get(0, 0).r == 0);
    CHECK(overlay(testing::solid_image(5, 3), hm).width() == 5);
}
