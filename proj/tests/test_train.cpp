#include "holmes/error.hpp"
#include "holmes/synth.hpp"
#include "holmes/train.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace holmes;
using namespace holmes::net;

namespace {

data::PartDataset colour_dataset() {
    data::PartDataset ds;
    ds.holonym = "toy";
    ds.classes = {"red", "blue"};
    for (int i = 0; i < 30; ++i) {
        for (const auto& [label, c] : {std::pair<std::string, Rgb>{"red", {220, 20, 20}}, {"blue", {20, 20, 220}}}) {
            data::ImageSample s;
            s.pixels = Image(16, 16, c);
            Rng rng(hash_combine(i, label.size()));
            for (auto& b : s.pixels.bytes()) b = static_cast<std::uint8_t>(std::clamp<int>(b + static_cast<int>(rng.below(41)) - 20, 0, 255));
            s.label = label;
            s.origin_id = label + "/" + std::to_string(100 + i);
            ds.samples.push_back(std::move(s));
        }
    }
    return data::split(std::move(ds), data::SplitRatios{0.6, 0.2, 0.2}, 4);
}

}  // namespace

TEST_CASE("augment_view is seeded") {
    const Image img = testing::noise_image(20, 20, 1);
    CHECK(augment_view(img, 5, {}) == augment_view(img, 5, {}));
    CHECK(augment_view(img, 5, {}) != augment_view(img, 6, {}));
    AugmentToggles none{false, false, false, false, false};
    CHECK(augment_view(img, 5, none) == img);
}

TEST_CASE("fold features") {
    const auto ds = colour_dataset();
    PixelPoolExtractor fe(4, PreprocessConfig{16, 16});
    TrainConfig cfg;
    cfg.augment_views = 2;
    const auto train = fold_features(fe, ds, data::Fold::Train, ds.classes, cfg);
    const auto test = fold_features(fe, ds, data::Fold::Test, ds.classes, cfg);
    CHECK(train.size() == 36);
    CHECK(test.size() == 12);
    CHECK(train[0].views.size() == 3);
    CHECK(test[0].views.size() == 1);
    CHECK(fold_features(fe, ds, data::Fold::Train, ds.classes, cfg, 3)[7].views[2] == train[7].views[2]);
}

TEST_CASE("train_head separates colours") {
    const auto ds = colour_dataset();
    PixelPoolExtractor fe(4, PreprocessConfig{16, 16});
    TrainConfig cfg;
    cfg.lr = 0.02;
    cfg.batch = 8;
    cfg.augment_views = 1;
    cfg.seed = 2;
    const Head tmpl = Head::classifier(fe.output_shape(), 16, ds.classes, 0.2, 4);
    const auto r = train_head(fe, tmpl, ds, cfg);
    CHECK(r.test_f1[0] == 1.0);
    CHECK(r.test_f1[1] == 1.0);
    CHECK(train_head(fe, tmpl, ds, cfg, 2).head.same_parameters(r.head));

    const Head wrong = Head::classifier(fe.output_shape(), 16, {"blue", "red"}, 0.2, 4);
    CHECK_THROWS_AS(train_head(fe, wrong, ds, cfg), ValidationError);
}
