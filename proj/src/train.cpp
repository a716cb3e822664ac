#include "holmes/train.hpp"

#include "holmes/error.hpp"
#include "holmes/parallel.hpp"
#include "holmes/rng.hpp"

#include <algorithm>
#include <cmath>

namespace holmes::net {

namespace {

std::uint64_t hash_string(std::uint64_t seed, const std::string& s) {
    std::uint64_t h = seed;
    for (char c : s) h = hash_combine(h, static_cast<unsigned char>(c));
    return h;
}

}  // namespace

Image augment_view(const Image& image, std::uint64_t seed, const AugmentToggles& t) {
    Rng rng(seed);
    Image out = image;
    if (t.hflip && rng.bernoulli(0.5)) out = hflip(out);
    if (t.rotation) out = rotate_shear(out, rng.uniform(-15.0, 15.0), 0.0, kAblationFill);
    if (t.crop) {
        const double scale = rng.uniform(0.8, 1.0);
        const int w = std::max(1, static_cast<int>(std::lround(out.width() * scale)));
        const int h = std::max(1, static_cast<int>(std::lround(out.height() * scale)));
        const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(out.width() - w + 1)));
        const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(out.height() - h + 1)));
        out = resize_bilinear(crop(out, BBox{x, y, x + w, y + h}), image.width(), image.height());
    }
    if (t.color_jitter) {
        out = color_jitter(out, rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2));
    }
    if (t.grayscale && rng.bernoulli(0.1)) out = to_grayscale(out);
    return out;
}

std::vector<FeatureSample> fold_features(const FeatureExtractor& fe, const data::PartDataset& ds, data::Fold fold,
                                         const std::vector<std::string>& classes, const TrainConfig& cfg, int jobs) {
    std::vector<const data::ImageSample*> members;
    for (const auto& s : ds.samples) {
        auto it = ds.folds.find(s.origin_id);
        if (it != ds.folds.end() && it->second == fold && ds.kept(s.origin_id)) members.push_back(&s);
    }
    std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return a->origin_id < b->origin_id; });

    const int views = (fold == data::Fold::Train && cfg.augment.any()) ? cfg.augment_views : 0;
    std::vector<FeatureSample> out(members.size());
    parallel_for(members.size(), jobs, [&](std::size_t i) {
        const data::ImageSample& s = *members[i];
        auto it = std::find(classes.begin(), classes.end(), s.label);
        if (it == classes.end()) throw ValidationError("train: sample label '" + s.label + "' is not a head class");
        out[i].label = static_cast<std::size_t>(it - classes.begin());
        out[i].views.push_back(fe.features(s.pixels, s.origin_id));
        for (int v = 0; v < views; ++v) {
            const Image aug = augment_view(s.pixels, hash_combine(hash_string(cfg.seed, s.origin_id), v), cfg.augment);
            try {
                out[i].views.push_back(fe.features(aug));
            } catch (const BackendError&) {
                break;  // feature stores only hold the original pixels
            }
        }
    });
    return out;
}

TrainResult train_head(const FeatureExtractor& fe, const Head& head_template, const data::PartDataset& ds,
                       const TrainConfig& cfg, int jobs) {
    cfg.validate();
    if (head_template.classes() != ds.classes) {
        throw ValidationError("train: head classes do not match the dataset part list");
    }
    const auto train = fold_features(fe, ds, data::Fold::Train, ds.classes, cfg, jobs);
    const auto val = fold_features(fe, ds, data::Fold::Val, ds.classes, cfg, jobs);
    const auto test = fold_features(fe, ds, data::Fold::Test, ds.classes, cfg, jobs);
    if (test.empty()) throw ValidationError("train: empty test fold");

    TrainResult r;
    r.head = fit_head(head_template, train, val, cfg, &r.history);
    r.test_confusion = confusion_matrix(r.head, test);
    for (std::size_t c = 0; c < r.test_confusion.size(); ++c) {
        double row = 0.0;
        for (double v : r.test_confusion[c]) row += v;
        if (row == 0.0) throw ValidationError("train: test fold has no samples of class '" + ds.classes[c] + "'");
    }
    r.test_f1 = calibrated_f1(r.test_confusion);
    return r;
}

}  // namespace holmes::net
