#pragma once

#include "holmes/backend.hpp"
#include "holmes/datakit.hpp"
#include "holmes/netcore.hpp"

#include <string>
#include <vector>

namespace holmes::net {

// Train-time image augmentation: horizontal flip, rotation, crop, colour
// jitter and random grayscale, each gated by its toggle.
Image augment_view(const Image& image, std::uint64_t seed, const AugmentToggles& toggles);

// Feature samples for one fold. Views beyond the first are augmented renders
// (training fold only, and only when the backend can compute new features).
std::vector<FeatureSample> fold_features(const FeatureExtractor& fe, const data::PartDataset& ds, data::Fold fold,
                                         const std::vector<std::string>& classes, const TrainConfig& cfg,
                                         int jobs = 1);

struct TrainResult {
    Head head;
    TrainHistory history;
    std::vector<std::vector<double>> test_confusion;
    std::vector<double> test_f1;  // calibrated, per class
};

// Fits a head for `ds` on the frozen extractor and scores it on the test fold.
TrainResult train_head(const FeatureExtractor& fe, const Head& head_template, const data::PartDataset& ds,
                       const TrainConfig& cfg, int jobs = 1);

}  // namespace holmes::net
