#pragma once

#include "holmes/backend.hpp"
#include "holmes/image.hpp"
#include "holmes/netcore.hpp"
#include "holmes/tensor.hpp"

#include <string>
#include <vector>

namespace holmes::sal {

// h x w saliency values in [0, 1], row-major.
struct Heatmap {
    int width = 0;
    int height = 0;
    std::vector<float> values;

    Heatmap() = default;
    Heatmap(int w, int h, float fill = 0.0f);

    float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return values.size(); }
    bool is_zero() const;
};

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<bool> bits;

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false);

    bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count() const;
    double coverage() const;
};

struct SaliencyConfig {
    double percentile = 83.0;
    Rgb fill = kAblationFill;
};

// Grad-CAM of `class_index` on the last feature map, resampled to the
// original image geometry (zero outside the preprocessing crop). `seed_scale`
// multiplies the one-hot gradient seed.
Heatmap gradcam(const net::FeatureExtractor& fe, const net::Head& head, const Image& image, std::size_t class_index,
                double seed_scale = 1.0);
// Same, from an already extracted feature map of `image`.
Heatmap gradcam_from_features(const Tensor& features, const net::Head& head, std::size_t class_index,
                              const net::CropGeometry& geometry, int width, int height, double seed_scale = 1.0);

// relu(sum_k alpha_k A_k) on the feature grid, before resampling.
std::vector<float> gradcam_raw(const Tensor& features, const net::Head& head, std::size_t class_index,
                               double seed_scale = 1.0);

// Nearest-rank percentile: the ceil(q/100 * N)-th smallest value (first for q = 0).
float percentile_value(const std::vector<float>& values, double q);
// Pixels >= the q-th percentile.
BinaryMask binarize(const Heatmap& hm, double q);

Image ablate(const Image& image, const BinaryMask& mask, Rgb fill = kAblationFill);

// 100 * (p_orig - p_ablated) / p_orig; may be negative.
double score_drop(double p_orig, double p_ablated);
double score_drop(const net::Classifier& holonym, const Image& image, const BinaryMask& mask, std::size_t class_index,
                  Rgb fill = kAblationFill);

// Exports: 8-bit grayscale PNG, HTF1 float tensor (1 x h x w), 1-bit mask PNG,
// and a jet-coloured overlay blended onto the image.
std::vector<std::uint8_t> heatmap_png(const Heatmap& hm);
Tensor heatmap_tensor(const Heatmap& hm);
Heatmap heatmap_from_tensor(const Tensor& t);
std::vector<std::uint8_t> mask_png(const BinaryMask& mask);
Image overlay(const Image& image, const Heatmap& hm, double alpha = 0.5);

}  // namespace holmes::sal
