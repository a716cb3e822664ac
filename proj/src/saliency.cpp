#include "holmes/saliency.hpp"

#include "holmes/error.hpp"

#include <algorithm>
#include <cmath>

namespace holmes::sal {

Heatmap::Heatmap(int w, int h, float fill) : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

bool Heatmap::is_zero() const {
    return std::all_of(values.begin(), values.end(), [](float v) { return v == 0.0f; });
}

BinaryMask::BinaryMask(int w, int h, bool fill) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill) {}

std::size_t BinaryMask::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true)); }

double BinaryMask::coverage() const {
    return bits.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(bits.size());
}

std::vector<float> gradcam_raw(const Tensor& features, const net::Head& head, std::size_t class_index,
                               double seed_scale) {
    if (class_index >= head.num_classes()) {
        throw ValidationError("gradcam: class index " + std::to_string(class_index) + " out of range");
    }
    if (features.rank() != 3) throw ValidationError("gradcam: feature map must be K x H x W");
    net::ForwardCache cache;
    const Tensor logits = net::head_forward(head, features, net::Mode::Eval, &cache);
    Tensor seed(logits.shape());
    seed[class_index] = static_cast<float>(seed_scale);
    const net::HeadGradients g = net::head_backward(head, cache, seed);

    const std::size_t K = features.dim(0), HW = features.dim(1) * features.dim(2);
    std::vector<double> raw(HW, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        double alpha = 0.0;
        for (std::size_t j = 0; j < HW; ++j) alpha += g.input[k * HW + j];
        alpha /= static_cast<double>(HW);
        if (alpha == 0.0) continue;
        for (std::size_t j = 0; j < HW; ++j) raw[j] += alpha * features[k * HW + j];
    }
    std::vector<float> out(HW);
    for (std::size_t j = 0; j < HW; ++j) out[j] = static_cast<float>(std::max(raw[j], 0.0));
    return out;
}

Heatmap gradcam_from_features(const Tensor& features, const net::Head& head, std::size_t class_index,
                              const net::CropGeometry& geo, int width, int height, double seed_scale) {
    const std::vector<float> raw = gradcam_raw(features, head, class_index, seed_scale);
    const auto fh = static_cast<int>(features.dim(1)), fw = static_cast<int>(features.dim(2));
    auto cell = [&](int y, int x) { return static_cast<double>(raw[static_cast<std::size_t>(y) * fw + x]); };

    // Each source pixel centre maps into crop space, then onto the feature
    // grid with half-pixel bilinear sampling.
    std::vector<double> up(static_cast<std::size_t>(width) * height, 0.0);
    for (int y = 0; y < height; ++y) {
        const double cy = (y + 0.5) / geo.scale_y - geo.offset_y;
        if (cy < 0.0 || cy >= geo.crop) continue;
        const double gy = std::clamp(cy * fh / geo.crop - 0.5, 0.0, fh - 1.0);
        const int y0 = static_cast<int>(std::floor(gy)), y1 = std::min(y0 + 1, fh - 1);
        const double wy = gy - y0;
        for (int x = 0; x < width; ++x) {
            const double cx = (x + 0.5) / geo.scale_x - geo.offset_x;
            if (cx < 0.0 || cx >= geo.crop) continue;
            const double gx = std::clamp(cx * fw / geo.crop - 0.5, 0.0, fw - 1.0);
            const int x0 = static_cast<int>(std::floor(gx)), x1 = std::min(x0 + 1, fw - 1);
            const double wx = gx - x0;
            up[static_cast<std::size_t>(y) * width + x] =
                (1 - wy) * ((1 - wx) * cell(y0, x0) + wx * cell(y0, x1)) + wy * ((1 - wx) * cell(y1, x0) + wx * cell(y1, x1));
        }
    }

    Heatmap hm(width, height);
    const auto [lo, hi] = std::minmax_element(up.begin(), up.end());
    if (up.empty() || *hi <= *lo) return hm;
    const double range = *hi - *lo;
    for (std::size_t i = 0; i < up.size(); ++i) {
        hm.values[i] = static_cast<float>(std::clamp((up[i] - *lo) / range, 0.0, 1.0));
    }
    return hm;
}

Heatmap gradcam(const net::FeatureExtractor& fe, const net::Head& head, const Image& image, std::size_t class_index,
                double seed_scale) {
    const auto geo = net::crop_geometry(image.width(), image.height(), fe.preprocessing());
    return gradcam_from_features(fe.features(image), head, class_index, geo, image.width(), image.height(),
                                 seed_scale);
}

float percentile_value(const std::vector<float>& values, double q) {
    if (!(q >= 0.0 && q <= 100.0)) throw ValidationError("percentile must be in [0, 100]");
    if (values.empty()) throw ValidationError("percentile of an empty set");
    std::vector<float> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    // Tolerance keeps q/100 * N exact when it should be an integer.
    auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

BinaryMask binarize(const Heatmap& hm, double q) {
    const float t = percentile_value(hm.values, q);
    BinaryMask m(hm.width, hm.height);
    for (std::size_t i = 0; i < hm.values.size(); ++i) m.bits[i] = hm.values[i] >= t;
    return m;
}

Image ablate(const Image& image, const BinaryMask& mask, Rgb fill) {
    if (mask.width != image.width() || mask.height != image.height()) {
        throw ValidationError("ablate: mask " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                              " does not match image " + std::to_string(image.width()) + "x" +
                              std::to_string(image.height()));
    }
    Image out = image;
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            if (mask.at(x, y)) out.set(x, y, fill);
        }
    }
    return out;
}

double score_drop(double p_orig, double p_ablated) {
    if (!(p_orig > 0.0)) throw PipelineError("score_drop: original probability is zero");
    return 100.0 * (p_orig - p_ablated) / p_orig;
}

double score_drop(const net::Classifier& holonym, const Image& image, const BinaryMask& mask, std::size_t class_index,
                  Rgb fill) {
    if (class_index >= holonym.num_classes()) throw ValidationError("score_drop: class index out of range");
    const double p0 = holonym.probabilities(image)[class_index];
    const double p1 = holonym.probabilities(ablate(image, mask, fill))[class_index];
    return score_drop(p0, p1);
}

std::vector<std::uint8_t> heatmap_png(const Heatmap& hm) {
    std::vector<std::uint8_t> v(hm.values.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<std::uint8_t>(std::lround(std::clamp(hm.values[i], 0.0f, 1.0f) * 255.0f));
    }
    return encode_png_gray(hm.width, hm.height, v);
}

Tensor heatmap_tensor(const Heatmap& hm) {
    return Tensor({1, static_cast<std::size_t>(hm.height), static_cast<std::size_t>(hm.width)}, hm.values);
}

Heatmap heatmap_from_tensor(const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != 1) throw ParseError("heatmap tensor must be 1 x h x w");
    Heatmap hm(static_cast<int>(t.dim(2)), static_cast<int>(t.dim(1)));
    hm.values = t.values();
    return hm;
}

std::vector<std::uint8_t> mask_png(const BinaryMask& mask) { return encode_png_mask(mask.width, mask.height, mask.bits); }

namespace {

Rgb jet(double v) {
    auto channel = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(1.5 - std::abs(x), 0.0, 1.0))); };
    return {channel(4.0 * v - 3.0), channel(4.0 * v - 2.0), channel(4.0 * v - 1.0)};
}

}  // namespace

Image overlay(const Image& image, const Heatmap& hm, double alpha) {
    if (hm.width != image.width() || hm.height != image.height()) throw ValidationError("overlay: geometry mismatch");
    Image out = image;
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const Rgb c = jet(hm.at(x, y)), p = image.get(x, y);
            auto mix = [&](std::uint8_t a, std::uint8_t b) {
                return static_cast<std::uint8_t>(std::lround((1.0 - alpha) * a + alpha * b));
            };
            out.set(x, y, {mix(p.r, c.r), mix(p.g, c.g), mix(p.b, c.b)});
        }
    }
    return out;
}

}  // namespace holmes::sal
