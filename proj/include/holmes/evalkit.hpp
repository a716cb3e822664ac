#pragma once

#include "holmes/backend.hpp"
#include "holmes/explain.hpp"
#include "holmes/saliency.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace holmes::eval {

struct Curve {
    std::vector<double> fractions;
    std::vector<double> scores;
    double auc = 0.0;
};

double trapezoid_auc(const std::vector<double>& fractions, const std::vector<double>& scores);

// ROC AUC of `scores` separating positives from negatives (Mann-Whitney with
// average ranks for ties).
double rank_auc(const std::vector<float>& scores, const std::vector<bool>& positive);
// Positives are the pixels inside any of the boxes.
double pixel_auc(const sal::Heatmap& hm, const std::vector<BBox>& gt);

enum class InsertionBaseline { Gray, Blur };

struct CurveConfig {
    int steps = 100;
    Rgb fill = kAblationFill;
    InsertionBaseline insertion_baseline = InsertionBaseline::Gray;
    double blur_sigma = 10.0;

    nlohmann::json to_json() const;
};

// Pixel indices by descending value, ties in row-major order.
std::vector<std::size_t> pixel_order(const std::vector<float>& values);

Curve deletion_curve(const net::Classifier& model, const Image& image, const sal::Heatmap& hm, std::size_t class_index,
                     const CurveConfig& cfg = {});
Curve insertion_curve(const net::Classifier& model, const Image& image, const sal::Heatmap& hm,
                      std::size_t class_index, const CurveConfig& cfg = {});
Curve preservation_curve(const net::Classifier& model, const Image& image, const sal::Heatmap& hm,
                         std::size_t class_index, const CurveConfig& cfg = {});

struct CurveSet {
    Curve deletion;
    Curve insertion;
    Curve preservation;
};

CurveSet all_curves(const net::Classifier& model, const Image& image, const sal::Heatmap& hm, std::size_t class_index,
                    const CurveConfig& cfg = {});

// A heatmap ranking `cell` x `cell` grid superpixels in a seeded random order.
sal::Heatmap random_superpixel_ranking(int width, int height, int cell, std::uint64_t seed);
CurveSet random_baseline(const net::Classifier& model, const Image& image, std::size_t class_index, int cell,
                         std::uint64_t seed, const CurveConfig& cfg = {});

// method.auc / baseline.auc.
double curve_ratio(const Curve& method, const Curve& baseline);

struct Ratios {
    double insertion = 0.0;
    double deletion = 0.0;
    double preservation = 0.0;
};
Ratios curve_ratios(const CurveSet& method, const CurveSet& baseline);

// ---- percentile grid search -----------------------------------------------

struct TuneRow {
    int q = 0;
    double deletion = 0.0;
    double insertion = 0.0;
    double preservation = 0.0;
    double objective = 0.0;  // insertion - deletion + preservation
};

struct TuneResult {
    int best_q = 0;
    std::vector<TuneRow> rows;
};

// Explains each image at every q in [q_min, q_max] and scores the global
// heatmap; ties keep the smallest q.
TuneResult tune_percentile(const explain::Pipeline& pipeline, const std::vector<Image>& images, int q_min, int q_max,
                           const explain::ExplainConfig& base, const CurveConfig& curves = {}, int jobs = 1);

// ---- output --------------------------------------------------------------

std::string curve_svg(const std::vector<std::pair<std::string, const Curve*>>& curves, const std::string& title);

}  // namespace holmes::eval
