#pragma once

#include "holmes/backend.hpp"
#include "holmes/kb.hpp"
#include "holmes/saliency.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

namespace holmes::explain {

// Meronym head for one holonym; f1[i] is the calibrated F1 of head class i.
struct MeronymModel {
    net::Head head;
    std::vector<double> f1;
};

// Everything needed to explain a prediction. The meronym heads share the
// holonym classifier's extractor.
struct Pipeline {
    const net::SplitClassifier* holonym = nullptr;
    std::map<std::string, MeronymModel> meronyms;  // keyed by holonym class name
    const kb::HolMeMap* kb = nullptr;               // optional: checks the prediction resolves
};

struct ExplainConfig {
    double percentile = 83.0;
    double t_s = 10.0;  // percentage points
    double t_f1 = 0.7;
    Rgb fill = kAblationFill;

    nlohmann::json to_json() const;
    static ExplainConfig from_json(const nlohmann::json& j);
};

struct PartResult {
    std::string name;
    double f1 = 0.0;
    sal::Heatmap heatmap;
    sal::BinaryMask mask;
    double drop = 0.0;
    bool selected = false;
};

struct ExplanationReport {
    std::string image_id;
    std::string holonym;
    std::size_t holonym_index = 0;
    double score = 0.0;  // softmax probability of the predicted holonym
    std::vector<PartResult> parts;
    sal::Heatmap global;      // min-max normalised G
    sal::Heatmap global_raw;  // sum_i z_i x^(p_i)
    std::vector<double> weights;
    ExplainConfig config;

    std::size_t selected_count() const;
};

struct GlobalHeatmap {
    sal::Heatmap raw;
    sal::Heatmap normalized;
    std::vector<double> weights;
};

// Drops clamped at zero and L1-normalised into weights; all-zero drops give a
// zero map.
GlobalHeatmap global_heatmap(const std::vector<sal::Heatmap>& heatmaps, const std::vector<double>& drops);

// Per-part Grad-CAM maps: the percentile-independent half of an explanation.
struct PartHeatmaps {
    std::string image_id;
    std::string holonym;
    std::size_t holonym_index = 0;
    double score = 0.0;
    std::vector<std::string> parts;
    std::vector<double> f1;
    std::vector<sal::Heatmap> heatmaps;
};

PartHeatmaps part_heatmaps(const Pipeline& pipeline, const Image& image, const std::string& image_id);
ExplanationReport finish_report(const Pipeline& pipeline, const Image& image, const PartHeatmaps& maps,
                                const ExplainConfig& cfg);
ExplanationReport explain_image(const Pipeline& pipeline, const Image& image, const std::string& image_id,
                                const ExplainConfig& cfg = {});

// Re-evaluates the selected flags only.
void apply_thresholds(ExplanationReport& report, double t_s, double t_f1);

struct ClassSummary {
    std::string holonym;
    std::size_t images = 0;
    double mean_average_drop = 0.0;
    double mean_max_drop = 0.0;
    double mean_selected = 0.0;
    double std_selected = 0.0;
    std::vector<std::pair<std::string, double>> top_parts;  // by mean drop, at most 5

    nlohmann::json to_json() const;
};

ClassSummary summarize_class(const std::vector<ExplanationReport>& reports);

// Writes <dir>/<stem>.json plus heatmap, mask and overlay files next to it;
// returns the report JSON. Paths inside the JSON are relative to `dir`.
nlohmann::json write_report(const ExplanationReport& report, const Image& image, const std::string& dir,
                            const std::string& stem, const nlohmann::json& provenance = nullptr);
ExplanationReport read_report(const std::string& json_path);

}  // namespace holmes::explain
