#include "holmes/explain.hpp"

#include "holmes/error.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace holmes::explain {

namespace fs = std::filesystem;
using nlohmann::json;

json ExplainConfig::to_json() const {
    return json{{"percentile", percentile},
                {"t_s", t_s},
                {"t_f1", t_f1},
                {"fill", {fill.r, fill.g, fill.b}},
                {"score_space", "softmax_probability"}};
}

ExplainConfig ExplainConfig::from_json(const json& j) {
    ExplainConfig c;
    c.percentile = j.value("percentile", c.percentile);
    c.t_s = j.value("t_s", c.t_s);
    c.t_f1 = j.value("t_f1", c.t_f1);
    if (j.contains("fill")) {
        const auto f = j.at("fill").get<std::vector<int>>();
        if (f.size() != 3) throw ParseError("explain config: fill must be [r, g, b]");
        for (int v : f) {
            if (v < 0 || v > 255) throw ValidationError("explain config: fill channel out of range");
        }
        c.fill = Rgb{static_cast<std::uint8_t>(f[0]), static_cast<std::uint8_t>(f[1]), static_cast<std::uint8_t>(f[2])};
    }
    if (!(c.percentile >= 0.0 && c.percentile <= 100.0)) throw ValidationError("explain config: percentile must be in [0, 100]");
    return c;
}

std::size_t ExplanationReport::selected_count() const {
    return static_cast<std::size_t>(std::count_if(parts.begin(), parts.end(), [](const PartResult& p) { return p.selected; }));
}

GlobalHeatmap global_heatmap(const std::vector<sal::Heatmap>& heatmaps, const std::vector<double>& drops) {
    if (heatmaps.size() != drops.size()) throw ValidationError("global_heatmap: one drop per heatmap required");
    if (heatmaps.empty()) throw ValidationError("global_heatmap: no part heatmaps");
    const int w = heatmaps[0].width, h = heatmaps[0].height;
    for (const auto& hm : heatmaps) {
        if (hm.width != w || hm.height != h) throw ValidationError("global_heatmap: heatmap geometries differ");
    }
    GlobalHeatmap g;
    g.raw = sal::Heatmap(w, h);
    g.normalized = sal::Heatmap(w, h);
    g.weights.assign(drops.size(), 0.0);
    double total = 0.0;
    for (double d : drops) total += std::max(d, 0.0);
    if (total <= 0.0) return g;
    for (std::size_t i = 0; i < drops.size(); ++i) g.weights[i] = std::max(drops[i], 0.0) / total;

    std::vector<double> acc(g.raw.size(), 0.0);
    for (std::size_t i = 0; i < heatmaps.size(); ++i) {
        if (g.weights[i] == 0.0) continue;
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g.weights[i] * heatmaps[i].values[j];
    }
    for (std::size_t j = 0; j < acc.size(); ++j) g.raw.values[j] = static_cast<float>(acc[j]);
    const auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
    if (*hi > *lo) {
        for (std::size_t j = 0; j < acc.size(); ++j) g.normalized.values[j] = static_cast<float>((acc[j] - *lo) / (*hi - *lo));
    }
    return g;
}

PartHeatmaps part_heatmaps(const Pipeline& pipeline, const Image& image, const std::string& image_id) {
    if (pipeline.holonym == nullptr) throw PipelineError("explain: no holonym classifier");
    const auto& fe = pipeline.holonym->extractor();
    const Tensor features = fe.features(image);
    const auto probs = pipeline.holonym->probabilities_from_features(features);

    PartHeatmaps m;
    m.image_id = image_id;
    m.holonym_index = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    m.holonym = pipeline.holonym->head().classes().at(m.holonym_index);
    m.score = probs[m.holonym_index];

    if (pipeline.kb != nullptr) kb::resolve_parts(m.holonym, *pipeline.kb);
    auto it = pipeline.meronyms.find(m.holonym);
    if (it == pipeline.meronyms.end()) {
        throw PipelineError("explain: no meronym model for predicted class '" + m.holonym +
                            "'; train one with `holmes train --holonym " + m.holonym + "`");
    }
    const MeronymModel& mm = it->second;
    if (mm.f1.size() != mm.head.num_classes()) {
        throw PipelineError("explain: meronym model for '" + m.holonym + "' has no F1 score per part");
    }
    const auto geo = net::crop_geometry(image.width(), image.height(), fe.preprocessing());
    for (std::size_t i = 0; i < mm.head.num_classes(); ++i) {
        m.parts.push_back(mm.head.classes()[i]);
        m.f1.push_back(mm.f1[i]);
        m.heatmaps.push_back(sal::gradcam_from_features(features, mm.head, i, geo, image.width(), image.height()));
    }
    return m;
}

ExplanationReport finish_report(const Pipeline& pipeline, const Image& image, const PartHeatmaps& maps,
                                const ExplainConfig& cfg) {
    ExplanationReport r;
    r.image_id = maps.image_id;
    r.holonym = maps.holonym;
    r.holonym_index = maps.holonym_index;
    r.score = maps.score;
    r.config = cfg;
    std::vector<double> drops;
    for (std::size_t i = 0; i < maps.parts.size(); ++i) {
        PartResult p;
        p.name = maps.parts[i];
        p.f1 = maps.f1[i];
        p.heatmap = maps.heatmaps[i];
        p.mask = sal::binarize(p.heatmap, cfg.percentile);
        if (p.heatmap.is_zero()) {
            // Nothing localised: no region to remove.
            p.mask = sal::BinaryMask(image.width(), image.height());
            p.drop = 0.0;
        } else {
            const auto probs = pipeline.holonym->probabilities(sal::ablate(image, p.mask, cfg.fill));
            p.drop = sal::score_drop(maps.score, probs[maps.holonym_index]);
        }
        drops.push_back(p.drop);
        r.parts.push_back(std::move(p));
    }
    apply_thresholds(r, cfg.t_s, cfg.t_f1);
    auto g = global_heatmap(maps.heatmaps, drops);
    r.global = std::move(g.normalized);
    r.global_raw = std::move(g.raw);
    r.weights = std::move(g.weights);
    return r;
}

ExplanationReport explain_image(const Pipeline& pipeline, const Image& image, const std::string& image_id,
                                const ExplainConfig& cfg) {
    return finish_report(pipeline, image, part_heatmaps(pipeline, image, image_id), cfg);
}

void apply_thresholds(ExplanationReport& report, double t_s, double t_f1) {
    report.config.t_s = t_s;
    report.config.t_f1 = t_f1;
    for (auto& p : report.parts) p.selected = p.drop > t_s && p.f1 > t_f1;
}

json ClassSummary::to_json() const {
    json top = json::array();
    for (const auto& [name, d] : top_parts) top.push_back({{"part", name}, {"mean_drop", d}});
    return json{{"holonym", holonym},
                {"images", images},
                {"mean_average_drop", mean_average_drop},
                {"mean_max_drop", mean_max_drop},
                {"mean_selected", mean_selected},
                {"std_selected", std_selected},
                {"top_parts", top}};
}

ClassSummary summarize_class(const std::vector<ExplanationReport>& reports) {
    if (reports.empty()) throw ValidationError("summarize_class: no reports");
    ClassSummary s;
    s.holonym = reports.front().holonym;
    s.images = reports.size();
    std::map<std::string, std::pair<double, int>> per_part;
    std::vector<std::string> part_order;
    double sel_sum = 0.0, sel_sq = 0.0;
    for (const auto& r : reports) {
        if (r.parts.empty()) throw ValidationError("summarize_class: report '" + r.image_id + "' has no parts");
        double sum = 0.0, mx = -std::numeric_limits<double>::infinity();
        for (const auto& p : r.parts) {
            sum += p.drop;
            mx = std::max(mx, p.drop);
            auto [it, inserted] = per_part.try_emplace(p.name, 0.0, 0);
            if (inserted) part_order.push_back(p.name);
            it->second.first += p.drop;
            it->second.second += 1;
        }
        s.mean_average_drop += sum / static_cast<double>(r.parts.size());
        s.mean_max_drop += mx;
        const auto sel = static_cast<double>(r.selected_count());
        sel_sum += sel;
        sel_sq += sel * sel;
    }
    const auto n = static_cast<double>(reports.size());
    s.mean_average_drop /= n;
    s.mean_max_drop /= n;
    s.mean_selected = sel_sum / n;
    s.std_selected = n > 1 ? std::sqrt(std::max(0.0, (sel_sq - n * s.mean_selected * s.mean_selected) / (n - 1))) : 0.0;

    for (const auto& name : part_order) {
        const auto& [total, count] = per_part[name];
        s.top_parts.emplace_back(name, total / count);
    }
    std::stable_sort(s.top_parts.begin(), s.top_parts.end(), [](auto& a, auto& b) { return a.second > b.second; });
    if (s.top_parts.size() > 5) s.top_parts.resize(5);
    return s;
}

json write_report(const ExplanationReport& report, const Image& image, const std::string& dir, const std::string& stem,
                  const json& provenance) {
    fs::create_directories(dir);
    auto out = [&](const std::string& name) { return (fs::path(dir) / name).string(); };

    json parts = json::array();
    for (std::size_t i = 0; i < report.parts.size(); ++i) {
        const PartResult& p = report.parts[i];
        const std::string base = stem + ".part" + std::to_string(i) + "-" + p.name;
        write_file(out(base + ".heatmap.png"), sal::heatmap_png(p.heatmap));
        save_htf(out(base + ".heatmap.htf"), sal::heatmap_tensor(p.heatmap));
        write_file(out(base + ".mask.png"), sal::mask_png(p.mask));
        write_file(out(base + ".overlay.png"), encode_png(sal::overlay(image, p.heatmap)));
        parts.push_back({{"name", p.name},
                         {"f1", p.f1},
                         {"drop", p.drop},
                         {"selected", p.selected},
                         {"heatmap", base + ".heatmap.png"},
                         {"heatmap_tensor", base + ".heatmap.htf"},
                         {"mask", base + ".mask.png"},
                         {"overlay", base + ".overlay.png"}});
    }
    write_file(out(stem + ".global.png"), sal::heatmap_png(report.global));
    save_htf(out(stem + ".global.htf"), sal::heatmap_tensor(report.global));
    save_htf(out(stem + ".global_raw.htf"), sal::heatmap_tensor(report.global_raw));
    write_file(out(stem + ".global.overlay.png"), encode_png(sal::overlay(image, report.global)));

    json j{{"image", report.image_id},
           {"holonym", report.holonym},
           {"holonym_index", report.holonym_index},
           {"score", report.score},
           {"parts", parts},
           {"global_heatmap", stem + ".global.png"},
           {"global_heatmap_tensor", stem + ".global.htf"},
           {"global_heatmap_raw_tensor", stem + ".global_raw.htf"},
           {"global_overlay", stem + ".global.overlay.png"},
           {"weights", report.weights},
           {"selected_count", report.selected_count()},
           {"config", report.config.to_json()}};
    if (!provenance.is_null()) j["provenance"] = provenance;
    std::ofstream f(out(stem + ".json"), std::ios::trunc);
    if (!f) throw PipelineError("cannot write report '" + out(stem + ".json") + "'");
    f << j.dump(2) << "\n";
    return j;
}

ExplanationReport read_report(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw ValidationError("cannot open report '" + json_path + "'");
    const fs::path dir = fs::path(json_path).parent_path();
    try {
        json j;
        in >> j;
        ExplanationReport r;
        r.image_id = j.at("image").get<std::string>();
        r.holonym = j.at("holonym").get<std::string>();
        r.holonym_index = j.value("holonym_index", std::size_t{0});
        r.score = j.at("score").get<double>();
        r.config = ExplainConfig::from_json(j.at("config"));
        r.weights = j.at("weights").get<std::vector<double>>();
        for (const auto& pj : j.at("parts")) {
            PartResult p;
            p.name = pj.at("name").get<std::string>();
            p.f1 = pj.at("f1").get<double>();
            p.drop = pj.at("drop").get<double>();
            p.selected = pj.at("selected").get<bool>();
            p.heatmap = sal::heatmap_from_tensor(load_htf((dir / pj.at("heatmap_tensor").get<std::string>()).string()));
            p.mask = p.heatmap.is_zero() ? sal::BinaryMask(p.heatmap.width, p.heatmap.height)
                                         : sal::binarize(p.heatmap, r.config.percentile);
            r.parts.push_back(std::move(p));
        }
        r.global = sal::heatmap_from_tensor(load_htf((dir / j.at("global_heatmap_tensor").get<std::string>()).string()));
        r.global_raw =
            sal::heatmap_from_tensor(load_htf((dir / j.at("global_heatmap_raw_tensor").get<std::string>()).string()));
        return r;
    } catch (const json::exception& e) {
        throw ParseError("report '" + json_path + "': " + e.what());
    }
}

}  // namespace holmes::explain
