#include "holmes/evalkit.hpp"

#include "holmes/error.hpp"
#include "holmes/parallel.hpp"
#include "holmes/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace holmes::eval {

double trapezoid_auc(const std::vector<double>& f, const std::vector<double>& s) {
    if (f.size() != s.size()) throw ValidationError("auc: fractions and scores differ in length");
    if (f.size() < 2) throw ValidationError("auc: need at least two points");
    double a = 0.0;
    for (std::size_t i = 1; i < f.size(); ++i) {
        if (s[i] == s[i - 1]) {
            a += (f[i] - f[i - 1]) * s[i];
        } else {
            a += (f[i] - f[i - 1]) * (s[i] + s[i - 1]) * 0.5;
        }
    }
    return a;
}

double rank_auc(const std::vector<float>& scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size()) throw ValidationError("auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    const auto n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
    if (n_pos == 0 || n_pos == n) throw ValidationError("auc: need at least one positive and one negative pixel");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Twice the rank sum keeps average ranks integral.
    std::uint64_t twice_rank_sum = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        const std::uint64_t twice_avg = static_cast<std::uint64_t>(i + 1 + j);  // 2 * mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (positive[idx[k]]) twice_rank_sum += twice_avg;
        }
        i = j;
    }
    const auto P = static_cast<double>(n_pos), N = static_cast<double>(n - n_pos);
    const double u = static_cast<double>(twice_rank_sum) / 2.0 - P * (P + 1.0) / 2.0;
    return u / (P * N);
}

double pixel_auc(const sal::Heatmap& hm, const std::vector<BBox>& gt) {
    std::vector<bool> pos(hm.size(), false);
    for (const auto& b : gt) {
        if (!b.inside(hm.width, hm.height)) throw ValidationError("pixel_auc: ground-truth box outside the heatmap");
        for (int y = b.y_min; y < b.y_max; ++y) {
            for (int x = b.x_min; x < b.x_max; ++x) pos[static_cast<std::size_t>(y) * hm.width + x] = true;
        }
    }
    return rank_auc(hm.values, pos);
}

nlohmann::json CurveConfig::to_json() const {
    return {{"steps", steps},
            {"fill", {fill.r, fill.g, fill.b}},
            {"insertion_baseline", insertion_baseline == InsertionBaseline::Gray ? "gray" : "blur"},
            {"blur_sigma", blur_sigma}};
}

std::vector<std::size_t> pixel_order(const std::vector<float>& values) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    return idx;
}

namespace {

enum class Kind { Deletion, Insertion, Preservation };

void check(const Image& image, const sal::Heatmap& hm, const CurveConfig& cfg) {
    if (cfg.steps < 1) throw ValidationError("curve: steps must be >= 1");
    if (hm.width != image.width() || hm.height != image.height()) {
        throw ValidationError("curve: heatmap geometry does not match the image");
    }
}

void copy_pixel(Image& dst, const Image& src, std::size_t i) {
    const int w = dst.width();
    const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
    dst.set(x, y, src.get(x, y));
}

// Starts from `start`, then moves the ranked pixels to `target` in equal
// batches: count after step k is floor(k * N / steps).
Curve run_curve(const net::Classifier& model, const Image& start, const Image& target,
                const std::vector<std::size_t>& order, std::size_t class_index, int steps) {
    Curve c;
    Image work = start;
    const std::size_t N = order.size();
    c.fractions.push_back(0.0);
    c.scores.push_back(model.probabilities(work).at(class_index));
    std::size_t done = 0;
    for (int k = 1; k <= steps; ++k) {
        const std::size_t upto = static_cast<std::size_t>(k) * N / static_cast<std::size_t>(steps);
        for (; done < upto; ++done) copy_pixel(work, target, order[done]);
        c.fractions.push_back(static_cast<double>(k) / steps);
        c.scores.push_back(k == steps ? model.probabilities(target).at(class_index)
                                      : model.probabilities(work).at(class_index));
    }
    c.auc = trapezoid_auc(c.fractions, c.scores);
    return c;
}

Curve curve(Kind kind, const net::Classifier& model, const Image& image, const std::vector<std::size_t>& order,
            std::size_t class_index, const CurveConfig& cfg) {
    const Image gray(image.width(), image.height(), cfg.fill);
    switch (kind) {
        case Kind::Deletion: return run_curve(model, image, gray, order, class_index, cfg.steps);
        case Kind::Insertion: {
            const Image base = cfg.insertion_baseline == InsertionBaseline::Gray ? gray
                                                                                 : gaussian_blur(image, cfg.blur_sigma);
            return run_curve(model, base, image, order, class_index, cfg.steps);
        }
        case Kind::Preservation: return run_curve(model, gray, image, order, class_index, cfg.steps);
    }
    return {};
}

}  // namespace

Curve deletion_curve(const net::Classifier& model, const Image& image, const sal::Heatmap& hm, std::size_t class_index,
                     const CurveConfig& cfg) {
    check(image, hm, cfg);
    return curve(Kind::Deletion, model, image, pixel_order(hm.values), class_index, cfg);
}

Curve insertion_curve(const net::Classifier& model, const Image& image, const sal::Heatmap& hm,
                      std::size_t class_index, const CurveConfig& cfg) {
    check(image, hm, cfg);
    return curve(Kind::Insertion, model, image, pixel_order(hm.values), class_index, cfg);
}

Curve preservation_curve(const net::Classifier& model, const Image& image, const sal::Heatmap& hm,
                         std::size_t class_index, const CurveConfig& cfg) {
    check(image, hm, cfg);
    return curve(Kind::Preservation, model, image, pixel_order(hm.values), class_index, cfg);
}

CurveSet all_curves(const net::Classifier& model, const Image& image, const sal::Heatmap& hm, std::size_t class_index,
                    const CurveConfig& cfg) {
    check(image, hm, cfg);
    const auto order = pixel_order(hm.values);
    CurveSet s;
    s.deletion = curve(Kind::Deletion, model, image, order, class_index, cfg);
    s.insertion = curve(Kind::Insertion, model, image, order, class_index, cfg);
    if (cfg.insertion_baseline == InsertionBaseline::Gray) {
        s.preservation = s.insertion;  // identical trajectory under a gray baseline
    } else {
        s.preservation = curve(Kind::Preservation, model, image, order, class_index, cfg);
    }
    return s;
}

sal::Heatmap random_superpixel_ranking(int width, int height, int cell, std::uint64_t seed) {
    if (cell < 1 || width % cell != 0 || height % cell != 0) {
        throw ValidationError("random baseline: cell size " + std::to_string(cell) + " must divide the image sides " +
                              std::to_string(width) + "x" + std::to_string(height));
    }
    const int gw = width / cell, gh = height / cell;
    std::vector<int> order(static_cast<std::size_t>(gw) * gh);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    // The cell at position r of the permutation ranks r-th.
    std::vector<float> rank_value(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
        rank_value[static_cast<std::size_t>(order[r])] = static_cast<float>(order.size() - r);
    }
    sal::Heatmap hm(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            hm.values[static_cast<std::size_t>(y) * width + x] =
                rank_value[static_cast<std::size_t>(y / cell) * gw + x / cell] / static_cast<float>(order.size());
        }
    }
    return hm;
}

CurveSet random_baseline(const net::Classifier& model, const Image& image, std::size_t class_index, int cell,
                         std::uint64_t seed, const CurveConfig& cfg) {
    return all_curves(model, image, random_superpixel_ranking(image.width(), image.height(), cell, seed), class_index,
                      cfg);
}

double curve_ratio(const Curve& method, const Curve& baseline) {
    if (!(baseline.auc > 0.0)) throw ValidationError("curve ratio: baseline AUC is zero");
    return method.auc / baseline.auc;
}

Ratios curve_ratios(const CurveSet& method, const CurveSet& baseline) {
    return {curve_ratio(method.insertion, baseline.insertion), curve_ratio(method.deletion, baseline.deletion),
            curve_ratio(method.preservation, baseline.preservation)};
}

TuneResult tune_percentile(const explain::Pipeline& pipeline, const std::vector<Image>& images, int q_min, int q_max,
                           const explain::ExplainConfig& base, const CurveConfig& curves, int jobs) {
    if (images.empty()) throw ValidationError("tune: no images");
    if (q_min > q_max || q_min < 0 || q_max > 100) throw ValidationError("tune: invalid percentile grid");

    std::vector<explain::PartHeatmaps> maps(images.size());
    parallel_for(images.size(), jobs, [&](std::size_t i) {
        maps[i] = explain::part_heatmaps(pipeline, images[i], "tune-" + std::to_string(i));
    });

    TuneResult result;
    for (int q = q_min; q <= q_max; ++q) {
        explain::ExplainConfig cfg = base;
        cfg.percentile = q;
        std::vector<CurveSet> sets(images.size());
        parallel_for(images.size(), jobs, [&](std::size_t i) {
            const auto report = explain::finish_report(pipeline, images[i], maps[i], cfg);
            sets[i] = all_curves(*pipeline.holonym, images[i], report.global, report.holonym_index, curves);
        });
        TuneRow row;
        row.q = q;
        for (const auto& s : sets) {
            row.deletion += s.deletion.auc;
            row.insertion += s.insertion.auc;
            row.preservation += s.preservation.auc;
        }
        const auto n = static_cast<double>(sets.size());
        row.deletion /= n;
        row.insertion /= n;
        row.preservation /= n;
        row.objective = row.insertion - row.deletion + row.preservation;
        if (result.rows.empty() || row.objective > result.rows[static_cast<std::size_t>(result.best_q - q_min)].objective) {
            result.best_q = q;
        }
        result.rows.push_back(row);
    }
    return result;
}

std::string curve_svg(const std::vector<std::pair<std::string, const Curve*>>& curves, const std::string& title) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    constexpr int W = 480, H = 320, L = 50, R = 130, T = 30, B = 40;
    const double pw = W - L - R, ph = H - T - B;
    std::ostringstream s;
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << L << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">" << title << "</text>\n";
    s << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = t / 4.0;
        s << "<text x=\"" << num(L + v * pw) << "\" y=\"" << H - B + 15
          << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" << num(v) << "</text>\n";
        s << "<text x=\"" << L - 5 << "\" y=\"" << num(T + (1 - v) * ph + 3)
          << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" << num(v) << "</text>\n";
    }
    s << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 5
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">fraction of pixels</text>\n";
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const Curve& c = *curves[i].second;
        const char* color = colors[i % 6];
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < c.fractions.size(); ++k) {
            s << num(L + c.fractions[k] * pw) << "," << num(T + (1 - std::clamp(c.scores[k], 0.0, 1.0)) * ph) << " ";
        }
        s << "\"/>\n";
        const double ly = T + 12 + 16.0 * static_cast<double>(i);
        s << "<line x1=\"" << L + pw + 10 << "\" y1=\"" << num(ly) << "\" x2=\"" << L + pw + 25 << "\" y2=\""
          << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        s << "<text x=\"" << L + pw + 30 << "\" y=\"" << num(ly + 4) << "\" font-family=\"sans-serif\" font-size=\"10\">"
          << curves[i].first << " (" << num(c.auc) << ")</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace holmes::eval
