#include "holmes/datakit.hpp"

#include "holmes/backend.hpp"
#include "holmes/error.hpp"
#include "holmes/rng.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace holmes::data {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Source s) {
    switch (s) {
        case Source::Crop: return "crop";
        case Source::Scrape: return "scrape";
        case Source::Augment: return "augment";
    }
    return "?";
}

std::string to_string(Fold f) {
    switch (f) {
        case Fold::Train: return "train";
        case Fold::Val: return "val";
        case Fold::Test: return "test";
    }
    return "?";
}

std::string to_string(Flag f) {
    switch (f) {
        case Flag::Kept: return "kept";
        case Flag::Duplicate: return "duplicate";
        case Flag::Outlier: return "outlier";
    }
    return "?";
}

Source source_from_string(const std::string& s) {
    if (s == "crop") return Source::Crop;
    if (s == "scrape") return Source::Scrape;
    if (s == "augment") return Source::Augment;
    throw ParseError("unknown sample source '" + s + "'");
}

Fold fold_from_string(const std::string& s) {
    if (s == "train") return Fold::Train;
    if (s == "val") return Fold::Val;
    if (s == "test") return Fold::Test;
    throw ParseError("unknown fold '" + s + "'");
}

Flag flag_from_string(const std::string& s) {
    if (s == "kept") return Flag::Kept;
    if (s == "duplicate") return Flag::Duplicate;
    if (s == "outlier") return Flag::Outlier;
    throw ParseError("unknown flag '" + s + "'");
}

Flag PartDataset::flag(const std::string& origin_id) const {
    auto it = flags.find(origin_id);
    return it == flags.end() ? Flag::Kept : it->second;
}

std::map<std::string, std::size_t> PartDataset::class_counts(bool kept_only) const {
    std::map<std::string, std::size_t> counts;
    for (const auto& c : classes) counts[c] = 0;
    for (const auto& s : samples) {
        if (!kept_only || kept(s.origin_id)) ++counts[s.label];
    }
    return counts;
}

const ImageSample* PartDataset::find(const std::string& origin_id) const {
    for (const auto& s : samples) {
        if (s.origin_id == origin_id) return &s;
    }
    return nullptr;
}

// ---- crop_part ----------------------------------------------------------------

ImageSample crop_part(const ImageSample& image, const BBox& box, const std::vector<BBox>& siblings, Rgb fill) {
    const Image& px = image.pixels;
    if (!box.valid() || !box.inside(px.width(), px.height())) {
        throw ValidationError("crop_part: degenerate or out-of-bounds box [" + std::to_string(box.x_min) + "," +
                              std::to_string(box.y_min) + "," + std::to_string(box.x_max) + "," +
                              std::to_string(box.y_max) + "]");
    }
    std::vector<BBox> blockers;
    for (const auto& s : siblings) {
        if (s.valid() && !s.intersects(box)) blockers.push_back(s);
    }
    auto free_strip = [&](const BBox& strip) {
        return std::none_of(blockers.begin(), blockers.end(), [&](const BBox& b) { return b.intersects(strip); });
    };

    BBox r = box;
    const bool horizontal = box.width() < box.height();
    int need = std::abs(box.width() - box.height());
    bool blocked[2] = {false, false};  // before (left/top), after (right/bottom)
    int turn = 0;
    while (need > 0 && !(blocked[0] && blocked[1])) {
        if (blocked[turn]) {
            turn ^= 1;
            continue;
        }
        BBox strip = r;
        bool inside;
        if (horizontal) {
            strip.x_min = turn == 0 ? r.x_min - 1 : r.x_max;
            strip.x_max = strip.x_min + 1;
            inside = strip.x_min >= 0 && strip.x_max <= px.width();
        } else {
            strip.y_min = turn == 0 ? r.y_min - 1 : r.y_max;
            strip.y_max = strip.y_min + 1;
            inside = strip.y_min >= 0 && strip.y_max <= px.height();
        }
        if (inside && free_strip(strip)) {
            if (horizontal) {
                (turn == 0 ? r.x_min : r.x_max) += turn == 0 ? -1 : 1;
            } else {
                (turn == 0 ? r.y_min : r.y_max) += turn == 0 ? -1 : 1;
            }
            --need;
        } else {
            blocked[turn] = true;
        }
        turn ^= 1;
    }

    const int side = std::max(box.width(), box.height());
    const int pad_before = need / 2;
    Image out(side, side, fill);
    const int ox = horizontal ? pad_before : 0;
    const int oy = horizontal ? 0 : pad_before;
    for (int y = r.y_min; y < r.y_max; ++y) {
        for (int x = r.x_min; x < r.x_max; ++x) out.set(ox + x - r.x_min, oy + y - r.y_min, px.get(x, y));
    }
    ImageSample sample;
    sample.pixels = std::move(out);
    sample.label = image.label;
    sample.source = Source::Crop;
    sample.origin_id = image.origin_id;
    return sample;
}

// ---- pHash ----------------------------------------------------------------------

namespace {

// Row i holds the fractional overlap of output cell i with each source pixel.
Eigen::MatrixXd area_weights(int out, int in) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(out, in);
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
        const double lo = i * scale, hi = (i + 1) * scale;
        for (int j = static_cast<int>(std::floor(lo)); j < std::min(in, static_cast<int>(std::ceil(hi))); ++j) {
            w(i, j) = std::min(hi, j + 1.0) - std::max(lo, static_cast<double>(j));
        }
        w.row(i) /= w.row(i).sum();
    }
    return w;
}

Eigen::MatrixXd dct_matrix(int n) {
    Eigen::MatrixXd c(n, n);
    for (int u = 0; u < n; ++u) {
        const double a = u == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
        for (int x = 0; x < n; ++x) c(u, x) = a * std::cos(std::numbers::pi * (2 * x + 1) * u / (2.0 * n));
    }
    return c;
}

}  // namespace

std::uint64_t phash(const Image& image) {
    if (image.empty()) throw ValidationError("phash: empty image");
    const auto y = luma(image);
    Eigen::MatrixXd lum(image.height(), image.width());
    for (int r = 0; r < image.height(); ++r) {
        for (int c = 0; c < image.width(); ++c) lum(r, c) = y[static_cast<std::size_t>(r) * image.width() + c];
    }
    const Eigen::MatrixXd small = area_weights(32, image.height()) * lum * area_weights(32, image.width()).transpose();
    static const Eigen::MatrixXd C = dct_matrix(32);
    const Eigen::MatrixXd D = C * small * C.transpose();

    std::array<double, 64> coef{};
    for (int u = 0; u < 8; ++u) {
        for (int v = 0; v < 8; ++v) {
            // Snap away round-off so flat regions give exact zeros.
            coef[u * 8 + v] = std::round(D(u + 1, v + 1) * 1e6) / 1e6;
        }
    }
    auto sorted = coef;
    std::sort(sorted.begin(), sorted.end());
    const double median = 0.5 * (sorted[31] + sorted[32]);
    std::uint64_t hash = 0;
    for (int i = 0; i < 64; ++i) {
        if (coef[i] > median) hash |= std::uint64_t{1} << i;
    }
    return hash;
}

int hamming_distance(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

PartDataset dedupe(PartDataset ds, int hamming_threshold) {
    if (hamming_threshold < 0 || hamming_threshold > 64) throw ValidationError("dedupe: threshold must be in [0, 64]");
    std::vector<const ImageSample*> order;
    for (const auto& s : ds.samples) {
        if (ds.kept(s.origin_id)) order.push_back(&s);
    }
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->origin_id < b->origin_id; });
    std::vector<std::uint64_t> kept_hashes;
    for (const auto* s : order) {
        const std::uint64_t h = phash(s->pixels);
        const bool dup = std::any_of(kept_hashes.begin(), kept_hashes.end(),
                                     [&](std::uint64_t k) { return hamming_distance(h, k) <= hamming_threshold; });
        if (dup) {
            ds.flags[s->origin_id] = Flag::Duplicate;
            ds.folds.erase(s->origin_id);
        } else {
            kept_hashes.push_back(h);
        }
    }
    return ds;
}

// ---- outliers -------------------------------------------------------------------

OutlierResult remove_outliers(const std::vector<std::vector<double>>& features, double contamination,
                              const OutlierOptions& options) {
    if (!(contamination >= 0.0 && contamination < 0.5)) {
        throw ValidationError("remove_outliers: contamination must be in [0, 0.5)");
    }
    const std::size_t N = features.size();
    if (N < 2) throw ValidationError("remove_outliers: need at least two vectors");
    const std::size_t D = features[0].size();
    if (D == 0) throw ValidationError("remove_outliers: empty feature vectors");
    for (const auto& f : features) {
        if (f.size() != D) throw ValidationError("remove_outliers: vectors differ in dimension");
    }

    Eigen::MatrixXd X(N, D);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < D; ++j) X(i, j) = features[i][j];
    }
    X.rowwise() -= X.colwise().mean();
    const double denom = static_cast<double>(N - 1);

    // proj(i, j) / sqrt(lambda_j) for every retained component j. The smaller
    // of the covariance and Gram eigenproblems gives the same spectrum.
    Eigen::VectorXd lambda;
    Eigen::MatrixXd normalized;
    if (D <= N) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((X.transpose() * X) / denom);
        lambda = es.eigenvalues();
        normalized = X * es.eigenvectors();
        for (Eigen::Index j = 0; j < lambda.size(); ++j) {
            normalized.col(j) /= std::sqrt(std::max(lambda(j), options.eigen_floor));
        }
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((X * X.transpose()) / denom);
        lambda = es.eigenvalues();
        // Projection onto axis j is sqrt(denom * lambda_j) * v_ij.
        normalized = es.eigenvectors() * std::sqrt(denom);
    }

    const double lambda_max = std::max(lambda.maxCoeff(), 0.0);
    const double floor = options.eigen_floor * std::max(1.0, lambda_max);
    std::vector<Eigen::Index> comps;
    for (Eigen::Index j = lambda.size(); j-- > 0;) {  // eigenvalues ascend; walk largest first
        if (lambda(j) > floor) comps.push_back(j);
    }
    if (options.variance_kept < 1.0) {
        const double total = std::accumulate(comps.begin(), comps.end(), 0.0,
                                             [&](double acc, Eigen::Index j) { return acc + lambda(j); });
        double acc = 0.0;
        std::size_t keep = 0;
        while (keep < comps.size() && acc < options.variance_kept * total) acc += lambda(comps[keep++]);
        comps.resize(std::max<std::size_t>(keep, 1));
    }

    OutlierResult r;
    r.scores.assign(N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        for (auto j : comps) r.scores[i] += normalized(static_cast<Eigen::Index>(i), j) * normalized(static_cast<Eigen::Index>(i), j);
    }
    const auto n_flag = static_cast<std::size_t>(std::floor(contamination * static_cast<double>(N) + 1e-9));
    std::vector<std::size_t> idx(N);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return r.scores[a] > r.scores[b]; });
    std::vector<bool> flagged(N, false);
    for (std::size_t k = 0; k < n_flag; ++k) flagged[idx[k]] = true;
    for (std::size_t i = 0; i < N; ++i) (flagged[i] ? r.flagged : r.kept).push_back(i);
    return r;
}

PartDataset flag_outliers(PartDataset ds, const net::FeatureExtractor& extractor, double contamination,
                          const OutlierOptions& options) {
    for (const auto& cls : ds.classes) {
        std::vector<const ImageSample*> members;
        for (const auto& s : ds.samples) {
            if (s.label == cls && s.source != Source::Augment && ds.kept(s.origin_id)) members.push_back(&s);
        }
        if (members.size() < 2) continue;
        std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return a->origin_id < b->origin_id; });
        std::vector<std::vector<double>> feats;
        for (const auto* s : members) {
            const Tensor f = extractor.features(s->pixels, s->origin_id);
            const std::size_t K = f.dim(0), HW = f.size() / K;
            std::vector<double> gap(K, 0.0);
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t j = 0; j < HW; ++j) gap[k] += f[k * HW + j];
                gap[k] /= static_cast<double>(HW);
            }
            feats.push_back(std::move(gap));
        }
        const auto res = remove_outliers(feats, contamination, options);
        for (auto i : res.flagged) {
            ds.flags[members[i]->origin_id] = Flag::Outlier;
            ds.folds.erase(members[i]->origin_id);
        }
    }
    return ds;
}

// ---- augmentation ---------------------------------------------------------------

Image augment_image(const Image& image, std::uint64_t seed, const AugmentConfig& cfg) {
    Rng rng(seed);
    const double rot = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
    const double shear = rng.uniform(-cfg.max_shear_deg, cfg.max_shear_deg);
    Image out = rotate_shear(image, rot, shear, cfg.fill);
    switch (rng.below(3)) {
        case 0: return gaussian_blur(out, rng.uniform(0.5, 1.5));
        case 1: {
            const double strength = rng.uniform(0.5, 1.5);
            return emboss(out, strength, rng.uniform(0.3, 0.7));
        }
        default: return add_gaussian_noise(out, rng.uniform(4.0, 12.0), rng);
    }
}

PartDataset balance_augment(PartDataset ds, std::uint64_t seed, const AugmentConfig& cfg) {
    auto counts = ds.class_counts(true);
    for (const auto& [cls, n] : counts) {
        if (n == 0) throw ValidationError("balance_augment: part class '" + cls + "' has no samples");
    }
    std::size_t largest = 0;
    for (const auto& [cls, n] : counts) largest = std::max(largest, n);
    const auto target = static_cast<std::size_t>(std::ceil((1.0 - cfg.tolerance) * static_cast<double>(largest) - 1e-9));

    std::vector<ImageSample> added;
    for (const auto& cls : ds.classes) {
        std::size_t have = counts[cls];
        if (have >= target) continue;
        std::vector<const ImageSample*> originals;
        for (const auto& s : ds.samples) {
            if (s.label != cls || s.source == Source::Augment || !ds.kept(s.origin_id)) continue;
            // Once folds exist, only training samples may seed copies.
            if (!ds.folds.empty()) {
                auto f = ds.folds.find(s.origin_id);
                if (f == ds.folds.end() || f->second != Fold::Train) continue;
            }
            originals.push_back(&s);
        }
        if (originals.empty()) {
            throw ValidationError("balance_augment: part class '" + cls + "' has only augmented samples");
        }
        std::sort(originals.begin(), originals.end(), [](auto* a, auto* b) { return a->origin_id < b->origin_id; });
        std::map<std::string, int> copies;
        for (std::size_t k = 0; have < target; ++k, ++have) {
            const ImageSample& parent = *originals[k % originals.size()];
            const int copy = copies[parent.origin_id]++;
            std::uint64_t h = seed;
            for (char ch : parent.origin_id) h = hash_combine(h, static_cast<unsigned char>(ch));
            ImageSample aug;
            aug.pixels = augment_image(parent.pixels, hash_combine(h, static_cast<std::uint64_t>(copy)), cfg);
            aug.label = cls;
            aug.source = Source::Augment;
            aug.parent_id = parent.origin_id;
            aug.origin_id = parent.origin_id + "#aug" + std::to_string(copy);
            added.push_back(std::move(aug));
        }
    }
    const bool assign = !ds.folds.empty();
    for (auto& a : added) {
        if (assign) ds.folds[a.origin_id] = Fold::Train;
        ds.samples.push_back(std::move(a));
    }
    return ds;
}

// ---- split ------------------------------------------------------------------------

PartDataset split(PartDataset ds, const SplitRatios& ratios, std::uint64_t seed) {
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
        throw ValidationError("split: ratios must be non-negative and sum to 1");
    }
    ds.folds.clear();
    std::vector<std::vector<std::string>> members(ds.classes.size());
    std::size_t total = 0;
    for (const auto& s : ds.samples) {
        if (!ds.kept(s.origin_id)) continue;
        if (s.source == Source::Augment) {
            ds.folds[s.origin_id] = Fold::Train;
            continue;
        }
        auto it = std::find(ds.classes.begin(), ds.classes.end(), s.label);
        if (it == ds.classes.end()) throw ValidationError("split: sample label '" + s.label + "' is not a dataset class");
        members[static_cast<std::size_t>(it - ds.classes.begin())].push_back(s.origin_id);
        ++total;
    }
    for (std::size_t c = 0; c < members.size(); ++c) {
        if (members[c].size() < 3) {
            throw ValidationError("split: part class '" + ds.classes[c] + "' has " + std::to_string(members[c].size()) +
                                  " eligible samples (need >= 3)");
        }
    }

    // Per-class floors, then the global remainder goes to the largest
    // fractional parts (class order breaks ties), at most one per class.
    auto apportion = [&](double ratio) {
        std::vector<std::size_t> n(members.size());
        std::vector<std::pair<double, std::size_t>> frac;
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < members.size(); ++c) {
            const double exact = ratio * static_cast<double>(members[c].size());
            n[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
            assigned += n[c];
            frac.emplace_back(exact - static_cast<double>(n[c]), c);
        }
        const auto target = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
        std::stable_sort(frac.begin(), frac.end(), [](auto& a, auto& b) { return a.first > b.first; });
        for (std::size_t k = 0; assigned < target && k < frac.size(); ++k, ++assigned) ++n[frac[k].second];
        return n;
    };
    const auto n_test = apportion(ratios.test);
    const auto n_val = apportion(ratios.val);

    for (std::size_t c = 0; c < members.size(); ++c) {
        auto ids = members[c];
        std::sort(ids.begin(), ids.end());
        Rng rng(hash_combine(seed, c));
        rng.shuffle(ids);
        const std::size_t t = std::min(n_test[c], ids.size());
        const std::size_t v = std::min(n_val[c], ids.size() - t);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            ds.folds[ids[i]] = i < t ? Fold::Test : (i < t + v ? Fold::Val : Fold::Train);
        }
    }
    return ds;
}

PartDataset prepare_dataset(PartDataset ds, const net::FeatureExtractor& extractor, const BuildRecipe& recipe) {
    if (ds.samples.empty()) throw ValidationError("dataset for '" + ds.holonym + "' has no samples");
    ds = dedupe(std::move(ds), recipe.dedupe_threshold);
    ds = flag_outliers(std::move(ds), extractor, recipe.contamination);
    ds = split(std::move(ds), recipe.ratios, recipe.seed);
    return balance_augment(std::move(ds), recipe.seed, recipe.augment);
}

// ---- scraping -----------------------------------------------------------------------

std::vector<Payload> EngineClient::similar(const Payload&, int) { return {}; }

DirectoryEngine::DirectoryEngine(std::string name, std::string directory, bool similar)
    : name_(std::move(name)), directory_(std::move(directory)), similar_(similar) {}

std::vector<Payload> DirectoryEngine::query(const std::string& term, int limit) {
    std::string sub = term;
    std::replace(sub.begin(), sub.end(), ' ', '_');
    fs::path dir = fs::path(directory_) / sub;
    if (!fs::is_directory(dir)) dir = directory_;
    if (!fs::is_directory(dir)) throw PipelineError(name_ + ": fixture directory '" + dir.string() + "' missing");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Payload> out;
    for (const auto& f : files) {
        if (static_cast<int>(out.size()) >= limit) break;
        out.push_back(read_file(f.string()));
    }
    return out;
}

std::vector<Payload> DirectoryEngine::similar(const Payload& image, int limit) {
    const Image base = decode_image(image);
    std::vector<Payload> out;
    for (int k = 0; k < limit; ++k) {
        const double b = 0.85 + 0.06 * k;
        Image v = color_jitter(k % 2 ? hflip(base) : base, b, 1.0, 1.0);
        out.push_back(encode_png(v));
    }
    return out;
}

std::vector<ImageSample> scrape_part(const std::string& holonym, const std::string& part,
                                     const std::vector<EngineClient*>& engines, const std::vector<int>& limits,
                                     int similar_limit, std::vector<std::string>* warnings) {
    static constexpr int kDefaultLimits[] = {40, 60};
    const std::string term = holonym + " " + part;
    std::vector<ImageSample> out;
    auto warn = [&](const std::string& msg) {
        if (warnings != nullptr) warnings->push_back(msg);
    };
    auto add = [&](const Payload& p, const std::string& id) {
        try {
            ImageSample s;
            s.pixels = decode_image(p);
            s.label = part;
            s.source = Source::Scrape;
            s.origin_id = id;
            out.push_back(std::move(s));
            return true;
        } catch (const ParseError& e) {
            warn(id + ": undecodable payload skipped (" + e.what() + ")");
            return false;
        }
    };
    for (std::size_t e = 0; e < engines.size(); ++e) {
        EngineClient* engine = engines[e];
        int limit = e < limits.size() ? limits[e] : (e < 2 ? kDefaultLimits[e] : kMaxDownloadsPerEngine);
        limit = std::clamp(limit, 0, kMaxDownloadsPerEngine);
        if (limit == 0) continue;
        try {
            const auto payloads = engine->query(term, limit);
            const std::size_t n = std::min(payloads.size(), static_cast<std::size_t>(limit));
            for (std::size_t i = 0; i < n; ++i) {
                const std::string id = holonym + "/" + part + "/" + engine->name() + "-" + std::to_string(i);
                if (!add(payloads[i], id) || similar_limit <= 0 || !engine->supports_similar()) continue;
                const auto extra = engine->similar(payloads[i], similar_limit);
                for (std::size_t k = 0; k < std::min(extra.size(), static_cast<std::size_t>(similar_limit)); ++k) {
                    add(extra[k], id + "-sim" + std::to_string(k));
                }
            }
        } catch (const std::exception& ex) {
            warn(engine->name() + ": query '" + term + "' failed: " + ex.what());
        }
    }
    if (out.empty()) throw PipelineError("scrape_part: no images collected for '" + term + "'");
    return out;
}

// ---- ingestion ------------------------------------------------------------------------

Annotation parse_annotation(const std::string& json_text) {
    try {
        const json doc = json::parse(json_text);
        Annotation a;
        a.image = doc.at("image").get<std::string>();
        for (const auto& p : doc.at("parts")) {
            const auto bb = p.at("bbox").get<std::vector<int>>();
            if (bb.size() != 4) throw ParseError("annotation: bbox must have four integers");
            a.parts.push_back({p.at("name").get<std::string>(), BBox{bb[0], bb[1], bb[2], bb[3]}});
        }
        return a;
    } catch (const json::exception& e) {
        throw ParseError("annotation: " + std::string(e.what()));
    }
}

PartDataset ingest_annotations(const std::string& root, const std::string& holonym,
                               const std::vector<std::string>& parts, std::vector<std::string>* warnings) {
    const fs::path dir = fs::path(root) / holonym;
    if (!fs::is_directory(dir)) throw ValidationError("ingest: no directory '" + dir.string() + "'");
    std::vector<fs::path> sidecars;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json") sidecars.push_back(e.path());
    }
    std::sort(sidecars.begin(), sidecars.end());
    const std::set<std::string> wanted(parts.begin(), parts.end());

    PartDataset ds;
    ds.holonym = holonym;
    ds.classes = parts;
    for (const auto& sc : sidecars) {
        std::ifstream in(sc);
        std::stringstream ss;
        ss << in.rdbuf();
        const Annotation a = parse_annotation(ss.str());
        ImageSample whole;
        whole.pixels = read_image((sc.parent_path() / a.image).string());
        std::vector<BBox> boxes;
        for (const auto& p : a.parts) boxes.push_back(p.box);
        std::map<std::string, int> instance;
        for (std::size_t i = 0; i < a.parts.size(); ++i) {
            const auto& p = a.parts[i];
            if (!wanted.count(p.name)) {
                if (warnings != nullptr) warnings->push_back(sc.filename().string() + ": part '" + p.name + "' not in part list");
                continue;
            }
            std::vector<BBox> siblings;
            for (std::size_t j = 0; j < boxes.size(); ++j) {
                if (j != i) siblings.push_back(boxes[j]);
            }
            whole.label = p.name;
            whole.origin_id = holonym + "/" + sc.stem().string() + "/" + p.name + "#" + std::to_string(instance[p.name]++);
            ds.samples.push_back(crop_part(whole, p.box, siblings));
        }
    }
    return ds;
}

PartDataset ingest_folders(const std::string& root, const std::string& holonym, const std::vector<std::string>& parts,
                           Source source) {
    PartDataset ds;
    ds.holonym = holonym;
    ds.classes = parts;
    for (const auto& part : parts) {
        const fs::path dir = fs::path(root) / holonym / part;
        if (!fs::is_directory(dir)) continue;
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file()) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            ImageSample s;
            s.pixels = read_image(f.string());
            s.label = part;
            s.source = source;
            s.origin_id = holonym + "/" + part + "/" + f.filename().string();
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

// ---- manifest -----------------------------------------------------------------------------

void write_manifest(const PartDataset& ds, const std::string& dir, const json& config) {
    fs::create_directories(fs::path(dir) / "images");
    std::vector<const ImageSample*> order;
    for (const auto& s : ds.samples) order.push_back(&s);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->origin_id < b->origin_id; });

    json samples = json::array();
    json counts = json::object();
    std::map<std::string, std::map<std::string, int>> fold_counts;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const ImageSample& s = *order[i];
        char name[32];
        std::snprintf(name, sizeof name, "%06zu.png", i);
        const std::string file = std::string("images/") + name;
        write_file((fs::path(dir) / file).string(), encode_png(s.pixels));
        json j{{"origin_id", s.origin_id}, {"label", s.label},         {"source", to_string(s.source)},
               {"file", file},             {"flag", to_string(ds.flag(s.origin_id))}};
        if (auto it = ds.folds.find(s.origin_id); it != ds.folds.end()) {
            j["fold"] = to_string(it->second);
            ++fold_counts[s.label][to_string(it->second)];
        } else {
            j["fold"] = nullptr;
        }
        if (!s.parent_id.empty()) j["parent"] = s.parent_id;
        samples.push_back(std::move(j));
    }
    for (const auto& [label, m] : fold_counts) counts[label] = m;
    json doc{{"format", "holmes-dataset/1"}, {"holonym", ds.holonym}, {"classes", ds.classes},
             {"config", config},            {"fold_counts", counts}, {"samples", samples}};
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!out) throw PipelineError("cannot write manifest in '" + dir + "'");
    out << doc.dump(2) << "\n";
}

PartDataset load_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ValidationError("cannot open dataset manifest '" + manifest_path + "'");
    try {
        json doc;
        in >> doc;
        PartDataset ds;
        ds.holonym = doc.at("holonym").get<std::string>();
        ds.classes = doc.at("classes").get<std::vector<std::string>>();
        const fs::path dir = fs::path(manifest_path).parent_path();
        for (const auto& j : doc.at("samples")) {
            ImageSample s;
            s.origin_id = j.at("origin_id").get<std::string>();
            s.label = j.at("label").get<std::string>();
            s.source = source_from_string(j.at("source").get<std::string>());
            s.parent_id = j.value("parent", std::string{});
            s.pixels = read_image((dir / j.at("file").get<std::string>()).string());
            const Flag f = flag_from_string(j.at("flag").get<std::string>());
            if (f != Flag::Kept) ds.flags[s.origin_id] = f;
            if (!j.at("fold").is_null()) ds.folds[s.origin_id] = fold_from_string(j.at("fold").get<std::string>());
            ds.samples.push_back(std::move(s));
        }
        return ds;
    } catch (const json::exception& e) {
        throw ParseError("manifest '" + manifest_path + "': " + e.what());
    }
}

}  // namespace holmes::data
