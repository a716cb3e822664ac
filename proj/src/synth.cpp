#include "holmes/synth.hpp"

#include "holmes/error.hpp"
#include "holmes/parallel.hpp"
#include "holmes/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace holmes::synth {

namespace fs = std::filesystem;
using nlohmann::json;

const BBox* Scene::box(const std::string& part) const {
    for (const auto& [name, b] : parts) {
        if (name == part) return &b;
    }
    return nullptr;
}

std::vector<std::string> parts_of(const std::string& holonym) {
    if (holonym == "alpha") return {"head", "torso", "tail"};
    if (holonym == "beta") return {"head", "torso", "horn"};
    throw ValidationError("synthetic holonym '" + holonym + "' has no parts");
}

std::string discriminative_part(const std::string& holonym) { return parts_of(holonym).back(); }

namespace {

std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

struct Painter {
    Image& img;
    Rng& rng;

    // Paints pixels whose centre satisfies `inside`, with per-pixel noise,
    // and returns their bounding box.
    template <typename Inside>
    BBox fill(Rgb base, Inside inside) {
        BBox b{img.width(), img.height(), 0, 0};
        const double shade_x = rng.uniform(-0.08, 0.08), shade_y = rng.uniform(-0.08, 0.08);
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                if (!inside(x + 0.5, y + 0.5)) continue;
                const double shade = 1.0 + shade_x * (x - img.width() / 2.0) / img.width() * 4.0 +
                                     shade_y * (y - img.height() / 2.0) / img.height() * 4.0;
                img.set(x, y, {clamp8(base.r * shade + rng.normal() * 6.0), clamp8(base.g * shade + rng.normal() * 6.0),
                               clamp8(base.b * shade + rng.normal() * 6.0)});
                b.x_min = std::min(b.x_min, x);
                b.y_min = std::min(b.y_min, y);
                b.x_max = std::max(b.x_max, x + 1);
                b.y_max = std::max(b.y_max, y + 1);
            }
        }
        return b;
    }
};

Rgb jitter(Rgb c, Rng& rng, double amount) {
    return {clamp8(c.r + rng.uniform(-amount, amount)), clamp8(c.g + rng.uniform(-amount, amount)),
            clamp8(c.b + rng.uniform(-amount, amount))};
}

}  // namespace

Scene render(const std::string& holonym, std::uint64_t seed, int size) {
    if (holonym != "alpha" && holonym != "beta" && holonym != "other") {
        throw ValidationError("unknown synthetic holonym '" + holonym + "'");
    }
    if (size < 64) throw ValidationError("synthetic images need size >= 64");
    Rng rng(seed);
    const double u = size / 112.0;
    Scene s;
    s.holonym = holonym;
    s.image = Image(size, size);

    // Background: tinted gray with a linear gradient and channel noise.
    const double g0 = rng.uniform(95.0, 165.0);
    const double gx = rng.uniform(-35.0, 35.0), gy = rng.uniform(-35.0, 35.0);
    const double tint[3] = {rng.uniform(-12, 12), rng.uniform(-12, 12), rng.uniform(-12, 12)};
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double base = g0 + gx * (x / (size - 1.0) - 0.5) + gy * (y / (size - 1.0) - 0.5);
            s.image.set(x, y, {clamp8(base + tint[0] + rng.normal() * 8.0), clamp8(base + tint[1] + rng.normal() * 8.0),
                               clamp8(base + tint[2] + rng.normal() * 8.0)});
        }
    }

    // Layout in local coordinates (facing right), then mirrored and shifted.
    const double tw = rng.uniform(30, 40) * u, th = rng.uniform(18, 24) * u;
    const double r = rng.uniform(8, 11) * u;
    const double gap = 3.0 * u;
    const double bar_w = rng.uniform(20, 26) * u, bar_h = rng.uniform(7, 9) * u;
    const double horn_w = rng.uniform(14, 18) * u, horn_h = rng.uniform(14, 18) * u;

    const double head_cx = tw / 2 + gap + r, head_cy = -th / 2 + r * 0.3;
    const double tail_y0 = rng.uniform(-th / 2 + 1, th / 2 - bar_h - 1);
    const double horn_base = head_cy - r - gap;

    double x_lo = -tw / 2 - gap - bar_w, x_hi = head_cx + r;
    double y_lo = std::min(-th / 2, horn_base - horn_h), y_hi = th / 2;
    const bool mirror = rng.bernoulli(0.5);
    if (mirror) std::swap(x_lo, x_hi), x_lo = -x_lo, x_hi = -x_hi;
    const double margin = 4.0 * u;
    const double ox = rng.uniform(margin - x_lo, size - margin - x_hi);
    const double oy = rng.uniform(margin - y_lo, size - margin - y_hi);
    auto X = [&](double lx) { return ox + (mirror ? -lx : lx); };
    auto Y = [&](double ly) { return oy + ly; };

    Painter paint{s.image, rng};
    const Rgb red = jitter({205, 45, 45}, rng, 20), green = jitter({45, 165, 65}, rng, 20);
    const Rgb blue = jitter({45, 70, 215}, rng, 20), yellow = jitter({225, 205, 45}, rng, 20);

    const double tx0 = std::min(X(-tw / 2), X(tw / 2)), tx1 = std::max(X(-tw / 2), X(tw / 2));
    const BBox torso = paint.fill(green, [&](double x, double y) {
        return x >= tx0 && x < tx1 && y >= Y(-th / 2) && y < Y(th / 2);
    });
    const double hx = X(head_cx), hy = Y(head_cy);
    const BBox head = paint.fill(red, [&](double x, double y) { return (x - hx) * (x - hx) + (y - hy) * (y - hy) <= r * r; });
    s.parts.emplace_back("head", head);
    s.parts.emplace_back("torso", torso);

    if (holonym == "alpha") {
        const double bx0 = std::min(X(-tw / 2 - gap), X(-tw / 2 - gap - bar_w));
        const double bx1 = std::max(X(-tw / 2 - gap), X(-tw / 2 - gap - bar_w));
        const BBox tail = paint.fill(blue, [&](double x, double y) {
            return x >= bx0 && x < bx1 && y >= Y(tail_y0) && y < Y(tail_y0 + bar_h);
        });
        s.parts.emplace_back("tail", tail);
    } else if (holonym == "beta") {
        const double apex_y = Y(horn_base - horn_h), base_y = Y(horn_base);
        const BBox horn = paint.fill(yellow, [&](double x, double y) {
            if (y < apex_y || y >= base_y) return false;
            const double half = horn_w / 2 * (y - apex_y) / horn_h;
            return std::abs(x - hx) <= half;
        });
        s.parts.emplace_back("horn", horn);
    }
    for (const auto& [name, b] : s.parts) {
        if (!b.valid()) throw PipelineError("synthetic part '" + name + "' rendered empty");
    }
    return s;
}

std::string kb_document() {
    return R"({"concepts": [
  {"id": "alpha", "hypernyms": ["shape"], "parts": [{"name": "head", "visible": true, "within": []}, {"name": "torso", "visible": true, "within": []}, {"name": "tail", "visible": true, "within": []}]},
  {"id": "beta", "hypernyms": ["shape"], "parts": [{"name": "head", "visible": true, "within": []}, {"name": "torso", "visible": true, "within": []}, {"name": "horn", "visible": true, "within": []}]},
  {"id": "shape", "hypernyms": [], "parts": []}
]}
)";
}

kb::HolMeMap make_kb() { return kb::load_kb(kb_document()); }

net::PreprocessConfig preprocessing(int size) {
    net::PreprocessConfig p;
    p.resize_shorter = size;
    p.crop = size;
    return p;
}

json backend_spec(std::uint64_t seed, int size) {
    return json{{"kind", "random-conv"},
                {"seed", seed},
                {"architecture", {32, 0, 0, 0}},
                {"preprocess", net::preprocess_to_json(preprocessing(size))}};
}

namespace {

std::uint64_t scene_seed(std::uint64_t seed, const std::string& tag, int i) {
    std::uint64_t h = seed;
    for (char c : tag) h = hash_combine(h, static_cast<unsigned char>(c));
    return hash_combine(h, static_cast<std::uint64_t>(i));
}

std::string id_of(const std::string& prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%04d", prefix.c_str(), i);
    return buf;
}

json box_json(const BBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

void write_annotations(const std::string& root, const std::string& holonym, int count, std::uint64_t seed, int size) {
    const fs::path dir = fs::path(root) / holonym;
    fs::create_directories(dir);
    for (int i = 0; i < count; ++i) {
        const Scene s = render(holonym, scene_seed(seed, "annot-" + holonym, i), size);
        const std::string stem = id_of(holonym + "_", i);
        write_file((dir / (stem + ".png")).string(), encode_png(s.image));
        json parts = json::array();
        for (const auto& [name, b] : s.parts) parts.push_back({{"name", name}, {"bbox", box_json(b)}});
        std::ofstream((dir / (stem + ".json")).string()) << json{{"image", stem + ".png"}, {"parts", parts}}.dump(1) << "\n";
    }
}

}  // namespace

void write_workspace(const std::string& dir, const WorkspaceSpec& spec) {
    const fs::path root(dir);
    fs::create_directories(root);
    std::ofstream(root / "kb.json") << kb_document();
    for (const std::string h : {"alpha", "beta"}) {
        write_annotations((root / "annotations").string(), h, spec.annotated_per_holonym, spec.seed, spec.size);
    }
    for (const auto& h : holonym_classes()) {
        const fs::path d = root / "holonyms" / h;
        fs::create_directories(d);
        for (int i = 0; i < spec.holonym_train_per_class; ++i) {
            const Scene s = render(h, scene_seed(spec.seed, "holonym-" + h, i), spec.size);
            write_file((d / (id_of(h + "_", i) + ".png")).string(), encode_png(s.image));
        }
    }
    fs::create_directories(root / "test");
    json gt = json::object();
    for (int i = 0; i < spec.test_images; ++i) {
        const std::string h = i % 2 == 0 ? "alpha" : "beta";
        const Scene s = render(h, scene_seed(spec.seed, "test", i), spec.size);
        const std::string file = "test/" + id_of(h + "_", i) + ".png";
        write_file((root / file).string(), encode_png(s.image));
        json parts = json::object();
        for (const auto& [name, b] : s.parts) parts[name] = box_json(b);
        gt[file] = {{"holonym", h}, {"parts", parts}};
    }
    std::ofstream(root / "test" / "ground_truth.json") << gt.dump(2) << "\n";

    const json config{
        {"seed", spec.seed},
        {"kb", "kb.json"},
        {"backend", backend_spec(spec.seed, spec.size)},
        {"holonyms", {"alpha", "beta"}},
        {"data", {{"annotations", "annotations"}, {"holonym_images", "holonyms"}}},
        {"dataset", {{"source", "annotations"}, {"dedupe_threshold", 4}, {"contamination", 0.15}}},
        {"train", {{"hidden", 64}, {"dropout", 0.2}, {"pool", 14}, {"epochs", 100}, {"batch", 32}, {"lr", 0.02}, {"patience", 10}, {"augment_views", 2}}},
        {"explain", {{"percentile", 83}, {"t_s", 10}, {"t_f1", 0.7}}},
        {"eval", {{"steps", 50}, {"cell", 16}, {"baseline_seeds", 3}, {"ground_truth", "test/ground_truth.json"}}},
        {"output", "out"}};
    std::ofstream(root / "config.json") << config.dump(2) << "\n";
}

BenchmarkConfig::BenchmarkConfig() {
    train.batch = 32;
    train.lr = 0.02;
    train.patience = 10;
    train.augment_views = 2;
}

Benchmark build_benchmark(const BenchmarkConfig& cfg, const std::string& workdir) {
    Benchmark b;
    b.extractor = net::make_extractor(backend_spec(cfg.seed, cfg.size));
    b.kb = std::make_unique<kb::HolMeMap>(make_kb());
    const auto& fe = *b.extractor;
    net::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;

    // Holonym classifier over whole scenes.
    const auto& classes = holonym_classes();
    std::vector<std::pair<std::size_t, std::uint64_t>> jobs;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        for (int i = 0; i < cfg.holonym_train_per_class + cfg.holonym_val_per_class; ++i) {
            jobs.emplace_back(c, scene_seed(cfg.seed, "holonym-" + classes[c], i));
        }
    }
    std::vector<net::FeatureSample> all(jobs.size());
    parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
        const Scene s = render(classes[jobs[i].first], jobs[i].second, cfg.size);
        all[i].label = jobs[i].first;
        all[i].views.push_back(fe.features(s.image));
        if (tc.augment.any()) {
            for (int v = 0; v < tc.augment_views; ++v) {
                all[i].views.push_back(fe.features(net::augment_view(s.image, hash_combine(jobs[i].second, v), tc.augment)));
            }
        }
    });
    std::vector<net::FeatureSample> train, val;
    const auto per_class = static_cast<std::size_t>(cfg.holonym_train_per_class + cfg.holonym_val_per_class);
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (i % per_class < static_cast<std::size_t>(cfg.holonym_train_per_class)) {
            train.push_back(std::move(all[i]));
        } else {
            all[i].views.resize(1);
            val.push_back(std::move(all[i]));
        }
    }
    const net::Head holonym_template = net::Head::classifier(fe.output_shape(), cfg.hidden, classes, cfg.dropout, cfg.pool);
    b.holonym = std::make_unique<net::SplitClassifier>(fe, net::fit_head(holonym_template, train, val, tc, &b.holonym_history));

    // Meronym models from annotated scenes.
    b.pipeline.holonym = b.holonym.get();
    b.pipeline.kb = b.kb.get();
    const std::string annotations = (fs::path(workdir) / "annotations").string();
    for (const std::string h : {"alpha", "beta"}) {
        write_annotations(annotations, h, cfg.annotated_per_holonym, cfg.seed, cfg.size);
        const auto parts = kb::resolve_parts(h, *b.kb);
        data::BuildRecipe recipe;
        recipe.dedupe_threshold = cfg.dedupe_threshold;
        recipe.contamination = cfg.contamination;
        recipe.seed = cfg.seed;
        auto ds = data::prepare_dataset(data::ingest_annotations(annotations, h, parts), fe, recipe);
        const net::Head tmpl = net::Head::classifier(fe.output_shape(), cfg.hidden, parts, cfg.dropout, cfg.pool);
        auto result = net::train_head(fe, tmpl, ds, tc, cfg.jobs);
        b.pipeline.meronyms[h] = explain::MeronymModel{result.head, result.test_f1};
        b.meronym_training[h] = std::move(result);
        b.datasets[h] = std::move(ds);
    }

    for (int i = 0; i < cfg.test_images; ++i) {
        b.test_scenes.push_back(render(i % 2 == 0 ? "alpha" : "beta", scene_seed(cfg.seed, "test", i), cfg.size));
    }
    return b;
}

}  // namespace holmes::synth
