#include "holmes/cli.hpp"

#include "holmes/backend.hpp"
#include "holmes/datakit.hpp"
#include "holmes/error.hpp"
#include "holmes/evalkit.hpp"
#include "holmes/explain.hpp"
#include "holmes/kb.hpp"
#include "holmes/parallel.hpp"
#include "holmes/rng.hpp"
#include "holmes/synth.hpp"
#include "holmes/train.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace holmes::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- configuration ------------------------------------------------------------

const json& defaults() {
    static const json d = {
        {"kb", "pascal"},
        {"holonyms", json::array()},
        {"data", json::object()},
        {"dataset",
         {{"source", "annotations"},
          {"dedupe_threshold", 10},
          {"contamination", 0.15},
          {"ratios", {0.81, 0.09, 0.10}},
          {"augment", {{"max_rotation_deg", 25.0}, {"max_shear_deg", 15.0}, {"tolerance", 0.05}}}}},
        {"train",
         {{"hidden", 4096},
          {"dropout", 0.5},
          {"pool", 2},
          {"epochs", 100},
          {"batch", 64},
          {"lr", 0.001},
          {"patience", 5},
          {"momentum", 0.9},
          {"augment_views", 4},
          {"augment",
           {{"hflip", true}, {"rotation", true}, {"crop", true}, {"color_jitter", true}, {"grayscale", true}}}}},
        {"explain", {{"percentile", 83.0}, {"t_s", 10.0}, {"t_f1", 0.7}}},
        {"eval",
         {{"steps", 100}, {"cell", 16}, {"baseline_seeds", 3}, {"insertion_baseline", "gray"}, {"tune_min", 75},
          {"tune_max", 90}}},
        {"output", "holmes-out"}};
    return d;
}

struct RunConfig {
    json doc;       // defaults merged with the file and overrides
    fs::path base;  // relative paths resolve against the config file's directory

    std::uint64_t seed() const { return doc.at("seed").get<std::uint64_t>(); }
    fs::path resolve(const std::string& p) const {
        const fs::path q(p);
        return q.is_absolute() ? q : base / q;
    }
    fs::path output() const { return resolve(doc.at("output").get<std::string>()); }
    const json& section(const char* name) const { return doc.at(name); }
};

json parse_override_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return text;
    }
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    if (path.empty()) throw ValidationError("a config file is required (--config)");
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path + "'");
    json user;
    try {
        in >> user;
    } catch (const json::exception& e) {
        throw ParseError("config '" + path + "': " + e.what());
    }
    if (!user.is_object()) throw ParseError("config '" + path + "': top level must be an object");
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + o + "' must be key.path=value");
        json::json_pointer ptr;
        std::stringstream keys(o.substr(0, eq));
        for (std::string k; std::getline(keys, k, '.');) ptr /= k;
        user[ptr] = parse_override_value(o.substr(eq + 1));
    }
    RunConfig c;
    c.doc = defaults();
    c.doc.merge_patch(user);
    c.base = fs::absolute(path).parent_path();
    if (!c.doc.contains("seed") || !c.doc["seed"].is_number_unsigned()) {
        throw ValidationError("config '" + path + "': a non-negative integer \"seed\" is mandatory");
    }
    return c;
}

kb::HolMeMap load_kb_from(const RunConfig& cfg) {
    const std::string name = cfg.doc.at("kb").get<std::string>();
    const std::string located = kb::bundled_kb_path(name);
    const fs::path p = located == name ? cfg.resolve(name) : fs::path(located);
    if (!fs::exists(p)) throw ValidationError("knowledge base '" + p.string() + "' not found");
    return kb::load_kb_file(p.string());
}

std::vector<std::string> holonyms_of(const RunConfig& cfg, const std::vector<std::string>& flags) {
    if (!flags.empty()) return flags;
    auto h = cfg.doc.at("holonyms").get<std::vector<std::string>>();
    if (h.empty()) throw ValidationError("no holonyms given (--holonym or config \"holonyms\")");
    return h;
}

// ---- feature cache ------------------------------------------------------------------

class CachedExtractor : public net::FeatureExtractor {
public:
    CachedExtractor(std::unique_ptr<net::FeatureExtractor> inner, fs::path dir)
        : inner_(std::move(inner)), dir_(std::move(dir)) {
        fs::create_directories(dir_);
        tag_ = 0x5eed;
        for (char c : inner_->describe()) tag_ = hash_combine(tag_, static_cast<unsigned char>(c));
    }

    std::vector<std::size_t> output_shape() const override { return inner_->output_shape(); }
    const net::PreprocessConfig& preprocessing() const override { return inner_->preprocessing(); }
    std::string describe() const override { return inner_->describe(); }
    std::optional<Tensor> lookup(const std::string& id) const override { return inner_->lookup(id); }

    Tensor extract(const Tensor& input) const override {
        std::uint64_t h = tag_;
        for (float v : input.data()) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            h = hash_combine(h, bits);
        }
        char name[32];
        std::snprintf(name, sizeof name, "%016llx.htf", static_cast<unsigned long long>(h));
        const fs::path file = dir_ / name;
        if (fs::exists(file)) {
            Tensor t = load_htf(file.string());
            if (t.shape() == inner_->output_shape()) return t;
        }
        Tensor t = inner_->extract(input);
        const fs::path tmp = dir_ / (std::string(name) + ".tmp" + std::to_string(mix64(reinterpret_cast<std::uintptr_t>(&t))));
        save_htf(tmp.string(), t);
        std::error_code ec;
        fs::rename(tmp, file, ec);
        if (ec) fs::remove(tmp, ec);
        return t;
    }

private:
    std::unique_ptr<net::FeatureExtractor> inner_;
    fs::path dir_;
    std::uint64_t tag_ = 0;
};

std::unique_ptr<net::FeatureExtractor> make_backend(const RunConfig& cfg) {
    if (!cfg.doc.contains("backend")) throw ValidationError("config has no \"backend\" section");
    auto fe = net::make_extractor(cfg.doc.at("backend"), cfg.base.string());
    if (const char* dir = std::getenv("HOLMES_CACHE_DIR"); dir != nullptr && *dir != '\0') {
        return std::make_unique<CachedExtractor>(std::move(fe), fs::path(dir) / "features");
    }
    return fe;
}

net::TrainConfig train_config(const RunConfig& cfg) {
    const json& t = cfg.section("train");
    net::TrainConfig tc;
    tc.epochs = t.at("epochs").get<int>();
    tc.batch = t.at("batch").get<int>();
    tc.lr = t.at("lr").get<double>();
    tc.patience = t.at("patience").get<int>();
    tc.momentum = t.at("momentum").get<double>();
    tc.augment_views = t.at("augment_views").get<int>();
    tc.seed = cfg.seed();
    const json& a = t.at("augment");
    tc.augment.hflip = a.value("hflip", true);
    tc.augment.rotation = a.value("rotation", true);
    tc.augment.crop = a.value("crop", true);
    tc.augment.color_jitter = a.value("color_jitter", true);
    tc.augment.grayscale = a.value("grayscale", true);
    tc.validate();
    return tc;
}

net::Head head_template(const RunConfig& cfg, const net::FeatureExtractor& fe, std::vector<std::string> classes) {
    const json& t = cfg.section("train");
    return net::Head::classifier(fe.output_shape(), t.at("hidden").get<std::size_t>(), std::move(classes),
                                 t.at("dropout").get<double>(), t.at("pool").get<int>());
}

explain::ExplainConfig explain_config(const RunConfig& cfg) {
    return explain::ExplainConfig::from_json(cfg.section("explain"));
}

eval::CurveConfig curve_config(const RunConfig& cfg) {
    const json& e = cfg.section("eval");
    eval::CurveConfig c;
    c.steps = e.at("steps").get<int>();
    const std::string b = e.at("insertion_baseline").get<std::string>();
    if (b == "blur") {
        c.insertion_baseline = eval::InsertionBaseline::Blur;
    } else if (b != "gray") {
        throw ValidationError("eval.insertion_baseline must be \"gray\" or \"blur\"");
    }
    if (c.steps < 1) throw ValidationError("eval.steps must be >= 1");
    return c;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    if (!f) throw PipelineError("cannot write '" + path.string() + "'");
    f << text;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw ParseError("'" + path.string() + "': " + e.what());
    }
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

fs::path models_dir(const RunConfig& cfg) {
    const json& m = cfg.doc.value("models", json::object());
    return m.contains("dir") ? cfg.resolve(m["dir"].get<std::string>()) : cfg.output() / "models";
}

fs::path holonym_model_path(const RunConfig& cfg) {
    const json& m = cfg.doc.value("models", json::object());
    return m.contains("holonym") ? cfg.resolve(m["holonym"].get<std::string>()) : models_dir(cfg) / "holonym" / "head.json";
}

// ---- commands -------------------------------------------------------------------------

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    int jobs = 1;
};

int cmd_parts(const std::string& concept_id, const std::string& kb_name, bool as_json, std::ostream& out) {
    const auto kb = kb::load_kb_file(kb::bundled_kb_path(kb_name));
    std::vector<std::string> parts;
    try {
        parts = kb::resolve_parts(concept_id, kb);
    } catch (const ResolutionError& e) {
        throw ValidationError(e.what());
    }
    if (as_json) {
        out << json{{"concept", concept_id}, {"parts", parts}}.dump() << "\n";
    } else {
        for (const auto& p : parts) out << p << "\n";
    }
    return kExitOk;
}

data::PartDataset collect(const RunConfig& cfg, const std::string& holonym, const std::vector<std::string>& parts,
                          std::vector<std::string>& warnings) {
    const json& data = cfg.section("data");
    const std::string source = cfg.section("dataset").at("source").get<std::string>();
    auto root = [&](const char* key) {
        if (!data.contains(key)) throw ValidationError(std::string("config data.") + key + " is required for source '" + source + "'");
        const fs::path p = cfg.resolve(data.at(key).get<std::string>());
        if (!fs::is_directory(p)) throw ValidationError("data root '" + p.string() + "' does not exist");
        return p.string();
    };
    if (source == "annotations") return data::ingest_annotations(root("annotations"), holonym, parts, &warnings);
    if (source == "folders") return data::ingest_folders(root("folders"), holonym, parts, data::Source::Scrape);
    if (source == "scrape") {
        const json& sc = data.at("scrape");
        std::vector<std::unique_ptr<data::DirectoryEngine>> engines;
        std::vector<data::EngineClient*> ptrs;
        for (const auto& e : sc.at("engines")) {
            engines.push_back(std::make_unique<data::DirectoryEngine>(
                e.at("name").get<std::string>(), cfg.resolve(e.at("dir").get<std::string>()).string(), e.value("similar", false)));
            ptrs.push_back(engines.back().get());
        }
        const auto limits = sc.value("limits", std::vector<int>{});
        const int similar = sc.value("similar_limit", 5);
        data::PartDataset ds;
        ds.holonym = holonym;
        ds.classes = parts;
        for (const auto& p : parts) {
            for (auto& s : data::scrape_part(holonym, p, ptrs, limits, similar, &warnings)) ds.samples.push_back(std::move(s));
        }
        return ds;
    }
    throw ValidationError("dataset.source must be annotations, folders or scrape");
}

int cmd_build(const Common& c, const std::vector<std::string>& holonym_flags, std::ostream& out, std::ostream& err) {
    const RunConfig cfg = load_config(c.config, c.overrides);
    const auto kb = load_kb_from(cfg);
    const auto fe = make_backend(cfg);
    const json& d = cfg.section("dataset");
    data::BuildRecipe recipe;
    recipe.dedupe_threshold = d.at("dedupe_threshold").get<int>();
    recipe.contamination = d.at("contamination").get<double>();
    const auto r = d.at("ratios").get<std::vector<double>>();
    if (r.size() != 3) throw ValidationError("dataset.ratios must have three entries");
    recipe.ratios = {r[0], r[1], r[2]};
    recipe.augment.max_rotation_deg = d.at("augment").value("max_rotation_deg", 25.0);
    recipe.augment.max_shear_deg = d.at("augment").value("max_shear_deg", 15.0);
    recipe.augment.tolerance = d.at("augment").value("tolerance", 0.05);
    recipe.seed = cfg.seed();

    for (const auto& h : holonyms_of(cfg, holonym_flags)) {
        const auto parts = kb::resolve_parts(h, kb);
        std::vector<std::string> warnings;
        auto ds = collect(cfg, h, parts, warnings);
        if (ds.samples.empty()) throw ValidationError("no images found for holonym '" + h + "'");
        for (const auto& w : warnings) err << "warning: " << w << "\n";
        ds = data::prepare_dataset(std::move(ds), *fe, recipe);
        const fs::path dir = cfg.output() / "datasets" / h;
        data::write_manifest(ds, dir.string(), cfg.doc);
        std::map<std::string, std::map<data::Fold, int>> folds;
        for (const auto& [id, f] : ds.folds) ++folds[ds.find(id)->label][f];
        std::size_t dup = 0, outl = 0;
        for (const auto& [id, f] : ds.flags) (f == data::Flag::Duplicate ? dup : outl)++;
        out << h << ": " << ds.samples.size() << " samples, " << dup << " duplicates, " << outl << " outliers -> "
            << (dir / "manifest.json").string() << "\n";
        for (const auto& p : ds.classes) {
            out << "  " << p << " train=" << folds[p][data::Fold::Train] << " val=" << folds[p][data::Fold::Val]
                << " test=" << folds[p][data::Fold::Test] << "\n";
        }
    }
    return kExitOk;
}

json history_json(const net::TrainHistory& h) {
    json epochs = json::array();
    for (const auto& e : h.epochs) {
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_accuracy", e.val_accuracy}});
    }
    return {{"best_epoch", h.best_epoch}, {"stopped_epoch", h.stopped_epoch}, {"best_val_loss", h.best_val_loss}, {"epochs", epochs}};
}

void save_training(const fs::path& dir, const net::TrainResult& r, const json& config, std::ostream& out,
                   const std::string& title, const char* column = "part") {
    fs::create_directories(dir);
    net::save_head(r.head, (dir / "head.json").string());
    std::string log = "epoch,train_loss,val_loss,val_accuracy\n";
    for (const auto& e : r.history.epochs) {
        log += std::to_string(e.epoch) + "," + fmt(e.train_loss) + "," + fmt(e.val_loss) + "," + fmt(e.val_accuracy) + "\n";
    }
    write_text(dir / "train_log.csv", log);
    json f1 = json::object();
    for (std::size_t i = 0; i < r.head.num_classes(); ++i) f1[r.head.classes()[i]] = r.test_f1[i];
    const json metrics{{"classes", r.head.classes()},
                       {"calibrated_f1", r.test_f1},
                       {"f1_by_class", f1},
                       {"test_confusion", r.test_confusion},
                       {"history", history_json(r.history)},
                       {"optimizer", {{"kind", "sgd-momentum"}}},
                       {"config", config},
                       {"complete", true}};
    write_text(dir / "metrics.json", metrics.dump(2) + "\n");
    out << title << " (best epoch " << r.history.best_epoch << ", stopped " << r.history.stopped_epoch << ")\n";
    char header[64];
    std::snprintf(header, sizeof header, "  %-15s calibrated F1\n", column);
    out << header;
    for (std::size_t i = 0; i < r.head.num_classes(); ++i) {
        char line[96];
        std::snprintf(line, sizeof line, "  %-15s %.4f\n", r.head.classes()[i].c_str(), r.test_f1[i]);
        out << line;
    }
}

bool finished(const fs::path& dir, const json& config) {
    if (!fs::exists(dir / "metrics.json") || !fs::exists(dir / "head.json")) return false;
    try {
        const json m = read_json(dir / "metrics.json");
        return m.value("complete", false) && m.value("config", json()) == config;
    } catch (const Error&) {
        return false;
    }
}

int cmd_train(const Common& c, const std::vector<std::string>& holonym_flags, const std::string& target, bool resume,
              std::ostream& out) {
    const RunConfig cfg = load_config(c.config, c.overrides);
    const auto fe = make_backend(cfg);
    const auto tc = train_config(cfg);

    if (target == "holonym") {
        const fs::path dir = models_dir(cfg) / "holonym";
        if (resume && finished(dir, cfg.doc)) {
            out << "holonym classifier already trained; nothing to do\n";
            return kExitOk;
        }
        const json& data = cfg.section("data");
        if (!data.contains("holonym_images")) throw ValidationError("config data.holonym_images is required");
        const fs::path root = cfg.resolve(data.at("holonym_images").get<std::string>());
        if (!fs::is_directory(root)) throw ValidationError("holonym image root '" + root.string() + "' does not exist");
        std::vector<std::string> classes = cfg.doc.value("holonym_classes", std::vector<std::string>{});
        if (classes.empty()) {
            for (const auto& e : fs::directory_iterator(root)) {
                if (e.is_directory()) classes.push_back(e.path().filename().string());
            }
            std::sort(classes.begin(), classes.end());
        }
        if (classes.size() < 2) throw ValidationError("holonym classifier needs at least two class folders");
        auto ds = data::ingest_folders(root.parent_path().string(), root.filename().string(), classes);
        ds = data::split(std::move(ds), data::SplitRatios{}, cfg.seed());
        const auto r = net::train_head(*fe, head_template(cfg, *fe, classes), ds, tc, c.jobs);
        save_training(dir, r, cfg.doc, out, "holonym classifier", "class");
        return kExitOk;
    }
    if (target != "meronym") throw ValidationError("--target must be meronym or holonym");

    for (const auto& h : holonyms_of(cfg, holonym_flags)) {
        const fs::path dir = models_dir(cfg) / h;
        if (resume && finished(dir, cfg.doc)) {
            out << h << ": already trained; nothing to do\n";
            continue;
        }
        const fs::path manifest = cfg.output() / "datasets" / h / "manifest.json";
        if (!fs::exists(manifest)) {
            throw ValidationError("no dataset for '" + h + "' at " + manifest.string() + "; run `holmes build` first");
        }
        const auto ds = data::load_manifest(manifest.string());
        const auto r = net::train_head(*fe, head_template(cfg, *fe, ds.classes), ds, tc, c.jobs);
        save_training(dir, r, cfg.doc, out, h + " meronym model");
    }
    return kExitOk;
}

struct LoadedModels {
    std::unique_ptr<net::FeatureExtractor> fe;
    std::unique_ptr<net::SplitClassifier> holonym;
    kb::HolMeMap kb;
    explain::Pipeline pipeline;
};

LoadedModels load_models(const RunConfig& cfg) {
    LoadedModels m;
    m.fe = make_backend(cfg);
    m.kb = load_kb_from(cfg);
    const fs::path hp = holonym_model_path(cfg);
    if (!fs::exists(hp)) {
        throw ValidationError("holonym classifier '" + hp.string() + "' not found; run `holmes train --target holonym`");
    }
    m.holonym = std::make_unique<net::SplitClassifier>(*m.fe, net::load_head(hp.string()));
    m.pipeline.holonym = m.holonym.get();
    m.pipeline.kb = &m.kb;
    const fs::path dir = models_dir(cfg);
    if (fs::is_directory(dir)) {
        std::vector<fs::path> subdirs;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_directory() && e.path().filename() != "holonym") subdirs.push_back(e.path());
        }
        std::sort(subdirs.begin(), subdirs.end());
        for (const auto& d : subdirs) {
            if (!fs::exists(d / "head.json") || !fs::exists(d / "metrics.json")) continue;
            const json metrics = read_json(d / "metrics.json");
            explain::MeronymModel mm{net::load_head((d / "head.json").string()),
                                     metrics.at("calibrated_f1").get<std::vector<double>>()};
            m.pipeline.meronyms[d.filename().string()] = std::move(mm);
        }
    }
    return m;
}

std::vector<std::string> report_stems(const std::vector<std::string>& images) {
    std::vector<std::string> stems;
    std::set<std::string> used;
    for (std::size_t i = 0; i < images.size(); ++i) {
        std::string s = fs::path(images[i]).stem().string();
        if (used.count(s)) s += "-" + std::to_string(i);
        used.insert(s);
        stems.push_back(s);
    }
    return stems;
}

int cmd_explain(const Common& c, const std::vector<std::string>& images, const std::string& out_dir, std::ostream& out,
                std::ostream& err) {
    const RunConfig cfg = load_config(c.config, c.overrides);
    if (images.empty()) throw ValidationError("no images given");
    for (const auto& p : images) {
        if (!fs::exists(p)) throw ValidationError("image '" + p + "' not found");
    }
    const auto models = load_models(cfg);
    const auto ecfg = explain_config(cfg);
    const fs::path dir = out_dir.empty() ? cfg.output() / "reports" : fs::path(out_dir);
    const auto stems = report_stems(images);

    std::vector<explain::ExplanationReport> reports(images.size());
    std::vector<std::string> failures(images.size());
    parallel_for(images.size(), c.jobs, [&](std::size_t i) {
        const Image img = read_image(images[i]);
        try {
            reports[i] = explain::explain_image(models.pipeline, img, images[i], ecfg);
        } catch (const ResolutionError& e) {
            failures[i] = e.what();
            return;
        } catch (const PipelineError& e) {
            failures[i] = e.what();
            return;
        }
        explain::write_report(reports[i], img, dir.string(), stems[i], cfg.doc);
    });

    json index = json::array();
    std::map<std::string, std::vector<explain::ExplanationReport>> by_class;
    std::size_t failed = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (!failures[i].empty()) {
            err << "error: " << images[i] << ": " << failures[i] << "\n";
            index.push_back({{"image", images[i]}, {"error", failures[i]}});
            ++failed;
            continue;
        }
        const auto& r = reports[i];
        index.push_back({{"image", images[i]}, {"report", stems[i] + ".json"}});
        out << images[i] << ": " << r.holonym << " (p=" << fmt(r.score) << ")";
        for (const auto& p : r.parts) {
            if (p.selected) out << " " << p.name << "[" << fmt(p.drop) << "%]";
        }
        out << "\n";
        by_class[r.holonym].push_back(r);
    }
    json summaries = json::object();
    for (const auto& [h, rs] : by_class) summaries[h] = explain::summarize_class(rs).to_json();
    write_text(dir / "index.json", json{{"reports", index}, {"summaries", summaries}, {"config", cfg.doc}}.dump(2) + "\n");
    return failed == 0 ? kExitOk : kExitPipeline;
}

struct GroundTruth {
    std::map<std::string, std::map<std::string, BBox>> boxes;  // image id -> part -> box
};

// Image keys are matched literally or as paths relative to `base`.
GroundTruth load_ground_truth(const fs::path& path, const fs::path& base) {
    GroundTruth gt;
    const json j = read_json(path);
    try {
        for (const auto& [image, entry] : j.items()) {
            for (const auto& [part, b] : entry.at("parts").items()) {
                const auto v = b.get<std::vector<int>>();
                if (v.size() != 4) throw ParseError("ground truth box must have four integers");
                gt.boxes[image][part] = BBox{v[0], v[1], v[2], v[3]};
                gt.boxes[fs::weakly_canonical(base / image).string()][part] = BBox{v[0], v[1], v[2], v[3]};
            }
        }
    } catch (const json::exception& e) {
        throw ParseError("ground truth '" + path.string() + "': " + e.what());
    }
    return gt;
}

// Report arguments may include explain's index.json; it stands for the reports it lists.
std::vector<std::string> expand_reports(const std::vector<std::string>& inputs) {
    std::vector<std::string> paths;
    for (const auto& in : inputs) {
        const json j = read_json(in);
        if (!j.is_object() || !j.contains("reports") || j.contains("image")) {
            paths.push_back(in);
            continue;
        }
        const fs::path dir = fs::path(in).parent_path();
        for (const auto& entry : j.at("reports")) {
            if (entry.contains("report")) paths.push_back((dir / entry.at("report").get<std::string>()).string());
        }
    }
    std::vector<std::string> unique;
    for (const auto& p : paths) {
        if (std::find(unique.begin(), unique.end(), p) == unique.end()) unique.push_back(p);
    }
    return unique;
}

int cmd_eval(const Common& c, const std::vector<std::string>& inputs, bool against_gradcam, const std::string& gt_flag,
             const std::string& out_dir, std::ostream& out) {
    const RunConfig cfg = load_config(c.config, c.overrides);
    const std::vector<std::string> report_paths = expand_reports(inputs);
    if (report_paths.empty()) throw ValidationError("no reports given");
    const auto models = load_models(cfg);
    const auto ccfg = curve_config(cfg);
    const json& e = cfg.section("eval");
    const int cell = e.at("cell").get<int>();
    const int seeds = e.at("baseline_seeds").get<int>();
    if (seeds < 1) throw ValidationError("eval.baseline_seeds must be >= 1");
    std::optional<GroundTruth> gt;
    if (!gt_flag.empty()) {
        gt = load_ground_truth(gt_flag, cfg.base);
    } else if (e.contains("ground_truth")) {
        gt = load_ground_truth(cfg.resolve(e.at("ground_truth").get<std::string>()), cfg.base);
    }
    const fs::path dir = out_dir.empty() ? cfg.output() / "eval" : fs::path(out_dir);

    struct Row {
        std::string image, holonym;
        eval::CurveSet method, baseline, gradcam;
        eval::Ratios ratios, gradcam_ratios;
        double part_auc = -1.0, gradcam_auc = -1.0;
    };
    std::vector<Row> rows(report_paths.size());
    parallel_for(report_paths.size(), c.jobs, [&](std::size_t i) {
        const auto report = explain::read_report(report_paths[i]);
        Row& row = rows[i];
        row.image = report.image_id;
        row.holonym = report.holonym;
        if (!fs::exists(report.image_id)) throw ValidationError("image '" + report.image_id + "' of report not found");
        const Image img = read_image(report.image_id);
        const auto cls = report.holonym_index;
        row.method = eval::all_curves(*models.holonym, img, report.global, cls, ccfg);
        // Baseline curves are averaged pointwise over seeds.
        for (int s = 0; s < seeds; ++s) {
            const auto b = eval::random_baseline(*models.holonym, img, cls, cell,
                                                 hash_combine(hash_combine(cfg.seed(), i), static_cast<std::uint64_t>(s)), ccfg);
            auto add = [&](eval::Curve& acc, const eval::Curve& x) {
                if (acc.scores.empty()) {
                    acc = x;
                    return;
                }
                for (std::size_t k = 0; k < acc.scores.size(); ++k) acc.scores[k] += x.scores[k];
            };
            add(row.baseline.deletion, b.deletion);
            add(row.baseline.insertion, b.insertion);
            add(row.baseline.preservation, b.preservation);
        }
        for (auto* cv : {&row.baseline.deletion, &row.baseline.insertion, &row.baseline.preservation}) {
            for (auto& v : cv->scores) v /= seeds;
            cv->auc = eval::trapezoid_auc(cv->fractions, cv->scores);
        }
        row.ratios = eval::curve_ratios(row.method, row.baseline);

        const auto geo = net::crop_geometry(img.width(), img.height(), models.fe->preprocessing());
        sal::Heatmap holonym_cam;
        if (against_gradcam) {
            holonym_cam = sal::gradcam(*models.fe, models.holonym->head(), img, cls);
            row.gradcam = eval::all_curves(*models.holonym, img, holonym_cam, cls, ccfg);
            row.gradcam_ratios = eval::curve_ratios(row.gradcam, row.baseline);
        }
        (void)geo;
        if (gt) {
            auto it = gt->boxes.find(report.image_id);
            if (it == gt->boxes.end()) it = gt->boxes.find(fs::weakly_canonical(report.image_id).string());
            if (it != gt->boxes.end()) {
                double sum = 0.0, sum_cam = 0.0;
                int n = 0;
                for (const auto& p : report.parts) {
                    auto b = it->second.find(p.name);
                    if (b == it->second.end()) continue;
                    sum += eval::pixel_auc(p.heatmap, {b->second});
                    if (against_gradcam) sum_cam += eval::pixel_auc(holonym_cam, {b->second});
                    ++n;
                }
                if (n > 0) {
                    row.part_auc = sum / n;
                    if (against_gradcam) row.gradcam_auc = sum_cam / n;
                }
            }
        }
    });

    std::string csv = "image,holonym,deletion_auc,insertion_auc,preservation_auc,baseline_deletion_auc,"
                      "baseline_insertion_auc,baseline_preservation_auc,deletion_ratio,insertion_ratio,preservation_ratio,"
                      "pixel_auc";
    if (against_gradcam) {
        csv += ",gradcam_deletion_auc,gradcam_insertion_auc,gradcam_preservation_auc,gradcam_deletion_ratio,"
               "gradcam_insertion_ratio,gradcam_pixel_auc";
    }
    csv += "\n";
    auto opt = [](double v) { return v < 0.0 ? std::string() : fmt(v); };
    struct Mean {
        double sum = 0.0;
        int n = 0;
        void add(double v) {
            if (v >= 0.0) sum += v, ++n;
        }
        json value() const { return n == 0 ? json(nullptr) : json(sum / n); }
    };
    std::map<std::string, Mean> means;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& r = rows[i];
        csv += r.image + "," + r.holonym + "," + fmt(r.method.deletion.auc) + "," + fmt(r.method.insertion.auc) + "," +
               fmt(r.method.preservation.auc) + "," + fmt(r.baseline.deletion.auc) + "," + fmt(r.baseline.insertion.auc) +
               "," + fmt(r.baseline.preservation.auc) + "," + fmt(r.ratios.deletion) + "," + fmt(r.ratios.insertion) + "," +
               fmt(r.ratios.preservation) + "," + opt(r.part_auc);
        means["deletion_auc"].add(r.method.deletion.auc);
        means["insertion_auc"].add(r.method.insertion.auc);
        means["preservation_auc"].add(r.method.preservation.auc);
        means["baseline_deletion_auc"].add(r.baseline.deletion.auc);
        means["baseline_insertion_auc"].add(r.baseline.insertion.auc);
        means["deletion_ratio"].add(r.ratios.deletion);
        means["insertion_ratio"].add(r.ratios.insertion);
        means["pixel_auc"].add(r.part_auc);
        if (against_gradcam) {
            csv += "," + fmt(r.gradcam.deletion.auc) + "," + fmt(r.gradcam.insertion.auc) + "," +
                   fmt(r.gradcam.preservation.auc) + "," + fmt(r.gradcam_ratios.deletion) + "," +
                   fmt(r.gradcam_ratios.insertion) + "," + opt(r.gradcam_auc);
            means["gradcam_deletion_auc"].add(r.gradcam.deletion.auc);
            means["gradcam_insertion_auc"].add(r.gradcam.insertion.auc);
            means["gradcam_preservation_auc"].add(r.gradcam.preservation.auc);
            means["gradcam_pixel_auc"].add(r.gradcam_auc);
        }
        csv += "\n";

        std::vector<std::pair<std::string, const eval::Curve*>> curves{{"deletion", &r.method.deletion},
                                                                       {"insertion", &r.method.insertion},
                                                                       {"random deletion", &r.baseline.deletion},
                                                                       {"random insertion", &r.baseline.insertion}};
        write_text(dir / "plots" / (fs::path(report_paths[i]).stem().string() + ".svg"), eval::curve_svg(curves, r.image));
    }
    write_text(dir / "metrics.csv", csv);
    json summary = json::object();
    for (const auto& [k, m] : means) summary[k] = m.value();
    const json doc{{"images", rows.size()}, {"means", summary}, {"curves", ccfg.to_json()},
                   {"baseline", {{"cell", cell}, {"seeds", seeds}}}, {"config", cfg.doc}};
    write_text(dir / "summary.json", doc.dump(2) + "\n");
    out << "evaluated " << rows.size() << " reports -> " << (dir / "metrics.csv").string() << "\n";
    for (const auto& [k, m] : means) {
        if (m.n > 0) out << "  " << k << " = " << fmt(m.sum / m.n) << "\n";
    }
    return kExitOk;
}

int cmd_tune(const Common& c, const std::vector<std::string>& images, int q_min, int q_max, std::ostream& out) {
    const RunConfig cfg = load_config(c.config, c.overrides);
    if (images.empty()) throw ValidationError("no images given");
    const auto models = load_models(cfg);
    const json& e = cfg.section("eval");
    if (q_min < 0) q_min = e.at("tune_min").get<int>();
    if (q_max < 0) q_max = e.at("tune_max").get<int>();
    std::vector<Image> pixels;
    for (const auto& p : images) {
        if (!fs::exists(p)) throw ValidationError("image '" + p + "' not found");
        pixels.push_back(read_image(p));
    }
    const auto r = eval::tune_percentile(models.pipeline, pixels, q_min, q_max, explain_config(cfg), curve_config(cfg), c.jobs);
    json rows = json::array();
    out << "  q  deletion insertion preservation objective\n";
    for (const auto& row : r.rows) {
        rows.push_back({{"q", row.q}, {"deletion", row.deletion}, {"insertion", row.insertion},
                        {"preservation", row.preservation}, {"objective", row.objective}});
        char line[128];
        std::snprintf(line, sizeof line, "%3d %9.4f %9.4f %12.4f %9.4f\n", row.q, row.deletion, row.insertion,
                      row.preservation, row.objective);
        out << line;
    }
    out << "best q = " << r.best_q << "\n";
    write_text(cfg.output() / "tune_q.json",
               json{{"best_q", r.best_q}, {"rows", rows}, {"images", images}, {"config", cfg.doc}}.dump(2) + "\n");
    return kExitOk;
}

int cmd_synth(const std::string& dir, const synth::WorkspaceSpec& spec, std::ostream& out) {
    if (dir.empty()) throw ValidationError("--out is required");
    synth::write_workspace(dir, spec);
    out << "synthetic workspace written to " << dir << " (config: " << (fs::path(dir) / "config.json").string() << ")\n";
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Part-based explanations for image classifiers", "holmes"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all subcommands");

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", common.config, "Run configuration (JSON)");
        sub->add_option("--set", common.overrides, "Override a config value: key.path=value (repeatable)")
            ->allow_extra_args(false);
        sub->add_option("-j,--jobs", common.jobs, "Worker threads")->check(CLI::Range(1, 256));
    };

    std::string concept_id, kb_name = "pascal";
    bool as_json = false;
    auto* parts = app.add_subcommand("parts", "Print the visible hyper-meronyms of a concept");
    parts->add_option("concept", concept_id, "Concept id")->required();
    parts->add_option("--kb", kb_name, "Knowledge base: pascal, imagenet or a file path");
    parts->add_flag("--json", as_json, "Print JSON");

    std::vector<std::string> holonyms;
    auto* build = app.add_subcommand("build", "Build part datasets (crop or scrape, dedupe, de-outlier, balance, split)");
    add_common(build);
    build->add_option("--holonym", holonyms, "Holonym to build (repeatable; default: config holonyms)")
        ->allow_extra_args(false);

    std::string target = "meronym";
    bool resume = false;
    auto* train = app.add_subcommand("train", "Train meronym heads (or the holonym head) on frozen features");
    add_common(train);
    train->add_option("--holonym", holonyms, "Holonym to train (repeatable; default: config holonyms)")
        ->allow_extra_args(false);
    train->add_option("--target", target, "meronym or holonym")->check(CLI::IsMember({"meronym", "holonym"}));
    train->add_flag("--resume", resume, "Skip models already trained with the same config");

    std::vector<std::string> inputs;
    std::string out_dir;
    auto* expl = app.add_subcommand("explain", "Explain predictions for images");
    add_common(expl);
    expl->add_option("images", inputs, "Image files")->required();
    expl->add_option("-o,--out", out_dir, "Report directory (default: <output>/reports)");

    bool against = false;
    std::string against_name, gt_path;
    auto* ev = app.add_subcommand("eval", "Evaluate reports with causal curves and localisation AUC");
    add_common(ev);
    ev->add_option("reports", inputs, "Report JSON files");
    ev->add_option("--against", against_name, "Also score a baseline saliency method")->check(CLI::IsMember({"gradcam"}));
    ev->add_option("--gt", gt_path, "Ground-truth part boxes (JSON)");
    ev->add_option("-o,--out", out_dir, "Metrics directory (default: <output>/eval)");

    int q_min = -1, q_max = -1;
    auto* tune = app.add_subcommand("tune-q", "Grid-search the binarisation percentile");
    add_common(tune);
    tune->add_option("images", inputs, "Training images")->required();
    tune->add_option("--min", q_min, "Smallest percentile (default: eval.tune_min)");
    tune->add_option("--max", q_max, "Largest percentile (default: eval.tune_max)");

    synth::WorkspaceSpec spec;
    std::string synth_dir;
    auto* syn = app.add_subcommand("synth", "Write the synthetic shapes workspace");
    syn->add_option("-o,--out", synth_dir, "Workspace directory")->required();
    syn->add_option("--seed", spec.seed, "Seed");
    syn->add_option("--annotated", spec.annotated_per_holonym, "Annotated scenes per holonym");
    syn->add_option("--holonym-images", spec.holonym_train_per_class, "Holonym training scenes per class");
    syn->add_option("--test", spec.test_images, "Test scenes");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }

    try {
        if (*parts) return cmd_parts(concept_id, kb_name, as_json, out);
        if (*build) return cmd_build(common, holonyms, out, err);
        if (*train) return cmd_train(common, holonyms, target, resume, out);
        if (*expl) return cmd_explain(common, inputs, out_dir, out, err);
        if (*ev) {
            against = against_name == "gradcam";
            return cmd_eval(common, inputs, against, gt_path, out_dir, out);
        }
        if (*tune) return cmd_tune(common, inputs, q_min, q_max, out);
        if (*syn) return cmd_synth(synth_dir, spec, out);
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitPipeline;
    } catch (const json::exception& e) {
        err << "error: malformed configuration: " << e.what() << "\n";
        return kExitInput;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitPipeline;
    }
    return kExitInput;
}

int run_main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace holmes::cli
