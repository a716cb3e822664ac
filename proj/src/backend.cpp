#include "holmes/backend.hpp"

#include "holmes/error.hpp"
#include "holmes/rng.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace holmes::net {

namespace fs = std::filesystem;
using nlohmann::json;

CropGeometry crop_geometry(int width, int height, const PreprocessConfig& cfg) {
    if (width < 1 || height < 1) throw ValidationError("preprocess: empty image");
    if (cfg.crop < 1 || cfg.resize_shorter < cfg.crop) {
        throw ValidationError("preprocess: need 1 <= crop <= resize_shorter");
    }
    CropGeometry g;
    const int shorter = std::min(width, height);
    const int longer = std::max(width, height);
    const int resized_long = static_cast<int>(static_cast<long long>(cfg.resize_shorter) * longer / shorter);
    g.resized_width = width <= height ? cfg.resize_shorter : resized_long;
    g.resized_height = width <= height ? resized_long : cfg.resize_shorter;
    g.crop = cfg.crop;
    g.offset_x = static_cast<int>(std::nearbyint((g.resized_width - cfg.crop) / 2.0));
    g.offset_y = static_cast<int>(std::nearbyint((g.resized_height - cfg.crop) / 2.0));
    g.scale_x = static_cast<double>(width) / g.resized_width;
    g.scale_y = static_cast<double>(height) / g.resized_height;
    return g;
}

Tensor preprocess(const Image& image, const PreprocessConfig& cfg) {
    if (image.empty()) throw ValidationError("preprocess: expected a non-empty RGB image");
    const CropGeometry g = crop_geometry(image.width(), image.height(), cfg);
    const auto n = static_cast<std::size_t>(cfg.crop);
    Tensor out({3, n, n});

    // Half-pixel bilinear sampling, clamped at the borders.
    auto axis = [](int dst, double scale, int src_len, int& i0, int& i1, double& frac) {
        double s = (dst + 0.5) * scale - 0.5;
        s = std::max(s, 0.0);
        i0 = std::min(static_cast<int>(s), src_len - 1);
        i1 = std::min(i0 + 1, src_len - 1);
        frac = s - i0;
        if (i0 == src_len - 1) frac = 0.0;
    };
    std::vector<int> x0(n), x1(n);
    std::vector<double> fx(n);
    for (std::size_t x = 0; x < n; ++x) {
        axis(static_cast<int>(x) + g.offset_x, g.scale_x, image.width(), x0[x], x1[x], fx[x]);
    }
    for (std::size_t y = 0; y < n; ++y) {
        int y0, y1;
        double fy;
        axis(static_cast<int>(y) + g.offset_y, g.scale_y, image.height(), y0, y1, fy);
        for (std::size_t x = 0; x < n; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double top = image.channel(x0[x], y0, c) * (1.0 - fx[x]) + image.channel(x1[x], y0, c) * fx[x];
                const double bot = image.channel(x0[x], y1, c) * (1.0 - fx[x]) + image.channel(x1[x], y1, c) * fx[x];
                const double v = (top * (1.0 - fy) + bot * fy) / 255.0;
                out.at(c, y, x) = static_cast<float>((v - cfg.mean[c]) / cfg.std[c]);
            }
        }
    }
    return out;
}

// ---- FeatureExtractor -------------------------------------------------------

std::optional<Tensor> FeatureExtractor::lookup(const std::string&) const { return std::nullopt; }

Tensor FeatureExtractor::features(const Image& image) const {
    return checked(extract(preprocess(image, preprocessing())));
}

Tensor FeatureExtractor::features(const Image& image, const std::string& origin_id) const {
    if (auto cached = lookup(origin_id)) return checked(std::move(*cached));
    return features(image);
}

Tensor FeatureExtractor::checked(Tensor t) const {
    if (t.shape() != output_shape()) {
        throw BackendError(describe() + ": produced " + t.shape_string() + " but declares " +
                           Tensor(output_shape()).shape_string());
    }
    return t;
}

// ---- ConvStackExtractor -----------------------------------------------------

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor conv3x3_relu(const Tensor& x, const ConvStackExtractor::ConvLayer& layer) {
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (C != layer.in) throw BackendError("convstack: channel mismatch");
    const auto HW = static_cast<Eigen::Index>(H * W);
    RowMatrix cols(static_cast<Eigen::Index>(C * 9), HW);
    for (std::size_t c = 0; c < C; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                float* row = cols.row(static_cast<Eigen::Index>(c * 9 + ky * 3 + kx)).data();
                for (std::size_t y = 0; y < H; ++y) {
                    const long sy = static_cast<long>(y) + ky - 1;
                    for (std::size_t xx = 0; xx < W; ++xx) {
                        const long sx = static_cast<long>(xx) + kx - 1;
                        row[y * W + xx] = (sy < 0 || sx < 0 || sy >= static_cast<long>(H) || sx >= static_cast<long>(W))
                                              ? 0.0f
                                              : x.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                    }
                }
            }
        }
    }
    Eigen::Map<const RowMatrix> w(layer.weight.data(), static_cast<Eigen::Index>(layer.out),
                                  static_cast<Eigen::Index>(C * 9));
    Tensor y({layer.out, H, W});
    Eigen::Map<RowMatrix> out(y.data().data(), static_cast<Eigen::Index>(layer.out), HW);
    out.noalias() = w * cols;
    for (std::size_t o = 0; o < layer.out; ++o) {
        float* r = out.row(static_cast<Eigen::Index>(o)).data();
        for (Eigen::Index i = 0; i < HW; ++i) r[i] = std::max(0.0f, r[i] + layer.bias[o]);
    }
    return y;
}

Tensor maxpool2(const Tensor& x) {
    const std::size_t C = x.dim(0), H = x.dim(1) / 2, W = x.dim(2) / 2;
    Tensor y({C, H, W});
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                y.at(c, i, j) = std::max(std::max(x.at(c, 2 * i, 2 * j), x.at(c, 2 * i, 2 * j + 1)),
                                         std::max(x.at(c, 2 * i + 1, 2 * j), x.at(c, 2 * i + 1, 2 * j + 1)));
            }
        }
    }
    return y;
}

}  // namespace

ConvStackExtractor::ConvStackExtractor(Architecture arch, std::vector<ConvLayer> convs, PreprocessConfig pre)
    : arch_(std::move(arch)), convs_(std::move(convs)), pre_(pre) {
    std::size_t channels = 3, ci = 0;
    for (int a : arch_) {
        if (a < 0) throw ValidationError("convstack: negative architecture entry");
        if (a == 0) continue;
        if (ci >= convs_.size()) throw ValidationError("convstack: fewer conv layers than architecture entries");
        const auto& l = convs_[ci++];
        if (l.in != channels || l.out != static_cast<std::size_t>(a) || l.weight.size() != l.out * l.in * 9 ||
            l.bias.size() != l.out) {
            throw ValidationError("convstack: layer " + std::to_string(ci - 1) + " parameters do not match architecture");
        }
        channels = l.out;
    }
    if (ci != convs_.size()) throw ValidationError("convstack: more conv layers than architecture entries");
    output_shape();
}

std::unique_ptr<ConvStackExtractor> ConvStackExtractor::random(Architecture arch, std::uint64_t seed,
                                                               PreprocessConfig pre) {
    Rng rng(seed);
    std::vector<ConvLayer> convs;
    std::size_t channels = 3;
    for (int a : arch) {
        if (a <= 0) continue;
        ConvLayer l;
        l.in = channels;
        l.out = static_cast<std::size_t>(a);
        const double sd = std::sqrt(2.0 / (9.0 * static_cast<double>(l.in)));
        l.weight.resize(l.out * l.in * 9);
        for (auto& w : l.weight) w = static_cast<float>(sd * rng.normal());
        l.bias.assign(l.out, 0.0f);
        convs.push_back(std::move(l));
        channels = static_cast<std::size_t>(a);
    }
    return std::make_unique<ConvStackExtractor>(std::move(arch), std::move(convs), pre);
}

ConvStackExtractor::Architecture ConvStackExtractor::vgg16() {
    return {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512};
}

std::vector<std::size_t> ConvStackExtractor::output_shape() const {
    std::size_t c = 3, h = static_cast<std::size_t>(pre_.crop), w = h;
    for (int a : arch_) {
        if (a == 0) {
            if (h < 2 || w < 2) throw ValidationError("convstack: pooling below 1x1");
            h /= 2;
            w /= 2;
        } else {
            c = static_cast<std::size_t>(a);
        }
    }
    return {c, h, w};
}

std::string ConvStackExtractor::describe() const {
    std::string s = "convstack[";
    for (std::size_t i = 0; i < arch_.size(); ++i) s += (i ? "," : "") + (arch_[i] ? std::to_string(arch_[i]) : "M");
    return s + "]@" + std::to_string(pre_.crop);
}

Tensor ConvStackExtractor::extract(const Tensor& input) const {
    const auto n = static_cast<std::size_t>(pre_.crop);
    if (input.shape() != std::vector<std::size_t>{3, n, n}) {
        throw BackendError(describe() + ": expected input [3x" + std::to_string(n) + "x" + std::to_string(n) + "], got " +
                           input.shape_string());
    }
    Tensor x = input;
    std::size_t ci = 0;
    for (int a : arch_) x = a == 0 ? maxpool2(x) : conv3x3_relu(x, convs_[ci++]);
    return checked(std::move(x));
}

void ConvStackExtractor::save(const std::string& index_path) const {
    const fs::path index(index_path);
    const std::string stem = index.stem().string();
    json layers = json::array();
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        const auto& l = convs_[i];
        const std::string wname = stem + ".conv" + std::to_string(i) + ".weight.htf";
        const std::string bname = stem + ".conv" + std::to_string(i) + ".bias.htf";
        save_htf((index.parent_path() / wname).string(), Tensor({l.out, l.in, 3, 3}, l.weight));
        save_htf((index.parent_path() / bname).string(), Tensor({l.out}, l.bias));
        layers.push_back({{"weight", wname}, {"bias", bname}});
    }
    json doc{{"format", "holmes-convstack/1"},
             {"architecture", arch_},
             {"preprocess", preprocess_to_json(pre_)},
             {"layers", layers}};
    std::ofstream out(index_path, std::ios::trunc);
    if (!out) throw PipelineError("cannot write '" + index_path + "'");
    out << doc.dump(2) << "\n";
}

std::unique_ptr<ConvStackExtractor> ConvStackExtractor::load(const std::string& index_path) {
    std::ifstream in(index_path);
    if (!in) throw BackendError("convstack: cannot open weights index '" + index_path + "'");
    try {
        json doc;
        in >> doc;
        const fs::path dir = fs::path(index_path).parent_path();
        std::vector<ConvLayer> convs;
        for (const auto& j : doc.at("layers")) {
            Tensor w = load_htf((dir / j.at("weight").get<std::string>()).string());
            Tensor b = load_htf((dir / j.at("bias").get<std::string>()).string());
            if (w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3) throw ParseError("convstack: weight must be Ox I x3x3");
            ConvLayer l;
            l.out = w.dim(0);
            l.in = w.dim(1);
            l.weight = std::move(w.values());
            l.bias = std::move(b.values());
            convs.push_back(std::move(l));
        }
        PreprocessConfig pre = doc.contains("preprocess") ? preprocess_from_json(doc["preprocess"]) : PreprocessConfig{};
        return std::make_unique<ConvStackExtractor>(doc.at("architecture").get<Architecture>(), std::move(convs), pre);
    } catch (const json::exception& e) {
        throw ParseError("convstack index '" + index_path + "': " + e.what());
    }
}

// ---- PixelPoolExtractor -----------------------------------------------------

PixelPoolExtractor::PixelPoolExtractor(int grid, PreprocessConfig pre) : grid_(grid), pre_(pre) {
    if (grid < 1 || pre.crop % grid != 0) throw ValidationError("pixels backend: grid must divide the crop size");
}

std::vector<std::size_t> PixelPoolExtractor::output_shape() const {
    return {3, static_cast<std::size_t>(grid_), static_cast<std::size_t>(grid_)};
}

std::string PixelPoolExtractor::describe() const {
    return "pixels[" + std::to_string(grid_) + "]@" + std::to_string(pre_.crop);
}

Tensor PixelPoolExtractor::extract(const Tensor& input) const {
    const auto n = static_cast<std::size_t>(pre_.crop);
    if (input.shape() != std::vector<std::size_t>{3, n, n}) throw BackendError(describe() + ": bad input shape");
    const std::size_t g = static_cast<std::size_t>(grid_), cell = n / g;
    Tensor out({3, g, g});
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t gy = 0; gy < g; ++gy) {
            for (std::size_t gx = 0; gx < g; ++gx) {
                double acc = 0;
                for (std::size_t y = 0; y < cell; ++y) {
                    for (std::size_t x = 0; x < cell; ++x) acc += input.at(c, gy * cell + y, gx * cell + x);
                }
                out.at(c, gy, gx) = static_cast<float>(acc / static_cast<double>(cell * cell));
            }
        }
    }
    return out;
}

// ---- FeatureStore -----------------------------------------------------------

FeatureStore::FeatureStore(std::string directory) : directory_(std::move(directory)) {
    const fs::path index = fs::path(directory_) / "index.json";
    std::ifstream in(index);
    if (!in) throw BackendError("feature store: cannot open '" + index.string() + "'");
    try {
        json doc;
        in >> doc;
        shape_ = doc.at("shape").get<std::vector<std::size_t>>();
        entries_ = doc.at("entries").get<std::map<std::string, std::string>>();
        if (doc.contains("preprocess")) pre_ = preprocess_from_json(doc["preprocess"]);
    } catch (const json::exception& e) {
        throw ParseError("feature store index: " + std::string(e.what()));
    }
}

void FeatureStore::write(const std::string& directory, const std::vector<std::size_t>& shape,
                         const std::map<std::string, Tensor>& entries) {
    fs::create_directories(directory);
    json map = json::object();
    std::size_t i = 0;
    for (const auto& [id, t] : entries) {
        if (t.shape() != shape) throw ValidationError("feature store: entry '" + id + "' has shape " + t.shape_string());
        const std::string file = "f" + std::to_string(i++) + ".htf";
        save_htf((fs::path(directory) / file).string(), t);
        map[id] = file;
    }
    std::ofstream out(fs::path(directory) / "index.json", std::ios::trunc);
    out << json{{"format", "holmes-features/1"}, {"shape", shape}, {"entries", map}}.dump(2) << "\n";
}

std::string FeatureStore::describe() const { return "store[" + directory_ + "]"; }

Tensor FeatureStore::extract(const Tensor&) const {
    throw BackendError(describe() + ": a precomputed feature store cannot compute features for new pixels");
}

std::optional<Tensor> FeatureStore::lookup(const std::string& origin_id) const {
    auto it = entries_.find(origin_id);
    if (it == entries_.end()) return std::nullopt;
    return load_htf((fs::path(directory_) / it->second).string());
}

// ---- factory ----------------------------------------------------------------

PreprocessConfig preprocess_from_json(const json& j) {
    PreprocessConfig c;
    if (j.contains("resize_shorter")) c.resize_shorter = j["resize_shorter"].get<int>();
    if (j.contains("crop")) c.crop = j["crop"].get<int>();
    if (j.contains("mean")) c.mean = j["mean"].get<std::array<float, 3>>();
    if (j.contains("std")) c.std = j["std"].get<std::array<float, 3>>();
    return c;
}

json preprocess_to_json(const PreprocessConfig& c) {
    return {{"resize_shorter", c.resize_shorter}, {"crop", c.crop}, {"mean", c.mean}, {"std", c.std}};
}

std::unique_ptr<FeatureExtractor> make_extractor(const json& spec, const std::string& base_dir) {
    auto resolve = [&](const std::string& p) {
        fs::path path(p);
        return path.is_absolute() ? path.string() : (fs::path(base_dir) / path).string();
    };
    try {
        const std::string kind = spec.at("kind").get<std::string>();
        const PreprocessConfig pre =
            spec.contains("preprocess") ? preprocess_from_json(spec["preprocess"]) : PreprocessConfig{};
        if (kind == "convstack") return ConvStackExtractor::load(resolve(spec.at("weights").get<std::string>()));
        if (kind == "random-conv") {
            auto arch = spec.contains("architecture") ? spec["architecture"].get<ConvStackExtractor::Architecture>()
                                                      : ConvStackExtractor::vgg16();
            return ConvStackExtractor::random(std::move(arch), spec.value("seed", std::uint64_t{0}), pre);
        }
        if (kind == "pixels") return std::make_unique<PixelPoolExtractor>(spec.value("grid", 14), pre);
        if (kind == "store") return std::make_unique<FeatureStore>(resolve(spec.at("path").get<std::string>()));
        if (kind == "onnx") {
            throw BackendError("onnx backend unavailable: this build has no inference runtime; export the feature "
                               "block with tools/export_vgg16.py and use kind=convstack");
        }
        throw BackendError("unknown backend kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw ParseError("backend spec: " + std::string(e.what()));
    }
}

// ---- SplitClassifier --------------------------------------------------------

SplitClassifier::SplitClassifier(const FeatureExtractor& extractor, Head head)
    : extractor_(&extractor), head_(std::move(head)) {
    if (extractor.output_shape() != head_.input_shape()) {
        throw BackendError("classifier: extractor output " + Tensor(extractor.output_shape()).shape_string() +
                           " does not match head input " + Tensor(head_.input_shape()).shape_string());
    }
}

std::vector<double> SplitClassifier::probabilities(const Image& image) const {
    return probabilities_from_features(extractor_->features(image));
}

std::vector<double> SplitClassifier::probabilities_from_features(const Tensor& features) const {
    return softmax(head_forward(head_, features, Mode::Eval).data());
}

}  // namespace holmes::net
