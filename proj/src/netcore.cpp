#include "holmes/netcore.hpp"

#include "holmes/error.hpp"
#include "holmes/rng.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

namespace holmes::net {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXf>;
using VecMap = Eigen::Map<Eigen::VectorXf>;

std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out + "]";
}

// Output shape of `layer` for input `in`; throws on incompatibility.
std::vector<std::size_t> propagate(const Layer& layer, const std::vector<std::size_t>& in, std::size_t index) {
    const std::string where = "head layer " + std::to_string(index) + " (" + layer_name(layer.kind) + ")";
    switch (layer.kind) {
        case LayerKind::MaxPool: {
            if (in.size() != 3) throw ValidationError(where + ": expects K x H x W input, got " + shape_str(in));
            if (layer.kernel < 1 || layer.stride < 1) throw ValidationError(where + ": kernel/stride must be >= 1");
            const auto k = static_cast<std::size_t>(layer.kernel);
            const auto s = static_cast<std::size_t>(layer.stride);
            if (in[1] < k || in[2] < k) throw ValidationError(where + ": kernel larger than input " + shape_str(in));
            return {in[0], (in[1] - k) / s + 1, (in[2] - k) / s + 1};
        }
        case LayerKind::Flatten:
            return {shape_volume(in)};
        case LayerKind::Linear:
            if (in.size() != 1 || in[0] != layer.in) {
                throw ValidationError(where + ": expects [" + std::to_string(layer.in) + "], got " + shape_str(in));
            }
            return {layer.out};
        case LayerKind::Relu:
            return in;
        case LayerKind::Dropout:
            if (layer.p < 0.0 || layer.p >= 1.0) throw ValidationError(where + ": p must be in [0,1)");
            return in;
    }
    throw ValidationError(where + ": unknown layer kind");
}

}  // namespace

Layer Layer::maxpool(int kernel, int stride) {
    Layer l;
    l.kind = LayerKind::MaxPool;
    l.kernel = kernel;
    l.stride = stride;
    return l;
}

Layer Layer::flatten() {
    Layer l;
    l.kind = LayerKind::Flatten;
    return l;
}

Layer Layer::linear(std::size_t in, std::size_t out) {
    Layer l;
    l.kind = LayerKind::Linear;
    l.in = in;
    l.out = out;
    return l;
}

Layer Layer::relu() { return Layer{}; }

Layer Layer::dropout(double p) {
    Layer l;
    l.kind = LayerKind::Dropout;
    l.p = p;
    return l;
}

std::string layer_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Linear: return "linear";
        case LayerKind::Relu: return "relu";
        case LayerKind::Dropout: return "dropout";
    }
    return "?";
}

Head::Head(std::vector<std::size_t> input_shape, std::vector<Layer> layers, std::vector<std::string> classes)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), classes_(std::move(classes)) {
    auto s = shapes();
    if (s.back().size() != 1 || s.back()[0] != classes_.size()) {
        throw ValidationError("head: output " + shape_str(s.back()) + " does not match " +
                              std::to_string(classes_.size()) + " classes");
    }
    for (const auto& l : layers_) {
        if (l.kind != LayerKind::Linear) continue;
        if (!l.weight.empty() && l.weight.size() != l.in * l.out) throw ValidationError("head: weight size mismatch");
        if (!l.bias.empty() && l.bias.size() != l.out) throw ValidationError("head: bias size mismatch");
    }
}

Head Head::classifier(std::vector<std::size_t> input_shape, std::size_t hidden, std::vector<std::string> classes,
                      double dropout, int pool) {
    if (input_shape.size() != 3) throw ValidationError("head: classifier expects K x H x W input");
    if (pool < 1) throw ValidationError("head: pool window must be >= 1");
    const auto p = static_cast<std::size_t>(pool);
    const std::size_t pooled = input_shape[0] * ((input_shape[1] - p) / p + 1) * ((input_shape[2] - p) / p + 1);
    std::vector<Layer> layers = {Layer::maxpool(pool, pool),  Layer::flatten(),
                                 Layer::linear(pooled, hidden), Layer::relu(),
                                 Layer::dropout(dropout),     Layer::linear(hidden, hidden),
                                 Layer::relu(),             Layer::dropout(dropout),
                                 Layer::linear(hidden, classes.size())};
    return Head(std::move(input_shape), std::move(layers), std::move(classes));
}

std::size_t Head::class_index(const std::string& name) const {
    auto it = std::find(classes_.begin(), classes_.end(), name);
    if (it == classes_.end()) throw ValidationError("head: unknown class '" + name + "'");
    return static_cast<std::size_t>(it - classes_.begin());
}

std::size_t Head::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) {
        if (l.has_params()) n += l.in * l.out + l.out;
    }
    return n;
}

bool Head::initialized() const {
    return std::all_of(layers_.begin(), layers_.end(), [](const Layer& l) {
        return !l.has_params() || (l.weight.size() == l.in * l.out && l.bias.size() == l.out);
    });
}

std::vector<std::vector<std::size_t>> Head::shapes() const {
    std::vector<std::vector<std::size_t>> out{input_shape_};
    for (std::size_t i = 0; i < layers_.size(); ++i) out.push_back(propagate(layers_[i], out.back(), i));
    return out;
}

void Head::initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& l : mutable_layers()) {
        if (!l.has_params()) continue;
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
        l.weight.resize(l.in * l.out);
        l.bias.resize(l.out);
        for (auto& w : l.weight) w = static_cast<float>(rng.uniform(-bound, bound));
        for (auto& b : l.bias) b = static_cast<float>(rng.uniform(-bound, bound));
    }
}

bool Head::same_parameters(const Head& o) const {
    if (layers_.size() != o.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& a = layers_[i];
        const auto& b = o.layers_[i];
        if (a.kind != b.kind || a.kernel != b.kernel || a.stride != b.stride || a.in != b.in || a.out != b.out ||
            a.p != b.p || a.weight != b.weight || a.bias != b.bias) {
            return false;
        }
    }
    return true;
}

// ---- gradients container ----------------------------------------------------

HeadGradients HeadGradients::zeros_like(const Head& head) {
    HeadGradients g;
    for (const auto& l : head.layers()) {
        g.weight.emplace_back(l.has_params() ? l.in * l.out : 0, 0.0f);
        g.bias.emplace_back(l.has_params() ? l.out : 0, 0.0f);
    }
    g.input = Tensor(head.input_shape());
    return g;
}

void HeadGradients::accumulate(const HeadGradients& other) {
    for (std::size_t i = 0; i < weight.size(); ++i) {
        for (std::size_t j = 0; j < weight[i].size(); ++j) weight[i][j] += other.weight[i][j];
        for (std::size_t j = 0; j < bias[i].size(); ++j) bias[i][j] += other.bias[i][j];
    }
    if (input.size() == other.input.size()) {
        for (std::size_t j = 0; j < input.size(); ++j) input[j] += other.input[j];
    }
}

void HeadGradients::scale(float factor) {
    for (auto& w : weight) {
        for (auto& v : w) v *= factor;
    }
    for (auto& b : bias) {
        for (auto& v : b) v *= factor;
    }
    for (auto& v : input.values()) v *= factor;
}

// ---- forward / backward -----------------------------------------------------

Tensor head_forward(const Head& head, const Tensor& features, Mode mode, ForwardCache* cache, DropoutKey key) {
    if (features.shape() != head.input_shape()) {
        throw ValidationError("head_forward: feature map " + features.shape_string() + " does not match head input " +
                              shape_str(head.input_shape()));
    }
    if (!head.initialized()) throw ValidationError("head_forward: head parameters are not initialised");
    if (cache != nullptr) {
        cache->head = &head;
        cache->generation = head.generation();
        cache->inputs.clear();
        cache->argmax.assign(head.layers().size(), {});
        cache->dropout_scale.assign(head.layers().size(), {});
    }

    Tensor x = features;
    const auto& layers = head.layers();
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const Layer& l = layers[li];
        if (cache != nullptr) cache->inputs.push_back(x);
        switch (l.kind) {
            case LayerKind::MaxPool: {
                const auto out_shape = propagate(l, x.shape(), li);
                Tensor y(out_shape);
                std::vector<std::uint32_t> arg(y.size());
                const std::size_t K = x.dim(0), H = x.dim(1), W = x.dim(2);
                const std::size_t OH = out_shape[1], OW = out_shape[2];
                for (std::size_t k = 0; k < K; ++k) {
                    for (std::size_t oy = 0; oy < OH; ++oy) {
                        for (std::size_t ox = 0; ox < OW; ++ox) {
                            float best = -std::numeric_limits<float>::infinity();
                            std::uint32_t best_i = 0;
                            for (int dy = 0; dy < l.kernel; ++dy) {
                                for (int dx = 0; dx < l.kernel; ++dx) {
                                    const std::size_t iy = oy * l.stride + dy, ix = ox * l.stride + dx;
                                    const std::size_t idx = (k * H + iy) * W + ix;
                                    if (x[idx] > best) {
                                        best = x[idx];
                                        best_i = static_cast<std::uint32_t>(idx);
                                    }
                                }
                            }
                            const std::size_t o = (k * OH + oy) * OW + ox;
                            y[o] = best;
                            arg[o] = best_i;
                        }
                    }
                }
                if (cache != nullptr) cache->argmax[li] = std::move(arg);
                x = std::move(y);
                break;
            }
            case LayerKind::Flatten: {
                const std::size_t n = x.size();
                x = Tensor({n}, std::move(x.values()));
                break;
            }
            case LayerKind::Linear: {
                propagate(l, x.shape(), li);
                Tensor y({l.out});
                VecMap yv(y.data().data(), static_cast<Eigen::Index>(l.out));
                ConstMatMap w(l.weight.data(), static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in));
                yv.noalias() = w * ConstVecMap(x.data().data(), static_cast<Eigen::Index>(l.in));
                yv += ConstVecMap(l.bias.data(), static_cast<Eigen::Index>(l.out));
                x = std::move(y);
                break;
            }
            case LayerKind::Relu:
                for (auto& v : x.values()) v = v > 0.0f ? v : 0.0f;
                break;
            case LayerKind::Dropout: {
                if (mode != Mode::Train || l.p == 0.0) break;
                const float keep_scale = static_cast<float>(1.0 / (1.0 - l.p));
                const std::uint64_t base = hash_combine(hash_combine(key.seed, key.counter), li);
                std::vector<float> scale(x.size());
                for (std::size_t j = 0; j < x.size(); ++j) {
                    scale[j] = unit_from_bits(hash_combine(base, j)) < l.p ? 0.0f : keep_scale;
                    x[j] *= scale[j];
                }
                if (cache != nullptr) cache->dropout_scale[li] = std::move(scale);
                break;
            }
        }
    }
    return x;
}

HeadGradients head_backward(const Head& head, const ForwardCache& cache, const Tensor& d_logits) {
    if (cache.head != &head || cache.generation != head.generation() ||
        cache.inputs.size() != head.layers().size()) {
        throw ValidationError("head_backward: stale or foreign forward cache");
    }
    if (d_logits.size() != head.num_classes()) throw ValidationError("head_backward: d_logits size mismatch");

    HeadGradients g;
    const auto& layers = head.layers();
    g.weight.resize(layers.size());
    g.bias.resize(layers.size());
    std::vector<float> dy(d_logits.data().begin(), d_logits.data().end());

    for (std::size_t li = layers.size(); li-- > 0;) {
        const Layer& l = layers[li];
        const Tensor& in = cache.inputs[li];
        std::vector<float> dx(in.size(), 0.0f);
        switch (l.kind) {
            case LayerKind::MaxPool: {
                const auto& arg = cache.argmax[li];
                for (std::size_t o = 0; o < dy.size(); ++o) dx[arg[o]] += dy[o];
                break;
            }
            case LayerKind::Flatten:
                dx = std::move(dy);
                break;
            case LayerKind::Linear: {
                const auto n_out = static_cast<Eigen::Index>(l.out);
                const auto n_in = static_cast<Eigen::Index>(l.in);
                ConstVecMap dyv(dy.data(), n_out);
                ConstVecMap xv(in.data().data(), n_in);
                g.weight[li].resize(l.in * l.out);
                Eigen::Map<RowMatrix>(g.weight[li].data(), n_out, n_in).noalias() = dyv * xv.transpose();
                g.bias[li].assign(dy.begin(), dy.end());
                ConstMatMap w(l.weight.data(), n_out, n_in);
                VecMap(dx.data(), n_in).noalias() = w.transpose() * dyv;
                break;
            }
            case LayerKind::Relu:
                for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = in[j] > 0.0f ? dy[j] : 0.0f;
                break;
            case LayerKind::Dropout: {
                const auto& scale = cache.dropout_scale[li];
                if (scale.empty()) {
                    dx = std::move(dy);
                } else {
                    for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = dy[j] * scale[j];
                }
                break;
            }
        }
        dy = std::move(dx);
    }
    g.input = Tensor(head.input_shape(), std::move(dy));
    return g;
}

std::vector<double> softmax(std::span<const float> logits) {
    std::vector<double> p(logits.size());
    if (logits.empty()) return p;
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += p[i] = std::exp(static_cast<double>(logits[i]) - m);
    for (auto& v : p) v /= sum;
    return p;
}

LossResult softmax_xent(const Tensor& logits, std::size_t label) {
    if (label >= logits.size()) throw ValidationError("softmax_xent: label out of range");
    if (!logits.all_finite()) throw ValidationError("softmax_xent: non-finite logits");
    LossResult r;
    const auto z = logits.data();
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (float v : z) sum += std::exp(static_cast<double>(v) - m);
    const double lse = m + std::log(sum);
    r.loss = lse - static_cast<double>(z[label]);
    r.probabilities.resize(z.size());
    r.d_logits = Tensor({z.size()});
    for (std::size_t i = 0; i < z.size(); ++i) {
        r.probabilities[i] = std::exp(static_cast<double>(z[i]) - lse);
        r.d_logits[i] = static_cast<float>(r.probabilities[i] - (i == label ? 1.0 : 0.0));
    }
    return r;
}

std::vector<double> calibrated_f1(const std::vector<std::vector<double>>& confusion) {
    const std::size_t C = confusion.size();
    if (C < 2) throw ValidationError("calibrated_f1: need at least two classes");
    std::vector<std::vector<double>> w(C, std::vector<double>(C));
    for (std::size_t i = 0; i < C; ++i) {
        if (confusion[i].size() != C) throw ValidationError("calibrated_f1: confusion matrix must be square");
        double row = 0.0;
        for (double v : confusion[i]) {
            if (v < 0.0 || !std::isfinite(v)) throw ValidationError("calibrated_f1: counts must be finite and >= 0");
            row += v;
        }
        if (row <= 0.0) throw ValidationError("calibrated_f1: class " + std::to_string(i) + " has no samples");
        for (std::size_t j = 0; j < C; ++j) w[i][j] = confusion[i][j] / row;
    }
    std::vector<double> f1(C);
    for (std::size_t k = 0; k < C; ++k) {
        const double tp = w[k][k];
        double fp = 0.0, fn = 0.0;
        for (std::size_t i = 0; i < C; ++i) {
            if (i == k) continue;
            fp += w[i][k];
            fn += w[k][i];
        }
        const double denom = 2.0 * tp + fp + fn;
        f1[k] = denom > 0.0 ? 2.0 * tp / denom : 0.0;
    }
    return f1;
}

// ---- training ---------------------------------------------------------------

void TrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
    if (batch < 1) throw ValidationError("train: batch must be >= 1");
    if (!(lr > 0.0)) throw ValidationError("train: lr must be > 0");
    if (patience < 0) throw ValidationError("train: patience must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("train: momentum must be in [0,1)");
    if (augment_views < 0) throw ValidationError("train: augment_views must be >= 0");
}

std::size_t predict(const Head& head, const Tensor& features) {
    const Tensor logits = head_forward(head, features, Mode::Eval);
    const auto z = logits.data();
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

std::vector<std::vector<double>> confusion_matrix(const Head& head, const std::vector<FeatureSample>& samples) {
    std::vector<std::vector<double>> m(head.num_classes(), std::vector<double>(head.num_classes(), 0.0));
    for (const auto& s : samples) m.at(s.label).at(predict(head, s.views.front())) += 1.0;
    return m;
}

namespace {

struct EvalStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

EvalStats evaluate(const Head& head, const std::vector<FeatureSample>& samples) {
    EvalStats st;
    for (const auto& s : samples) {
        const Tensor logits = head_forward(head, s.views.front(), Mode::Eval);
        const auto r = softmax_xent(logits, s.label);
        st.loss += r.loss;
        const auto z = logits.data();
        if (static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()) == s.label) st.accuracy += 1.0;
    }
    st.loss /= static_cast<double>(samples.size());
    st.accuracy /= static_cast<double>(samples.size());
    return st;
}

}  // namespace

Head fit_head(const Head& head_template, const std::vector<FeatureSample>& train,
              const std::vector<FeatureSample>& val, const TrainConfig& cfg, TrainHistory* history) {
    cfg.validate();
    if (train.empty()) throw ValidationError("train: empty training fold");
    if (val.empty()) throw ValidationError("train: empty validation fold");
    for (const auto* fold : {&train, &val}) {
        for (const auto& s : *fold) {
            if (s.views.empty()) throw ValidationError("train: sample without feature views");
            if (s.label >= head_template.num_classes()) throw ValidationError("train: label out of range");
        }
    }

    Head head = head_template;
    if (!head.initialized()) head.initialize(hash_combine(cfg.seed, 0x1417));

    std::vector<std::vector<float>> vel_w, vel_b;
    for (const auto& l : head.layers()) {
        vel_w.emplace_back(l.has_params() ? l.weight.size() : 0, 0.0f);
        vel_b.emplace_back(l.has_params() ? l.bias.size() : 0, 0.0f);
    }

    TrainHistory hist;
    Head best = head;
    double best_loss = std::numeric_limits<double>::infinity();
    int wait = 0;
    std::uint64_t dropout_counter = 0;
    std::vector<std::size_t> order(train.size());

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(hash_combine(cfg.seed, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);

        double train_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            HeadGradients sum = HeadGradients::zeros_like(head);
            for (std::size_t bi = start; bi < end; ++bi) {
                const FeatureSample& s = train[order[bi]];
                const Tensor& view = s.views[rng.below(s.views.size())];
                ForwardCache cache;
                const Tensor logits =
                    head_forward(head, view, Mode::Train, &cache, DropoutKey{cfg.seed, dropout_counter++});
                const auto loss = softmax_xent(logits, s.label);
                train_loss += loss.loss;
                sum.accumulate(head_backward(head, cache, loss.d_logits));
            }
            sum.scale(1.0f / static_cast<float>(end - start));

            auto& layers = head.mutable_layers();
            const auto mu = static_cast<float>(cfg.momentum);
            const auto lr = static_cast<float>(cfg.lr);
            for (std::size_t li = 0; li < layers.size(); ++li) {
                if (!layers[li].has_params()) continue;
                for (std::size_t j = 0; j < layers[li].weight.size(); ++j) {
                    vel_w[li][j] = mu * vel_w[li][j] + sum.weight[li][j];
                    layers[li].weight[j] -= lr * vel_w[li][j];
                }
                for (std::size_t j = 0; j < layers[li].bias.size(); ++j) {
                    vel_b[li][j] = mu * vel_b[li][j] + sum.bias[li][j];
                    layers[li].bias[j] -= lr * vel_b[li][j];
                }
            }
        }

        const EvalStats vs = evaluate(head, val);
        hist.epochs.push_back({epoch, train_loss / static_cast<double>(train.size()), vs.loss, vs.accuracy});
        hist.stopped_epoch = epoch;
        if (vs.loss < best_loss) {
            best_loss = vs.loss;
            best = head;
            hist.best_epoch = epoch;
            wait = 0;
        } else if (++wait >= cfg.patience) {
            break;
        }
    }
    hist.best_val_loss = best_loss;
    if (history != nullptr) *history = std::move(hist);
    return best;
}

// ---- persistence ------------------------------------------------------------

void save_head(const Head& head, const std::string& index_path) {
    namespace fs = std::filesystem;
    const fs::path index(index_path);
    const std::string stem = index.stem().string();
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t i = 0; i < head.layers().size(); ++i) {
        const Layer& l = head.layers()[i];
        nlohmann::json j{{"type", layer_name(l.kind)}};
        switch (l.kind) {
            case LayerKind::MaxPool:
                j["kernel"] = l.kernel;
                j["stride"] = l.stride;
                break;
            case LayerKind::Linear: {
                const std::string wname = stem + ".L" + std::to_string(i) + ".weight.htf";
                const std::string bname = stem + ".L" + std::to_string(i) + ".bias.htf";
                save_htf((index.parent_path() / wname).string(), Tensor({l.out, l.in}, l.weight));
                save_htf((index.parent_path() / bname).string(), Tensor({l.out}, l.bias));
                j["in"] = l.in;
                j["out"] = l.out;
                j["weight"] = wname;
                j["bias"] = bname;
                break;
            }
            case LayerKind::Dropout:
                j["p"] = l.p;
                break;
            default:
                break;
        }
        layers.push_back(j);
    }
    nlohmann::json doc{{"format", "holmes-head/1"},
                       {"input_shape", head.input_shape()},
                       {"classes", head.classes()},
                       {"layers", layers}};
    std::ofstream out(index_path, std::ios::trunc);
    if (!out) throw PipelineError("cannot write '" + index_path + "'");
    out << doc.dump(2) << "\n";
}

Head load_head(const std::string& index_path) {
    namespace fs = std::filesystem;
    std::ifstream in(index_path);
    if (!in) throw ParseError("cannot open head index '" + index_path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
        std::vector<Layer> layers;
        for (const auto& j : doc.at("layers")) {
            const std::string type = j.at("type").get<std::string>();
            if (type == "maxpool") {
                layers.push_back(Layer::maxpool(j.at("kernel").get<int>(), j.at("stride").get<int>()));
            } else if (type == "flatten") {
                layers.push_back(Layer::flatten());
            } else if (type == "relu") {
                layers.push_back(Layer::relu());
            } else if (type == "dropout") {
                layers.push_back(Layer::dropout(j.at("p").get<double>()));
            } else if (type == "linear") {
                Layer l = Layer::linear(j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>());
                const fs::path dir = fs::path(index_path).parent_path();
                Tensor w = load_htf((dir / j.at("weight").get<std::string>()).string());
                Tensor b = load_htf((dir / j.at("bias").get<std::string>()).string());
                if (w.shape() != std::vector<std::size_t>{l.out, l.in} || b.shape() != std::vector<std::size_t>{l.out}) {
                    throw ParseError("head: parameter tensor shape mismatch in '" + index_path + "'");
                }
                l.weight = std::move(w.values());
                l.bias = std::move(b.values());
                layers.push_back(std::move(l));
            } else {
                throw ParseError("head: unknown layer type '" + type + "'");
            }
        }
        return Head(doc.at("input_shape").get<std::vector<std::size_t>>(), std::move(layers),
                    doc.at("classes").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("head index '" + index_path + "': " + e.what());
    }
}

}  // namespace holmes::net
