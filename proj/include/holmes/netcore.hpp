#pragma once

#include "holmes/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace holmes::net {

enum class LayerKind { MaxPool, Flatten, Linear, Relu, Dropout };

struct Layer {
    LayerKind kind = LayerKind::Relu;
    int kernel = 0;  // maxpool
    int stride = 0;  // maxpool
    std::size_t in = 0, out = 0;  // linear
    std::vector<float> weight;    // linear, out x in row-major
    std::vector<float> bias;      // linear, out
    double p = 0.0;               // dropout

    static Layer maxpool(int kernel, int stride);
    static Layer flatten();
    static Layer linear(std::size_t in, std::size_t out);
    static Layer relu();
    static Layer dropout(double p);

    bool has_params() const { return kind == LayerKind::Linear; }
};

std::string layer_name(LayerKind kind);

// Trainable classifier applied to a K x H x W feature map.
class Head {
public:
    Head() = default;
    Head(std::vector<std::size_t> input_shape, std::vector<Layer> layers, std::vector<std::string> classes);

    // maxpool(pool, pool) -> flatten -> [linear(hidden) -> relu -> dropout] x2 -> linear(classes).
    // A pool window as large as the feature map makes the head translation invariant.
    static Head classifier(std::vector<std::size_t> input_shape, std::size_t hidden, std::vector<std::string> classes,
                           double dropout = 0.5, int pool = 2);

    const std::vector<std::size_t>& input_shape() const { return input_shape_; }
    const std::vector<Layer>& layers() const { return layers_; }
    const std::vector<std::string>& classes() const { return classes_; }
    std::size_t num_classes() const { return classes_.size(); }
    std::size_t class_index(const std::string& name) const;

    // Any parameter write bumps the generation, invalidating forward caches.
    std::vector<Layer>& mutable_layers() {
        ++generation_;
        return layers_;
    }
    std::uint64_t generation() const { return generation_; }
    std::size_t parameter_count() const;
    bool initialized() const;

    // Shapes flowing out of each layer, starting with the input shape.
    std::vector<std::vector<std::size_t>> shapes() const;

    // PyTorch-style uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    void initialize(std::uint64_t seed);

    bool operator==(const Head& o) const {
        return input_shape_ == o.input_shape_ && classes_ == o.classes_ && same_parameters(o);
    }
    bool same_parameters(const Head& o) const;

private:
    std::vector<std::size_t> input_shape_;
    std::vector<Layer> layers_;
    std::vector<std::string> classes_;
    std::uint64_t generation_ = 0;
};

enum class Mode { Train, Eval };

struct DropoutKey {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;
};

struct ForwardCache {
    const Head* head = nullptr;
    std::uint64_t generation = 0;
    std::vector<Tensor> inputs;                     // input of each layer
    std::vector<std::vector<std::uint32_t>> argmax;  // maxpool routing
    std::vector<std::vector<float>> dropout_scale;   // 0 or 1/(1-p) per element
};

struct HeadGradients {
    std::vector<std::vector<float>> weight;  // per layer; empty for parameterless layers
    std::vector<std::vector<float>> bias;
    Tensor input;  // gradient w.r.t. the feature map

    static HeadGradients zeros_like(const Head& head);
    void accumulate(const HeadGradients& other);
    void scale(float factor);
};

Tensor head_forward(const Head& head, const Tensor& features, Mode mode, ForwardCache* cache = nullptr,
                    DropoutKey key = {});
HeadGradients head_backward(const Head& head, const ForwardCache& cache, const Tensor& d_logits);

struct LossResult {
    double loss = 0.0;
    Tensor d_logits;
    std::vector<double> probabilities;
};

std::vector<double> softmax(std::span<const float> logits);
LossResult softmax_xent(const Tensor& logits, std::size_t label);

// Per-class F1 after reweighting confusion rows (true classes) to equal mass.
std::vector<double> calibrated_f1(const std::vector<std::vector<double>>& confusion);

// ---- training --------------------------------------------------------------

struct AugmentToggles {
    bool hflip = true;
    bool rotation = true;
    bool crop = true;
    bool color_jitter = true;
    bool grayscale = true;

    bool any() const { return hflip || rotation || crop || color_jitter || grayscale; }
};

struct TrainConfig {
    int epochs = 100;
    int batch = 64;
    double lr = 0.001;
    int patience = 5;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    AugmentToggles augment;
    // Pre-rendered augmented views per training sample; one is drawn per epoch.
    int augment_views = 4;

    void validate() const;
};

// One training example: label plus one or more feature views of the same image.
struct FeatureSample {
    std::size_t label = 0;
    std::vector<Tensor> views;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    int stopped_epoch = 0;
    double best_val_loss = 0.0;
};

// Mini-batch SGD with momentum over head parameters only, early stopping on
// validation loss. Returns the parameters of the best validation epoch.
Head fit_head(const Head& head_template, const std::vector<FeatureSample>& train,
              const std::vector<FeatureSample>& val, const TrainConfig& cfg, TrainHistory* history = nullptr);

std::size_t predict(const Head& head, const Tensor& features);
std::vector<std::vector<double>> confusion_matrix(const Head& head, const std::vector<FeatureSample>& samples);

// Head parameters: JSON index (layers, classes, shapes) plus one HTF1 blob per
// parameter tensor, written next to the index.
void save_head(const Head& head, const std::string& index_path);
Head load_head(const std::string& index_path);

}  // namespace holmes::net
