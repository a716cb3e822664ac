#pragma once

#include "holmes/image.hpp"
#include "holmes/netcore.hpp"
#include "holmes/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace holmes::net {

// Backbone input convention: shorter side resized (bilinear) to
// `resize_shorter`, centre crop of `crop`, [0,1] scaling, per-channel
// standardisation.
struct PreprocessConfig {
    int resize_shorter = 256;
    int crop = 224;
    std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
    std::array<float, 3> std{0.229f, 0.224f, 0.225f};
};

// Where the crop window of `preprocess` lies in source-image coordinates.
struct CropGeometry {
    int resized_width = 0;
    int resized_height = 0;
    int offset_x = 0;  // in resized pixels
    int offset_y = 0;
    int crop = 0;
    double scale_x = 1.0;  // source pixels per resized pixel
    double scale_y = 1.0;
};

CropGeometry crop_geometry(int width, int height, const PreprocessConfig& cfg);
Tensor preprocess(const Image& image, const PreprocessConfig& cfg = {});

// Frozen f_F: preprocessed image -> K x H' x W' activation map. Implementations
// are deterministic and never mutate state during extraction.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;

    virtual std::vector<std::size_t> output_shape() const = 0;
    virtual const PreprocessConfig& preprocessing() const = 0;
    virtual std::string describe() const = 0;

    // Throws BackendError if the backend cannot compute features for new pixels.
    virtual Tensor extract(const Tensor& input) const = 0;

    // Cached features keyed by sample origin id, when the backend has any.
    virtual std::optional<Tensor> lookup(const std::string& origin_id) const;

    Tensor features(const Image& image) const;
    // Cached lookup first, pixels otherwise.
    Tensor features(const Image& image, const std::string& origin_id) const;

protected:
    Tensor checked(Tensor t) const;
};

// Stack of 3x3 same-padded conv+relu layers and 2x2 max pools. The VGG16
// feature block minus its final pool is the canonical configuration; weights
// come from an HTF1 store or from a seeded He initialisation.
class ConvStackExtractor : public FeatureExtractor {
public:
    // Entry > 0: conv with that many output channels; entry == 0: maxpool 2x2.
    using Architecture = std::vector<int>;

    struct ConvLayer {
        std::size_t in = 0, out = 0;
        std::vector<float> weight;  // out x in x 3 x 3
        std::vector<float> bias;
    };

    ConvStackExtractor(Architecture arch, std::vector<ConvLayer> convs, PreprocessConfig pre);

    static std::unique_ptr<ConvStackExtractor> random(Architecture arch, std::uint64_t seed, PreprocessConfig pre);
    // JSON index {"architecture":[...],"preprocess":{...},"layers":[{"weight":f,"bias":f}]}.
    static std::unique_ptr<ConvStackExtractor> load(const std::string& index_path);
    void save(const std::string& index_path) const;

    static Architecture vgg16();

    std::vector<std::size_t> output_shape() const override;
    const PreprocessConfig& preprocessing() const override { return pre_; }
    std::string describe() const override;
    Tensor extract(const Tensor& input) const override;

    const Architecture& architecture() const { return arch_; }
    const std::vector<ConvLayer>& convs() const { return convs_; }

private:
    Architecture arch_;
    std::vector<ConvLayer> convs_;
    PreprocessConfig pre_;
};

// Average-pools the standardised input into a 3 x grid x grid map.
class PixelPoolExtractor : public FeatureExtractor {
public:
    PixelPoolExtractor(int grid, PreprocessConfig pre);

    std::vector<std::size_t> output_shape() const override;
    const PreprocessConfig& preprocessing() const override { return pre_; }
    std::string describe() const override;
    Tensor extract(const Tensor& input) const override;

private:
    int grid_;
    PreprocessConfig pre_;
};

// Precomputed feature maps keyed by origin id. Directory layout: index.json
// {"shape":[K,H,W],"entries":{"<origin_id>":"<file>.htf"}} plus HTF1 blobs.
class FeatureStore : public FeatureExtractor {
public:
    explicit FeatureStore(std::string directory);

    static void write(const std::string& directory, const std::vector<std::size_t>& shape,
                      const std::map<std::string, Tensor>& entries);

    std::vector<std::size_t> output_shape() const override { return shape_; }
    const PreprocessConfig& preprocessing() const override { return pre_; }
    std::string describe() const override;
    Tensor extract(const Tensor& input) const override;
    std::optional<Tensor> lookup(const std::string& origin_id) const override;

    std::size_t size() const { return entries_.size(); }

private:
    std::string directory_;
    std::vector<std::size_t> shape_;
    std::map<std::string, std::string> entries_;
    PreprocessConfig pre_;
};

// Backend factory from a JSON spec:
//   {"kind":"convstack","weights":"index.json"}
//   {"kind":"random-conv","seed":7,"architecture":[8,0,16,0,32,0,32],"preprocess":{...}}
//   {"kind":"pixels","grid":14,"preprocess":{...}}
//   {"kind":"store","path":"dir"}
//   {"kind":"onnx","model":"file.onnx"}  (needs an inference runtime; not built in)
std::unique_ptr<FeatureExtractor> make_extractor(const nlohmann::json& spec, const std::string& base_dir = ".");
PreprocessConfig preprocess_from_json(const nlohmann::json& j);
nlohmann::json preprocess_to_json(const PreprocessConfig& cfg);

// Anything that maps an image to class probabilities.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual std::vector<double> probabilities(const Image& image) const = 0;
    virtual std::size_t num_classes() const = 0;
};

// H = f_C o f_F with a shared frozen extractor.
class SplitClassifier : public Classifier {
public:
    SplitClassifier(const FeatureExtractor& extractor, Head head);

    std::vector<double> probabilities(const Image& image) const override;
    std::vector<double> probabilities_from_features(const Tensor& features) const;
    std::size_t num_classes() const override { return head_.num_classes(); }

    const FeatureExtractor& extractor() const { return *extractor_; }
    const Head& head() const { return head_; }

private:
    const FeatureExtractor* extractor_;
    Head head_;
};

}  // namespace holmes::net
