#pragma once

#include "holmes/image.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace holmes::net {
class FeatureExtractor;
}

namespace holmes::data {

enum class Source { Crop, Scrape, Augment };
enum class Fold { Train, Val, Test };
enum class Flag { Kept, Duplicate, Outlier };

std::string to_string(Source s);
std::string to_string(Fold f);
std::string to_string(Flag f);
Source source_from_string(const std::string& s);
Fold fold_from_string(const std::string& s);
Flag flag_from_string(const std::string& s);

struct ImageSample {
    Image pixels;
    std::string label;
    Source source = Source::Crop;
    std::string origin_id;
    std::string parent_id;  // augmented copies: the sample they were derived from
};

struct PartDataset {
    std::string holonym;
    std::vector<std::string> classes;  // resolved part list, in KB order
    std::vector<ImageSample> samples;
    std::map<std::string, Fold> folds;  // only kept samples are assigned
    std::map<std::string, Flag> flags;  // absent == kept

    Flag flag(const std::string& origin_id) const;
    bool kept(const std::string& origin_id) const { return flag(origin_id) == Flag::Kept; }
    std::map<std::string, std::size_t> class_counts(bool kept_only = true) const;
    const ImageSample* find(const std::string& origin_id) const;
};

// Square crop around `box`: the shorter side grows one pixel at a time,
// alternating sides, until square. A side stops growing when the next row or
// column would leave the image or touch a sibling box (siblings already
// overlapping `box` are ignored). Any remaining shortfall is padded with
// `fill`, split evenly across the blocked sides.
ImageSample crop_part(const ImageSample& image, const BBox& box, const std::vector<BBox>& siblings,
                      Rgb fill = kAblationFill);

// 64-bit DCT perceptual hash: luma -> 32x32 area resample -> orthonormal
// DCT-II -> coefficients (u, v) in [1, 8]^2 -> bit = coefficient > median.
std::uint64_t phash(const Image& image);
int hamming_distance(std::uint64_t a, std::uint64_t b);

// Greedy near-duplicate flagging in origin_id order.
PartDataset dedupe(PartDataset ds, int hamming_threshold = 10);

struct OutlierOptions {
    double eigen_floor = 1e-12;
    // Fraction of total variance the scored components must explain; 1 keeps
    // every component above the floor.
    double variance_kept = 1.0;
};

struct OutlierResult {
    std::vector<std::size_t> kept;
    std::vector<std::size_t> flagged;
    std::vector<double> scores;
};

// PCA outlier scores (variance-normalised projection energy); flags the
// floor(contamination * N) highest scores, lower index first on ties.
OutlierResult remove_outliers(const std::vector<std::vector<double>>& features, double contamination,
                              const OutlierOptions& options = {});

// Runs remove_outliers per part class on global-average-pooled features.
PartDataset flag_outliers(PartDataset ds, const net::FeatureExtractor& extractor, double contamination,
                          const OutlierOptions& options = {});

struct AugmentConfig {
    double max_rotation_deg = 25.0;
    double max_shear_deg = 15.0;
    double tolerance = 0.05;  // classes end within this fraction of the largest
    Rgb fill = kAblationFill;
};

// Grows minority classes with augmented copies of their kept originals. On a
// split dataset only training samples are copied and copies join the train fold.
PartDataset balance_augment(PartDataset ds, std::uint64_t seed, const AugmentConfig& cfg = {});
Image augment_image(const Image& image, std::uint64_t seed, const AugmentConfig& cfg = {});

struct SplitRatios {
    double train = 0.81;
    double val = 0.09;
    double test = 0.10;
};

// Stratified, seeded fold assignment over kept non-augmented samples; kept
// augmented samples always go to train.
PartDataset split(PartDataset ds, const SplitRatios& ratios, std::uint64_t seed);

// Standard cleaning chain: dedupe -> outlier flagging -> split -> balancing.
struct BuildRecipe {
    int dedupe_threshold = 10;
    double contamination = 0.15;
    SplitRatios ratios;
    AugmentConfig augment;
    std::uint64_t seed = 0;
};
PartDataset prepare_dataset(PartDataset ds, const net::FeatureExtractor& extractor, const BuildRecipe& recipe);

// ---- scraping ---------------------------------------------------------------

using Payload = std::vector<std::uint8_t>;

class EngineClient {
public:
    virtual ~EngineClient() = default;
    virtual std::string name() const = 0;
    virtual std::vector<Payload> query(const std::string& term, int limit) = 0;
    virtual bool supports_similar() const { return false; }
    virtual std::vector<Payload> similar(const Payload& image, int limit);
};

// Offline engine over a fixture directory. A query for "a b" serves files from
// <dir>/a_b/ when present, else from <dir>/, in file-name order. `similar`
// returns deterministic re-encoded variants of the given image.
class DirectoryEngine : public EngineClient {
public:
    DirectoryEngine(std::string name, std::string directory, bool similar = false);

    std::string name() const override { return name_; }
    std::vector<Payload> query(const std::string& term, int limit) override;
    bool supports_similar() const override { return similar_; }
    std::vector<Payload> similar(const Payload& image, int limit) override;

private:
    std::string name_;
    std::string directory_;
    bool similar_;
};

inline constexpr int kMaxDownloadsPerEngine = 100;

std::vector<ImageSample> scrape_part(const std::string& holonym, const std::string& part,
                                     const std::vector<EngineClient*>& engines, const std::vector<int>& limits,
                                     int similar_limit = 5, std::vector<std::string>* warnings = nullptr);

// ---- ingestion and manifests ---------------------------------------------

struct AnnotatedPart {
    std::string name;
    BBox box;
};

struct Annotation {
    std::string image;  // relative to the sidecar's directory
    std::vector<AnnotatedPart> parts;
};

Annotation parse_annotation(const std::string& json_text);

// Crops every annotated part of every sidecar in <root>/<holonym>/ whose name
// is in `parts`.
PartDataset ingest_annotations(const std::string& root, const std::string& holonym,
                               const std::vector<std::string>& parts, std::vector<std::string>* warnings = nullptr);

// <root>/<holonym>/<part>/<images>.
PartDataset ingest_folders(const std::string& root, const std::string& holonym, const std::vector<std::string>& parts,
                           Source source = Source::Scrape);

// Writes <dir>/manifest.json plus one PNG per sample under <dir>/images/.
void write_manifest(const PartDataset& ds, const std::string& dir, const nlohmann::json& config);
PartDataset load_manifest(const std::string& manifest_path);

}  // namespace holmes::data
