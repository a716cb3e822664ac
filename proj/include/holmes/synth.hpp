#pragma once

#include "holmes/backend.hpp"
#include "holmes/datakit.hpp"
#include "holmes/explain.hpp"
#include "holmes/kb.hpp"
#include "holmes/train.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

// Synthetic "shapes" world: two holonyms built from three coloured parts on
// noisy backgrounds. Both share a red head and a green torso; alpha has a blue
// tail, beta a yellow horn. A third class, other, shows head and torso only.
namespace holmes::synth {

struct Scene {
    Image image;
    std::string holonym;
    std::vector<std::pair<std::string, BBox>> parts;  // in drawing order

    const BBox* box(const std::string& part) const;
};

inline const std::vector<std::string>& holonym_classes() {
    static const std::vector<std::string> c{"alpha", "beta", "other"};
    return c;
}

// Part list per explained holonym ("other" has no meronym model).
std::vector<std::string> parts_of(const std::string& holonym);
std::string discriminative_part(const std::string& holonym);

Scene render(const std::string& holonym, std::uint64_t seed, int size = 112);

std::string kb_document();
kb::HolMeMap make_kb();

net::PreprocessConfig preprocessing(int size = 112);
nlohmann::json backend_spec(std::uint64_t seed, int size = 112);

// Writes a self-contained workspace for the command-line pipeline: KB,
// annotation sidecars, holonym training folders, test images with
// ground-truth boxes, and a config.json.
struct WorkspaceSpec {
    std::uint64_t seed = 7;
    int size = 112;
    int annotated_per_holonym = 60;
    int holonym_train_per_class = 60;
    int test_images = 10;
};
void write_workspace(const std::string& dir, const WorkspaceSpec& spec);

// In-memory end-to-end build used by the acceptance suite.
struct BenchmarkConfig {
    std::uint64_t seed = 7;
    int size = 112;
    int annotated_per_holonym = 60;
    int holonym_train_per_class = 100;
    int holonym_val_per_class = 12;
    int test_images = 20;
    std::size_t hidden = 64;
    double dropout = 0.2;
    int pool = 14;  // global max pool over the 14 x 14 feature grid
    double contamination = 0.15;
    int dedupe_threshold = 4;
    net::TrainConfig train;
    int jobs = 1;

    BenchmarkConfig();
};

struct Benchmark {
    std::unique_ptr<net::FeatureExtractor> extractor;
    std::unique_ptr<net::SplitClassifier> holonym;
    std::unique_ptr<kb::HolMeMap> kb;
    explain::Pipeline pipeline;
    std::map<std::string, data::PartDataset> datasets;
    std::map<std::string, net::TrainResult> meronym_training;
    net::TrainHistory holonym_history;
    std::vector<Scene> test_scenes;  // alpha and beta alternate
};

// `workdir` receives the annotation files the part datasets are built from.
Benchmark build_benchmark(const BenchmarkConfig& cfg, const std::string& workdir);

}  // namespace holmes::synth
