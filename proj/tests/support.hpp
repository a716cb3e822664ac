#pragma once

#include "holmes/backend.hpp"
#include "holmes/image.hpp"
#include "holmes/rng.hpp"

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

namespace testing {

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("holmes-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }
    std::string operator/(const std::string& rel) const { return (path_ / rel).string(); }

private:
    std::filesystem::path path_;
};

// Class 0 probability = fraction of pixels inside `box` that differ from the fill.
class BoxCountStub : public holmes::net::Classifier {
public:
    explicit BoxCountStub(holmes::BBox box, holmes::Rgb fill = holmes::kAblationFill) : box_(box), fill_(fill) {}

    std::vector<double> probabilities(const holmes::Image& image) const override {
        int live = 0;
        for (int y = box_.y_min; y < box_.y_max; ++y) {
            for (int x = box_.x_min; x < box_.x_max; ++x) live += image.get(x, y) == fill_ ? 0 : 1;
        }
        const double p = static_cast<double>(live) / (box_.width() * box_.height());
        return {p, 1.0 - p};
    }
    std::size_t num_classes() const override { return 2; }

private:
    holmes::BBox box_;
    holmes::Rgb fill_;
};

class ConstantStub : public holmes::net::Classifier {
public:
    explicit ConstantStub(double p) : p_(p) {}
    std::vector<double> probabilities(const holmes::Image&) const override { return {p_, 1.0 - p_}; }
    std::size_t num_classes() const override { return 2; }

private:
    double p_;
};

inline holmes::Image noise_image(int w, int h, std::uint64_t seed) {
    holmes::Image img(w, h);
    holmes::Rng rng(seed);
    for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng.below(256));
    return img;
}

// Image with no pixel equal to the ablation fill.
inline holmes::Image solid_image(int w, int h, holmes::Rgb c = {200, 30, 30}) { return holmes::Image(w, h, c); }

}  // namespace testing

#include "holmes/explain.hpp"
#include "holmes/synth.hpp"

#include <memory>

namespace testing {

// Tiny untrained pipeline over 16 x 16 images: pixel-pool features, random
// heads, synthetic KB. `forced` pins the holonym prediction through the bias.
struct MicroWorld {
    std::unique_ptr<holmes::net::PixelPoolExtractor> fe;
    std::unique_ptr<holmes::net::SplitClassifier> holonym;
    holmes::kb::HolMeMap kb;
    holmes::explain::Pipeline pipeline;

    explicit MicroWorld(std::uint64_t seed = 1, std::vector<std::string> holonyms = {"alpha", "beta"}, int forced = -1) {
        using namespace holmes::net;
        fe = std::make_unique<PixelPoolExtractor>(4, PreprocessConfig{16, 16});
        const std::size_t n = holonyms.size();
        Head h({3, 4, 4}, {Layer::flatten(), Layer::linear(48, n)}, holonyms);
        h.initialize(seed);
        if (forced >= 0) h.mutable_layers()[1].bias[static_cast<std::size_t>(forced)] = 50.0f;
        holonym = std::make_unique<SplitClassifier>(*fe, std::move(h));
        kb = holmes::synth::make_kb();
        pipeline.holonym = holonym.get();
        pipeline.kb = &kb;
        for (const std::string name : {"alpha", "beta"}) {
            Head m = Head::classifier({3, 4, 4}, 8, holmes::synth::parts_of(name), 0.0, 1);
            m.initialize(holmes::hash_combine(seed, name.size() + name[0]));
            pipeline.meronyms[name] = {std::move(m), {0.95, 0.9, 0.85}};
        }
    }
};

}  // namespace testing
