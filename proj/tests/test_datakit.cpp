#include "holmes/backend.hpp"
#include "holmes/datakit.hpp"
#include "holmes/error.hpp"
#include "holmes/rng.hpp"
#include "support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

using namespace holmes;
using namespace holmes::data;

namespace {

ImageSample sample_of(Image img, std::string id = "src") {
    ImageSample s;
    s.pixels = std::move(img);
    s.origin_id = std::move(id);
    return s;
}

// Class label per sample, unique textured pixels.
PartDataset toy_dataset(const std::vector<std::pair<std::string, int>>& counts, std::uint64_t seed = 1) {
    PartDataset ds;
    ds.holonym = "toy";
    int k = 0;
    for (const auto& [label, n] : counts) {
        ds.classes.push_back(label);
        for (int i = 0; i < n; ++i) {
            ImageSample s = sample_of(testing::noise_image(16, 16, hash_combine(seed, k)), label + "/" + std::to_string(1000 + i));
            s.label = label;
            ds.samples.push_back(std::move(s));
            ++k;
        }
    }
    return ds;
}

std::map<Fold, int> fold_counts(const PartDataset& ds) {
    std::map<Fold, int> c;
    for (const auto& [id, f] : ds.folds) ++c[f];
    return c;
}

// Independent pHash: direct double sums over the DCT-II definition.
std::uint64_t phash_oracle(const std::vector<double>& grid32) {
    const double pi = std::numbers::pi;
    std::vector<double> coeffs;
    for (int u = 1; u <= 8; ++u) {
        for (int v = 1; v <= 8; ++v) {
            double s = 0.0;
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x)
                    s += grid32[y * 32 + x] * std::cos(pi * (2 * y + 1) * u / 64.0) * std::cos(pi * (2 * x + 1) * v / 64.0);
            coeffs.push_back(std::round(s * (2.0 / 32.0) * 1e6) / 1e6);
        }
    }
    auto sorted = coeffs;
    std::sort(sorted.begin(), sorted.end());
    const double median = 0.5 * (sorted[31] + sorted[32]);
    std::uint64_t h = 0;
    for (int i = 0; i < 64; ++i)
        if (coeffs[i] > median) h |= std::uint64_t{1} << i;
    return h;
}

}  // namespace

TEST_CASE("crop_part square box is identity") {
    const Image img = testing::noise_image(50, 40, 9);
    const auto out = crop_part(sample_of(img), {10, 5, 30, 25}, {});
    CHECK(out.pixels == crop(img, {10, 5, 30, 25}));
}

TEST_CASE("crop_part grows the short side symmetrically") {
    const Image img = testing::noise_image(100, 100, 4);
    // 10 wide, 20 tall, centred: the width grows by 5 on each side.
    const auto out = crop_part(sample_of(img), {45, 40, 55, 60}, {});
    REQUIRE(out.pixels.width() == 20);
    REQUIRE(out.pixels.height() == 20);
    CHECK(out.pixels == crop(img, {40, 40, 60, 60}));
}

TEST_CASE("crop_part against the left edge pads the shortfall") {
    const Image img = testing::noise_image(100, 100, 4);
    const auto out = crop_part(sample_of(img), {0, 40, 10, 60}, {});
    REQUIRE(out.pixels.width() == 20);
    REQUIRE(out.pixels.height() == 20);
    // Right side grows by its own 5 steps plus the 5 the blocked left side cannot take.
    CHECK(out.pixels == crop(img, {0, 40, 20, 60}));

    Image narrow = testing::noise_image(12, 100, 6);
    const auto padded = crop_part(sample_of(narrow), {0, 40, 10, 60}, {});
    REQUIRE(padded.pixels.width() == 20);
    int fill_cols = 0;
    for (int x = 0; x < 20; ++x) fill_cols += padded.pixels.get(x, 10) == kAblationFill ? 1 : 0;
    CHECK(fill_cols == 8);
}

TEST_CASE("crop_part stops at siblings") {
    const Image img = testing::noise_image(100, 100, 4);
    const auto out = crop_part(sample_of(img), {45, 40, 55, 60}, {{30, 40, 43, 60}});
    REQUIRE(out.pixels.width() == 20);
    // Left side may take columns 43 and 44 only; the right side takes the rest.
    CHECK(out.pixels == crop(img, {43, 40, 63, 60}));
}

TEST_CASE("crop_part rejects bad boxes") {
    const Image img(20, 20);
    CHECK_THROWS_AS(crop_part(sample_of(img), {5, 5, 5, 10}, {}), ValidationError);
    CHECK_THROWS_AS(crop_part(sample_of(img), {15, 5, 25, 10}, {}), ValidationError);
}

TEST_CASE("phash matches the DCT definition") {
    const Image img = testing::noise_image(32, 32, 11);
    const auto y = luma(img);
    CHECK(phash(img) == phash_oracle(y));

    // Constant images: every AC coefficient is zero, none exceeds the median.
    const Image black(40, 30, {0, 0, 0}), white(40, 30, {255, 255, 255});
    CHECK(phash(black) == phash_oracle(std::vector<double>(1024, 0.0)));
    CHECK(phash(white) == phash_oracle(std::vector<double>(1024, 255.0)));
    CHECK(hamming_distance(phash(black), phash(white)) == 0);
}

TEST_CASE("phash is stable and robust") {
    const Image img = testing::noise_image(64, 64, 21);
    Image smooth = gaussian_blur(img, 3.0);
    CHECK(phash(smooth) == phash(smooth));
    const Image reencoded = decode_image(encode_jpeg(smooth, 95));
    CHECK(hamming_distance(phash(smooth), phash(reencoded)) <= 10);
}

TEST_CASE("dedupe") {
    auto ds = toy_dataset({{"a", 6}});
    ImageSample copy = ds.samples[2];
    copy.origin_id = "a/9999";
    ds.samples.push_back(copy);
    auto out = dedupe(ds, 0);
    CHECK(out.flag("a/9999") == Flag::Duplicate);
    CHECK(out.kept("a/1002"));
    CHECK(dedupe(out, 0).flags == out.flags);

    const auto distinct = dedupe(toy_dataset({{"a", 8}}), 0);
    CHECK(distinct.flags.empty());
}

TEST_CASE("dedupe flags planted near duplicates") {
    PartDataset ds;
    ds.classes = {"a"};
    int planted = 0;
    for (int i = 0; i < 50; ++i) {
        Image img = gaussian_blur(testing::noise_image(48, 48, 500 + i), 2.0);
        ImageSample s = sample_of(img, "a/" + std::to_string(100 + i));
        s.label = "a";
        ds.samples.push_back(s);
        if (i % 5 == 0 && planted < 9) {
            ImageSample d = sample_of(decode_image(encode_jpeg(img, 92)), "a/" + std::to_string(200 + i));
            d.label = "a";
            ds.samples.push_back(d);
            ++planted;
        }
    }
    const auto out = dedupe(ds, 10);
    std::size_t flagged = 0;
    for (const auto& [id, f] : out.flags) flagged += f == Flag::Duplicate ? 1 : 0;
    CHECK(flagged >= 9);
    CHECK(flagged <= 11);
}

TEST_CASE("remove_outliers counts") {
    std::vector<std::vector<double>> pts;
    Rng rng(3);
    for (int i = 0; i < 20; ++i) pts.push_back({rng.normal(), rng.normal(), rng.normal()});
    CHECK(remove_outliers(pts, 0.15).flagged.size() == 3);
    CHECK(remove_outliers(pts, 0.0).flagged.empty());
    const auto r = remove_outliers(pts, 0.15);
    CHECK(r.kept.size() + r.flagged.size() == 20);
}

TEST_CASE("remove_outliers finds off-line points") {
    // 50 points near a 2-D plane in 10-D plus 5 points far off it.
    Rng rng(17);
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(10, 2);
    for (int i = 0; i < 10; ++i) basis(i, 0) = rng.normal(), basis(i, 1) = rng.normal();
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 50; ++i) {
        Eigen::VectorXd p = basis * Eigen::Vector2d(rng.normal() * 5, rng.normal() * 5);
        for (int d = 0; d < 10; ++d) p(d) += 0.05 * rng.normal();
        pts.emplace_back(p.data(), p.data() + 10);
    }
    for (int i = 0; i < 5; ++i) {
        std::vector<double> p(10);
        for (auto& v : p) v = rng.normal() * 3;
        pts.push_back(p);
    }
    const auto r = remove_outliers(pts, 0.15);
    CHECK(r.flagged.size() == 8);
    int caught = 0;
    for (auto i : r.flagged) caught += i >= 50 ? 1 : 0;
    CHECK(caught == 5);

    // Scores against an independent eigendecomposition of the covariance.
    const int n = static_cast<int>(pts.size());
    Eigen::MatrixXd X(n, 10);
    for (int i = 0; i < n; ++i)
        for (int d = 0; d < 10; ++d) X(i, d) = pts[i][d];
    const Eigen::RowVectorXd mean = X.colwise().mean();
    X.rowwise() -= mean;
    const Eigen::MatrixXd cov = X.transpose() * X / (n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    std::vector<double> oracle(n, 0.0);
    for (int k = 0; k < 10; ++k) {
        const double lam = es.eigenvalues()(k);
        if (lam <= 1e-12 * es.eigenvalues().maxCoeff()) continue;
        const Eigen::VectorXd proj = X * es.eigenvectors().col(k);
        for (int i = 0; i < n; ++i) oracle[i] += proj(i) * proj(i) / lam;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return oracle[a] > oracle[b]; });
    std::set<std::size_t> expected(order.begin(), order.begin() + 8);
    CHECK(std::set<std::size_t>(r.flagged.begin(), r.flagged.end()) == expected);
}

TEST_CASE("split ratios") {
    auto ds = split(toy_dataset({{"a", 100}}), SplitRatios{}, 5);
    auto c = fold_counts(ds);
    CHECK(c[Fold::Train] == 81);
    CHECK(c[Fold::Val] == 9);
    CHECK(c[Fold::Test] == 10);

    auto all_train = split(toy_dataset({{"a", 30}}), SplitRatios{1, 0, 0}, 5);
    CHECK(fold_counts(all_train)[Fold::Train] == 30);

    const auto again = split(toy_dataset({{"a", 100}}), SplitRatios{}, 5);
    CHECK(again.folds == ds.folds);
    CHECK(split(toy_dataset({{"a", 100}}), SplitRatios{}, 6).folds != ds.folds);

    const auto strat = split(toy_dataset({{"a", 50}, {"b", 50}}), SplitRatios{}, 2);
    std::map<std::string, std::map<Fold, int>> per;
    for (const auto& [id, f] : strat.folds) ++per[strat.find(id)->label][f];
    for (const auto& [label, folds] : per) {
        CHECK(folds.at(Fold::Test) == 5);
        CHECK(folds.at(Fold::Val) >= 4);
    }
}

TEST_CASE("balance_augment") {
    const auto balanced = toy_dataset({{"a", 10}, {"b", 10}});
    CHECK(balance_augment(balanced, 1).samples.size() == 20);

    auto horse = split(toy_dataset({{"head", 10}, {"leg", 40}}), SplitRatios{}, 3);
    const auto out = balance_augment(horse, 9);
    const auto counts = out.class_counts();
    CHECK(counts.at("leg") == 40);
    CHECK(counts.at("head") >= 38);
    for (const auto& s : out.samples) {
        if (s.source != Source::Augment) continue;
        CHECK(out.folds.at(s.origin_id) == Fold::Train);
        CHECK(out.folds.at(s.parent_id) == Fold::Train);
    }
    const auto again = balance_augment(horse, 9);
    REQUIRE(again.samples.size() == out.samples.size());
    for (std::size_t i = 0; i < out.samples.size(); ++i) CHECK(again.samples[i].pixels == out.samples[i].pixels);
}

TEST_CASE("scrape_part") {
    testing::TempDir dir("scrape");
    std::filesystem::create_directories(dir.path() / "toy_head");
    for (int i = 0; i < 12; ++i) {
        write_file((dir.path() / "toy_head" / ("img" + std::to_string(10 + i) + ".png")).string(),
                   encode_png(testing::noise_image(20, 20, 70 + i)));
    }
    DirectoryEngine google("google", dir.str()), bing("bing", dir.str(), true);

    std::vector<EngineClient*> one{&google};
    CHECK(scrape_part("toy", "head", one, {40}, 0).size() == 12);
    CHECK(scrape_part("toy", "head", one, {5}, 0).size() == 5);
    CHECK_THROWS_AS(scrape_part("toy", "head", one, {0}, 0), PipelineError);

    std::vector<EngineClient*> sim{&bing};
    const auto with_similar = scrape_part("toy", "head", sim, {10}, 5);
    CHECK(with_similar.size() >= 10);
    CHECK(with_similar.size() <= 60);
}

TEST_CASE("manifest round trip") {
    testing::TempDir dir("manifest");
    auto ds = split(toy_dataset({{"a", 12}, {"b", 12}}), SplitRatios{}, 1);
    ds.flags["a/1003"] = Flag::Outlier;
    write_manifest(ds, dir.str(), nlohmann::json{{"seed", 1}});
    const auto back = load_manifest(dir / "manifest.json");
    CHECK(back.classes == ds.classes);
    CHECK(back.folds == ds.folds);
    CHECK(back.flags == ds.flags);
    REQUIRE(back.samples.size() == ds.samples.size());
    CHECK(back.samples[5].pixels == ds.samples[5].pixels);

    std::ifstream a(dir / "manifest.json");
    const std::string first((std::istreambuf_iterator<char>(a)), {});
    write_manifest(ds, dir.str(), nlohmann::json{{"seed", 1}});
    std::ifstream b(dir / "manifest.json");
    CHECK(std::string((std::istreambuf_iterator<char>(b)), {}) == first);
}
