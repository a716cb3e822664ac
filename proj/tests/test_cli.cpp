#include "holmes/cli.hpp"
#include "holmes/synth.hpp"
#include "support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace holmes;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> files_in(const fs::path& dir, const std::string& ext) {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ext) out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("parts command") {
    auto r = run({"parts", "horse"});
    CHECK(r.code == 0);
    CHECK(r.out == "head\ntorso\nleg\ntail\n");
    r = run({"parts", "--kb", "imagenet", "sorrel"});
    CHECK(r.code == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 6);
    r = run({"parts", "qwerty"});
    CHECK(r.code == 2);
    CHECK(r.err.find("qwerty") != std::string::npos);
    CHECK(run({"parts"}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
}

TEST_CASE("config errors") {
    testing::TempDir dir("cli-cfg");
    CHECK(run({"build", "-c", dir / "missing.json"}).code == 2);
    std::ofstream(dir / "bad.json") << "{ nope";
    CHECK(run({"build", "-c", dir / "bad.json"}).code == 2);
    std::ofstream(dir / "noseed.json") << R"({"holonyms":["alpha"]})";
    const auto r = run({"build", "-c", dir / "noseed.json"});
    CHECK(r.code == 2);
    CHECK(r.err.find("seed") != std::string::npos);
}

TEST_CASE("pipeline commands") {
    testing::TempDir dir("cli");
    synth::WorkspaceSpec spec;
    spec.annotated_per_holonym = 16;
    spec.holonym_train_per_class = 16;
    spec.test_images = 4;
    synth::write_workspace(dir.str(), spec);
    const std::string cfg = dir / "config.json";
    const std::vector<std::string> quick{"--set", "train.epochs=6", "--set", "train.augment_views=1"};
    auto with = [&](std::vector<std::string> a) {
        a.insert(a.end(), quick.begin(), quick.end());
        return run(a);
    };

    // Missing dataset before build.
    CHECK(with({"train", "-c", cfg}).code == 2);

    std::ofstream(dir / "empty.json") << nlohmann::json{{"seed", 1}, {"kb", "kb.json"}, {"holonyms", {"alpha"}},
                                                        {"backend", synth::backend_spec(7)},
                                                        {"data", {{"annotations", "nothing"}}}}
                                             .dump();
    fs::create_directories(dir.path() / "nothing");
    CHECK(run({"build", "-c", dir / "empty.json"}).code == 2);

    auto r = run({"build", "-c", cfg});
    REQUIRE(r.code == 0);
    const std::string manifest = slurp(dir.path() / "out/datasets/alpha/manifest.json");
    REQUIRE(run({"build", "-c", cfg}).code == 0);
    CHECK(slurp(dir.path() / "out/datasets/alpha/manifest.json") == manifest);

    r = with({"train", "-c", cfg});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("calibrated F1") != std::string::npos);
    CHECK(fs::exists(dir.path() / "out/models/alpha/train_log.csv"));
    r = with({"train", "-c", cfg, "--resume"});
    CHECK(r.code == 0);
    CHECK(r.out.find("nothing to do") != std::string::npos);
    REQUIRE(with({"train", "-c", cfg, "--target", "holonym"}).code == 0);

    // Explain every test image; un-mapped predictions surface as exit 3.
    std::vector<std::string> images = files_in(dir.path() / "test", ".png");
    REQUIRE(images.size() == 4);
    std::vector<std::string> args{"explain", "-c", cfg, "-j", "2"};
    args.insert(args.end(), images.begin(), images.end());
    r = run(args);
    CHECK((r.code == 0 || r.code == 3));
    const auto index = nlohmann::json::parse(slurp(dir.path() / "out/reports/index.json"));
    REQUIRE(index["reports"].size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(index["reports"][i]["image"] == images[i]);

    std::vector<std::string> reports;
    for (const auto& e : index["reports"])
        if (e.contains("report")) reports.push_back((dir.path() / "out/reports" / e["report"].get<std::string>()).string());
    REQUIRE_FALSE(reports.empty());
    const std::string first_report = slurp(reports[0]);
    const auto again = run(args);
    CHECK(again.code == r.code);
    CHECK(slurp(reports[0]) == first_report);
    const auto report_json = nlohmann::json::parse(first_report);
    CHECK(report_json["provenance"]["seed"] == 7);

    std::vector<std::string> eargs{"eval", "-c", cfg, "--against", "gradcam", "--set", "eval.steps=10",
                                   "--set", "eval.baseline_seeds=1"};
    eargs.insert(eargs.end(), reports.begin(), reports.end());
    r = run(eargs);
    INFO(r.err);
    REQUIRE(r.code == 0);
    const std::string csv = slurp(dir.path() / "out/eval/metrics.csv");
    CHECK(csv.find("gradcam_deletion_auc") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(reports.size() + 1));
    REQUIRE(run(eargs).code == 0);
    CHECK(slurp(dir.path() / "out/eval/metrics.csv") == csv);
    CHECK(run({"eval", "-c", cfg}).code == 2);

    // The explain index expands to its reports; duplicates collapse.
    std::vector<std::string> iargs(eargs.begin(), eargs.end() - static_cast<long>(reports.size()));
    iargs.push_back((dir.path() / "out/reports/index.json").string());
    iargs.push_back(reports[0]);
    REQUIRE(run(iargs).code == 0);
    CHECK(slurp(dir.path() / "out/eval/metrics.csv") == csv);

    std::vector<std::string> targs{"tune-q", "-c", cfg, "--min", "82", "--max", "84", "--set", "eval.steps=6"};
    targs.push_back(images[0]);
    r = run(targs);
    CHECK((r.code == 0 || r.code == 3));
}
