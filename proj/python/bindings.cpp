#include "holmes/backend.hpp"
#include "holmes/cli.hpp"
#include "holmes/datakit.hpp"
#include "holmes/error.hpp"
#include "holmes/evalkit.hpp"
#include "holmes/kb.hpp"
#include "holmes/netcore.hpp"
#include "holmes/saliency.hpp"
#include "holmes/synth.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <sstream>

namespace py = pybind11;
using namespace holmes;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Image to_image(const U8Array& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw ValidationError("expected an H x W x 3 uint8 array");
    Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(img.bytes().data(), a.data(), img.bytes().size());
    return img;
}

U8Array from_image(const Image& img) {
    U8Array a({img.height(), img.width(), 3});
    std::memcpy(a.mutable_data(), img.bytes().data(), img.bytes().size());
    return a;
}

Tensor to_tensor(const F32Array& a) {
    std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

F32Array from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    F32Array a(shape);
    std::memcpy(a.mutable_data(), t.data().data(), t.size() * sizeof(float));
    return a;
}

sal::Heatmap to_heatmap(const F32Array& a) {
    if (a.ndim() != 2) throw ValidationError("expected an H x W float array");
    sal::Heatmap hm(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(hm.values.data(), a.data(), hm.values.size() * sizeof(float));
    return hm;
}

F32Array from_heatmap(const sal::Heatmap& hm) {
    F32Array a({hm.height, hm.width});
    std::memcpy(a.mutable_data(), hm.values.data(), hm.values.size() * sizeof(float));
    return a;
}

BBox to_box(const std::array<int, 4>& b) { return {b[0], b[1], b[2], b[3]}; }

net::PreprocessConfig preprocess_config(int resize_shorter, int crop) {
    net::PreprocessConfig c;
    c.resize_shorter = resize_shorter;
    c.crop = crop;
    return c;
}

}  // namespace

PYBIND11_MODULE(_holmes, m) {
    m.doc() = "Part-based explanations for image classifiers";

    auto base = py::register_exception<Error>(m, "HolmesError");
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<ResolutionError>(m, "ResolutionError", base.ptr());
    py::register_exception<BackendError>(m, "BackendError", base.ptr());
    py::register_exception<PipelineError>(m, "PipelineError", base.ptr());

    // kb
    m.def("bundled_kb_path", &kb::bundled_kb_path, py::arg("name"));
    m.def(
        "resolve_parts",
        [](const std::string& concept_id, const std::string& kb_name) {
            return kb::resolve_parts(concept_id, kb::load_kb_file(kb::bundled_kb_path(kb_name)));
        },
        py::arg("concept"), py::arg("kb") = "pascal");
    m.def(
        "resolve_parts_in",
        [](const std::string& concept_id, const std::string& document) {
            return kb::resolve_parts(concept_id, kb::load_kb(document));
        },
        py::arg("concept"), py::arg("document"), "Resolve against a KB given as JSON text.");

    // images and datakit
    m.def("read_image", [](const std::string& p) { return from_image(read_image(p)); }, py::arg("path"));
    m.def(
        "write_png", [](const std::string& p, const U8Array& a) { write_file(p, encode_png(to_image(a))); },
        py::arg("path"), py::arg("image"));
    m.def("phash", [](const U8Array& a) { return data::phash(to_image(a)); }, py::arg("image"));
    m.def("hamming_distance", &data::hamming_distance);
    m.def(
        "crop_part",
        [](const U8Array& a, const std::array<int, 4>& box, const std::vector<std::array<int, 4>>& siblings) {
            data::ImageSample s;
            s.pixels = to_image(a);
            std::vector<BBox> sib;
            for (const auto& b : siblings) sib.push_back(to_box(b));
            return from_image(data::crop_part(s, to_box(box), sib).pixels);
        },
        py::arg("image"), py::arg("box"), py::arg("siblings") = std::vector<std::array<int, 4>>{});
    m.def(
        "remove_outliers",
        [](const std::vector<std::vector<double>>& features, double contamination) {
            const auto r = data::remove_outliers(features, contamination);
            return py::make_tuple(r.kept, r.flagged, r.scores);
        },
        py::arg("features"), py::arg("contamination") = 0.15, "Returns (kept, flagged, scores).");

    // netcore / backend
    m.def("calibrated_f1", &net::calibrated_f1, py::arg("confusion"));
    m.def(
        "softmax_xent",
        [](const std::vector<float>& logits, std::size_t label) {
            const auto r = net::softmax_xent(Tensor({logits.size()}, logits), label);
            return py::make_tuple(r.loss, std::vector<float>(r.d_logits.values()), r.probabilities);
        },
        py::arg("logits"), py::arg("label"));
    m.def(
        "preprocess",
        [](const U8Array& a, int resize_shorter, int crop) {
            return from_tensor(net::preprocess(to_image(a), preprocess_config(resize_shorter, crop)));
        },
        py::arg("image"), py::arg("resize_shorter") = 256, py::arg("crop") = 224);

    py::class_<net::ConvStackExtractor>(m, "ConvStack")
        .def_static(
            "random",
            [](const std::vector<int>& arch, std::uint64_t seed, int size) {
                return net::ConvStackExtractor::random(arch, seed, preprocess_config(size, size));
            },
            py::arg("architecture"), py::arg("seed"), py::arg("size") = 224)
        .def_static("load", &net::ConvStackExtractor::load, py::arg("index_path"))
        .def("save", &net::ConvStackExtractor::save, py::arg("index_path"))
        .def("output_shape", &net::ConvStackExtractor::output_shape)
        .def("extract", [](const net::ConvStackExtractor& fe, const F32Array& x) { return from_tensor(fe.extract(to_tensor(x))); })
        .def("features", [](const net::ConvStackExtractor& fe, const U8Array& a) { return from_tensor(fe.features(to_image(a))); })
        .def("layers", [](const net::ConvStackExtractor& fe) {
            py::list out;
            for (const auto& l : fe.convs()) {
                F32Array w({static_cast<py::ssize_t>(l.out), static_cast<py::ssize_t>(l.in), py::ssize_t{3}, py::ssize_t{3}});
                std::memcpy(w.mutable_data(), l.weight.data(), l.weight.size() * sizeof(float));
                F32Array b({static_cast<py::ssize_t>(l.out)});
                std::memcpy(b.mutable_data(), l.bias.data(), l.bias.size() * sizeof(float));
                out.append(py::make_tuple(w, b));
            }
            return out;
        }, "Conv weights and biases as (O x I x 3 x 3, O) pairs.");

    // saliency
    m.def("percentile_value", &sal::percentile_value, py::arg("values"), py::arg("q"));
    m.def(
        "binarize",
        [](const F32Array& hm, double q) {
            const auto mask = sal::binarize(to_heatmap(hm), q);
            py::array_t<bool> out({mask.height, mask.width});
            auto* p = out.mutable_data();
            for (std::size_t i = 0; i < mask.bits.size(); ++i) p[i] = mask.bits[i];
            return out;
        },
        py::arg("heatmap"), py::arg("q") = 83.0);
    m.def("score_drop", py::overload_cast<double, double>(&sal::score_drop), py::arg("p_orig"), py::arg("p_ablated"));

    // evalkit
    m.def(
        "pixel_auc",
        [](const F32Array& hm, const std::vector<std::array<int, 4>>& boxes) {
            std::vector<BBox> b;
            for (const auto& x : boxes) b.push_back(to_box(x));
            return eval::pixel_auc(to_heatmap(hm), b);
        },
        py::arg("heatmap"), py::arg("boxes"));
    m.def("trapezoid_auc", &eval::trapezoid_auc, py::arg("fractions"), py::arg("scores"));
    m.def(
        "random_superpixel_ranking",
        [](int w, int h, int cell, std::uint64_t seed) { return from_heatmap(eval::random_superpixel_ranking(w, h, cell, seed)); },
        py::arg("width"), py::arg("height"), py::arg("cell"), py::arg("seed"));

    // synthetic world
    m.def(
        "render_scene",
        [](const std::string& holonym, std::uint64_t seed, int size) {
            const auto s = synth::render(holonym, seed, size);
            py::dict parts;
            for (const auto& [name, b] : s.parts) parts[py::str(name)] = py::make_tuple(b.x_min, b.y_min, b.x_max, b.y_max);
            return py::make_tuple(from_image(s.image), parts);
        },
        py::arg("holonym"), py::arg("seed"), py::arg("size") = 112);
    m.def(
        "write_workspace",
        [](const std::string& dir, std::uint64_t seed, int annotated, int holonym_images, int test_images) {
            synth::WorkspaceSpec spec;
            spec.seed = seed;
            spec.annotated_per_holonym = annotated;
            spec.holonym_train_per_class = holonym_images;
            spec.test_images = test_images;
            synth::write_workspace(dir, spec);
        },
        py::arg("directory"), py::arg("seed") = 7, py::arg("annotated") = 60, py::arg("holonym_images") = 60,
        py::arg("test_images") = 10);

    // command line
    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a holmes command; returns (exit_code, stdout, stderr).");
}
