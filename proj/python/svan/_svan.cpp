#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <optional>

#include "svan/analysis.hpp"
#include "svan/error.hpp"
#include "svan/image.hpp"
#include "svan/metrics.hpp"
#include "svan/model.hpp"
#include "svan/ops.hpp"

namespace py = pybind11;
using namespace svan;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor4 to_tensor4(const Array& a) {
    if (a.ndim() != 4) throw DimensionError("expected a 4-d (n, c, h, w) array, got " + std::to_string(a.ndim()) + "-d");
    const Shape s{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                  static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(3))};
    return Tensor4(s, std::vector<double>(a.data(), a.data() + s.numel()));
}

Array to_array(const Tensor4& t) {
    Array out({t.n(), t.c(), t.h(), t.w()});
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

std::vector<double> flat(const Array& a) { return std::vector<double>(a.data(), a.data() + a.size()); }

SvanConfig make_config(std::size_t scale, std::size_t channels, std::size_t blocks, const std::string& arrangement,
                       std::uint64_t seed) {
    SvanConfig c;
    c.scale = scale;
    c.base_channels = channels;
    c.inner_channels = 2 * channels;
    c.num_blocks = blocks;
    c.arrangement = parse_arrangement(arrangement);
    c.seed = seed;
    c.validate();
    return c;
}

py::dict report_dict(const EfficiencyReport& r) {
    py::list rows;
    for (const ReportRow& row : r.rows) {
        py::dict d;
        d["name"] = row.name;
        d["params"] = row.params;
        d["macs"] = row.macs;
        d["flops"] = row.flops;
        d["rf"] = row.rf;
        rows.append(d);
    }
    py::dict d;
    d["rows"] = rows;
    d["params"] = r.total_params;
    d["macs"] = r.total_macs;
    d["flops"] = r.total_flops;
    d["receptive_field"] = r.receptive_field;
    return d;
}

}  // namespace

PYBIND11_MODULE(_svan, m) {
    m.doc() = "SVAN super-resolution core";

    static py::exception<Error> base(m, "SvanError", PyExc_RuntimeError);
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<CorruptFileError>(m, "CorruptFileError", base.ptr());
    py::register_exception<UnsupportedError>(m, "UnsupportedError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<UsageError>(m, "UsageError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    m.def("set_num_threads", &set_num_threads);
    m.def("num_threads", &num_threads);

    m.def(
        "conv2d",
        [](const Array& x, const Array& weight, std::optional<Array> bias, std::size_t dilation, std::size_t groups,
           const std::string& padding) {
            if (padding != "valid" && padding != "same") throw UsageError("padding must be 'same' or 'valid'");
            const Tensor4 w = to_tensor4(weight);
            const ConvSpec spec{w.c() * groups, w.n(), w.h(), dilation, groups,
                                padding == "valid" ? Padding::Valid : Padding::Same};
            const std::vector<double> b = bias ? flat(*bias) : std::vector<double>{};
            return to_array(conv2d(to_tensor4(x), w, b, spec));
        },
        py::arg("x"), py::arg("weight"), py::arg("bias") = py::none(), py::arg("dilation") = 1,
        py::arg("groups") = 1, py::arg("padding") = "same");
    m.def("gelu", [](const Array& x) { return to_array(gelu(to_tensor4(x))); });
    m.def("pixel_shuffle", [](const Array& x, std::size_t s) { return to_array(pixel_shuffle(to_tensor4(x), s)); });
    m.def("pixel_unshuffle", [](const Array& x, std::size_t s) { return to_array(pixel_unshuffle(to_tensor4(x), s)); });
    m.def(
        "pixel_norm",
        [](const Array& x, const Array& gain, const Array& shift, double eps) {
            return to_array(pixel_norm(to_tensor4(x), flat(gain), flat(shift), eps));
        },
        py::arg("x"), py::arg("gain"), py::arg("shift"), py::arg("eps") = kPixelNormEps);

    m.def("bicubic_resize", [](const Array& x, std::size_t h, std::size_t w) {
        return to_array(bicubic_resize(to_tensor4(x), h, w));
    });
    m.def("rgb_to_y", [](const Array& x) { return to_array(rgb_to_y(to_tensor4(x))); });
    m.def("psnr_y", [](const Array& sr, const Array& hr, std::size_t shave) {
        return psnr_y(to_tensor4(sr), to_tensor4(hr), shave);
    }, py::arg("sr"), py::arg("hr"), py::arg("shave") = 0);
    m.def("ssim_y", [](const Array& sr, const Array& hr, std::size_t shave) {
        return ssim_y(to_tensor4(sr), to_tensor4(hr), shave);
    }, py::arg("sr"), py::arg("hr"), py::arg("shave") = 0);
    m.def("ssim", [](const Array& a, const Array& b) { return ssim(to_tensor4(a), to_tensor4(b)); });

    m.def("load_png", [](const std::filesystem::path& p) { return to_array(to_tensor(load_png(p))); });
    m.def("save_png", [](const Array& x, const std::filesystem::path& p) { save_png(to_image(to_tensor4(x)), p); });

    py::class_<SvanParams>(m, "Params")
        .def_property_readonly("scale", [](const SvanParams& p) { return p.config.scale; })
        .def_property_readonly("channels", [](const SvanParams& p) { return p.config.base_channels; })
        .def_property_readonly("blocks", [](const SvanParams& p) { return p.config.num_blocks; })
        .def_property_readonly("arrangement",
                               [](const SvanParams& p) { return std::string(arrangement_label(p.config.arrangement)); })
        .def("count", &SvanParams::count)
        .def("names", [](const SvanParams& p) {
            std::vector<std::string> names;
            for (const auto& kv : p.tensors) names.push_back(kv.first);
            return names;
        })
        .def("__getitem__", [](const SvanParams& p, const std::string& name) {
            if (!p.tensors.count(name)) throw py::key_error(name);
            return to_array(p.tensors.at(name));
        })
        .def("__setitem__", [](SvanParams& p, const std::string& name, const Array& value) {
            if (!p.tensors.count(name)) throw py::key_error(name);
            Tensor4 t = to_tensor4(value);
            if (!(t.shape() == p.tensors.at(name).shape()))
                throw DimensionError(name + ": expected " + p.tensors.at(name).shape().str() + ", got " + t.shape().str());
            p.tensors.at(name) = std::move(t);
        });

    m.def(
        "init_params",
        [](std::size_t scale, std::size_t channels, std::size_t blocks, const std::string& arrangement,
           std::uint64_t seed) { return init_params(make_config(scale, channels, blocks, arrangement, seed)); },
        py::arg("scale") = 4, py::arg("channels") = 32, py::arg("blocks") = 7, py::arg("arrangement") = "17-1-1-17",
        py::arg("seed") = 0);
    m.def("forward", [](const Array& lr, const SvanParams& p) { return to_array(svan_forward(to_tensor4(lr), p)); });
    m.def("save_checkpoint", [](const SvanParams& p, const std::filesystem::path& path) { save_params(p, path); });
    m.def("load_checkpoint", [](const std::filesystem::path& path) { return load_params(path); });

    m.def(
        "count_params",
        [](std::size_t scale, std::size_t channels, std::size_t blocks) {
            return report_dict(count_params(make_config(scale, channels, blocks, "17-1-1-17", 0)));
        },
        py::arg("scale") = 4, py::arg("channels") = 32, py::arg("blocks") = 7);
    m.def(
        "count_flops",
        [](std::size_t scale, std::size_t h, std::size_t w, const std::string& convention, std::size_t channels,
           std::size_t blocks) {
            return report_dict(
                count_flops(make_config(scale, channels, blocks, "17-1-1-17", 0), h, w, parse_convention(convention)));
        },
        py::arg("scale") = 4, py::arg("h") = 256, py::arg("w") = 256, py::arg("convention") = "padded",
        py::arg("channels") = 32, py::arg("blocks") = 7);
    m.def(
        "table3",
        [](std::size_t h, std::size_t w) {
            py::list out;
            for (const Table3Row& r : table3(h, w)) {
                py::dict d;
                d["conv"] = r.conv;
                d["rf"] = r.rf;
                d["params"] = r.params;
                d["flops"] = r.flops;
                out.append(d);
            }
            return out;
        },
        py::arg("h") = 256, py::arg("w") = 256);
}
