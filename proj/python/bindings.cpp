#include "grasp/cli.hpp"
#include "grasp/dataset.hpp"
#include "grasp/errors.hpp"
#include "grasp/evalkit.hpp"
#include "grasp/geometry.hpp"
#include "grasp/model.hpp"
#include "grasp/probe.hpp"
#include "grasp/synthdata.hpp"
#include "grasp/training.hpp"
#include "grasp/version.hpp"

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace grasp;
using nlohmann::json;

namespace {

using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

BinaryMask to_mask(const BoolArray& a)
{
    if (a.ndim() != 2)
        throw DimensionError("mask must be a 2-D array");
    const auto h = static_cast<std::size_t>(a.shape(0)), w = static_cast<std::size_t>(a.shape(1));
    std::vector<std::uint8_t> bits(a.data(), a.data() + h * w);
    return BinaryMask(h, w, std::move(bits));
}

py::array_t<bool> from_mask(const BinaryMask& m)
{
    py::array_t<bool> out({m.height(), m.width()});
    std::copy(m.bits().begin(), m.bits().end(), out.mutable_data());
    return out;
}

GrayImage to_image(const DoubleArray& a)
{
    if (a.ndim() != 2)
        throw DimensionError("image must be a 2-D array");
    GrayImage img(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + img.pixels.size(), img.pixels.begin());
    return img;
}

py::array_t<double> from_image(const GrayImage& img)
{
    py::array_t<double> out({img.height, img.width});
    std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
    return out;
}

py::array_t<double> from_tensor(const Tensor& t)
{
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

py::array_t<double> from_vector(const std::vector<double>& v)
{
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::object to_python(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_python(const py::object& o)
{
    if (o.is_none())
        return json::object();
    return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict instance_dict(const SceneInstance& inst)
{
    py::dict d;
    d["id"] = inst.id;
    d["image"] = from_image(*inst.image);
    d["visible"] = from_mask(inst.visible);
    d["amodal"] = from_mask(inst.amodal);
    d["occluded"] = from_mask(inst.occluded);
    d["occ_ratio"] = inst.occ_ratio;
    d["scene"] = inst.scene;
    d["object"] = inst.object;
    return d;
}

py::dict prediction_dict(const Prediction& p)
{
    py::dict d;
    d["amodal"] = from_mask(p.amodal);
    d["occluded"] = from_mask(p.occluded);
    d["gate"] = from_vector(p.gate);
    d["sdf_tokens"] = from_vector(p.sdf_tokens);
    d["logits_amodal"] = from_tensor(p.logits_amodal);
    d["logits_occ"] = from_tensor(p.logits_occ);
    d["spm_attention"] = from_tensor(p.spm_attention);
    return d;
}

EvalOptions eval_options(const py::object& o)
{
    json j{{"eval", from_python(o)}};
    EvalOptions opts = run_config_from_json(j).eval;
    const json& e = j["eval"];
    opts.eval_seed = e.value("seed", opts.eval_seed);
    return opts;
}

} // namespace

PYBIND11_MODULE(_grasp, m)
{
    m.doc() = "GRASP amodal segmentation toolkit";
    m.attr("__version__") = kVersion;

    auto base = py::register_exception<Error>(m, "GraspError", PyExc_RuntimeError);
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    // geometry
    m.def("edt_squared", [](const BoolArray& mask) {
        const DistanceMap d = edt(to_mask(mask));
        py::array_t<std::int64_t> out({d.height, d.width});
        std::copy(d.squared.begin(), d.squared.end(), out.mutable_data());
        return out;
    }, py::arg("mask"));
    m.def("sdf", [](const BoolArray& mask, bool normalized) {
        const SdfField f = sdf(to_mask(mask));
        py::array_t<double> out({f.height, f.width});
        const auto& v = normalized ? f.normalized : f.values;
        std::copy(v.begin(), v.end(), out.mutable_data());
        return out;
    }, py::arg("mask"), py::arg("normalized") = true);
    m.def("pool_to_grid", [](const BoolArray& mask, std::size_t grid) {
        return from_vector(pool_to_grid(sdf(to_mask(mask)), grid, grid));
    }, py::arg("mask"), py::arg("grid"));
    m.def("iou", [](const BoolArray& a, const BoolArray& b) { return iou(to_mask(a), to_mask(b)); });
    m.def("gate_values", &gate_values, py::arg("sdf_tokens"), py::arg("alpha"), py::arg("beta"));
    m.def("perturb_vm", [](const BoolArray& v, std::uint64_t seed) { return from_mask(perturb_vm(to_mask(v), seed)); },
          py::arg("visible"), py::arg("seed"));

    // data
    py::class_<Dataset>(m, "Dataset")
        .def_static("generate", [](std::uint64_t seed, std::size_t scenes, const py::object& config,
                                   const std::string& split) {
            return make_dataset(seed, scenes, scene_config_from_json(from_python(config)), split);
        }, py::arg("seed"), py::arg("scenes"), py::arg("config") = py::none(), py::arg("split") = "train")
        .def_static("load", [](const std::filesystem::path& dir) { return read_dataset(dir); })
        .def("save", [](const Dataset& d, const std::filesystem::path& dir) { write_dataset(dir, d); })
        .def("__len__", [](const Dataset& d) { return d.instances.size(); })
        .def("__getitem__", [](const Dataset& d, std::size_t i) {
            if (i >= d.instances.size())
                throw py::index_error();
            return instance_dict(d.instances[i]);
        })
        .def_property_readonly("image_size", [](const Dataset& d) { return d.manifest.height; });

    // model
    py::class_<GraspModel>(m, "Model")
        .def(py::init([](const py::object& config, std::uint64_t init_seed) {
            return GraspModel(grasp_config_from_json(from_python(config)), init_seed);
        }), py::arg("config") = py::none(), py::arg("init_seed") = 0)
        .def_static("load", [](const std::filesystem::path& path) { return load_checkpoint(path).model; })
        .def("save", [](GraspModel& model, const std::filesystem::path& path, std::uint64_t init_seed,
                        std::size_t step) { save_checkpoint(path, model, init_seed, step); },
             py::arg("path"), py::arg("init_seed") = 0, py::arg("step") = 0)
        .def_property_readonly("config", [](const GraspModel& model) { return to_python(to_json(model.config())); })
        .def("count_params", &GraspModel::count_params)
        .def("parameter", [](GraspModel& model, const std::string& name) {
            for (const auto& e : model.parameters())
                if (e.name == name)
                    return from_tensor(*e.tensor);
            throw ConfigError("unknown parameter '" + name + "'");
        })
        .def("predict", [](const GraspModel& model, const DoubleArray& image, const BoolArray& visible,
                           std::optional<double> gate_override, double threshold) {
            const GraspModel effective = with_gate_override(model, gate_override);
            return prediction_dict(predict(effective, to_image(image), to_mask(visible), threshold));
        }, py::arg("image"), py::arg("visible"), py::arg("gate_override") = py::none(), py::arg("threshold") = 0.5)
        .def("two_pass", [](const GraspModel& model, const DoubleArray& image, const BoolArray& v_pred) {
            const TwoPassTrace t = two_pass(model, to_image(image), to_mask(v_pred));
            py::dict d;
            d["passes"] = t.passes;
            d["first"] = prediction_dict(t.first);
            d["second"] = prediction_dict(t.second);
            d["v_ref"] = from_mask(t.v_ref);
            d["fallback"] = t.fallback;
            return d;
        }, py::arg("image"), py::arg("v_pred"));

    m.def("train", [](GraspModel& model, const Dataset& data, const py::object& config) {
        const TrainConfig c = train_config_from_json(from_python(config));
        TrainResult r;
        {
            py::gil_scoped_release release;
            r = train(model, data.instances, c);
        }
        py::list curve;
        for (const auto& rec : r.curve)
            curve.append(py::dict(py::arg("step") = rec.step, py::arg("lr") = rec.lr,
                                  py::arg("total") = rec.loss.total, py::arg("amodal") = rec.loss.amodal,
                                  py::arg("occluded") = rec.loss.occluded));
        return curve;
    }, py::arg("model"), py::arg("data"), py::arg("config") = py::none());

    m.def("evaluate", [](const GraspModel& model, const Dataset& data, const py::object& options) {
        return to_python(to_json(evaluate(model, data.instances, eval_options(options))));
    }, py::arg("model"), py::arg("data"), py::arg("options") = py::none());

    m.def("ablate", [](const GraspModel& model, const Dataset& data, const py::object& options) {
        const Ablation a = ablate(model, data.instances, eval_options(options));
        py::list rows;
        for (const auto& row : a.rows)
            rows.append(py::dict(py::arg("setting") = row.setting, py::arg("full_miou") = row.report.full_miou,
                                 py::arg("occ_miou") = row.report.occ_miou));
        return py::dict(py::arg("rows") = rows, py::arg("bin_deltas") = a.bin_deltas);
    }, py::arg("model"), py::arg("data"), py::arg("options") = py::none());

    m.def("probe", [](const GraspModel& model, const Dataset& data, double lambda, std::uint64_t seed) {
        ProbeOptions o;
        o.lambda = lambda;
        o.seed = seed;
        return to_python(to_json(probe_report(model, data.instances, o)));
    }, py::arg("model"), py::arg("data"), py::arg("lam") = 1.0, py::arg("seed") = 0);

    m.def("ridge_fit", [](const DoubleArray& x, const std::vector<double>& y, double lambda) {
        if (x.ndim() != 2)
            throw DimensionError("features must be a 2-D array");
        Tensor t({static_cast<std::size_t>(x.shape(0)), static_cast<std::size_t>(x.shape(1))});
        std::copy(x.data(), x.data() + t.size(), t.values().begin());
        const RidgeModel r = ridge_fit(t, y, lambda);
        return py::make_tuple(from_vector(r.weights), r.intercept);
    }, py::arg("x"), py::arg("y"), py::arg("lam") = 1.0);

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = dispatch(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"));
}
