#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "egolstm/checkpoint.hpp"
#include "egolstm/cli.hpp"
#include "egolstm/errors.hpp"
#include "egolstm/evaluate.hpp"
#include "egolstm/gradcheck.hpp"
#include "egolstm/model.hpp"
#include "egolstm/ops.hpp"
#include "egolstm/synth.hpp"

namespace py = pybind11;
using namespace egolstm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  std::vector<double> values(a.data(), a.data() + a.size());
  return Tensor::from_buffer<double>(std::move(shape), std::move(values));
}

Tensor to_tensor_or_undefined(const std::optional<Array>& a) { return a ? to_tensor(*a) : Tensor(); }

Array to_array(const Tensor& t) {
  const std::vector<double> values = t.to_vector();
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

// [T,3,H,W] array to a clip of [3,H,W] frames.
VideoClip to_clip(const Array& frames, DType dtype) {
  if (frames.ndim() != 4) throw ShapeError("frames must be a [T,3,H,W] array");
  const Tensor all = to_tensor(frames);
  VideoClip clip;
  for (std::int64_t t = 0; t < all.size(0); ++t) clip.frames.push_back(select(all, 0, t).to(dtype));
  return clip;
}

py::dict counts_dict(const ParamCounts& c) {
  py::dict d;
  d["encoder_stages"] = c.encoder_stages;
  d["encoder"] = c.encoder;
  d["fusion"] = c.fusion;
  d["convlstm"] = c.convlstm;
  d["classifier"] = c.classifier;
  d["total"] = c.total;
  return d;
}

class PyModel {
 public:
  PyModel(const std::string& preset, std::int64_t num_classes, const std::string& input_mode, std::uint64_t seed,
          const std::string& dtype)
      : config_(make_config(preset, num_classes, input_mode)),
        dtype_(parse_dtype(dtype)),
        net_(config_, dtype_) {
    Rng rng(seed);
    net_.initialize(rng);
  }

  py::dict forward(const Array& frames) const {
    ForwardTrace trace;
    const Tensor logits = net_.forward_video(to_clip(frames, dtype_), &trace);
    py::dict d;
    d["logits"] = to_array(logits);
    d["steps"] = trace.steps;
    d["feature_shape"] = trace.feature_shape;
    d["state_shape"] = trace.state_shape;
    return d;
  }

  py::dict parameters() const {
    py::dict d;
    for (const auto& p : net_.named_parameters()) d[py::str(p.name)] = to_array(p.tensor);
    return d;
  }

  std::int64_t parameter_count() const { return net_.parameter_count(); }
  std::string config_text() const { return config_.to_text(); }

 private:
  static DType parse_dtype(const std::string& dtype) {
    if (dtype == "float64") return DType::kFloat64;
    if (dtype == "float32") return DType::kFloat32;
    throw std::invalid_argument("dtype must be float32|float64");
  }
  static ModelConfig make_config(const std::string& preset, std::int64_t num_classes, const std::string& mode) {
    ModelConfig c = ModelConfig::from_preset(preset, num_classes);
    c.input_mode = parse_input_mode(mode);
    return c;
  }

  ModelConfig config_;
  DType dtype_;
  InteractionNet net_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Two-stream ConvLSTM interaction classifier (C++ core)";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);

  m.def("conv2d",
        [](const Array& x, const Array& w, const std::optional<Array>& b, std::int64_t stride, std::int64_t padding) {
          return to_array(conv2d(to_tensor(x), to_tensor(w), to_tensor_or_undefined(b), {stride, padding}));
        },
        py::arg("x"), py::arg("w"), py::arg("b") = py::none(), py::arg("stride") = 1, py::arg("padding") = 0,
        "Cross-correlation of [C,H,W] or [N,C,H,W] input; exact output extents.");
  m.def("conv3d",
        [](const Array& x, const Array& w, const std::optional<Array>& b, std::int64_t padding) {
          return to_array(conv3d(to_tensor(x), to_tensor(w), to_tensor_or_undefined(b), padding));
        },
        py::arg("x"), py::arg("w"), py::arg("b") = py::none(), py::arg("padding") = 0);
  m.def("max_pool2d",
        [](const Array& x, std::int64_t window, std::int64_t stride) {
          return to_array(max_pool2d(to_tensor(x), window, stride));
        },
        py::arg("x"), py::arg("window"), py::arg("stride"));
  m.def("lrn",
        [](const Array& x, std::int64_t size, double k, double alpha, double beta) {
          return to_array(lrn(to_tensor(x), {size, k, alpha, beta}));
        },
        py::arg("x"), py::arg("size") = 5, py::arg("k") = 2.0, py::arg("alpha") = 1e-4, py::arg("beta") = 0.75);

  m.def("parameter_counts",
        [](const std::string& preset, std::int64_t num_classes) {
          return counts_dict(count_parameters(ModelConfig::from_preset(preset, num_classes)));
        },
        py::arg("preset") = "full", py::arg("num_classes") = 7);

  m.def("gradcheck",
        [](const std::string& op, std::uint64_t seed, std::int64_t trials) {
          py::list rows;
          for (const auto& r : run_gradcheck(op, seed, trials)) {
            py::dict d;
            d["op"] = r.op;
            d["trials"] = r.trials;
            d["max_rel_error"] = r.max_rel_error;
            d["tolerance"] = r.tolerance;
            d["pass"] = r.pass;
            rows.append(d);
          }
          return rows;
        },
        py::arg("op") = "all", py::arg("seed") = 0, py::arg("trials") = 20);

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&, std::int64_t, const std::string&, std::uint64_t, const std::string&>(),
           py::arg("preset") = "tiny", py::arg("num_classes") = 3, py::arg("input_mode") = "raw",
           py::arg("seed") = 0, py::arg("dtype") = "float64")
      .def("forward", &PyModel::forward, py::arg("frames"),
           "frames [T,3,H,W] -> dict(logits, steps, feature_shape, state_shape)")
      .def("parameters", &PyModel::parameters)
      .def("parameter_count", &PyModel::parameter_count)
      .def("config_text", &PyModel::config_text);

  m.def("synth",
        [](const std::filesystem::path& out, std::int64_t videos_per_class, std::int64_t test_videos_per_class,
           std::int64_t frames, std::int64_t size, double ego_jitter, std::uint64_t seed) {
          SynthConfig c;
          c.out_dir = out;
          c.videos_per_class = videos_per_class;
          c.test_videos_per_class = test_videos_per_class;
          c.frames = frames;
          c.size = size;
          c.ego_jitter = ego_jitter;
          c.seed = seed;
          return synth_generate(c).entries.size();
        },
        py::arg("out"), py::arg("videos_per_class") = 10, py::arg("test_videos_per_class") = 0,
        py::arg("frames") = 24, py::arg("size") = 32, py::arg("ego_jitter") = 0.0, py::arg("seed") = 7,
        "Writes a synthetic corpus; returns the number of training videos.");

  m.def("evaluate",
        [](const std::filesystem::path& checkpoint, const std::filesystem::path& manifest, std::int64_t crops) {
          const Checkpoint ckpt = load_checkpoint(checkpoint);
          const EvalResult r = evaluate_ten_crop(ckpt, load_manifest(manifest), crops);
          py::dict d;
          d["accuracy"] = r.accuracy;
          d["correct"] = r.correct;
          d["total"] = r.total;
          d["confusion"] = r.confusion;
          d["predictions"] = r.predictions;
          return d;
        },
        py::arg("checkpoint"), py::arg("manifest"), py::arg("crops") = 10);

  m.def("predict",
        [](const std::filesystem::path& checkpoint, const std::filesystem::path& frames_dir, std::int64_t crops) {
          const Prediction p = predict(load_checkpoint(checkpoint), frames_dir, crops);
          py::dict d;
          d["label"] = p.label;
          d["class_name"] = p.class_name;
          d["probabilities"] = p.probabilities;
          return d;
        },
        py::arg("checkpoint"), py::arg("frames_dir"), py::arg("crops") = 10);

  m.def("run_cli",
        [](std::vector<std::string> args) {
          args.insert(args.begin(), "egolstm");
          std::vector<const char*> argv;
          for (const auto& a : args) argv.push_back(a.c_str());
          std::ostringstream out, err;
          int code;
          {
            py::gil_scoped_release release;
            code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a CLI subcommand in-process; returns (exit_code, stdout, stderr).");
}
