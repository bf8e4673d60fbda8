#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "rgc/benchkit/capacity.hpp"
#include "rgc/benchkit/models.hpp"
#include "rgc/benchkit/rollout.hpp"
#include "rgc/cli/cli.hpp"
#include "rgc/common/error.hpp"
#include "rgc/defsim/metrics.hpp"
#include "rgc/defsim/render.hpp"
#include "rgc/defsim/tasks.hpp"
#include "rgc/diffcore/ops.hpp"
#include "rgc/diffcore/tape.hpp"
#include "rgc/keypointnet/detector.hpp"
#include "rgc/localgnn/policy.hpp"
#include "rgc/trainkit/dataset.hpp"
#include "rgc/trainkit/trainer.hpp"

namespace py = pybind11;
using namespace rgc;

namespace {

using Points = std::vector<std::pair<double, double>>;

KeypointSet to_keypoints(const Points& pts) {
  KeypointSet out;
  for (auto [x, y] : pts) out.push_back({x, y});
  return out;
}

Points from_keypoints(const KeypointSet& kp) {
  Points out;
  for (Vec2 p : kp) out.emplace_back(p.x, p.y);
  return out;
}

py::array_t<double> observation_array(const defsim::Observation& obs) {
  py::array_t<double> out({obs.height, obs.width, obs.channels});
  std::copy(obs.pixels.begin(), obs.pixels.end(), out.mutable_data());
  return out;
}

defsim::Observation array_observation(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
  require(a.ndim() == 3, ErrorKind::kDimension, "observation must be an H x W x C array");
  defsim::Observation obs;
  obs.height = a.shape(0);
  obs.width = a.shape(1);
  obs.channels = a.shape(2);
  obs.pixels.assign(a.data(), a.data() + a.size());
  return obs;
}

diffcore::Tensor array_tensor(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
  diffcore::Shape shape(a.shape(), a.shape() + a.ndim());
  diffcore::Tensor t(shape);
  std::copy(a.data(), a.data() + a.size(), t.raw());
  return t;
}

py::array_t<double> tensor_array(const diffcore::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.raw(), t.raw() + t.numel(), out.mutable_data());
  return out;
}

py::dict capacity_dict(const benchkit::CapacityFigures& f) {
  py::dict d;
  d["descriptor"] = f.descriptor;
  d["flops"] = f.flops;
  d["closed_form_flops"] = f.closed_form_flops;
  d["parameters"] = f.parameters;
  d["closed_form_parameters"] = f.closed_form_parameters;
  d["checkpoint_elements"] = f.checkpoint_elements ? py::cast(*f.checkpoint_elements) : py::none();
  d["inference_seconds"] = f.inference_seconds;
  if (f.detector_descriptor) {
    d["detector_descriptor"] = *f.detector_descriptor;
    d["detector_flops"] = f.detector_flops;
    d["detector_closed_form_flops"] = f.detector_closed_form_flops;
    d["detector_parameters"] = f.detector_parameters;
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(rgc, m) {
  m.doc() = "Keypoint-graph deformable rearrangement: simulator, detector, graph policy, training and benchmarks";

  py::register_exception<Error>(m, "Error");

  m.attr("GAMMA") = defsim::kGamma;
  m.attr("IMAGE_SIZE") = defsim::kImageSize;
  m.def("task_kinds", [] {
    std::vector<std::string> out;
    for (auto k : defsim::kAllTasks) out.push_back(defsim::to_string(k));
    return out;
  });

  py::class_<defsim::DeformState>(m, "State")
      .def_property_readonly("kind", [](const defsim::DeformState& s) { return defsim::to_string(s.kind); })
      .def_property_readonly("positions",
                             [](const defsim::DeformState& s) {
                               py::array_t<double> out({s.size(), std::size_t{2}});
                               double* d = out.mutable_data();
                               for (std::size_t i = 0; i < s.size(); ++i) {
                                 d[2 * i] = s.positions[i].x;
                                 d[2 * i + 1] = s.positions[i].y;
                               }
                               return out;
                             })
      .def("__len__", &defsim::DeformState::size);

  py::class_<defsim::TaskInstance>(m, "Task")
      .def_property_readonly("kind", [](const defsim::TaskInstance& t) { return defsim::to_string(t.kind); })
      .def_readonly("initial", &defsim::TaskInstance::initial)
      .def_readonly("goal", &defsim::TaskInstance::goal)
      .def_readonly("seed", &defsim::TaskInstance::seed);

  m.def(
      "sample_task",
      [](const std::string& kind, std::uint64_t seed) {
        return defsim::sample_task(defsim::parse_task_kind(kind), seed);
      },
      py::arg("kind"), py::arg("seed"));
  m.def("eval_task", [](const std::string& kind, std::size_t index, std::uint64_t seed) {
    return benchkit::eval_task(defsim::parse_task_kind(kind), index, seed);
  });
  m.def("goal_distance", &defsim::goal_distance);
  m.def(
      "apply_pick_place",
      [](const defsim::DeformState& s, std::pair<double, double> pick, std::pair<double, double> place) {
        defsim::Action a;
        a.pick.position = {pick.first, pick.second};
        a.place.position = {place.first, place.second};
        return defsim::apply_pick_place(s, a);
      },
      py::arg("state"), py::arg("pick"), py::arg("place"));
  m.def("expert_action", [](const defsim::DeformState& s, const defsim::DeformState& goal) {
    defsim::Action a = defsim::scripted_expert(s, goal);
    return py::make_tuple(py::make_tuple(a.pick.position.x, a.pick.position.y),
                          py::make_tuple(a.place.position.x, a.place.position.y));
  });
  m.def(
      "render", [](const defsim::DeformState& s, std::size_t size) { return observation_array(defsim::render(s, size, size)); },
      py::arg("state"), py::arg("size") = defsim::kImageSize);
  m.def(
      "ground_truth_keypoints",
      [](const defsim::DeformState& s, std::size_t m, std::size_t size) {
        return from_keypoints(defsim::ground_truth_keypoints(s, m, size, size));
      },
      py::arg("state"), py::arg("m") = 5, py::arg("size") = defsim::kImageSize);

  m.def("spatial_softmax", [](py::array_t<double> map) {
    Vec2 p = keypointnet::spatial_softmax(array_tensor(map));
    return py::make_tuple(p.x, p.y);
  });
  m.def("gaussian_heatmap", [](const Points& pts, double sigma, std::size_t width, std::size_t height) {
    return tensor_array(keypointnet::gaussian_heatmap(to_keypoints(pts), sigma, width, height));
  });
  m.def("detector_loss", [](const Points& a, const Points& b, double sigma, std::size_t width, std::size_t height) {
    return keypointnet::detector_loss(to_keypoints(a), to_keypoints(b), sigma, width, height);
  });
  m.def(
      "conv2d",
      [](py::array_t<double> input, py::array_t<double> kernels, std::size_t stride, std::size_t padding) {
        diffcore::Tape tape;
        return tensor_array(diffcore::conv2d(tape.constant(array_tensor(input)), tape.constant(array_tensor(kernels)),
                                             {stride, padding})
                                .value());
      },
      py::arg("input"), py::arg("kernels"), py::arg("stride") = 1, py::arg("padding") = 0);

  py::class_<keypointnet::DetectorParams>(m, "Detector")
      .def_static("load", [](const std::filesystem::path& p) { return keypointnet::load_detector(p); })
      .def_static(
          "init",
          [](std::size_t keypoints, std::uint64_t seed) {
            keypointnet::DetectorConfig c;
            c.keypoints = keypoints;
            Rng rng(seed);
            return keypointnet::init_detector(c, rng);
          },
          py::arg("keypoints") = 5, py::arg("seed") = 0)
      .def("save", [](const keypointnet::DetectorParams& d, const std::filesystem::path& p) { keypointnet::save_detector(p, d); })
      .def_property_readonly("descriptor", [](const keypointnet::DetectorParams& d) { return d.config.descriptor(); })
      .def("detect", [](const keypointnet::DetectorParams& d, py::array_t<double> obs) {
        return from_keypoints(keypointnet::detector_forward(array_observation(obs), d).keypoints);
      });

  py::class_<localgnn::PolicyParams>(m, "Policy")
      .def_static("load", [](const std::filesystem::path& p) { return localgnn::load_policy(p); })
      .def_static(
          "init",
          [](std::size_t dim, std::size_t self_layers, std::size_t cross_layers, std::uint64_t seed) {
            localgnn::GnnConfig c;
            c.dim = dim;
            c.self_layers = self_layers;
            c.cross_layers = cross_layers;
            Rng rng(seed);
            return localgnn::init_policy(c, rng);
          },
          py::arg("dim") = 64, py::arg("self_layers") = 3, py::arg("cross_layers") = 3, py::arg("seed") = 0)
      .def("save", [](const localgnn::PolicyParams& p, const std::filesystem::path& path) { localgnn::save_policy(path, p); })
      .def_property_readonly("descriptor", [](const localgnn::PolicyParams& p) { return p.config.descriptor(); })
      .def_property_readonly("parameter_count", [](const localgnn::PolicyParams& p) { return p.store.total_elements(); })
      .def("forward",
           [](const localgnn::PolicyParams& p, const Points& current, const Points& goal) {
             auto d = localgnn::policy_forward(to_keypoints(current), to_keypoints(goal), p);
             return py::make_tuple(d.pick, d.place);
           })
      .def("select_action", [](const localgnn::PolicyParams& p, const Points& current, const Points& goal) {
        KeypointSet c = to_keypoints(current), g = to_keypoints(goal);
        auto a = localgnn::select_action(localgnn::policy_forward(c, g, p), c, g, p.config.width, p.config.height);
        return py::make_tuple(py::make_tuple(a.pick.position.x, a.pick.position.y),
                              py::make_tuple(a.place.position.x, a.place.position.y));
      });
  m.def(
      "closed_form_flops",
      [](std::size_t dim, std::size_t self_layers, std::size_t cross_layers, std::size_t m_current, std::size_t n_goal) {
        localgnn::GnnConfig c;
        c.dim = dim;
        c.self_layers = self_layers;
        c.cross_layers = cross_layers;
        return localgnn::forward_flops(c, m_current, n_goal);
      },
      py::arg("dim") = 64, py::arg("self_layers") = 3, py::arg("cross_layers") = 3, py::arg("m") = 5, py::arg("n") = 5);

  m.def(
      "generate_dataset",
      [](const std::filesystem::path& dir, const std::vector<std::string>& kinds, std::size_t per_task,
         std::uint64_t seed) {
        std::vector<defsim::TaskKind> ks;
        for (const auto& k : kinds) ks.push_back(defsim::parse_task_kind(k));
        trainkit::Dataset ds = trainkit::generate_demos(ks, per_task, seed);
        trainkit::write_dataset(dir, ds);
        return ds.demos.size();
      },
      py::arg("dir"), py::arg("kinds"), py::arg("per_task"), py::arg("seed"));
  m.def(
      "train_policy",
      [](const std::filesystem::path& dir, const std::string& kind, std::size_t epochs, std::uint64_t seed,
         std::size_t dim) {
        trainkit::Dataset ds = trainkit::read_dataset(dir);
        trainkit::TrainConfig c;
        c.kinds = {defsim::parse_task_kind(kind)};
        c.epochs = epochs;
        c.seed = seed;
        localgnn::GnnConfig arch;
        arch.dim = dim;
        py::gil_scoped_release release;
        return trainkit::train_policy(ds, c, arch).params;
      },
      py::arg("dir"), py::arg("kind"), py::arg("epochs") = 0, py::arg("seed") = 0, py::arg("dim") = 64);

  m.def(
      "success_rate",
      [](const localgnn::PolicyParams* policy, const std::string& kind, std::size_t instances, std::uint64_t seed) {
        benchkit::Planner planner = policy ? benchkit::gnn_planner(*policy) : benchkit::expert_planner();
        benchkit::BenchReport r = [&] {
          py::gil_scoped_release release;
          return benchkit::success_rate(planner, defsim::parse_task_kind(kind), instances, seed);
        }();
        py::dict d;
        d["task"] = kind;
        d["instances"] = r.instances;
        d["successes"] = r.successes;
        d["success_percent"] = r.success_percent();
        d["report"] = benchkit::report_kv(r);
        return d;
      },
      py::arg("policy"), py::arg("kind"), py::arg("instances") = 40, py::arg("seed") = 0,
      "Success rate of a policy (None: the scripted expert) over eval-split instances.");
  m.def(
      "count_capacity",
      [](const localgnn::PolicyParams& policy, std::size_t runs) {
        benchkit::CapacityOptions o;
        o.timing_runs = runs;
        return capacity_dict(benchkit::count_capacity(policy, nullptr, o));
      },
      py::arg("policy"), py::arg("runs") = 100);

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = cli::run(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  });
}
