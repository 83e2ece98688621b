#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rgtbot/commands.h"

namespace py = pybind11;
using namespace rgtbot;

namespace {

py::array_t<double> to_numpy(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["f1"] = m.f1;
  d["tp"] = m.tp;
  d["fp"] = m.fp;
  d["tn"] = m.tn;
  d["fn"] = m.fn;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Relational graph transformer bot detector";

  py::register_exception<std::invalid_argument>(m, "InvalidArgument", PyExc_ValueError);

  m.def("fixture_names", &fixture_names);
  m.def(
      "fixture_spec", [](const std::string& name, std::size_t num_nodes) { return to_text(fixture(name, num_nodes)); },
      py::arg("name"), py::arg("num_nodes") = 1000, "Spec text of a named synthetic fixture.");

  py::class_<HinGraph>(m, "Graph")
      .def_static("load", &load_graph_dir, py::arg("directory"))
      .def("save", [](const HinGraph& g, const std::filesystem::path& dir) { save_graph(g, dir); })
      .def_property_readonly("num_nodes", [](const HinGraph& g) { return g.num_nodes; })
      .def_property_readonly("num_edges", [](const HinGraph& g) { return g.num_edges(); })
      .def_property_readonly("feature_dim", &HinGraph::feature_dim)
      .def_property_readonly("relations", &HinGraph::relation_names)
      .def_property_readonly("features", [](const HinGraph& g) { return to_numpy(g.features); })
      .def_property_readonly("labels", [](const HinGraph& g) { return py::array_t<int>(g.labels.size(), g.labels.data()); })
      .def("edges", [](const HinGraph& g, const std::string& relation) {
        const auto names = g.relation_names();
        const auto it = std::find(names.begin(), names.end(), relation);
        if (it == names.end()) throw std::invalid_argument("no relation '" + relation + "'");
        const auto& list = g.edges[static_cast<std::size_t>(it - names.begin())];
        py::array_t<std::uint32_t> out({list.size(), std::size_t{2}});
        auto* p = out.mutable_data();
        for (const Edge& e : list) {
          *p++ = e.src;
          *p++ = e.dst;
        }
        return out;
      }, py::arg("relation"), "(src, dst) pairs of one relation as an E x 2 array.")
      .def("__repr__", [](const HinGraph& g) {
        return "<Graph nodes=" + std::to_string(g.num_nodes) + " edges=" + std::to_string(g.num_edges()) + ">";
      });

  py::class_<BotModel>(m, "Model")
      .def_static("load", &load_checkpoint, py::arg("checkpoint"))
      .def_property_readonly("relations", [](const BotModel& b) { return b.config().relations; })
      .def_property_readonly("hidden", [](const BotModel& b) { return b.config().hidden; })
      .def_property_readonly("num_parameters", [](const BotModel& b) {
        std::size_t n = 0;
        for (const auto* p : b.parameters()) n += p->value.size();
        return n;
      })
      .def("predict_proba", [](const BotModel& b, const HinGraph& g) {
        py::gil_scoped_release release;
        const NeighborIndex index(g);
        Matrix probs = forward(b, g, index).probs;
        py::gil_scoped_acquire acquire;
        return to_numpy(probs);
      }, py::arg("graph"), "Class probabilities per node, columns (human, bot).");

  m.def(
      "generate",
      [](const std::string& spec, const std::filesystem::path& out_dir, bool force, std::optional<std::uint64_t> seed,
         std::optional<std::size_t> num_nodes) {
        GenerateOptions opts;
        opts.force = force;
        opts.seed = seed;
        opts.num_nodes = num_nodes;
        return cmd_generate(spec, out_dir, opts);
      },
      py::arg("spec"), py::arg("out_dir"), py::arg("force") = false, py::arg("seed") = py::none(),
      py::arg("num_nodes") = py::none(), "Write a synthetic graph from a preset name or spec file.");

  m.def(
      "train",
      [](const std::filesystem::path& config, std::optional<std::uint64_t> seed) {
        RunConfig cfg = load_run_config(config);
        if (seed) cfg.train.seed = *seed;
        TrainOutcome out;
        {
          py::gil_scoped_release release;
          out = cmd_train(cfg);
        }
        py::dict d;
        d["best_epoch"] = out.report.best_epoch;
        d["train_nodes"] = out.report.train_nodes_used;
        d["test"] = metrics_dict(out.report.test);
        d["checkpoint"] = out.checkpoint;
        d["report"] = out.report_csv;
        py::list epochs;
        for (const auto& e : out.report.epochs) {
          epochs.append(py::make_tuple(e.epoch, e.train_loss, e.val_acc, e.val_f1));
        }
        d["epochs"] = epochs;
        return d;
      },
      py::arg("config"), py::arg("seed") = py::none(), "Train from a run config file.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& graph_dir) {
        const EvalOutcome out = cmd_eval(checkpoint, graph_dir);
        py::dict d;
        d["val"] = metrics_dict(out.val);
        d["test"] = metrics_dict(out.test);
        return d;
      },
      py::arg("checkpoint"), py::arg("graph_dir"));
}
