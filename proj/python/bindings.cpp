#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>

#include "promptrec/cli.hpp"
#include "promptrec/errors.hpp"
#include "promptrec/experiment.hpp"
#include "promptrec/ops.hpp"

namespace py = pybind11;
using namespace promptrec;

namespace {

Tensor matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty() || rows.front().empty()) throw DimensionError("expected a non-empty matrix");
  std::vector<double> flat;
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) throw DimensionError("ragged matrix");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor::from({rows.size(), rows.front().size()}, std::move(flat));
}

py::dict metrics_dict(const MetricsReport& r) {
  py::dict d;
  d["auc"] = r.auc;
  for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
    d[py::str("hit@" + std::to_string(kCutoffs[i]))] = r.hit[i];
    d[py::str("ndcg@" + std::to_string(kCutoffs[i]))] = r.ndcg[i];
  }
  d["cases"] = r.count;
  return d;
}

Config make_config(const std::map<std::string, std::string>& values) {
  Config c;
  for (const auto& [k, v] : values) c.set(k, v);
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Personalized prompt-based recommendation engine";

  // Translators are tried newest first, so the base class goes in first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<Config>(m, "Config")
      .def(py::init<>())
      .def(py::init(&make_config), py::arg("values"))
      .def("set", &Config::set)
      .def("get", &Config::get)
      .def("load", [](Config& c, const std::string& path) { c.load(path); })
      .def("dump", &Config::dump)
      .def_static("keys", [] {
        std::vector<std::string> out;
        for (const auto& k : config_keys()) out.push_back(k.name);
        return out;
      });

  py::class_<ModelState>(m, "ModelState")
      .def_property_readonly("total_count", &ModelState::total_count)
      .def_property_readonly("trainable_count", &ModelState::trainable_count)
      .def_property_readonly("meta", [](const ModelState& s) { return s.meta(); })
      .def("count", [](const ModelState& s, const std::string& group) {
        for (auto g : {ParamGroup::Backbone, ParamGroup::PromptGenerator, ParamGroup::ProfileLearner, ParamGroup::Head}) {
          if (group == group_name(g)) return s.count(g);
        }
        throw ConfigError("unknown parameter group '" + group + "'");
      })
      .def("backbone_bytes", [](const ModelState& s) {
        const auto b = group_bytes(s, ParamGroup::Backbone);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      })
      .def("save", [](const ModelState& s, const std::string& path) { save_checkpoint(s, path); });
  m.def("load_checkpoint", [](const std::string& path) { return load_checkpoint(path); });

  py::class_<SyntheticData>(m, "SyntheticData")
      .def_property_readonly("num_users", [](const SyntheticData& d) { return d.users.size(); })
      .def("cluster_purity", &cluster_purity)
      .def("write", [](const SyntheticData& d, const std::string& dir) {
        std::filesystem::create_directories(dir);
        std::ofstream i(std::filesystem::path(dir) / "interactions.tsv", std::ios::binary);
        write_interactions(d, i);
        std::ofstream p(std::filesystem::path(dir) / "profiles.tsv", std::ios::binary);
        write_profiles(d, p);
      });
  m.def("generate_synthetic", [](const Config& c) { return generate_synthetic(synthetic_config(c)); });

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("num_items", &Dataset::num_items)
      .def_property_readonly("num_users", [](const Dataset& d) { return d.log.users.size(); })
      .def_property_readonly("warm_users", [](const Dataset& d) { return d.splits.warm.size(); })
      .def_property_readonly("cold_train_users", [](const Dataset& d) { return d.splits.cold_train.size(); })
      .def_property_readonly("cold_test_users", [](const Dataset& d) { return d.splits.cold_test.size(); });
  m.def("load_dataset", &load_dataset);
  m.def("synthetic_dataset", &synthetic_dataset);

  m.def("pretrain", [](const Dataset& ds, const Config& c) { return run_pretrain(ds, c); },
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "tune",
      [](const Dataset& ds, const ModelState& start, const Config& c) {
        TuneCurves curves;
        ModelState s;
        {
          py::gil_scoped_release release;
          s = run_tune(ds, start, c, &curves);
        }
        py::dict d;
        d["l_p"] = curves.lp;
        d["l_cl"] = curves.lcl;
        d["l_all"] = curves.lall;
        d["trainable_fraction"] = curves.mode.fraction;
        return py::make_tuple(std::move(s), d);
      });
  m.def("evaluate", [](const Dataset& ds, const ModelState& s, const Config& c, const std::string& split) {
    MetricsReport r;
    {
      py::gil_scoped_release release;
      r = run_eval(ds, s, c, parse_split(split));
    }
    return metrics_dict(r);
  }, py::arg("dataset"), py::arg("state"), py::arg("config"), py::arg("split") = "joint");

  m.def("case_auc", [](double t, const std::vector<double>& negs) { return case_auc(t, negs); });
  m.def("rank_case", [](double t, const std::vector<double>& negs) { return rank_case(t, negs); });
  m.def("hit_at_n", [](const std::vector<std::size_t>& ranks, std::size_t n) { return hit_at_n(ranks, n); });
  m.def("ndcg_at_n", [](const std::vector<std::size_t>& ranks, std::size_t n) { return ndcg_at_n(ranks, n); });
  m.def("f1_score", &f1_score);
  m.def("bpr_loss", [](const std::vector<double>& pos, const std::vector<double>& neg) {
    NoGradGuard ng;
    return bpr_loss(Tensor::from({pos.size(), 1}, pos), Tensor::from({neg.size(), 1}, neg)).item();
  });
  m.def("info_nce", [](const std::vector<std::vector<double>>& o, const std::vector<std::vector<double>>& a,
                       double tau) {
    NoGradGuard ng;
    return info_nce(matrix(o), matrix(a), tau).item();
  }, py::arg("originals"), py::arg("augmented"), py::arg("tau") = 0.5);

  m.def("run_cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "promptrec");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    py::gil_scoped_release release;
    return run_cli(static_cast<int>(argv.size()), argv.data());
  });
}
