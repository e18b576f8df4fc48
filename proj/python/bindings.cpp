// Python module "afvkit": thin wrappers over the C++ core.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "afv/emd.hpp"
#include "afv/error.hpp"
#include "afv/pipeline.hpp"
#include "afv/stat_tests.hpp"

namespace py = pybind11;
using namespace afv;

namespace {

py::array_t<float> dataset_values(const LatentDataset& ds) {
  const Shape s = ds.shape();
  py::array_t<float> out({ds.size(), std::size_t{s.channels}, std::size_t{s.height}, std::size_t{s.width}});
  auto* dst = out.mutable_data();
  for (const auto& t : ds.samples) dst = std::copy(t.values.begin(), t.values.end(), dst);
  return out;
}

LatentDataset dataset_from(py::array_t<float, py::array::c_style | py::array::forcecast> values,
                           std::vector<int> labels, std::optional<std::vector<bool>> success,
                           std::map<int, std::string> class_names) {
  require(values.ndim() == 4, "values must have shape (n, C, H, W)");
  const auto n = static_cast<std::size_t>(values.shape(0));
  const Shape shape{static_cast<std::uint32_t>(values.shape(1)), static_cast<std::uint32_t>(values.shape(2)),
                    static_cast<std::uint32_t>(values.shape(3))};
  LatentDataset ds;
  const float* src = values.data();
  for (std::size_t i = 0; i < n; ++i, src += shape.size())
    ds.samples.emplace_back(shape, std::vector<float>(src, src + shape.size()));
  ds.labels = std::move(labels);
  ds.attack_success = success ? *success : std::vector<bool>(n, true);
  ds.class_names = std::move(class_names);
  if (ds.class_names.empty())
    for (int l : ds.labels) ds.class_names.emplace(l, l == 0 ? "clean" : "class_" + std::to_string(l));
  ds.validate();
  return ds;
}

py::array_t<double> table_matrix(const AfvTable& t) {
  py::array_t<double> out({t.size(), t.dim()});
  auto* dst = out.mutable_data();
  for (const auto& r : t.rows) dst = std::copy(r.values.begin(), r.values.end(), dst);
  return out;
}

py::dict metrics_dict(const RunMetrics& m) {
  py::dict d;
  d["clf_accuracy"] = m.clf_accuracy;
  d["dtc_accuracy"] = m.dtc_accuracy;
  d["c0_f1"] = m.c0_f1;
  d["avg_f1"] = m.avg_f1;
  d["avg_f1_all"] = m.avg_f1_all;
  d["tpr"] = m.detection.tpr;
  d["fpr"] = m.detection.fpr;
  d["fnr"] = m.detection.fnr;
  std::vector<std::vector<std::uint64_t>> cm(m.confusion.k);
  for (std::size_t t = 0; t < m.confusion.k; ++t)
    for (std::size_t p = 0; p < m.confusion.k; ++p) cm[t].push_back(m.confusion.at(t, p));
  d["confusion"] = cm;
  return d;
}

}  // namespace

PYBIND11_MODULE(afvkit, m) {
  m.doc() = "Anomaly feature vectors for second-stage adversarial detection";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.attr("CORE_FEATURES") = kCoreFeatures;
  m.attr("__version__") = kToolVersion;

  // Latent dumps.
  m.def(
      "read_dump",
      [](const fs::path& path) {
        const LatentDataset ds = read_dump(path);
        return py::make_tuple(dataset_values(ds), ds.labels, ds.attack_success, ds.class_names);
      },
      py::arg("path"), "Returns (values[n,C,H,W], labels, attack_success, class_names).");
  m.def(
      "write_dump",
      [](const fs::path& path, py::array_t<float, py::array::c_style | py::array::forcecast> values,
         std::vector<int> labels, std::optional<std::vector<bool>> success, std::map<int, std::string> names) {
        return write_dump(dataset_from(values, std::move(labels), std::move(success), std::move(names)), path);
      },
      py::arg("path"), py::arg("values"), py::arg("labels"), py::arg("attack_success") = py::none(),
      py::arg("class_names") = std::map<int, std::string>{});

  // Synthetic data.
  m.def(
      "synth",
      [](std::vector<std::uint32_t> shape, std::size_t n_per_class, std::vector<std::string> families,
         std::uint64_t seed) {
        require(shape.size() == 3, "shape must be (C, H, W)");
        SynthSpec spec;
        spec.shape = {shape[0], shape[1], shape[2]};
        spec.n_per_class = n_per_class;
        spec.seed = seed;
        for (const auto& f : families) spec.families.push_back(parse_family(f));
        const LatentDataset ds = generate(spec);
        return py::make_tuple(dataset_values(ds), ds.labels);
      },
      py::arg("shape"), py::arg("n_per_class"), py::arg("families"), py::arg("seed") = 0);

  // Scalar building blocks.
  m.def("emd_1d", [](std::vector<double> p, std::vector<double> q, double w) { return emd_1d(p, q, w); }, py::arg("p"), py::arg("q"), py::arg("bin_width") = 1.0);
  auto pair = [](const TestResult& r) { return py::make_tuple(r.statistic, r.p_value); };
  m.def("ks_normal", [pair](std::vector<double> x) { return pair(ks_one_sample_normal(x)); });
  m.def("ks_two_sample", [pair](std::vector<double> a, std::vector<double> b) { return pair(ks_two_sample(a, b)); });
  m.def("mann_whitney", [pair](std::vector<double> a, std::vector<double> b) { return pair(mann_whitney_u(a, b)); });
  m.def("welch_t", [pair](std::vector<double> a, std::vector<double> b) { return pair(t_test_welch(a, b)); });
  m.def("bartlett", [pair](std::vector<double> a, std::vector<double> b) { return pair(bartlett(a, b)); });

  m.def(
      "cluster_map",
      [](std::vector<std::vector<std::uint64_t>> counts, double threshold) {
        ConfusionMatrix cm(counts.size());
        for (std::size_t t = 0; t < counts.size(); ++t) {
          require(counts[t].size() == counts.size(), "confusion matrix must be square");
          for (std::size_t p = 0; p < counts.size(); ++p) cm.at(t, p) = counts[t][p];
        }
        return build_cluster_map(cm, threshold).parent;
      },
      py::arg("counts"), py::arg("threshold") = 0.2);

  m.def(
      "evaluate",
      [](std::vector<int> truth, std::vector<int> pred, std::size_t k) {
        return metrics_dict(evaluate_run(truth, pred, k));
      },
      py::arg("truth"), py::arg("pred"), py::arg("num_classes"));

  // Pipeline stages (file in, file out).
  m.def(
      "fit_profile",
      [](const fs::path& dump, const fs::path& out) {
        ProfileOptions o;
        o.dump = dump;
        o.out = out;
        run_profile(o);
      },
      py::arg("dump"), py::arg("out"));
  m.def(
      "extract",
      [](const fs::path& dump, const fs::path& profile, const fs::path& out, bool normalize, bool hist,
         bool tests, bool wasserstein, bool pca, bool lda, bool rnn, double train_fraction, std::uint64_t seed) {
        ExtractOptions o;
        o.dump = dump;
        o.profile = profile;
        o.out = out;
        o.normalize = normalize;
        o.toggles = {hist, tests, wasserstein, pca, lda, rnn};
        o.train_fraction = train_fraction;
        o.seed = seed;
        const AfvTable t = run_extract(o);
        std::vector<std::string> names;
        for (const auto& f : t.layout->features()) names.push_back(f.name);
        std::vector<int> labels;
        std::vector<std::string> splits;
        for (std::size_t i = 0; i < t.size(); ++i) {
          labels.push_back(t.rows[i].label);
          splits.emplace_back(split_name(t.split[i]));
        }
        return py::make_tuple(table_matrix(t), labels, splits, names);
      },
      py::arg("dump"), py::arg("profile"), py::arg("out"), py::arg("normalize") = false, py::arg("hist") = true,
      py::arg("tests") = true, py::arg("wasserstein") = true, py::arg("pca") = false, py::arg("lda") = false,
      py::arg("rnn") = false, py::arg("train_fraction") = 0.7, py::arg("seed") = 0);
  m.def(
      "train",
      [](const fs::path& table, const fs::path& out, std::size_t batch_size, double lr, int epochs, bool sgd,
         std::uint64_t seed, double augment_eps, const std::string& failed_policy) {
        TrainOptions o;
        o.table = table;
        o.out = out;
        o.train.batch_size = batch_size;
        o.train.learning_rate = lr;
        o.train.num_epochs = epochs;
        o.train.sgd_mode = sgd;
        o.train.seed = seed;
        o.augment_eps = augment_eps;
        o.failed_policy = parse_failed_policy(failed_policy);
        const TrainResult r = run_train(o);
        std::vector<double> losses;
        for (const auto& e : r.trace) losses.push_back(e.loss);
        return losses;
      },
      py::arg("table"), py::arg("out"), py::arg("batch_size") = 2500, py::arg("lr") = 1.0, py::arg("epochs") = 20,
      py::arg("sgd") = false, py::arg("seed") = 0, py::arg("augment_eps") = 0.0,
      py::arg("failed_policy") = "keep");
  m.def(
      "eval",
      [](const fs::path& table, const fs::path& model, const fs::path& out_dir) {
        EvalOptions o;
        o.table = table;
        o.checkpoint = model;
        o.out_dir = out_dir;
        return metrics_dict(run_eval(o).metrics);
      },
      py::arg("table"), py::arg("model"), py::arg("out_dir"));
}
