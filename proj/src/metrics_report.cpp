#include "afv/metrics_report.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>

#include "afv/error.hpp"
#include "afv/text_format.hpp"

namespace afv {

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

std::string fixed(double x, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

}  // namespace

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, std::size_t k) {
  require(truth.size() == pred.size(), "confusion: label vectors differ in length");
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = pred[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= k || static_cast<std::size_t>(p) >= k)
      throw ValidationError("confusion: out-of-range label");
    ++cm.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return cm;
}

RunMetrics classification_metrics(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (cm.k == 0 || total == 0) throw ValidationError("empty confusion matrix");
  RunMetrics m;
  m.confusion = cm;
  m.n = total;
  m.clf_accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  double attack_sum = 0.0, all_sum = 0.0;
  std::size_t attack_n = 0, all_n = 0;
  for (std::size_t c = 0; c < cm.k; ++c) {
    ClassMetrics cls;
    cls.label = static_cast<int>(c);
    const double tp = static_cast<double>(cm.at(c, c));
    cls.support = cm.row_total(c);
    cls.precision = ratio(tp, static_cast<double>(cm.col_total(c)));
    cls.recall = ratio(tp, static_cast<double>(cls.support));
    cls.f1 = ratio(2.0 * cls.precision * cls.recall, cls.precision + cls.recall);
    m.per_class.push_back(cls);
    if (c == 0) m.c0_f1 = cls.f1;
    // Classes absent from both truth and predictions (e.g. merged away) are skipped.
    if (cls.support == 0 && cm.col_total(c) == 0) continue;
    all_sum += cls.f1;
    ++all_n;
    if (c > 0) {
      attack_sum += cls.f1;
      ++attack_n;
    }
  }
  m.avg_f1 = ratio(attack_sum, static_cast<double>(attack_n));
  m.avg_f1_all = ratio(all_sum, static_cast<double>(all_n));
  return m;
}

DetectionMetrics detection_metrics(std::span<const int> truth, std::span<const int> pred) {
  require(truth.size() == pred.size(), "detection_metrics: label vectors differ in length");
  double clean = 0, attacks = 0, clean_ok = 0, attack_ok = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0) {
      ++clean;
      clean_ok += pred[i] == 0;
    } else {
      ++attacks;
      attack_ok += pred[i] != 0;
    }
  }
  if (clean == 0) throw ValidationError("detection metrics undefined: no clean rows");
  if (attacks == 0) throw ValidationError("detection metrics undefined: no attack rows");
  DetectionMetrics d;
  d.accuracy = (clean_ok + attack_ok) / (clean + attacks);
  d.clean_accuracy = clean_ok / clean;
  d.attack_accuracy = attack_ok / attacks;
  d.tpr = d.attack_accuracy;
  d.fnr = 1.0 - d.tpr;
  d.fpr = 1.0 - d.clean_accuracy;
  return d;
}

RunMetrics evaluate_run(std::span<const int> truth, std::span<const int> pred, std::size_t k,
                        std::string name) {
  RunMetrics m = classification_metrics(confusion(truth, pred, k));
  m.detection = detection_metrics(truth, pred);
  m.dtc_accuracy = m.detection.accuracy;
  m.name = std::move(name);
  return m;
}

AggregateMetrics aggregate_runs(std::span<const RunMetrics> runs) {
  require(!runs.empty(), "aggregate_runs: empty list");
  AggregateMetrics a;
  a.n = runs.size();
  a.clf_mx = runs.front().clf_accuracy;
  a.dtc_mx = runs.front().dtc_accuracy;
  for (const auto& r : runs) {
    a.clf_mu += r.clf_accuracy;
    a.dtc_mu += r.dtc_accuracy;
    a.c0_f1_mu += r.c0_f1;
    a.avg_f1_mu += r.avg_f1;
    a.clf_mx = std::max(a.clf_mx, r.clf_accuracy);
    a.dtc_mx = std::max(a.dtc_mx, r.dtc_accuracy);
  }
  const double n = static_cast<double>(runs.size());
  a.clf_mu /= n;
  a.dtc_mu /= n;
  a.c0_f1_mu /= n;
  a.avg_f1_mu /= n;
  return a;
}

std::string render_per_class_csv(const RunMetrics& m) {
  std::string out = "label,name,precision,recall,f1,support\n";
  for (const auto& c : m.per_class) {
    auto it = m.confusion.class_names.find(c.label);
    const std::string name = it == m.confusion.class_names.end() ? "" : it->second;
    out += std::to_string(c.label) + "," + name + "," + format_double(c.precision) + "," +
           format_double(c.recall) + "," + format_double(c.f1) + "," + std::to_string(c.support) + "\n";
  }
  return out;
}

std::string render_roc_csv(std::span<const RunMetrics> runs) {
  std::string out = "run,name,fpr,tpr,dtc_accuracy,clf_accuracy\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    out += std::to_string(i) + "," + r.name + "," + format_double(r.detection.fpr) + "," +
           format_double(r.detection.tpr) + "," + format_double(r.dtc_accuracy) + "," +
           format_double(r.clf_accuracy) + "\n";
  }
  return out;
}

std::string render_confusion_svg(const ConfusionMatrix& cm) {
  const int cell = 36, margin = 40;
  const int size = margin + cell * static_cast<int>(cm.k) + 10;
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(size) +
                    "\" height=\"" + std::to_string(size) + "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  for (std::size_t t = 0; t < cm.k; ++t) {
    const double row = static_cast<double>(cm.row_total(t));
    for (std::size_t p = 0; p < cm.k; ++p) {
      const double frac = ratio(static_cast<double>(cm.at(t, p)), row);
      const int shade = 255 - static_cast<int>(frac * 200.0 + 0.5);
      const int x = margin + static_cast<int>(p) * cell, y = margin + static_cast<int>(t) * cell;
      svg += "<rect class=\"cell\" x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) +
             "\" width=\"" + std::to_string(cell) + "\" height=\"" + std::to_string(cell) +
             "\" fill=\"rgb(" + std::to_string(shade) + "," + std::to_string(shade) + ",255)\" stroke=\"#888\"/>\n";
      svg += "<text x=\"" + std::to_string(x + cell / 2) + "\" y=\"" + std::to_string(y + cell / 2 + 4) +
             "\" text-anchor=\"middle\">" + fixed(frac, 2) + "</text>\n";
    }
    svg += "<text x=\"" + std::to_string(margin - 6) + "\" y=\"" +
           std::to_string(margin + static_cast<int>(t) * cell + cell / 2 + 4) + "\" text-anchor=\"end\">" +
           std::to_string(t) + "</text>\n";
    svg += "<text x=\"" + std::to_string(margin + static_cast<int>(t) * cell + cell / 2) + "\" y=\"" +
           std::to_string(margin - 6) + "\" text-anchor=\"middle\">" + std::to_string(t) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string render_roc_svg(std::span<const RunMetrics> runs) {
  const int w = 320, h = 320, m = 40, plot = 260;
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
                    std::to_string(h) + "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  svg += "<rect x=\"" + std::to_string(m) + "\" y=\"10\" width=\"" + std::to_string(plot) + "\" height=\"" +
         std::to_string(plot) + "\" fill=\"none\" stroke=\"#000\"/>\n";
  svg += "<line x1=\"" + std::to_string(m) + "\" y1=\"" + std::to_string(10 + plot) + "\" x2=\"" +
         std::to_string(m + plot) + "\" y2=\"10\" stroke=\"#bbb\" stroke-dasharray=\"4\"/>\n";
  svg += "<text x=\"" + std::to_string(m + plot / 2) + "\" y=\"" + std::to_string(h - 8) +
         "\" text-anchor=\"middle\">FPR</text>\n";
  svg += "<text x=\"12\" y=\"" + std::to_string(10 + plot / 2) + "\" text-anchor=\"middle\">TPR</text>\n";
  for (const auto& r : runs) {
    const double x = m + r.detection.fpr * plot, y = 10 + (1.0 - r.detection.tpr) * plot;
    svg += "<circle class=\"run\" cx=\"" + fixed(x, 2) + "\" cy=\"" + fixed(y, 2) + "\" r=\"3\" fill=\"#c33\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<std::filesystem::path> emit_report(std::span<const RunMetrics> runs,
                                               const std::filesystem::path& out_dir) {
  require(!runs.empty(), "emit_report: no runs");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& text) {
    const auto p = out_dir / name;
    write_text_file(p, text);
    written.push_back(p);
  };
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string suffix = std::to_string(i);
    put("confusion_" + suffix + ".csv", render_confusion_csv(runs[i].confusion));
    put("confusion_" + suffix + ".svg", render_confusion_svg(runs[i].confusion));
    put("per_class_" + suffix + ".csv", render_per_class_csv(runs[i]));
  }
  put("roc.csv", render_roc_csv(runs));
  put("roc.svg", render_roc_svg(runs));
  return written;
}

std::string render_metrics_json(const RunMetrics& m) {
  nlohmann::ordered_json j;
  j["name"] = m.name;
  j["n"] = m.n;
  j["clf_accuracy"] = m.clf_accuracy;
  j["dtc_accuracy"] = m.dtc_accuracy;
  j["c0_f1"] = m.c0_f1;
  j["avg_f1"] = m.avg_f1;
  j["avg_f1_all"] = m.avg_f1_all;
  j["detection"] = {{"accuracy", m.detection.accuracy},
                    {"clean_accuracy", m.detection.clean_accuracy},
                    {"attack_accuracy", m.detection.attack_accuracy},
                    {"tpr", m.detection.tpr},
                    {"fpr", m.detection.fpr},
                    {"fnr", m.detection.fnr}};
  auto per = nlohmann::ordered_json::array();
  for (const auto& c : m.per_class)
    per.push_back({{"label", c.label}, {"precision", c.precision}, {"recall", c.recall},
                   {"f1", c.f1}, {"support", c.support}});
  j["per_class"] = per;
  j["confusion"] = {{"k", m.confusion.k}, {"counts", m.confusion.counts}};
  nlohmann::ordered_json names = nlohmann::ordered_json::object();
  for (const auto& [label, name] : m.confusion.class_names) names[std::to_string(label)] = name;
  j["class_names"] = names;
  return j.dump(2) + "\n";
}

RunMetrics parse_metrics_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    RunMetrics m;
    m.name = j.at("name").get<std::string>();
    m.n = j.at("n").get<std::size_t>();
    m.clf_accuracy = j.at("clf_accuracy").get<double>();
    m.dtc_accuracy = j.at("dtc_accuracy").get<double>();
    m.c0_f1 = j.at("c0_f1").get<double>();
    m.avg_f1 = j.at("avg_f1").get<double>();
    m.avg_f1_all = j.at("avg_f1_all").get<double>();
    const auto& d = j.at("detection");
    m.detection = {d.at("accuracy").get<double>(), d.at("clean_accuracy").get<double>(),
                   d.at("attack_accuracy").get<double>(), d.at("tpr").get<double>(),
                   d.at("fpr").get<double>(), d.at("fnr").get<double>()};
    for (const auto& c : j.at("per_class"))
      m.per_class.push_back({c.at("label").get<int>(), c.at("precision").get<double>(),
                             c.at("recall").get<double>(), c.at("f1").get<double>(),
                             c.at("support").get<std::uint64_t>()});
    m.confusion.k = j.at("confusion").at("k").get<std::size_t>();
    m.confusion.counts = j.at("confusion").at("counts").get<std::vector<std::uint64_t>>();
    if (m.confusion.counts.size() != m.confusion.k * m.confusion.k)
      throw FormatError("metrics: confusion size mismatch");
    for (const auto& [key, value] : j.at("class_names").items())
      m.confusion.class_names[std::stoi(key)] = value.get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics json: ") + e.what());
  }
}

}  // namespace afv
