#include "afv/pipeline.hpp"

#include <cstdio>
#include <json.hpp>

#include "afv/error.hpp"
#include "afv/text_format.hpp"

namespace afv {

namespace {

using Json = nlohmann::ordered_json;

// Doubles go into records as shortest round-trip strings, so a record read
// back yields exactly the same flags.
std::string num(double x) { return format_double(x); }

Json format_versions() {
  return {{"latent_dump", kDumpVersion}, {"afv_profile", 1},   {"afv_table", 1},
          {"afv_embeddings", 1},         {"afv_normalizer", 1}, {"checkpoint", 1},
          {"cluster_map", 1}};
}

void write_record(const fs::path& output, const std::string& command, Json flags) {
  Json j;
  j["tool"] = "afvtool";
  j["tool_version"] = kToolVersion;
  j["command"] = command;
  j["flags"] = std::move(flags);
  j["formats"] = format_versions();
  write_text_file(record_path(output), j.dump(2) + "\n");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

Json strains_json(const std::map<int, int>& strains) {
  Json j = Json::object();
  for (const auto& [s, p] : strains) j[std::to_string(s)] = p;
  return j;
}

Json train_flags(const TrainOptions& o) {
  Json hidden = Json::array();
  for (auto h : o.arch.hidden) hidden.push_back(h);
  return {{"table", o.table.string()},
          {"out", o.out.string()},
          {"batch_size", o.train.batch_size},
          {"lr", num(o.train.learning_rate)},
          {"sgd", o.train.sgd_mode},
          {"momentum", num(o.train.momentum)},
          {"epochs", o.train.num_epochs},
          {"seed", o.train.seed},
          {"hidden", hidden},
          {"dropout", num(o.arch.dropout_rate)},
          {"augment_eps", num(o.augment_eps)},
          {"augment_copies", o.augment_copies},
          {"failed_policy", failed_policy_name(o.failed_policy)},
          {"strains", strains_json(o.strains)},
          {"cluster_map", o.cluster_map ? o.cluster_map->string() : ""}};
}

std::string predictions_csv(std::span<const std::size_t> rows,
                            std::span<const int> truth, std::span<const int> pred) {
  std::string out = "row,true,pred,verdict\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    out += std::to_string(rows[i]) + "," + std::to_string(truth[i]) + "," + std::to_string(pred[i]) + "," +
           (detect(pred[i]) == Verdict::Clean ? "CLEAN" : "ATTACK") + "\n";
  return out;
}

}  // namespace

fs::path record_path(const fs::path& output) {
  std::error_code ec;
  if (fs::is_directory(output, ec)) return output / "run_record.json";
  return with_suffix(output, ".record.json");
}

void run_synth(const SynthOptions& o) {
  const LatentDataset ds = generate(o.spec);
  ensure_parent(o.out);
  write_dump(ds, o.out);
  if (o.reference_out) {
    ensure_parent(*o.reference_out);
    write_dump(generate_reference(o.spec, o.reference_n), *o.reference_out);
  }
  Json families = Json::array();
  for (const auto& f : o.spec.families) families.push_back(family_to_string(f));
  write_record(o.out, "synth",
               {{"out", o.out.string()},
                {"reference_out", o.reference_out ? o.reference_out->string() : ""},
                {"reference_n", o.reference_n},
                {"shape", {o.spec.shape.channels, o.spec.shape.height, o.spec.shape.width}},
                {"n_per_class", o.spec.n_per_class},
                {"families", families},
                {"failed_fraction", num(o.spec.failed_fraction)},
                {"failed_strength_scale", num(o.spec.failed_strength_scale)},
                {"seed", o.spec.seed}});
}

BaselineProfile run_profile(const ProfileOptions& o) {
  const LatentDataset naturals = read_dump(o.dump);
  BaselineProfile profile = fit_profile(naturals, o.config);
  ensure_parent(o.out);
  save_profile(profile, o.out);
  write_record(o.out, "profile",
               {{"dump", o.dump.string()},
                {"out", o.out.string()},
                {"mode", o.config.mode == FitMode::EqualWeight ? "equal" : "exponential"},
                {"alpha", num(o.config.alpha)},
                {"batch_size", o.config.batch_size},
                {"lo_pct", num(o.config.lo_pct)},
                {"hi_pct", num(o.config.hi_pct)}});
  return profile;
}

AfvTable run_extract(const ExtractOptions& o) {
  const LatentDataset ds = read_dump(o.dump);
  const BaselineProfile profile = load_profile(o.profile);
  require(ds.shape() == profile.shape, "dump shape does not match profile shape");
  AfvExtractor extractor(profile, o.toggles, o.seed);
  AfvTable table = split(extractor.extract_all(ds), o.train_fraction, o.seed);

  // Embeddings are fitted on Train rows of the core features; the range
  // normalizer afterwards covers every column, embeddings included.
  EmbeddingConfig ecfg = o.embedding;
  ecfg.seed = o.seed;
  const EmbeddingModels models = fit_embeddings(table, o.toggles, ecfg);
  table = append_embeddings(table, models);
  ensure_parent(o.out);
  if (models.pca || models.lda || models.rnn) save_embeddings(models, with_suffix(o.out, ".embeddings"));
  if (o.normalize) {
    const Normalizer norm = fit_range_normalizer(table);
    table = apply_normalizer(table, norm);
    save_normalizer(norm, with_suffix(o.out, ".normalizer"));
  }
  write_afv_table(table, o.out);
  write_record(o.out, "extract",
               {{"dump", o.dump.string()},
                {"profile", o.profile.string()},
                {"out", o.out.string()},
                {"hist", o.toggles.histograms},
                {"tests", o.toggles.stat_tests},
                {"wasserstein", o.toggles.wasserstein},
                {"pca", o.toggles.pca},
                {"lda", o.toggles.lda},
                {"rnn", o.toggles.rnn_votes},
                {"rnn_radius", num(o.embedding.rnn_radius)},
                {"rnn_max_rows", o.embedding.rnn_max_rows},
                {"normalize", o.normalize},
                {"train_fraction", num(o.train_fraction)},
                {"seed", o.seed}});
  return table;
}

AfvTable prepare_training_table(const AfvTable& table, const TrainOptions& o) {
  AfvTable t = table.subset(Split::Train);
  require(!t.rows.empty(), "table has no Train rows");
  if (!o.strains.empty()) t = merge_strains(t, o.strains);
  t = apply_failed_attack_policy(t, o.failed_policy);
  if (o.cluster_map) t = relabel(t, read_cluster_map(*o.cluster_map));
  // eps = 0 would only duplicate rows, so it means "no augmentation".
  if (o.augment_eps > 0.0) {
    AugmentConfig aug;
    aug.epsilon = o.augment_eps;
    aug.copies = o.augment_copies;
    aug.seed = derive_seed(o.train.seed, 0xA06);
    t = augment_epsilon_ball(t, aug);
  }
  return t;
}

TrainResult run_train(const TrainOptions& o) {
  o.train.validate();
  const AfvTable full = read_afv_table(o.table);
  const AfvTable t = prepare_training_table(full, o);
  // Class count comes from the full table so that train and eval agree.
  const auto k = static_cast<std::size_t>(std::max(full.num_classes(), 2));
  SecondStageModel model = init_model(t.dim(), k, o.train.seed, o.arch);
  TrainResult result = train(std::move(model), t, o.train);
  ensure_parent(o.out);
  save_checkpoint(result.model, o.out);
  write_loss_trace(result.trace, with_suffix(o.out, ".loss.csv"));
  write_record(o.out, "train", train_flags(o));
  return result;
}

std::vector<int> predict_rows(const SecondStageModel& model, const AfvTable& table,
                              std::span<const std::size_t> rows) {
  return predict(model, feature_matrix(table, rows));
}

EvalResult run_eval(const EvalOptions& o) {
  AfvTable table = read_afv_table(o.table);
  if (!o.strains.empty()) table = merge_strains(table, o.strains);
  const SecondStageModel model = load_checkpoint(o.checkpoint);
  require(model.input_dim() == table.dim(), "checkpoint input size does not match table");
  auto rows = table.indices(Split::Test);
  if (rows.empty()) rows = table.indices(Split::None);
  require(!rows.empty(), "table has no Test rows to evaluate");
  const std::vector<int> truth = label_vector(table, rows);
  const std::vector<int> pred = predict_rows(model, table, rows);
  const std::size_t k = model.num_classes();

  EvalResult res;
  res.metrics = evaluate_run(truth, pred, k, o.checkpoint.filename().string());
  res.metrics.confusion.class_names = table.class_names;
  ensure_dir(o.out_dir);
  write_text_file(o.out_dir / "metrics.json", render_metrics_json(res.metrics));
  write_text_file(o.out_dir / "confusion.csv", render_confusion_csv(res.metrics.confusion));
  write_text_file(o.out_dir / "predictions.csv", predictions_csv(rows, truth, pred));
  std::vector<RunMetrics> runs{res.metrics};
  if (o.cluster_map) {
    const ClusterMap map = read_cluster_map(*o.cluster_map);
    res.clustered = evaluate_run(relabel(truth, map), relabel(pred, map), k,
                                 res.metrics.name + "+clustered");
    AfvTable named = relabel(table, map);
    res.clustered->confusion.class_names = named.class_names;
    write_text_file(o.out_dir / "metrics_clustered.json", render_metrics_json(*res.clustered));
    write_text_file(o.out_dir / "confusion_clustered.csv", render_confusion_csv(res.clustered->confusion));
    runs.push_back(*res.clustered);
  }
  emit_report(runs, o.out_dir / "report");
  write_record(o.out_dir, "eval",
               {{"table", o.table.string()},
                {"checkpoint", o.checkpoint.string()},
                {"out_dir", o.out_dir.string()},
                {"cluster_map", o.cluster_map ? o.cluster_map->string() : ""},
                {"strains", strains_json(o.strains)}});
  return res;
}

ClusterMap run_cluster(const ClusterOptions& o) {
  const ConfusionMatrix cm = parse_confusion_csv(read_text_file(o.confusion));
  const ClusterMap map = build_cluster_map(cm, o.threshold);
  ensure_parent(o.out);
  write_cluster_map(map, o.out);
  Json flags = {{"confusion", o.confusion.string()}, {"out", o.out.string()}, {"threshold", num(o.threshold)}};
  if (o.retrain) {
    TrainOptions t = *o.retrain;
    t.cluster_map = o.out;
    run_train(t);
    flags["retrain"] = train_flags(t);
    if (o.retrain_eval_dir) {
      EvalOptions e;
      e.table = t.table;
      e.checkpoint = t.out;
      e.out_dir = *o.retrain_eval_dir;
      e.cluster_map = o.out;
      e.strains = t.strains;
      run_eval(e);
      flags["retrain_eval_dir"] = o.retrain_eval_dir->string();
    }
  }
  write_record(o.out, "cluster", flags);
  return map;
}

std::string render_grid_csv(const std::vector<GridRow>& rows) {
  std::string out = "lr,augment_eps,batch_size,c0_f1,avg_f1,dtc_mu_acc,dtc_mx_acc,clf_mu_acc,clf_mx_acc,n\n";
  for (const auto& r : rows) {
    const auto& a = r.aggregate;
    out += num(r.learning_rate) + "," + num(r.augment_eps) + "," + std::to_string(r.batch_size) + "," +
           num(a.c0_f1_mu) + "," + num(a.avg_f1_mu) + "," + num(a.dtc_mu) + "," + num(a.dtc_mx) + "," +
           num(a.clf_mu) + "," + num(a.clf_mx) + "," + std::to_string(a.n) + "\n";
  }
  return out;
}

std::vector<GridRow> run_grid(const GridOptions& o) {
  require(!o.learning_rates.empty() && !o.augment_eps.empty() && !o.batch_sizes.empty() && !o.seeds.empty(),
          "grid: every sweep list needs at least one value");
  ensure_dir(o.out_dir);
  std::vector<GridRow> rows;
  std::vector<RunMetrics> all;
  std::size_t run_id = 0;
  for (double lr : o.learning_rates)
    for (double eps : o.augment_eps)
      for (std::size_t bs : o.batch_sizes) {
        std::vector<RunMetrics> cell;
        for (std::uint64_t seed : o.seeds) {
          char name[32];
          std::snprintf(name, sizeof name, "run_%03zu", run_id++);
          const fs::path dir = o.out_dir / name;
          ensure_dir(dir);
          TrainOptions t = o.base;
          t.table = o.table;
          t.out = dir / "model.afvm";
          t.train.learning_rate = lr;
          t.train.batch_size = bs;
          t.train.seed = seed;
          t.augment_eps = eps;
          run_train(t);
          EvalOptions e;
          e.table = o.table;
          e.checkpoint = t.out;
          e.out_dir = dir / "eval";
          e.strains = t.strains;
          RunMetrics m = run_eval(e).metrics;
          m.name = name;
          cell.push_back(m);
          all.push_back(m);
        }
        rows.push_back({lr, eps, bs, aggregate_runs(cell)});
      }
  write_text_file(o.out_dir / "aggregate.csv", render_grid_csv(rows));
  emit_report(all, o.out_dir / "report");
  Json lrs = Json::array(), eps = Json::array(), bss = Json::array(), seeds = Json::array();
  for (double v : o.learning_rates) lrs.push_back(num(v));
  for (double v : o.augment_eps) eps.push_back(num(v));
  for (auto v : o.batch_sizes) bss.push_back(v);
  for (auto v : o.seeds) seeds.push_back(v);
  Json flags = train_flags(o.base);
  flags["table"] = o.table.string();
  flags["out_dir"] = o.out_dir.string();
  flags["lr"] = lrs;
  flags["augment_eps"] = eps;
  flags["batch_size"] = bss;
  flags["seeds"] = seeds;
  flags.erase("out");
  flags.erase("seed");
  write_record(o.out_dir, "grid", flags);
  return rows;
}

void run_report(const ReportOptions& o) {
  require(!o.metrics.empty(), "report: no metrics files given");
  std::vector<RunMetrics> runs;
  for (const auto& p : o.metrics) runs.push_back(parse_metrics_json(read_text_file(p)));
  emit_report(runs, o.out_dir);
  Json files = Json::array();
  for (const auto& p : o.metrics) files.push_back(p.string());
  write_record(o.out_dir, "report", {{"metrics", files}, {"out_dir", o.out_dir.string()}});
}

}  // namespace afv
