#include "afv/embed_features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "afv/error.hpp"
#include "afv/random.hpp"
#include "afv/text_format.hpp"

namespace afv {

namespace {

std::size_t check_rows(const std::vector<std::vector<double>>& rows, std::size_t min_rows,
                       const char* who) {
  require(rows.size() >= min_rows, std::string(who) + ": need at least " +
                                       std::to_string(min_rows) + " rows");
  const std::size_t d = rows.front().size();
  require(d >= 2, std::string(who) + ": need at least 2 features");
  for (const auto& r : rows) require(r.size() == d, std::string(who) + ": ragged rows");
  return d;
}

std::vector<double> column_mean(const std::vector<std::vector<double>>& rows, std::size_t d) {
  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  for (auto& m : mean) m /= static_cast<double>(rows.size());
  return mean;
}

std::vector<double> project(std::span<const double> x, const std::vector<double>& mean,
                            const std::vector<std::vector<double>>& axes) {
  require(x.size() == mean.size(), "embedding dimension mismatch");
  std::vector<double> out;
  for (const auto& axis : axes) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - mean[j]) * axis[j];
    out.push_back(s);
  }
  return out;
}

std::vector<double> column(const Matrix& m, std::size_t j) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, j);
  return out;
}

// Ordered seeded subsample of at most max_rows positions out of n.
std::vector<std::size_t> reference_subsample(std::size_t n, std::size_t max_rows, std::uint64_t seed) {
  std::vector<std::size_t> pick(n);
  std::iota(pick.begin(), pick.end(), 0);
  if (n > max_rows) {
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(pick));
    pick.resize(max_rows);
    std::sort(pick.begin(), pick.end());
  }
  return pick;
}

}  // namespace

std::vector<double> PcaModel::transform(std::span<const double> x) const {
  return project(x, mean, components);
}

std::vector<double> LdaModel::transform(std::span<const double> x) const {
  return project(x, mean, directions);
}

PcaModel fit_pca(const std::vector<std::vector<double>>& rows) {
  require(!rows.empty(), "fit_pca: need at least 3 rows");
  const std::size_t d = check_rows(rows, 3, "fit_pca");
  PcaModel m;
  m.mean = column_mean(rows, d);
  Matrix cov(d, d);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < d; ++i) {
      const double di = r[i] - m.mean[i];
      if (di == 0.0) continue;
      for (std::size_t j = i; j < d; ++j) cov(i, j) += di * (r[j] - m.mean[j]);
    }
  const double denom = static_cast<double>(rows.size() - 1);
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cov(i, j) /= denom;
      cov(j, i) = cov(i, j);
      if (i == j) trace += cov(i, i);
    }
  if (!(trace > 0.0)) throw ValidationError("fit_pca: degenerate input (all rows identical)");
  const auto eig = jacobi_eigen(cov);
  for (std::size_t k = 0; k < 2; ++k) {
    m.components.push_back(column(eig.vectors, k));
    m.explained_variance.push_back(std::max(eig.values[k], 0.0));
  }
  return m;
}

LdaModel fit_lda(const std::vector<std::vector<double>>& rows, std::span<const int> labels) {
  require(!rows.empty() && rows.size() == labels.size(), "fit_lda: rows/labels mismatch");
  const std::size_t d = check_rows(rows, 4, "fit_lda");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) groups[labels[i]].push_back(i);
  if (groups.size() < 2) throw ValidationError("fit_lda: single class");
  for (const auto& [label, idx] : groups)
    require(idx.size() >= 2, "fit_lda: class " + std::to_string(label) + " has fewer than 2 rows");

  LdaModel m;
  m.mean = column_mean(rows, d);
  Matrix sw(d, d), sb(d, d);
  for (const auto& [label, idx] : groups) {
    std::vector<double> mu(d, 0.0);
    for (std::size_t i : idx)
      for (std::size_t j = 0; j < d; ++j) mu[j] += rows[i][j];
    for (auto& x : mu) x /= static_cast<double>(idx.size());
    for (std::size_t i : idx)
      for (std::size_t a = 0; a < d; ++a) {
        const double da = rows[i][a] - mu[a];
        if (da == 0.0) continue;
        for (std::size_t b = a; b < d; ++b) sw(a, b) += da * (rows[i][b] - mu[b]);
      }
    const double nk = static_cast<double>(idx.size());
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) sb(a, b) += nk * (mu[a] - m.mean[a]) * (mu[b] - m.mean[b]);
  }
  double trace = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a + 1; b < d; ++b) {
      sw(b, a) = sw(a, b);
      sb(b, a) = sb(a, b);
    }
    trace += sw(a, a);
  }
  m.ridge = std::max(1e-6 * trace / static_cast<double>(d), 1e-12);
  for (std::size_t a = 0; a < d; ++a) sw(a, a) += m.ridge;

  // Symmetric reduction: with S_w = L L^T, eig of L^-1 S_b L^-T gives y,
  // and w = L^-T y solves the generalized problem.
  const Matrix l = cholesky(sw);
  Matrix y(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    const auto col = solve_lower(l, column(sb, j));
    for (std::size_t i = 0; i < d; ++i) y(i, j) = col[i];
  }
  Matrix reduced(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    const auto col = solve_lower(l, y.row(j));
    for (std::size_t i = 0; i < d; ++i) reduced(i, j) = col[i];
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a + 1; b < d; ++b) {
      const double avg = 0.5 * (reduced(a, b) + reduced(b, a));
      reduced(a, b) = reduced(b, a) = avg;
    }
  const auto eig = jacobi_eigen(reduced);
  for (std::size_t k = 0; k < 2; ++k) {
    auto w = solve_lower_transpose(l, column(eig.vectors, k));
    const double norm = std::sqrt(dot(w, w));
    require(norm > 0.0, "fit_lda: zero direction");
    for (auto& x : w) x /= norm;
    m.directions.push_back(std::move(w));
  }
  return m;
}

RnnIndex build_rnn_index(const std::vector<std::vector<double>>& rows, std::span<const int> labels,
                         int num_classes, double radius, std::size_t max_rows, std::uint64_t seed) {
  require(!rows.empty() && rows.size() == labels.size(), "build_rnn_index: rows/labels mismatch");
  require(radius > 0.0, "build_rnn_index: radius must be positive");
  require(num_classes >= 1, "build_rnn_index: need at least one class");
  RnnIndex index;
  index.radius = radius;
  index.num_classes = num_classes;
  index.normalizer = fit_range_normalizer(rows);

  const auto pick = reference_subsample(rows.size(), max_rows, seed);
  const std::size_t d = rows.front().size();
  index.reference = Matrix(pick.size(), d);
  for (std::size_t i = 0; i < pick.size(); ++i) {
    const auto r = index.normalizer.apply(rows[pick[i]]);
    std::copy(r.begin(), r.end(), index.reference.row(i).begin());
    require(labels[pick[i]] >= 0 && labels[pick[i]] < num_classes, "build_rnn_index: label out of range");
    index.labels.push_back(labels[pick[i]]);
  }
  return index;
}

std::vector<double> rnn_votes(std::span<const double> query, const RnnIndex& index,
                              std::optional<std::size_t> exclude_row) {
  require(index.reference.rows() > 0, "rnn_votes: empty index");
  require(query.size() == index.reference.cols(), "rnn_votes: dimension mismatch");
  const auto q = index.normalizer.apply(query);
  const double r2 = index.radius * index.radius;
  std::vector<double> counts(static_cast<std::size_t>(index.num_classes), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < index.reference.rows(); ++i) {
    if (exclude_row && *exclude_row == i) continue;
    const auto ref = index.reference.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < q.size() && s <= r2; ++j) s += (q[j] - ref[j]) * (q[j] - ref[j]);
    if (s <= r2) {
      counts[static_cast<std::size_t>(index.labels[i])] += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) return std::vector<double>(counts.size(), 1.0 / static_cast<double>(counts.size()));
  for (auto& c : counts) c /= total;
  return counts;
}

EmbeddingModels fit_embeddings(const AfvTable& table, const FeatureToggles& toggles,
                               const EmbeddingConfig& config) {
  EmbeddingModels models;
  if (!toggles.pca && !toggles.lda && !toggles.rnn_votes) return models;
  const auto train = table.indices(Split::Train);
  require(!train.empty(), "embedding fit needs Train rows (split the table first)");
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (std::size_t i : train) {
    rows.push_back(table.rows[i].values);
    labels.push_back(table.rows[i].label);
  }
  if (toggles.pca) models.pca = fit_pca(rows);
  if (toggles.lda) models.lda = fit_lda(rows, labels);
  if (toggles.rnn_votes) {
    models.rnn = build_rnn_index(rows, labels, table.num_classes(), config.rnn_radius,
                                 config.rnn_max_rows, config.seed);
    for (std::size_t p : reference_subsample(train.size(), config.rnn_max_rows, config.seed))
      models.rnn_source_rows.push_back(train[p]);
  }
  return models;
}

AfvTable append_embeddings(const AfvTable& table, const EmbeddingModels& models) {
  if (!models.pca && !models.lda && !models.rnn) return table;
  auto layout = std::make_shared<FeatureLayout>(*table.layout);
  if (models.pca) {
    layout->append("pca", "pca.0");
    layout->append("pca", "pca.1");
  }
  if (models.lda) {
    layout->append("lda", "lda.0");
    layout->append("lda", "lda.1");
  }
  if (models.rnn)
    for (int k = 0; k < models.rnn->num_classes; ++k) layout->append("rnn_votes", "rnn.p_" + std::to_string(k));

  std::map<std::size_t, std::size_t> ref_of_row;
  for (std::size_t i = 0; i < models.rnn_source_rows.size(); ++i) ref_of_row[models.rnn_source_rows[i]] = i;

  AfvTable out = table;
  out.layout = layout;
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    auto& row = out.rows[i];
    const std::vector<double> base = table.rows[i].values;
    if (models.pca) {
      const auto p = models.pca->transform(base);
      row.values.insert(row.values.end(), p.begin(), p.end());
    }
    if (models.lda) {
      const auto p = models.lda->transform(base);
      row.values.insert(row.values.end(), p.begin(), p.end());
    }
    if (models.rnn) {
      std::optional<std::size_t> self;
      if (auto it = ref_of_row.find(i); it != ref_of_row.end()) self = it->second;
      const auto v = rnn_votes(base, *models.rnn, self);
      row.values.insert(row.values.end(), v.begin(), v.end());
    }
    row.layout = layout;
  }
  return out;
}

void save_embeddings(const EmbeddingModels& m, const std::filesystem::path& path) {
  KvWriter w("afv-embeddings", 1);
  w.put_int("has_pca", m.pca ? 1 : 0);
  if (m.pca) {
    w.put_array("pca_mean", m.pca->mean);
    w.put_array("pca_component_0", m.pca->components[0]);
    w.put_array("pca_component_1", m.pca->components[1]);
    w.put_array("pca_explained_variance", m.pca->explained_variance);
  }
  w.put_int("has_lda", m.lda ? 1 : 0);
  if (m.lda) {
    w.put_array("lda_mean", m.lda->mean);
    w.put_array("lda_direction_0", m.lda->directions[0]);
    w.put_array("lda_direction_1", m.lda->directions[1]);
    w.put("lda_ridge", m.lda->ridge);
  }
  w.put_int("has_rnn", m.rnn ? 1 : 0);
  if (m.rnn) {
    w.put_int("rnn_num_classes", m.rnn->num_classes);
    w.put("rnn_radius", m.rnn->radius);
    w.put_array("rnn_norm_min", m.rnn->normalizer.min);
    w.put_array("rnn_norm_max", m.rnn->normalizer.max);
    w.put_int("rnn_rows", static_cast<long long>(m.rnn->reference.rows()));
    w.put_array("rnn_reference", m.rnn->reference.data());
    std::vector<double> labels(m.rnn->labels.begin(), m.rnn->labels.end());
    w.put_array("rnn_labels", labels);
    // Table rows the reference came from, for leave-one-out on re-apply.
    std::vector<double> source(m.rnn_source_rows.begin(), m.rnn_source_rows.end());
    w.put_array("rnn_source_rows", source);
  }
  w.save(path);
}

EmbeddingModels load_embeddings(const std::filesystem::path& path) {
  const auto r = KvReader::load(path, "afv-embeddings", 1);
  EmbeddingModels m;
  if (r.get_int("has_pca")) {
    PcaModel p;
    p.mean = r.get_array("pca_mean");
    p.components = {r.get_array("pca_component_0"), r.get_array("pca_component_1")};
    p.explained_variance = r.get_array("pca_explained_variance");
    m.pca = std::move(p);
  }
  if (r.get_int("has_lda")) {
    LdaModel l;
    l.mean = r.get_array("lda_mean");
    l.directions = {r.get_array("lda_direction_0"), r.get_array("lda_direction_1")};
    l.ridge = r.get("lda_ridge");
    m.lda = std::move(l);
  }
  if (r.get_int("has_rnn")) {
    RnnIndex idx;
    idx.num_classes = static_cast<int>(r.get_int("rnn_num_classes"));
    idx.radius = r.get("rnn_radius");
    idx.normalizer.min = r.get_array("rnn_norm_min");
    idx.normalizer.max = r.get_array("rnn_norm_max");
    const auto rows = static_cast<std::size_t>(r.get_int("rnn_rows"));
    const auto flat = r.get_array("rnn_reference");
    const std::size_t d = idx.normalizer.dim();
    if (flat.size() != rows * d) throw FormatError("embeddings: reference size mismatch");
    idx.reference = Matrix(rows, d);
    idx.reference.data() = flat;
    for (double x : r.get_array("rnn_labels")) idx.labels.push_back(static_cast<int>(x));
    m.rnn = std::move(idx);
    for (double x : r.get_array("rnn_source_rows")) m.rnn_source_rows.push_back(static_cast<std::size_t>(x));
  }
  return m;
}

}  // namespace afv
