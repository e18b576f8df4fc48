#include <doctest.h>

#include <cmath>

#include "afv/embed_features.hpp"
#include "afv/error.hpp"
#include "afv/random.hpp"
#include "unit/helpers.hpp"

using namespace afv;

namespace {

using Rows = std::vector<std::vector<double>>;

Rows cloud(std::size_t n, std::size_t d, std::uint64_t seed, std::vector<double> center = {}, double sd = 1.0) {
  Rng rng(seed);
  Rows rows(n, std::vector<double>(d));
  for (auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) r[j] = (center.empty() ? 0.0 : center[j]) + rng.normal(0, sd);
  return rows;
}

AfvTable table_from(const Rows& rows, const std::vector<int>& labels, const std::vector<Split>& split) {
  AfvTable t;
  auto layout = std::make_shared<FeatureLayout>();
  for (std::size_t j = 0; j < rows.front().size(); ++j) layout->append("region", "region.f" + std::to_string(j));
  t.layout = layout;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t.rows.push_back({rows[i], layout, labels[i], true});
    t.split.push_back(split[i]);
    t.class_names[labels[i]] = "c" + std::to_string(labels[i]);
  }
  return t;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return dot(a, b) / std::sqrt(dot(a, a) * dot(b, b));
}

}  // namespace

TEST_CASE("PCA finds the x axis") {
  Rows rows;
  for (int i = -5; i <= 5; ++i) rows.push_back({static_cast<double>(i), 0.0, 0.0});
  const auto m = fit_pca(rows);
  CHECK(std::fabs(std::fabs(m.components[0][0]) - 1.0) < 1e-12);
  CHECK(m.explained_variance[1] < 1e-12);
  CHECK(std::fabs(dot(m.components[0], m.components[1])) < 1e-8);
  CHECK(dot(m.components[1], m.components[1]) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("PCA on an isotropic cloud and the projection of the mean") {
  const auto rows = cloud(4000, 5, 3);
  const auto m = fit_pca(rows);
  CHECK(m.explained_variance[0] >= m.explained_variance[1]);
  CHECK(m.explained_variance[1] / m.explained_variance[0] > 0.9);
  for (double x : m.transform(m.mean)) CHECK(std::fabs(x) < 1e-9);
  const auto p = m.transform(rows[7]);
  for (std::size_t k = 0; k < 2; ++k) {
    double want = 0;
    for (std::size_t j = 0; j < 5; ++j) want += (rows[7][j] - m.mean[j]) * m.components[k][j];
    CHECK(p[k] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("PCA rejects degenerate input") {
  const Rows same(5, std::vector<double>{1, 2, 3});
  CHECK_THROWS_AS(fit_pca(same), ValidationError);
  const Rows two(2, std::vector<double>{1, 2});
  CHECK_THROWS_AS(fit_pca(two), ValidationError);
}

TEST_CASE("LDA separates along the class axis") {
  auto a = cloud(300, 4, 5, {-3, 0, 0, 0}), b = cloud(300, 4, 6, {3, 0, 0, 0});
  Rows rows = a;
  rows.insert(rows.end(), b.begin(), b.end());
  std::vector<int> labels(300, 0);
  labels.resize(600, 1);
  const auto m = fit_lda(rows, labels);
  CHECK(std::fabs(m.directions[0][0]) > 0.99);
}

TEST_CASE("LDA direction matches the Fisher closed form") {
  auto a = cloud(50, 2, 7, {0, 0}), b = cloud(60, 2, 8, {1.5, 0.7});
  // Correlated within-class scatter so the answer is not just the mean gap.
  for (auto* rs : {&a, &b})
    for (auto& r : *rs) r[1] += 0.8 * r[0];
  Rows rows = a;
  rows.insert(rows.end(), b.begin(), b.end());
  std::vector<int> labels(50, 1);
  labels.resize(110, 2);
  const auto m = fit_lda(rows, labels);

  double mu[2][2] = {};
  for (const auto& r : a) for (int j = 0; j < 2; ++j) mu[0][j] += r[j] / 50;
  for (const auto& r : b) for (int j = 0; j < 2; ++j) mu[1][j] += r[j] / 60;
  double sw[2][2] = {};
  for (int g = 0; g < 2; ++g)
    for (const auto& r : g == 0 ? a : b)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) sw[i][j] += (r[i] - mu[g][i]) * (r[j] - mu[g][j]);
  sw[0][0] += m.ridge;
  sw[1][1] += m.ridge;
  const double det = sw[0][0] * sw[1][1] - sw[0][1] * sw[1][0];
  const double g0 = mu[0][0] - mu[1][0], g1 = mu[0][1] - mu[1][1];
  std::vector<double> w{(sw[1][1] * g0 - sw[0][1] * g1) / det, (-sw[1][0] * g0 + sw[0][0] * g1) / det};
  CHECK(std::fabs(std::fabs(cosine(w, m.directions[0])) - 1.0) < 1e-6);
}

TEST_CASE("LDA on identical class distributions carries no separation") {
  const auto base = cloud(200, 3, 9);
  Rows rows = base;
  rows.insert(rows.end(), base.begin(), base.end());
  std::vector<int> labels(200, 0);
  labels.resize(400, 1);
  const auto m = fit_lda(rows, labels);
  // Class means coincide, so their projections do too.
  std::vector<double> m0(3, 0.0), m1(3, 0.0);
  for (std::size_t i = 0; i < 200; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      m0[j] += rows[i][j] / 200;
      m1[j] += rows[200 + i][j] / 200;
    }
  const auto p0 = m.transform(m0), p1 = m.transform(m1);
  CHECK((p0[0] - p1[0]) * (p0[0] - p1[0]) < 1e-6);
  CHECK_THROWS_AS(fit_lda(base, std::vector<int>(200, 0)), ValidationError);
}

TEST_CASE("radius votes") {
  Rows rows{{0, 0}, {0.1, 0}, {10, 10}, {10, 9.9}, {5, 5}};
  std::vector<int> labels{3, 3, 1, 1, 0};
  const auto index = build_rnn_index(rows, labels, 4, 0.1);
  // Normalized space is [0,1]^2; the first two points are 0.01 apart.
  const auto v = rnn_votes(rows[0], index);
  CHECK(v[3] == 1.0);
  const auto empty = rnn_votes(std::vector<double>{2.5, 7.5}, index);
  for (double x : empty) CHECK(x == 0.25);
  CHECK_THROWS_AS(rnn_votes(std::vector<double>{1, 2, 3}, index), ValidationError);
}

TEST_CASE("radius votes equal a linear scan") {
  const auto rows = cloud(300, 6, 10);
  std::vector<int> labels;
  Rng rng(11);
  for (std::size_t i = 0; i < rows.size(); ++i) labels.push_back(static_cast<int>(rng.below(4)));
  const auto index = build_rnn_index(rows, labels, 4, 0.45);
  const auto queries = cloud(50, 6, 12);
  for (const auto& q : queries) {
    const auto got = rnn_votes(q, index);
    const auto nq = index.normalizer.apply(q);
    std::vector<double> counts(4, 0.0);
    double total = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto nr = index.normalizer.apply(rows[i]);
      double s = 0;
      for (std::size_t j = 0; j < 6; ++j) s += (nq[j] - nr[j]) * (nq[j] - nr[j]);
      if (std::sqrt(s) <= 0.45) {
        counts[labels[i]] += 1;
        total += 1;
      }
    }
    double sum = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(got[k] == (total == 0 ? 0.25 : counts[k] / total));
      sum += got[k];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("appending embeddings and fitting on Train rows only") {
  auto rows = cloud(120, 5, 20);
  std::vector<int> labels;
  std::vector<Split> split;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    labels.push_back(static_cast<int>(i % 12));
    split.push_back(i % 3 == 0 ? Split::Test : Split::Train);
    rows[i][0] += static_cast<double>(i % 12);
  }
  const auto table = table_from(rows, labels, split);
  FeatureToggles all;
  all.pca = all.lda = all.rnn_votes = true;
  const auto models = fit_embeddings(table, all);
  const auto out = append_embeddings(table, models);
  CHECK(out.dim() == table.dim() + 16);
  CHECK(out.layout->index_of("rnn.p_11").has_value());

  FeatureToggles none;
  const auto same = append_embeddings(table, fit_embeddings(table, none));
  CHECK(same.dim() == table.dim());

  // Scrambling Test rows must not change the fitted models.
  auto scrambled = table;
  Rng rng(21);
  for (std::size_t i : scrambled.indices(Split::Test))
    for (auto& x : scrambled.rows[i].values) x = rng.normal(100, 50);
  const auto again = fit_embeddings(scrambled, all);
  CHECK(again.pca->components == models.pca->components);
  CHECK(again.lda->directions == models.lda->directions);
  CHECK(again.rnn->reference == models.rnn->reference);

  const auto dir = testing_support::scratch("embed");
  save_embeddings(models, dir / "m.txt");
  const auto back = load_embeddings(dir / "m.txt");
  CHECK(back.pca->components == models.pca->components);
  CHECK(back.lda->directions == models.lda->directions);
  CHECK(back.rnn->labels == models.rnn->labels);
  CHECK(back.rnn_source_rows == models.rnn_source_rows);
  const auto out2 = append_embeddings(table, back);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out2.rows[i].values == out.rows[i].values);
}
