#pragma once

// Optional AFV-space features appended after core extraction: 2-d PCA
// coordinates, 2-d LDA coordinates, and radius-nearest-neighbor class votes.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "afv/afv_extract.hpp"
#include "afv/afv_table.hpp"
#include "afv/dataset_ops.hpp"
#include "afv/linalg.hpp"

namespace afv {

struct PcaModel {
  std::vector<double> mean;
  std::vector<std::vector<double>> components;  // 2 orthonormal rows of length d
  std::vector<double> explained_variance;       // descending

  std::vector<double> transform(std::span<const double> x) const;
};

struct LdaModel {
  std::vector<double> mean;
  std::vector<std::vector<double>> directions;  // 2 unit-norm rows of length d
  double ridge = 0.0;

  std::vector<double> transform(std::span<const double> x) const;
};

struct RnnIndex {
  Normalizer normalizer;
  Matrix reference;  // normalized rows
  std::vector<int> labels;
  int num_classes = 0;
  double radius = 3.0;
};

PcaModel fit_pca(const std::vector<std::vector<double>>& rows);

// Top-2 eigenvectors of (S_w + lambda I)^-1 S_b, lambda = 1e-6 trace(S_w)/d.
LdaModel fit_lda(const std::vector<std::vector<double>>& rows, std::span<const int> labels);

// Uses at most max_rows training rows (seeded subsample).
RnnIndex build_rnn_index(const std::vector<std::vector<double>>& rows, std::span<const int> labels,
                         int num_classes, double radius = 3.0, std::size_t max_rows = 5000,
                         std::uint64_t seed = 0);

// Class-probability vector from the r-ball around the query (raw, not yet
// normalized). Empty ball gives the uniform vector. exclude_row skips one
// reference row (leave-one-out for queries that are themselves references).
std::vector<double> rnn_votes(std::span<const double> query, const RnnIndex& index,
                              std::optional<std::size_t> exclude_row = std::nullopt);

struct EmbeddingModels {
  std::optional<PcaModel> pca;
  std::optional<LdaModel> lda;
  std::optional<RnnIndex> rnn;
  // Train-row positions of the RNN references, for leave-one-out votes.
  std::vector<std::size_t> rnn_source_rows;
};

struct EmbeddingConfig {
  double rnn_radius = 3.0;
  std::size_t rnn_max_rows = 5000;
  std::uint64_t seed = 0;
};

// Fits every enabled model on the Train rows of the table only.
EmbeddingModels fit_embeddings(const AfvTable& table, const FeatureToggles& toggles,
                               const EmbeddingConfig& config = {});

// Appends 2 PCA coords, 2 LDA coords, K vote probabilities per enabled model.
AfvTable append_embeddings(const AfvTable& table, const EmbeddingModels& models);

void save_embeddings(const EmbeddingModels& models, const std::filesystem::path& path);
EmbeddingModels load_embeddings(const std::filesystem::path& path);

}  // namespace afv
