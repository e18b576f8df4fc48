#pragma once

// Second-stage classifier: fully connected network with rectifier hidden
// layers, inverted dropout after each hidden layer, and a softmax output over
// K classes (0 = clean). Detection is derived from the argmax label.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "afv/afv_table.hpp"
#include "afv/linalg.hpp"
#include "afv/random.hpp"

namespace afv {

struct TrainConfig {
  std::size_t batch_size = 2500;
  bool sgd_mode = false;  // false: Adam
  double learning_rate = 1.0;
  int num_epochs = 20;
  std::uint64_t seed = 0;
  double momentum = 0.0;  // SGD only

  void validate() const;
};

struct ArchitectureConfig {
  std::vector<std::size_t> hidden = {256, 128};
  double dropout_rate = 0.3;
};

struct SecondStageModel {
  std::vector<std::size_t> dims;      // d_in, hidden..., K
  std::vector<Matrix> weights;        // layer l: dims[l] x dims[l+1] (in x out)
  std::vector<std::vector<double>> biases;
  double dropout_rate = 0.3;
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return dims.front(); }
  std::size_t num_classes() const { return dims.back(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t parameter_count() const;
  // Parameters in a fixed flat order: W0, b0, W1, b1, ...
  std::vector<double*> parameters();
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  std::vector<double> flat() const;
};

SecondStageModel init_model(std::size_t d_in, std::size_t num_classes, std::uint64_t seed,
                            const ArchitectureConfig& arch = {});

// Class probabilities, one row per input row. Dropout only when train_mode,
// in which case rng must be supplied.
Matrix forward(const SecondStageModel& model, const Matrix& x, bool train_mode = false,
               Rng* rng = nullptr);

// Mean cross-entropy; fills grads when non-null.
double loss_and_gradients(const SecondStageModel& model, const Matrix& x, std::span<const int> labels,
                          Gradients* grads, bool train_mode = false, Rng* rng = nullptr);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;      // eval-mode loss over the training rows after the epoch
  double accuracy = 0.0;  // eval-mode accuracy over the training rows
};

struct TrainResult {
  SecondStageModel model;
  std::vector<EpochStats> trace;
};

TrainResult train(SecondStageModel model, const Matrix& x, std::span<const int> labels,
                  const TrainConfig& config);
// Trains on the rows tagged Train.
TrainResult train(SecondStageModel model, const AfvTable& table, const TrainConfig& config);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_at_kinks = 0;
};

// Relative error |a-n| / max(|a|+|n|, 1e-8) between backprop and central
// differences over n_params randomly chosen parameters (dropout off). A draw
// whose +-h step flips any ReLU on or off is replaced by a fresh draw, since
// the difference quotient there spans a kink.
GradCheckReport grad_check_report(const SecondStageModel& model, const Matrix& x, std::span<const int> labels,
                                  std::size_t n_params = 200, std::uint64_t seed = 0, double h = 1e-4);
double grad_check(const SecondStageModel& model, const Matrix& x, std::span<const int> labels,
                  std::size_t n_params = 200, std::uint64_t seed = 0, double h = 1e-4);

// Argmax with ties resolved toward the lowest label.
std::vector<int> predict(const SecondStageModel& model, const Matrix& x);

enum class Verdict { Clean, Attack };
Verdict detect(int label);
std::vector<Verdict> detect(std::span<const int> labels);

Matrix feature_matrix(const AfvTable& table, std::span<const std::size_t> rows);
std::vector<int> label_vector(const AfvTable& table, std::span<const std::size_t> rows);

// Binary checkpoint: "AFVM", u16 version, u32 n_dims, u32 dims..., f32
// dropout, u64 seed, then per layer W (row-major) and b as f32, all LE.
void save_checkpoint(const SecondStageModel& model, const std::filesystem::path& path);
SecondStageModel load_checkpoint(const std::filesystem::path& path);

void write_loss_trace(const std::vector<EpochStats>& trace, const std::filesystem::path& path);

}  // namespace afv
