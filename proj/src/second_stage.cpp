#include "afv/second_stage.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "afv/error.hpp"
#include "afv/text_format.hpp"

namespace afv {

namespace {

// Per-layer activations retained for backprop.
struct Cache {
  std::vector<Matrix> inputs;  // input to layer l (after relu+dropout for l>0)
  std::vector<Matrix> pre;     // pre-activation of hidden layers
  std::vector<Matrix> masks;   // dropout scale per hidden unit (0 or 1/(1-p))
  Matrix probs;
};

void affine(const Matrix& a, const Matrix& w, const std::vector<double>& b, Matrix& z) {
  const std::size_t n = a.rows(), in = w.rows(), out = w.cols();
  z = Matrix(n, out);
  const double* wp = w.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* zi = z.row(i).data();
    std::copy(b.begin(), b.end(), zi);
    const double* ai = a.row(i).data();
    for (std::size_t k = 0; k < in; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* wk = wp + k * out;
      for (std::size_t o = 0; o < out; ++o) zi[o] += aik * wk[o];
    }
  }
}

void softmax_rows(Matrix& z) {
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto r = z.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double sum = 0.0;
    for (auto& v : r) sum += (v = std::exp(v - mx));
    for (auto& v : r) v /= sum;
  }
}

Matrix run_forward(const SecondStageModel& m, const Matrix& x, bool train_mode, Rng* rng, Cache* cache) {
  require(x.cols() == m.input_dim(), "feature dimension " + std::to_string(x.cols()) +
                                         " does not match model input " + std::to_string(m.input_dim()));
  if (train_mode) require(rng != nullptr, "train-mode forward needs an rng");
  Matrix a = x;
  const double keep = 1.0 - m.dropout_rate;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    Matrix z;
    affine(a, m.weights[l], m.biases[l], z);
    if (cache) cache->inputs.push_back(std::move(a));
    if (l + 1 == m.num_layers()) {
      softmax_rows(z);
      return z;
    }
    if (cache) cache->pre.push_back(z);
    for (auto& v : z.data()) v = std::max(v, 0.0);
    if (train_mode && m.dropout_rate > 0.0) {
      Matrix mask(z.rows(), z.cols());
      for (std::size_t k = 0; k < z.data().size(); ++k) {
        mask.data()[k] = rng->uniform() < keep ? 1.0 / keep : 0.0;
        z.data()[k] *= mask.data()[k];
      }
      if (cache) cache->masks.push_back(std::move(mask));
    } else if (cache) {
      cache->masks.emplace_back(z.rows(), z.cols(), 1.0);
    }
    a = std::move(z);
  }
  throw ValidationError("model has no layers");
}

double cross_entropy(const Matrix& probs, std::span<const int> labels) {
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i)
    loss -= std::log(std::max(probs(i, static_cast<std::size_t>(labels[i])), 1e-300));
  return loss / static_cast<double>(probs.rows());
}

void check_labels(std::span<const int> labels, std::size_t n, std::size_t k) {
  require(labels.size() == n, "label count does not match row count");
  for (int y : labels) require(y >= 0 && static_cast<std::size_t>(y) < k, "label out of range");
}

}  // namespace

void TrainConfig::validate() const {
  require(batch_size >= 1, "batch size must be >= 1");
  require(num_epochs >= 1, "epochs must be >= 1");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning rate must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0,1)");
}

std::size_t SecondStageModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].data().size() + biases[l].size();
  return n;
}

std::vector<double*> SecondStageModel::parameters() {
  std::vector<double*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (auto& w : weights[l].data()) out.push_back(&w);
    for (auto& b : biases[l]) out.push_back(&b);
  }
  return out;
}

std::vector<double> Gradients::flat() const {
  std::vector<double> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.insert(out.end(), weights[l].data().begin(), weights[l].data().end());
    out.insert(out.end(), biases[l].begin(), biases[l].end());
  }
  return out;
}

SecondStageModel init_model(std::size_t d_in, std::size_t num_classes, std::uint64_t seed,
                            const ArchitectureConfig& arch) {
  require(d_in >= 1, "input dimension must be >= 1");
  require(num_classes >= 2, "need >=2 classes");
  require(arch.dropout_rate >= 0.0 && arch.dropout_rate < 1.0, "dropout rate must lie in [0,1)");
  SecondStageModel m;
  m.dims.push_back(d_in);
  for (std::size_t h : arch.hidden) {
    require(h >= 1, "hidden layer width must be >= 1");
    m.dims.push_back(h);
  }
  m.dims.push_back(num_classes);
  m.dropout_rate = arch.dropout_rate;
  m.seed = seed;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < m.dims.size(); ++l) {
    const std::size_t in = m.dims[l], out = m.dims[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Matrix w(in, out);
    for (auto& v : w.data()) v = rng.uniform(-limit, limit);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(out, 0.0);
  }
  return m;
}

Matrix forward(const SecondStageModel& model, const Matrix& x, bool train_mode, Rng* rng) {
  return run_forward(model, x, train_mode, rng, nullptr);
}

double loss_and_gradients(const SecondStageModel& m, const Matrix& x, std::span<const int> labels,
                          Gradients* grads, bool train_mode, Rng* rng) {
  check_labels(labels, x.rows(), m.num_classes());
  Cache cache;
  const Matrix probs = run_forward(m, x, train_mode, rng, grads ? &cache : nullptr);
  const double loss = cross_entropy(probs, labels);
  if (!grads) return loss;

  const std::size_t n = x.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix delta = probs;  // dL/dz for the output layer
  for (std::size_t i = 0; i < n; ++i) {
    delta(i, static_cast<std::size_t>(labels[i])) -= 1.0;
    for (auto& v : delta.row(i)) v *= inv_n;
  }
  grads->weights.assign(m.num_layers(), Matrix());
  grads->biases.assign(m.num_layers(), {});
  for (std::size_t l = m.num_layers(); l-- > 0;) {
    const Matrix& a = cache.inputs[l];
    const Matrix& w = m.weights[l];
    const std::size_t in = w.rows(), out = w.cols();
    Matrix dw(in, out);
    std::vector<double> db(out, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* di = delta.row(i).data();
      for (std::size_t o = 0; o < out; ++o) db[o] += di[o];
      const double* ai = a.row(i).data();
      for (std::size_t k = 0; k < in; ++k) {
        const double aik = ai[k];
        if (aik == 0.0) continue;
        double* dwk = dw.row(k).data();
        for (std::size_t o = 0; o < out; ++o) dwk[o] += aik * di[o];
      }
    }
    grads->weights[l] = std::move(dw);
    grads->biases[l] = std::move(db);
    if (l == 0) break;
    Matrix prev(n, in);
    const Matrix& pre = cache.pre[l - 1];
    const Matrix& mask = cache.masks[l - 1];
    for (std::size_t i = 0; i < n; ++i) {
      const double* di = delta.row(i).data();
      for (std::size_t k = 0; k < in; ++k) {
        if (pre(i, k) <= 0.0 || mask(i, k) == 0.0) continue;
        const double* wk = w.row(k).data();
        double s = 0.0;
        for (std::size_t o = 0; o < out; ++o) s += wk[o] * di[o];
        prev(i, k) = s * mask(i, k);
      }
    }
    delta = std::move(prev);
  }
  return loss;
}

TrainResult train(SecondStageModel model, const Matrix& x, std::span<const int> labels,
                  const TrainConfig& config) {
  config.validate();
  require(x.rows() > 0, "no training rows");
  check_labels(labels, x.rows(), model.num_classes());
  require(x.cols() == model.input_dim(), "feature dimension does not match model input");

  const std::size_t n = x.rows(), d = x.cols();
  auto params = model.parameters();
  std::vector<double> m1(params.size(), 0.0), m2(params.size(), 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::uint64_t step = 0;

  Rng rng(derive_seed(config.seed, 0x7EA1));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;

  for (int epoch = 1; epoch <= config.num_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0, batch = 0; start < n; start += config.batch_size, ++batch) {
      const std::size_t end = std::min(n, start + config.batch_size);
      Matrix xb(end - start, d);
      std::vector<int> yb;
      for (std::size_t i = start; i < end; ++i) {
        std::copy(x.row(order[i]).begin(), x.row(order[i]).end(), xb.row(i - start).begin());
        yb.push_back(labels[order[i]]);
      }
      Gradients g;
      const double loss = loss_and_gradients(model, xb, yb, &g, true, &rng);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << " batch " << batch
            << " (lr=" << config.learning_rate << ", batch_size=" << config.batch_size << ")";
        throw ValidationError(msg.str());
      }
      const auto flat = g.flat();
      ++step;
      if (config.sgd_mode) {
        for (std::size_t p = 0; p < params.size(); ++p) {
          m1[p] = config.momentum * m1[p] + flat[p];
          *params[p] -= config.learning_rate * m1[p];
        }
      } else {
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t p = 0; p < params.size(); ++p) {
          m1[p] = beta1 * m1[p] + (1.0 - beta1) * flat[p];
          m2[p] = beta2 * m2[p] + (1.0 - beta2) * flat[p] * flat[p];
          *params[p] -= config.learning_rate * (m1[p] / c1) / (std::sqrt(m2[p] / c2) + adam_eps);
        }
      }
    }
    const Matrix probs = forward(model, x);
    EpochStats s;
    s.epoch = epoch;
    s.loss = cross_entropy(probs, labels);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = probs.row(i);
      correct += static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()) == labels[i];
    }
    s.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    if (!std::isfinite(s.loss))
      throw ValidationError("non-finite training loss after epoch " + std::to_string(epoch));
    result.trace.push_back(s);
  }
  result.model = std::move(model);
  return result;
}

TrainResult train(SecondStageModel model, const AfvTable& table, const TrainConfig& config) {
  const auto rows = table.indices(Split::Train);
  require(!rows.empty(), "table has no Train rows");
  return train(std::move(model), feature_matrix(table, rows), label_vector(table, rows), config);
}

namespace {

std::vector<bool> relu_pattern(const SecondStageModel& model, const Matrix& x) {
  Cache cache;
  run_forward(model, x, false, nullptr, &cache);
  std::vector<bool> on;
  for (const auto& z : cache.pre)
    for (double v : z.data()) on.push_back(v > 0.0);
  return on;
}

}  // namespace

GradCheckReport grad_check_report(const SecondStageModel& model, const Matrix& x, std::span<const int> labels,
                                  std::size_t n_params, std::uint64_t seed, double h) {
  Gradients g;
  loss_and_gradients(model, x, labels, &g);
  const auto analytic = g.flat();
  SecondStageModel probe = model;
  auto params = probe.parameters();
  Rng rng(seed);
  GradCheckReport report;
  const std::size_t max_draws = 50 * n_params + 100;
  for (std::size_t draw = 0; report.checked < n_params && draw < max_draws; ++draw) {
    const auto p = static_cast<std::size_t>(rng.below(params.size()));
    const double saved = *params[p];
    *params[p] = saved + h;
    const double up = loss_and_gradients(probe, x, labels, nullptr);
    const auto pattern_up = relu_pattern(probe, x);
    *params[p] = saved - h;
    const double down = loss_and_gradients(probe, x, labels, nullptr);
    const auto pattern_down = relu_pattern(probe, x);
    *params[p] = saved;
    if (pattern_up != pattern_down) {
      ++report.skipped_at_kinks;
      continue;
    }
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::fabs(analytic[p] - numeric) /
                       std::max(std::fabs(analytic[p]) + std::fabs(numeric), 1e-8);
    report.max_rel_error = std::max(report.max_rel_error, err);
    ++report.checked;
  }
  require(report.checked == n_params, "grad_check: too many draws straddle ReLU kinks");
  return report;
}

double grad_check(const SecondStageModel& model, const Matrix& x, std::span<const int> labels,
                  std::size_t n_params, std::uint64_t seed, double h) {
  return grad_check_report(model, x, labels, n_params, seed, h).max_rel_error;
}

std::vector<int> predict(const SecondStageModel& model, const Matrix& x) {
  const Matrix probs = forward(model, x);
  std::vector<int> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto r = probs.row(i);
    // max_element returns the first maximum, i.e. the lowest label on ties.
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

Verdict detect(int label) { return label == 0 ? Verdict::Clean : Verdict::Attack; }

std::vector<Verdict> detect(std::span<const int> labels) {
  std::vector<Verdict> out;
  out.reserve(labels.size());
  for (int y : labels) out.push_back(detect(y));
  return out;
}

Matrix feature_matrix(const AfvTable& table, std::span<const std::size_t> rows) {
  Matrix x(rows.size(), table.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = table.rows[rows[i]].values;
    std::copy(v.begin(), v.end(), x.row(i).begin());
  }
  return x;
}

std::vector<int> label_vector(const AfvTable& table, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t i : rows) out.push_back(table.rows[i].label);
  return out;
}

namespace {

constexpr char kCkptMagic[4] = {'A', 'F', 'V', 'M'};
constexpr std::uint16_t kCkptVersion = 1;

template <class T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xFF));
    u = static_cast<U>(u >> 8);
  }
}

class LeReader {
 public:
  explicit LeReader(const std::string& bytes) : bytes_(bytes) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw FormatError("checkpoint truncated");
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      u |= static_cast<U>(U{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i));
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const SecondStageModel& m, const std::filesystem::path& path) {
  std::string b(kCkptMagic, 4);
  put_le<std::uint16_t>(b, kCkptVersion);
  put_le<std::uint32_t>(b, static_cast<std::uint32_t>(m.dims.size()));
  for (auto d : m.dims) put_le<std::uint32_t>(b, static_cast<std::uint32_t>(d));
  put_le<std::uint32_t>(b, std::bit_cast<std::uint32_t>(static_cast<float>(m.dropout_rate)));
  put_le<std::uint64_t>(b, m.seed);
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    for (double w : m.weights[l].data())
      put_le<std::uint32_t>(b, std::bit_cast<std::uint32_t>(static_cast<float>(w)));
    for (double v : m.biases[l]) put_le<std::uint32_t>(b, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  write_text_file(path, b);
}

SecondStageModel load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCkptMagic, 4) != 0)
    throw FormatError("bad checkpoint magic");
  LeReader r(bytes);
  for (int i = 0; i < 4; ++i) r.get<std::uint8_t>();
  if (r.get<std::uint16_t>() != kCkptVersion) throw FormatError("unsupported checkpoint version");
  SecondStageModel m;
  const auto n_dims = r.get<std::uint32_t>();
  if (n_dims < 2 || n_dims > 64) throw FormatError("checkpoint has an invalid layer count");
  for (std::uint32_t i = 0; i < n_dims; ++i) m.dims.push_back(r.get<std::uint32_t>());
  m.dropout_rate = r.get_f32();
  m.seed = r.get<std::uint64_t>();
  for (std::size_t l = 0; l + 1 < m.dims.size(); ++l) {
    Matrix w(m.dims[l], m.dims[l + 1]);
    for (auto& v : w.data()) v = r.get_f32();
    std::vector<double> bias(m.dims[l + 1]);
    for (auto& v : bias) v = r.get_f32();
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(bias));
  }
  if (!r.done()) throw FormatError("trailing bytes in checkpoint");
  return m;
}

void write_loss_trace(const std::vector<EpochStats>& trace, const std::filesystem::path& path) {
  std::string out = "epoch,loss,accuracy\n";
  for (const auto& s : trace)
    out += std::to_string(s.epoch) + "," + format_double(s.loss) + "," + format_double(s.accuracy) + "\n";
  write_text_file(path, out);
}

}  // namespace afv
