#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arhuaco/error.hpp"
#include "arhuaco/features.hpp"
#include "arhuaco/ingest.hpp"
#include "arhuaco/metrics_types.hpp"
#include "arhuaco/nn.hpp"
#include "arhuaco/rng.hpp"
#include "arhuaco/serialize.hpp"
#include "arhuaco/train_util.hpp"

namespace arhuaco {

struct CnnConfig {
  WindowSpec window_spec = syscall_window_spec();
  std::size_t embedding_dim = 20;            // k
  std::vector<std::size_t> filter_sizes = {3, 4, 5};
  std::size_t total_filters = 20;
  bool per_size_filters = false;             // alternative reading of Table 3
  std::size_t dense_units = 64;
  double dropout_rate = 0.5;
  OptimizerConfig optimizer = table3_optimizer();
  double threshold = 0.5;
  bool fine_tune_embeddings = true;

  /// Filters allotted to filter_sizes[i]: the total is spread across sizes,
  /// earlier sizes absorbing the remainder (20 over {3,4,5} -> 7/7/6).
  std::size_t filters_for_size(std::size_t i) const {
    if (per_size_filters) return total_filters;
    const std::size_t base = total_filters / filter_sizes.size();
    const std::size_t rem = total_filters % filter_sizes.size();
    return base + (i < rem ? 1 : 0);
  }

  std::size_t pooled_size() const {
    std::size_t s = 0;
    for (std::size_t i = 0; i < filter_sizes.size(); ++i) s += filters_for_size(i);
    return s;
  }

  void validate() const {
    window_spec.validate();
    if (filter_sizes.empty()) raise(Errc::config_error, "need at least one filter size");
    for (std::size_t h : filter_sizes)
      if (h < 1 || h > window_spec.total_tokens())
        raise(Errc::kernel_too_large, "filter size " + std::to_string(h) + " exceeds window");
    if (!per_size_filters && total_filters < filter_sizes.size())
      raise(Errc::config_error, "total_filters must cover every filter size");
    if (threshold <= 0.0 || threshold >= 1.0) raise(Errc::config_error, "threshold must be in (0,1)");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) raise(Errc::invalid_rate, "dropout rate in [0,1)");
    if (dense_units < 1) raise(Errc::config_error, "dense_units must be >= 1");
    optimizer.validate();
  }
};

/// Table 3 profiles.
inline CnnConfig syscall_cnn_config() { return CnnConfig{}; }

inline CnnConfig network_cnn_config() {
  CnnConfig c;
  c.window_spec = network_window_spec();
  c.embedding_dim = 10;
  c.filter_sizes = {2, 3};
  c.total_filters = 3;
  return c;
}

/// Eq. 8 feature map: z_i = relu(G . a_{i:i+h-1} + b) for every window
/// position, z in R^{n-h+1}. Summation runs row-major over the h x k patch;
/// the oracle tests rely on that exact order.
inline Vector conv_feature_map(const Matrix& input, std::span<const double> kernel, double bias,
                               std::size_t h) {
  const std::size_t n = input.rows;
  const std::size_t k = input.cols;
  if (h < 1 || h > n) raise(Errc::kernel_too_large, "kernel spans more tokens than the window");
  if (kernel.size() != h * k) raise(Errc::shape_mismatch, "kernel is not h*k");
  Vector z(n - h + 1);
  for (std::size_t i = 0; i + h <= n; ++i) {
    double acc = 0.0;
    const double* patch = input.row(i);
    for (std::size_t j = 0; j < h * k; ++j) acc += kernel[j] * patch[j];
    z[i] = relu(acc + bias);
  }
  return z;
}

struct PoolResult {
  double value = 0.0;
  std::size_t argmax = 0;
};

/// Max-over-time pooling; ties resolve to the first index.
inline PoolResult max_over_time_pool(std::span<const double> z) {
  if (z.empty()) raise(Errc::empty_feature_map, "cannot pool an empty feature map");
  PoolResult r{z[0], 0};
  for (std::size_t i = 1; i < z.size(); ++i)
    if (z[i] > r.value) r = {z[i], i};
  return r;
}

struct ConvBank {
  std::size_t h = 0;
  Matrix w;  // filters x (h*k)
  Vector b;  // filters
};

class CnnModel {
 public:
  CnnModel() = default;

  /// Builds a model around word2vec-initialized embeddings. Weights are
  /// Glorot-uniform from the seeded generator, biases zero.
  CnnModel(CnnConfig config, EmbeddingTable embedding, std::uint64_t seed)
      : config_(std::move(config)), embedding_(std::move(embedding)) {
    config_.validate();
    if (embedding_.dim != config_.embedding_dim)
      raise(Errc::spec_mismatch, "embedding dim disagrees with config");
    Rng rng(seed);
    const std::size_t k = config_.embedding_dim;
    for (std::size_t i = 0; i < config_.filter_sizes.size(); ++i) {
      ConvBank bank;
      bank.h = config_.filter_sizes[i];
      bank.w = Matrix(config_.filters_for_size(i), bank.h * k);
      bank.b.assign(bank.w.rows, 0.0);
      glorot_init(bank.w.a, bank.h * k, 1, rng);
      banks_.push_back(std::move(bank));
    }
    const std::size_t pooled = config_.pooled_size();
    dense_w_ = Matrix(config_.dense_units, pooled);
    glorot_init(dense_w_.a, pooled, config_.dense_units, rng);
    dense_b_.assign(config_.dense_units, 0.0);
    out_w_.assign(config_.dense_units, 0.0);
    glorot_init(out_w_, config_.dense_units, 1, rng);
    out_b_ = 0.0;
  }

  const CnnConfig& config() const { return config_; }
  const EmbeddingTable& embedding() const { return embedding_; }
  const std::vector<ConvBank>& banks() const { return banks_; }

  void set_threshold(double t) {
    if (t <= 0.0 || t >= 1.0) raise(Errc::config_error, "threshold must be in (0,1)");
    config_.threshold = t;
  }

  std::vector<std::size_t> token_ids(const TokenSequence& seq) const {
    if (seq.spec != config_.window_spec)
      raise(Errc::spec_mismatch, "window spec does not match the model");
    return embedding_.vocab.ids(seq);
  }

  struct Forward {
    Matrix input;                     // n x k
    Vector pooled;                    // per filter, post pooling
    std::vector<std::size_t> argmax;  // per filter
    Vector pre_at_max;                // conv preactivation at the argmax
    Vector dropout;                   // empty outside training
    Vector dense_pre;
    Vector dense_act;
    double out_pre = 0.0;
    double prob = 0.5;
  };

  /// Full forward pass. `rng` is consumed only when training (dropout).
  double forward(std::span<const std::size_t> ids, bool training, Rng* rng, Forward& f) const {
    const std::size_t n = config_.window_spec.total_tokens();
    const std::size_t k = config_.embedding_dim;
    if (ids.size() != n) raise(Errc::spec_mismatch, "token count does not match window spec");
    f.input = embed_ids(ids, embedding_);
    const std::size_t pooled_n = config_.pooled_size();
    f.pooled.assign(pooled_n, 0.0);
    f.argmax.assign(pooled_n, 0);
    f.pre_at_max.assign(pooled_n, 0.0);

    std::size_t fi = 0;
    for (const auto& bank : banks_) {
      const std::size_t positions = n - bank.h + 1;
      for (std::size_t j = 0; j < bank.w.rows; ++j, ++fi) {
        const double* kernel = bank.w.row(j);
        double best_pre = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < positions; ++i) {
          double acc = 0.0;
          const double* patch = f.input.row(i);
          for (std::size_t t = 0; t < bank.h * k; ++t) acc += kernel[t] * patch[t];
          acc += bank.b[j];
          if (acc > best_pre) {
            best_pre = acc;
            best_i = i;
          }
        }
        f.argmax[fi] = best_i;
        f.pre_at_max[fi] = best_pre;
        f.pooled[fi] = relu(best_pre);
      }
    }

    if (training && config_.dropout_rate > 0.0) {
      if (!rng) raise(Errc::config_error, "training forward pass needs an rng for dropout");
      f.dropout = dropout_mask(pooled_n, config_.dropout_rate, *rng);
    } else {
      f.dropout.clear();
    }

    f.dense_pre.assign(config_.dense_units, 0.0);
    f.dense_act.assign(config_.dense_units, 0.0);
    for (std::size_t u = 0; u < config_.dense_units; ++u) {
      double acc = 0.0;
      const double* wrow = dense_w_.row(u);
      if (f.dropout.empty())
        for (std::size_t p = 0; p < pooled_n; ++p) acc += wrow[p] * f.pooled[p];
      else
        for (std::size_t p = 0; p < pooled_n; ++p) acc += wrow[p] * f.pooled[p] * f.dropout[p];
      f.dense_pre[u] = acc + dense_b_[u];
      f.dense_act[u] = relu(f.dense_pre[u]);
    }
    f.out_pre = dot(out_w_, f.dense_act) + out_b_;
    f.prob = sigmoid(f.out_pre);
    return f.prob;
  }

  double forward(const TokenSequence& seq, bool training = false, Rng* rng = nullptr) const {
    Forward f;
    auto ids = token_ids(seq);
    return forward(ids, training, rng, f);
  }

  Prediction predict(const TokenSequence& seq) const {
    const double p = forward(seq, false, nullptr);
    return {p >= config_.threshold ? Label::malicious : Label::normal, p};
  }

  struct Grads {
    std::vector<Matrix> bank_w;
    std::vector<Vector> bank_b;
    Matrix dense_w;
    Vector dense_b;
    Vector out_w;
    double out_b = 0.0;
    Matrix embedding;

    void init_like(const CnnModel& m) {
      bank_w.clear();
      bank_b.clear();
      for (const auto& bank : m.banks_) {
        bank_w.emplace_back(bank.w.rows, bank.w.cols);
        bank_b.emplace_back(bank.b.size(), 0.0);
      }
      dense_w = Matrix(m.dense_w_.rows, m.dense_w_.cols);
      dense_b.assign(m.dense_b_.size(), 0.0);
      out_w.assign(m.out_w_.size(), 0.0);
      out_b = 0.0;
      embedding = Matrix(m.embedding_.vectors.rows, m.embedding_.vectors.cols);
    }

    void zero() {
      for (auto& w : bank_w) w.zero();
      for (auto& b : bank_b) std::fill(b.begin(), b.end(), 0.0);
      dense_w.zero();
      std::fill(dense_b.begin(), dense_b.end(), 0.0);
      std::fill(out_w.begin(), out_w.end(), 0.0);
      out_b = 0.0;
      embedding.zero();
    }
  };

  /// Binary cross-entropy loss for one example.
  static double bce_loss(double prob, double y) {
    const double p = std::clamp(prob, 1e-12, 1.0 - 1e-12);
    return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }

  /// Accumulates gradients for one example, scaled by `scale` (1/batch).
  /// Pooling routes the gradient entirely to the argmax position.
  void backward(std::span<const std::size_t> ids, const Forward& f, double y, double scale,
                Grads& g) const {
    const std::size_t k = config_.embedding_dim;
    const std::size_t pooled_n = config_.pooled_size();
    const double dout = (f.prob - y) * scale;  // sigmoid + BCE

    for (std::size_t u = 0; u < config_.dense_units; ++u) g.out_w[u] += dout * f.dense_act[u];
    g.out_b += dout;

    Vector gpooled(pooled_n, 0.0);
    for (std::size_t u = 0; u < config_.dense_units; ++u) {
      if (f.dense_pre[u] <= 0.0) continue;
      const double gd = dout * out_w_[u];
      const double* wrow = dense_w_.row(u);
      double* gw = g.dense_w.row(u);
      if (f.dropout.empty()) {
        for (std::size_t p = 0; p < pooled_n; ++p) {
          gw[p] += gd * f.pooled[p];
          gpooled[p] += gd * wrow[p];
        }
      } else {
        for (std::size_t p = 0; p < pooled_n; ++p) {
          gw[p] += gd * f.pooled[p] * f.dropout[p];
          gpooled[p] += gd * wrow[p] * f.dropout[p];
        }
      }
      g.dense_b[u] += gd;
    }

    const bool tune = config_.fine_tune_embeddings;
    std::size_t fi = 0;
    for (std::size_t bi = 0; bi < banks_.size(); ++bi) {
      const auto& bank = banks_[bi];
      for (std::size_t j = 0; j < bank.w.rows; ++j, ++fi) {
        if (f.pre_at_max[fi] <= 0.0) continue;  // relu gate closed
        const double gz = gpooled[fi];
        if (gz == 0.0) continue;
        const std::size_t i0 = f.argmax[fi];
        const double* patch = f.input.row(i0);
        double* gw = g.bank_w[bi].row(j);
        for (std::size_t t = 0; t < bank.h * k; ++t) gw[t] += gz * patch[t];
        g.bank_b[bi][j] += gz;
        if (tune) {
          const double* kernel = bank.w.row(j);
          for (std::size_t r = 0; r < bank.h; ++r) {
            const std::size_t token = ids[i0 + r];
            if (token == Vocabulary::kPadIndex) continue;  // pad row stays frozen
            double* ge = g.embedding.row(token);
            for (std::size_t c = 0; c < k; ++c) ge[c] += gz * kernel[r * k + c];
          }
        }
      }
    }
  }

  struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    bool balanced_batches = true;  // oversample the minority class per epoch
  };

  struct TrainResult {
    Curve curve;
    double best_val_acc = 0.0;
    std::size_t best_epoch = 0;
  };

  TrainResult train(const std::vector<TokenSequence>& train_set,
                    const std::vector<TokenSequence>& val_set, const TrainConfig& tc);

  /// All trainable tensors in a stable order; embedding last, present only
  /// when fine-tuning.
  std::vector<std::pair<std::span<double>, std::span<double>>> tensor_refs(Grads& g) {
    std::vector<std::pair<std::span<double>, std::span<double>>> refs;
    for (std::size_t i = 0; i < banks_.size(); ++i) {
      refs.emplace_back(std::span<double>(banks_[i].w.a), std::span<double>(g.bank_w[i].a));
      refs.emplace_back(std::span<double>(banks_[i].b), std::span<double>(g.bank_b[i]));
    }
    refs.emplace_back(std::span<double>(dense_w_.a), std::span<double>(g.dense_w.a));
    refs.emplace_back(std::span<double>(dense_b_), std::span<double>(g.dense_b));
    refs.emplace_back(std::span<double>(out_w_), std::span<double>(g.out_w));
    refs.emplace_back(std::span<double>(&out_b_, 1), std::span<double>(&g.out_b, 1));
    if (config_.fine_tune_embeddings)
      refs.emplace_back(std::span<double>(embedding_.vectors.a), std::span<double>(g.embedding.a));
    return refs;
  }

  void save(const std::string& path) const {
    ByteWriter w;
    w.magic("ARHC");
    w.u64(kFormatVersion);
    write_config(w);
    embedding_.write_block(w);
    w.u64(banks_.size());
    for (const auto& bank : banks_) {
      w.u64(bank.h);
      w.u64(bank.w.rows);
      w.f64_array(bank.w.a);
      w.f64_array(bank.b);
    }
    w.u64(dense_w_.rows);
    w.f64_array(dense_w_.a);
    w.f64_array(dense_b_);
    w.f64_array(out_w_);
    w.f64(out_b_);
    w.finish_to_file(path);
  }

  static CnnModel load(const std::string& path) {
    auto [bytes, r] = open_checked(path, "ARHC");
    const std::uint64_t version = r.u64();
    if (version != kFormatVersion) raise(Errc::version_mismatch, "unsupported ARHC version");
    CnnModel m;
    m.config_ = read_config(r);
    m.embedding_ = EmbeddingTable::read_block(r);
    const std::uint64_t nbanks = r.u64();
    for (std::uint64_t i = 0; i < nbanks; ++i) {
      ConvBank bank;
      bank.h = r.u64();
      const std::uint64_t rows = r.u64();
      bank.w.a = r.f64_array();
      bank.w.rows = rows;
      bank.w.cols = rows ? bank.w.a.size() / rows : 0;
      bank.b = r.f64_array();
      m.banks_.push_back(std::move(bank));
    }
    const std::uint64_t dense_rows = r.u64();
    m.dense_w_.a = r.f64_array();
    m.dense_w_.rows = dense_rows;
    m.dense_w_.cols = dense_rows ? m.dense_w_.a.size() / dense_rows : 0;
    m.dense_b_ = r.f64_array();
    m.out_w_ = r.f64_array();
    m.out_b_ = r.f64();
    m.config_.validate();
    return m;
  }

  bool operator==(const CnnModel& o) const {
    if (!(embedding_.vocab == o.embedding_.vocab) || embedding_.vectors.a != o.embedding_.vectors.a)
      return false;
    if (banks_.size() != o.banks_.size()) return false;
    for (std::size_t i = 0; i < banks_.size(); ++i)
      if (banks_[i].w.a != o.banks_[i].w.a || banks_[i].b != o.banks_[i].b) return false;
    return dense_w_.a == o.dense_w_.a && dense_b_ == o.dense_b_ && out_w_ == o.out_w_ &&
           out_b_ == o.out_b_;
  }

 private:
  static constexpr std::uint64_t kFormatVersion = 1;

  void write_config(ByteWriter& w) const {
    w.u64(config_.window_spec.tokens_per_line);
    w.u64(config_.window_spec.lines);
    w.u64(config_.embedding_dim);
    w.u64(config_.filter_sizes.size());
    for (std::size_t h : config_.filter_sizes) w.u64(h);
    w.u64(config_.total_filters);
    w.u64(config_.per_size_filters ? 1 : 0);
    w.u64(config_.dense_units);
    w.f64(config_.dropout_rate);
    w.str(optim_kind_name(config_.optimizer.kind));
    w.f64(config_.optimizer.learning_rate);
    w.f64(config_.optimizer.momentum);
    w.f64(config_.optimizer.decay);
    w.f64(config_.optimizer.rho);
    w.f64(config_.optimizer.epsilon);
    w.f64(config_.threshold);
    w.u64(config_.fine_tune_embeddings ? 1 : 0);
  }

  static CnnConfig read_config(ByteReader& r) {
    CnnConfig c;
    c.window_spec.tokens_per_line = r.u64();
    c.window_spec.lines = r.u64();
    c.embedding_dim = r.u64();
    c.filter_sizes.resize(r.u64());
    for (auto& h : c.filter_sizes) h = r.u64();
    c.total_filters = r.u64();
    c.per_size_filters = r.u64() != 0;
    c.dense_units = r.u64();
    c.dropout_rate = r.f64();
    c.optimizer.kind = optim_kind_from_name(r.str());
    c.optimizer.learning_rate = r.f64();
    c.optimizer.momentum = r.f64();
    c.optimizer.decay = r.f64();
    c.optimizer.rho = r.f64();
    c.optimizer.epsilon = r.f64();
    c.threshold = r.f64();
    c.fine_tune_embeddings = r.u64() != 0;
    return c;
  }

  CnnConfig config_;
  EmbeddingTable embedding_;
  std::vector<ConvBank> banks_;
  Matrix dense_w_;
  Vector dense_b_;
  Vector out_w_;
  double out_b_ = 0.0;

  friend struct Grads;
};

inline CnnModel::TrainResult CnnModel::train(const std::vector<TokenSequence>& train_set,
                                             const std::vector<TokenSequence>& val_set,
                                             const TrainConfig& tc) {
  if (train_set.empty()) raise(Errc::empty_corpus, "empty training set");
  std::vector<std::vector<std::size_t>> ids;
  std::vector<Label> labels;
  ids.reserve(train_set.size());
  bool saw_normal = false, saw_malicious = false;
  for (const auto& seq : train_set) {
    if (!seq.label) raise(Errc::data_error, "unlabeled training window");
    ids.push_back(token_ids(seq));
    labels.push_back(*seq.label);
    (*seq.label == Label::malicious ? saw_malicious : saw_normal) = true;
  }
  if (!saw_normal || !saw_malicious)
    raise(Errc::single_class_dataset, "training data holds a single class");

  std::vector<std::vector<std::size_t>> val_ids;
  std::vector<Label> val_labels;
  for (const auto& seq : val_set) {
    if (!seq.label) raise(Errc::data_error, "unlabeled validation window");
    val_ids.push_back(token_ids(seq));
    val_labels.push_back(*seq.label);
  }

  Rng rng(tc.seed);
  Optimizer opt(config_.optimizer);
  Grads grads;
  grads.init_like(*this);
  Forward f;

  TrainResult result;
  CnnModel best = *this;
  double best_val = -1.0;
  std::size_t best_epoch = 0;

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    auto order = epoch_order(labels, tc.balanced_batches, rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tc.batch_size);
      grads.zero();
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t q = start; q < stop; ++q) {
        const std::size_t idx = order[q];
        const double y = labels[idx] == Label::malicious ? 1.0 : 0.0;
        const double p = forward(ids[idx], true, &rng, f);
        loss_sum += bce_loss(p, y);
        const bool pred_mal = p >= config_.threshold;
        if (pred_mal == (labels[idx] == Label::malicious)) ++correct;
        backward(ids[idx], f, y, scale, grads);
      }
      if (config_.fine_tune_embeddings)
        std::fill(grads.embedding.row(Vocabulary::kPadIndex),
                  grads.embedding.row(Vocabulary::kPadIndex) + config_.embedding_dim, 0.0);
      auto refs = tensor_refs(grads);
      for (std::size_t t = 0; t < refs.size(); ++t) opt.step(refs[t].first, refs[t].second, t);
      opt.advance();
    }

    CurvePoint pt;
    pt.epoch = epoch;
    pt.train_loss = loss_sum / static_cast<double>(order.size());
    pt.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    if (!val_ids.empty()) {
      double vloss = 0.0;
      std::size_t vcorrect = 0;
      for (std::size_t i = 0; i < val_ids.size(); ++i) {
        const double y = val_labels[i] == Label::malicious ? 1.0 : 0.0;
        const double p = forward(val_ids[i], false, nullptr, f);
        vloss += bce_loss(p, y);
        if ((p >= config_.threshold) == (val_labels[i] == Label::malicious)) ++vcorrect;
      }
      pt.val_loss = vloss / static_cast<double>(val_ids.size());
      pt.val_acc = static_cast<double>(vcorrect) / static_cast<double>(val_ids.size());
      if (pt.val_acc > best_val) {
        best_val = pt.val_acc;
        best = *this;
        best_epoch = epoch;
      }
    }
    result.curve.points.push_back(pt);
  }

  if (!val_ids.empty()) {
    // Keep the best-validation-accuracy snapshot.
    *this = best;
    result.best_val_acc = best_val;
    result.best_epoch = best_epoch;
  }
  return result;
}

}  // namespace arhuaco
