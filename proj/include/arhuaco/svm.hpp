#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "arhuaco/error.hpp"
#include "arhuaco/features.hpp"
#include "arhuaco/ingest.hpp"
#include "arhuaco/metrics_types.hpp"
#include "arhuaco/nn.hpp"
#include "arhuaco/serialize.hpp"
#include "arhuaco/train_util.hpp"

namespace arhuaco {

/// Class encoding for Eq. 1-4: malicious = +1, normal = -1. The boundary
/// (decision value 0) classifies malicious, matching the CNN's rule.
inline double label_sign(Label l) { return l == Label::malicious ? 1.0 : -1.0; }

using SparseBow = std::vector<std::pair<std::uint32_t, double>>;

struct SvmConfig {
  WindowSpec window_spec = network_window_spec();
  double lambda = 1e-4;
  OptimizerConfig optimizer = adadelta_config();
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  bool balanced_batches = true;
};

/// Linear SVM over bag-of-words counts, trained by subgradient descent on the
/// averaged regularized hinge loss (Eq. 2-4) with Adadelta.
class SvmModel {
 public:
  SvmModel() = default;

  SvmModel(Vocabulary vocab, SvmConfig config)
      : config_(std::move(config)), vocab_(std::move(vocab)), w_(vocab_.size(), 0.0), b_(0.0) {
    config_.window_spec.validate();
    config_.optimizer.validate();
  }

  /// Wraps externally supplied weights (tests, checkpoint surgery).
  SvmModel(Vocabulary vocab, Vector weights, double bias, SvmConfig config)
      : SvmModel(std::move(vocab), std::move(config)) {
    if (weights.size() != vocab_.size())
      raise(Errc::dimension_mismatch, "weight length must equal the vocabulary size");
    w_ = std::move(weights);
    b_ = bias;
  }

  const SvmConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const Vector& weights() const { return w_; }
  double bias() const { return b_; }

  /// Eq. 1: C(x) = w . x + b.
  double decision_function(const BowVector& x) const {
    if (x.counts.size() != w_.size())
      raise(Errc::dimension_mismatch, "feature vector length does not match the model");
    return dot(w_, x.counts) + b_;
  }

  double decision_function(const SparseBow& x) const {
    double s = b_;
    for (const auto& [i, c] : x) {
      if (i >= w_.size()) raise(Errc::dimension_mismatch, "feature index out of range");
      s += w_[i] * c;
    }
    return s;
  }

  /// max(0, 1 - c(w.x+b)) + lambda/2 ||w||^2 with c in {-1,+1}.
  double hinge_loss(const BowVector& x, double c, double lambda) const {
    if (c != 1.0 && c != -1.0) raise(Errc::invalid_label, "class must be encoded -1 or +1");
    const double margin = c * decision_function(x);
    const double hinge = margin >= 1.0 ? 0.0 : 1.0 - margin;
    return hinge + lambda * 0.5 * dot(w_, w_);
  }

  Prediction predict(const TokenSequence& seq) const {
    if (seq.spec != config_.window_spec)
      raise(Errc::dimension_mismatch, "window spec does not match the model");
    const double value = decision_function(bow_featurize_sparse(seq, vocab_));
    return {value >= 0.0 ? Label::malicious : Label::normal, value};
  }

  struct TrainResult {
    Curve curve;
  };

  TrainResult train(const std::vector<TokenSequence>& train_set,
                    const std::vector<TokenSequence>& val_set) {
    if (train_set.empty()) raise(Errc::empty_corpus, "empty training set");
    std::vector<SparseBow> xs;
    std::vector<double> cs;
    std::vector<Label> labels;
    bool saw_normal = false, saw_malicious = false;
    for (const auto& seq : train_set) {
      if (!seq.label) raise(Errc::data_error, "unlabeled training window");
      if (seq.spec != config_.window_spec)
        raise(Errc::dimension_mismatch, "window spec does not match the model");
      xs.push_back(bow_featurize_sparse(seq, vocab_));
      cs.push_back(label_sign(*seq.label));
      labels.push_back(*seq.label);
      (*seq.label == Label::malicious ? saw_malicious : saw_normal) = true;
    }
    if (!saw_normal || !saw_malicious)
      raise(Errc::single_class_dataset, "training data holds a single class");

    std::vector<SparseBow> val_xs;
    std::vector<double> val_cs;
    for (const auto& seq : val_set) {
      if (!seq.label) raise(Errc::data_error, "unlabeled validation window");
      val_xs.push_back(bow_featurize_sparse(seq, vocab_));
      val_cs.push_back(label_sign(*seq.label));
    }

    Rng rng(config_.seed);
    Optimizer opt(config_.optimizer);
    Vector grad_w(w_.size(), 0.0);
    Vector grad_b(1, 0.0);

    TrainResult result;
    for (std::size_t epoch = 1; epoch <= config_.epochs; ++epoch) {
      auto order = epoch_order(labels, config_.balanced_batches, rng);
      double loss_sum = 0.0;
      std::size_t correct = 0;
      for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
        const std::size_t stop = std::min(order.size(), start + config_.batch_size);
        const double scale = 1.0 / static_cast<double>(stop - start);
        // Regularizer term of the averaged loss, then the data subgradient.
        const double reg = config_.lambda * 0.5 * dot(w_, w_);
        for (std::size_t i = 0; i < w_.size(); ++i) grad_w[i] = config_.lambda * w_[i];
        grad_b[0] = 0.0;
        for (std::size_t q = start; q < stop; ++q) {
          const std::size_t idx = order[q];
          const double c = cs[idx];
          const double decision = decision_function(xs[idx]);
          const double margin = c * decision;
          loss_sum += (margin >= 1.0 ? 0.0 : 1.0 - margin) + reg;
          if ((decision >= 0.0) == (c > 0.0)) ++correct;
          if (margin < 1.0) {  // kink at margin==1 contributes zero
            for (const auto& [i, count] : xs[idx]) grad_w[i] -= scale * c * count;
            grad_b[0] -= scale * c;
          }
        }
        opt.step(w_, grad_w, 0);
        opt.step(std::span<double>(&b_, 1), grad_b, 1);
        opt.advance();
      }

      CurvePoint pt;
      pt.epoch = epoch;
      pt.train_loss = loss_sum / static_cast<double>(order.size());
      pt.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
      if (!val_xs.empty()) {
        double vloss = 0.0;
        std::size_t vcorrect = 0;
        const double reg = config_.lambda * 0.5 * dot(w_, w_);
        for (std::size_t i = 0; i < val_xs.size(); ++i) {
          const double decision = decision_function(val_xs[i]);
          const double margin = val_cs[i] * decision;
          vloss += (margin >= 1.0 ? 0.0 : 1.0 - margin) + reg;
          if ((decision >= 0.0) == (val_cs[i] > 0.0)) ++vcorrect;
        }
        pt.val_loss = vloss / static_cast<double>(val_xs.size());
        pt.val_acc = static_cast<double>(vcorrect) / static_cast<double>(val_xs.size());
      }
      result.curve.points.push_back(pt);
    }
    return result;
  }

  void save(const std::string& path) const {
    ByteWriter w;
    w.magic("ARHS");
    w.u64(kFormatVersion);
    w.u64(config_.window_spec.tokens_per_line);
    w.u64(config_.window_spec.lines);
    w.f64(config_.lambda);
    w.str(optim_kind_name(config_.optimizer.kind));
    w.f64(config_.optimizer.rho);
    w.f64(config_.optimizer.epsilon);
    w.u64(config_.epochs);
    w.u64(config_.batch_size);
    w.u64(config_.seed);
    w.u64(config_.balanced_batches ? 1 : 0);
    w.u64(vocab_.size());
    for (const auto& t : vocab_.tokens()) w.str(t);
    w.f64_array(w_);
    w.f64(b_);
    w.finish_to_file(path);
  }

  static SvmModel load(const std::string& path) {
    auto [bytes, r] = open_checked(path, "ARHS");
    if (r.u64() != kFormatVersion) raise(Errc::version_mismatch, "unsupported ARHS version");
    SvmConfig cfg;
    cfg.window_spec.tokens_per_line = r.u64();
    cfg.window_spec.lines = r.u64();
    cfg.lambda = r.f64();
    cfg.optimizer = adadelta_config();
    cfg.optimizer.kind = optim_kind_from_name(r.str());
    cfg.optimizer.rho = r.f64();
    cfg.optimizer.epsilon = r.f64();
    cfg.epochs = r.u64();
    cfg.batch_size = r.u64();
    cfg.seed = r.u64();
    cfg.balanced_batches = r.u64() != 0;
    const std::uint64_t vocab_size = r.u64();
    std::vector<std::string> tokens;
    tokens.reserve(vocab_size);
    for (std::uint64_t i = 0; i < vocab_size; ++i) tokens.push_back(r.str());
    SvmModel m(Vocabulary(std::move(tokens)), cfg);
    m.w_ = r.f64_array();
    m.b_ = r.f64();
    if (m.w_.size() != m.vocab_.size()) raise(Errc::data_error, "weight/vocabulary size mismatch");
    return m;
  }

  bool operator==(const SvmModel& o) const {
    return vocab_ == o.vocab_ && w_ == o.w_ && b_ == o.b_;
  }

 private:
  static constexpr std::uint64_t kFormatVersion = 1;

  SvmConfig config_;
  Vocabulary vocab_;
  Vector w_;
  double b_ = 0.0;
};

}  // namespace arhuaco
