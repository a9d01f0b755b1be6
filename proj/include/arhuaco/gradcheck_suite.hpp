#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "arhuaco/cnn.hpp"
#include "arhuaco/generator.hpp"
#include "arhuaco/svm.hpp"

namespace arhuaco {

struct GradCheckReport {
  std::string layer;
  double max_rel_error = 0.0;
  std::size_t seeds = 0;
};

/// Convolution + pooling + dense + sigmoid path on a small random model,
/// every trainable tensor including fine-tuned embeddings.
inline double cnn_gradcheck_once(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> tokens{kPadToken, kUnkToken};
  for (int i = 0; i < 14; ++i) tokens.push_back("tok" + std::to_string(i));
  Vocabulary vocab(tokens);
  EmbeddingTable table(vocab, 5);
  for (std::size_t i = 1; i < vocab.size(); ++i)
    for (std::size_t j = 0; j < 5; ++j) table.vectors(i, j) = rng.uniform(-0.5, 0.5);

  CnnConfig cfg;
  cfg.window_spec = {4, 3};
  cfg.embedding_dim = 5;
  cfg.filter_sizes = {2, 3, 4};
  cfg.total_filters = 5;
  cfg.dense_units = 6;
  cfg.dropout_rate = 0.0;
  cfg.fine_tune_embeddings = true;
  CnnModel model(cfg, table, seed * 7919 + 1);

  std::vector<std::size_t> ids;
  for (int i = 0; i < 12; ++i) ids.push_back(2 + rng.below(14));
  const double y = rng.bernoulli(0.5) ? 1.0 : 0.0;

  CnnModel::Forward f;
  model.forward(ids, false, nullptr, f);
  CnnModel::Grads grads;
  grads.init_like(model);
  grads.zero();
  model.backward(ids, f, y, 1.0, grads);

  auto loss_fn = [&]() {
    CnnModel::Forward tmp;
    return CnnModel::bce_loss(model.forward(ids, false, nullptr, tmp), y);
  };
  double worst = 0.0;
  for (auto& [params, grad] : model.tensor_refs(grads)) {
    auto res = finite_diff_check(loss_fn, params, grad, 1e-6);
    worst = std::max(worst, res.max_rel_error);
  }
  return worst;
}

/// Regularized hinge subgradient, sampled away from the margin kink.
inline double hinge_gradcheck_once(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> tokens{kPadToken, kUnkToken};
  for (int i = 0; i < 6; ++i) tokens.push_back("t" + std::to_string(i));
  Vocabulary vocab(tokens);
  const double lambda = 0.25;

  double worst = 0.0;
  int done = 0;
  while (done < 4) {
    Vector w(vocab.size());
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    BowVector x{Vector(vocab.size())};
    for (auto& v : x.counts) v = rng.uniform(0.0, 2.0);
    const double c = rng.bernoulli(0.5) ? 1.0 : -1.0;
    SvmModel probe(vocab, w, b, SvmConfig{});
    const double margin = c * probe.decision_function(x);
    if (std::fabs(margin - 1.0) < 1e-3) continue;  // measure-zero kink set
    ++done;

    Vector grad(w.size());
    for (std::size_t i = 0; i < w.size(); ++i)
      grad[i] = lambda * w[i] + (margin < 1.0 ? -c * x.counts[i] : 0.0);
    Vector params = w;
    auto loss = [&]() {
      SvmModel m(vocab, params, b, SvmConfig{});
      return m.hinge_loss(x, c, lambda);
    };
    auto res = finite_diff_check(loss, params, grad, 1e-6);
    worst = std::max(worst, res.max_rel_error);
  }
  return worst;
}

/// Full BPTT through a 10-step window of the LSTM cell.
inline double lstm_gradcheck_once(std::uint64_t seed) {
  CharVocabulary vocab("\nabcd");
  LstmModel model(vocab, 6, seed);
  Rng rng(seed + 4242);
  std::vector<std::size_t> stream;
  for (int i = 0; i < 11; ++i) stream.push_back(rng.below(vocab.size()));
  std::span<const std::size_t> inputs(stream.data(), 10);
  std::span<const std::size_t> targets(stream.data() + 1, 10);

  LstmModel::Grads grads;
  grads.init_like(model);
  grads.zero();
  LstmModel::State state(6);
  model.forward_backward(inputs, targets, state, grads);

  auto loss_fn = [&]() {
    LstmModel::State s(6);
    return model.sequence_loss(inputs, targets, s);
  };
  // 2e-5 balances central-difference truncation against roundoff for the
  // 10-step objective; 1e-5 is roundoff-dominated on the smallest gradients.
  double worst = 0.0;
  for (auto& [params, grad] : model.tensor_refs(grads)) {
    auto res = finite_diff_check(loss_fn, params, grad, 2e-5);
    worst = std::max(worst, res.max_rel_error);
  }
  return worst;
}

inline std::vector<GradCheckReport> run_gradient_checks(std::size_t seeds) {
  GradCheckReport cnn{"cnn conv+pool+dense+sigmoid", 0.0, seeds};
  GradCheckReport hinge{"svm hinge subgradient", 0.0, seeds};
  GradCheckReport lstm{"lstm 10-step bptt", 0.0, seeds};
  for (std::uint64_t s = 1; s <= seeds; ++s) {
    cnn.max_rel_error = std::max(cnn.max_rel_error, cnn_gradcheck_once(s));
    hinge.max_rel_error = std::max(hinge.max_rel_error, hinge_gradcheck_once(s));
    lstm.max_rel_error = std::max(lstm.max_rel_error, lstm_gradcheck_once(s));
  }
  return {cnn, hinge, lstm};
}

}  // namespace arhuaco
