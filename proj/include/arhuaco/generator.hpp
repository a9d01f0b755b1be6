#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arhuaco/dataset.hpp"
#include "arhuaco/error.hpp"
#include "arhuaco/ingest.hpp"
#include "arhuaco/metrics_types.hpp"
#include "arhuaco/nn.hpp"
#include "arhuaco/rng.hpp"
#include "arhuaco/serialize.hpp"

namespace arhuaco {

/// Eq. 9: stable softmax with max subtraction; invariant under shifting all
/// logits by a constant.
inline Vector softmax(std::span<const double> logits) {
  if (logits.empty()) raise(Errc::empty_logits, "softmax over empty logits");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  Vector p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

/// Ordered distinct characters; '\n' is always present so line-delimited
/// generation can terminate lines.
class CharVocabulary {
 public:
  CharVocabulary() = default;

  static CharVocabulary from_corpus(const std::string& corpus) {
    bool seen[256] = {};
    seen[static_cast<unsigned char>('\n')] = true;
    for (char c : corpus) seen[static_cast<unsigned char>(c)] = true;
    std::string chars;
    for (int b = 0; b < 256; ++b)
      if (seen[b]) chars.push_back(static_cast<char>(b));
    return CharVocabulary(chars);
  }

  explicit CharVocabulary(const std::string& chars) : chars_(chars) {
    for (auto& v : index_) v = -1;
    for (std::size_t i = 0; i < chars_.size(); ++i) {
      auto& slot = index_[static_cast<unsigned char>(chars_[i])];
      if (slot != -1) raise(Errc::data_error, "duplicate character in vocabulary");
      slot = static_cast<int>(i);
    }
    if (index_[static_cast<unsigned char>('\n')] < 0)
      raise(Errc::data_error, "character vocabulary must contain newline");
  }

  std::size_t size() const { return chars_.size(); }
  char at(std::size_t i) const { return chars_[i]; }
  const std::string& chars() const { return chars_; }

  std::optional<std::size_t> find(char c) const {
    const int i = index_[static_cast<unsigned char>(c)];
    return i < 0 ? std::nullopt : std::optional<std::size_t>(static_cast<std::size_t>(i));
  }

  std::size_t require(char c) const {
    auto i = find(c);
    if (!i) raise(Errc::unknown_prime_char, std::string("character not in vocabulary: ") + c);
    return *i;
  }

  bool operator==(const CharVocabulary& o) const { return chars_ == o.chars_; }

 private:
  std::string chars_;
  int index_[256] = {};
};

struct LstmConfig {
  std::size_t hidden = 128;
  std::size_t seq_len = 100;
  std::size_t batch_lanes = 32;
  std::size_t epochs = 20;
  OptimizerConfig optimizer = rmsprop_config(0.01);  // paper: RMSProp, lr 0.01
  double grad_clip = 5.0;
  double val_fraction = 0.05;
  std::uint64_t seed = 1;
};

/// Character-level LSTM language model (Eq. 6) with a softmax head (Eq. 9),
/// trained by truncated BPTT on categorical cross entropy.
class LstmModel {
 public:
  // Gate order everywhere: f, i, o, c-tilde.
  static constexpr std::size_t kGates = 4;

  LstmModel() = default;

  LstmModel(CharVocabulary vocab, std::size_t hidden, std::uint64_t seed)
      : vocab_(std::move(vocab)), hidden_(hidden) {
    if (hidden_ < 1) raise(Errc::config_error, "hidden size must be >= 1");
    const std::size_t X = vocab_.size();
    Rng rng(seed);
    for (std::size_t g = 0; g < kGates; ++g) {
      wx_[g] = Matrix(X, hidden_);
      uh_[g] = Matrix(hidden_, hidden_);
      bias_[g].assign(hidden_, 0.0);
      glorot_init(wx_[g].a, X, hidden_, rng);
      glorot_init(uh_[g].a, hidden_, hidden_, rng);
    }
    // Keep early memory: forget gate bias starts at 1.
    std::fill(bias_[0].begin(), bias_[0].end(), 1.0);
    wy_ = Matrix(X, hidden_);
    glorot_init(wy_.a, hidden_, X, rng);
    by_.assign(X, 0.0);
  }

  const CharVocabulary& vocab() const { return vocab_; }
  std::size_t hidden_size() const { return hidden_; }

  struct State {
    Vector h;
    Vector c;

    State() = default;
    explicit State(std::size_t hidden) : h(hidden, 0.0), c(hidden, 0.0) {}
  };

  struct StepTrace {
    std::size_t input = 0;
    Vector f, i, o, cbar;  // gate activations
    Vector c, tanh_c, h;
    Vector probs;
  };

  /// One Eq. 6 step by character id. Updates the state in place and returns
  /// the output logits; records gate activations when a trace is supplied.
  Vector cell_step(std::size_t char_id, State& state, StepTrace* trace = nullptr) const {
    if (char_id >= vocab_.size()) raise(Errc::shape_mismatch, "character id out of range");
    if (state.h.size() != hidden_ || state.c.size() != hidden_)
      raise(Errc::shape_mismatch, "state size does not match hidden size");
    Vector pre[kGates];
    for (std::size_t g = 0; g < kGates; ++g) {
      pre[g].assign(hidden_, 0.0);
      const double* wrow = wx_[g].row(char_id);
      const Matrix& u = uh_[g];
      for (std::size_t j = 0; j < hidden_; ++j)
        pre[g][j] = wrow[j] + bias_[g][j] + dot(std::span(u.row(j), hidden_), state.h);
    }
    Vector f(hidden_), in(hidden_), o(hidden_), cbar(hidden_);
    for (std::size_t j = 0; j < hidden_; ++j) {
      f[j] = sigmoid(pre[0][j]);
      in[j] = sigmoid(pre[1][j]);
      o[j] = sigmoid(pre[2][j]);
      cbar[j] = std::tanh(pre[3][j]);
    }
    Vector c(hidden_), tc(hidden_), h(hidden_);
    for (std::size_t j = 0; j < hidden_; ++j) {
      c[j] = f[j] * state.c[j] + in[j] * cbar[j];
      tc[j] = std::tanh(c[j]);
      h[j] = o[j] * tc[j];
    }
    Vector logits(vocab_.size());
    for (std::size_t r = 0; r < vocab_.size(); ++r) logits[r] = dot(std::span(wy_.row(r), hidden_), h) + by_[r];
    if (trace) {
      trace->input = char_id;
      trace->f = f;
      trace->i = in;
      trace->o = o;
      trace->cbar = cbar;
      trace->c = c;
      trace->tanh_c = tc;
      trace->h = h;
    }
    state.c = std::move(c);
    state.h = std::move(h);
    return logits;
  }

  /// Eq. 6 with an explicit one-hot (or general) input vector.
  Vector cell_step_vec(std::span<const double> x, State& state) const {
    if (x.size() != vocab_.size()) raise(Errc::shape_mismatch, "input vector length != |vocab|");
    // General W x: accumulate weighted char rows.
    Vector pre[kGates];
    for (std::size_t g = 0; g < kGates; ++g) pre[g].assign(hidden_, 0.0);
    for (std::size_t cix = 0; cix < x.size(); ++cix) {
      if (x[cix] == 0.0) continue;
      for (std::size_t g = 0; g < kGates; ++g) {
        const double* wrow = wx_[g].row(cix);
        for (std::size_t j = 0; j < hidden_; ++j) pre[g][j] += x[cix] * wrow[j];
      }
    }
    for (std::size_t g = 0; g < kGates; ++g) {
      for (std::size_t r = 0; r < hidden_; ++r) {
        const double hv = state.h[r];
        if (hv == 0.0) continue;
        for (std::size_t j = 0; j < hidden_; ++j) pre[g][j] += uh_[g](j, r) * hv;
      }
      for (std::size_t j = 0; j < hidden_; ++j) pre[g][j] += bias_[g][j];
    }
    Vector c(hidden_), h(hidden_);
    for (std::size_t j = 0; j < hidden_; ++j) {
      const double f = sigmoid(pre[0][j]);
      const double in = sigmoid(pre[1][j]);
      const double o = sigmoid(pre[2][j]);
      const double cbar = std::tanh(pre[3][j]);
      c[j] = f * state.c[j] + in * cbar;
      h[j] = o * std::tanh(c[j]);
    }
    Vector logits(vocab_.size());
    for (std::size_t r = 0; r < vocab_.size(); ++r) logits[r] = dot(std::span(wy_.row(r), hidden_), h) + by_[r];
    state.c = std::move(c);
    state.h = std::move(h);
    return logits;
  }

  struct Grads {
    Matrix wx[kGates];
    Matrix uh[kGates];
    Vector bias[kGates];
    Matrix wy;
    Vector by;

    void init_like(const LstmModel& m) {
      for (std::size_t g = 0; g < kGates; ++g) {
        wx[g] = Matrix(m.wx_[g].rows, m.wx_[g].cols);
        uh[g] = Matrix(m.uh_[g].rows, m.uh_[g].cols);
        bias[g].assign(m.bias_[g].size(), 0.0);
      }
      wy = Matrix(m.wy_.rows, m.wy_.cols);
      by.assign(m.by_.size(), 0.0);
    }

    void zero() {
      for (std::size_t g = 0; g < kGates; ++g) {
        wx[g].zero();
        uh[g].zero();
        std::fill(bias[g].begin(), bias[g].end(), 0.0);
      }
      wy.zero();
      std::fill(by.begin(), by.end(), 0.0);
    }
  };

  std::vector<std::pair<std::span<double>, std::span<double>>> tensor_refs(Grads& g) {
    std::vector<std::pair<std::span<double>, std::span<double>>> refs;
    for (std::size_t i = 0; i < kGates; ++i) {
      refs.emplace_back(std::span<double>(wx_[i].a), std::span<double>(g.wx[i].a));
      refs.emplace_back(std::span<double>(uh_[i].a), std::span<double>(g.uh[i].a));
      refs.emplace_back(std::span<double>(bias_[i]), std::span<double>(g.bias[i]));
    }
    refs.emplace_back(std::span<double>(wy_.a), std::span<double>(g.wy.a));
    refs.emplace_back(std::span<double>(by_), std::span<double>(g.by));
    return refs;
  }

  /// Mean cross entropy of predicting targets[t] from inputs[..t], starting
  /// from `state`; the state advances past the span.
  double sequence_loss(std::span<const std::size_t> inputs, std::span<const std::size_t> targets,
                       State& state) const {
    if (inputs.size() != targets.size() || inputs.empty())
      raise(Errc::shape_mismatch, "inputs/targets length mismatch");
    double loss = 0.0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      auto logits = cell_step(inputs[t], state);
      auto p = softmax(logits);
      loss += -std::log(std::max(p[targets[t]], 1e-300));
    }
    return loss / static_cast<double>(inputs.size());
  }

  /// Forward + full BPTT over one chunk. Gradients of the mean cross entropy
  /// are accumulated into `grads`; returns (loss, correct next-char count).
  std::pair<double, std::size_t> forward_backward(std::span<const std::size_t> inputs,
                                                  std::span<const std::size_t> targets,
                                                  State& state, Grads& grads) const {
    const std::size_t T = inputs.size();
    if (T == 0 || targets.size() != T) raise(Errc::shape_mismatch, "bad chunk");
    const std::size_t H = hidden_;
    const double scale = 1.0 / static_cast<double>(T);

    std::vector<StepTrace> trace(T);
    std::vector<Vector> h_prev(T), c_prev(T);
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t t = 0; t < T; ++t) {
      h_prev[t] = state.h;
      c_prev[t] = state.c;
      auto logits = cell_step(inputs[t], state, &trace[t]);
      trace[t].probs = softmax(logits);
      loss += -std::log(std::max(trace[t].probs[targets[t]], 1e-300));
      std::size_t argmax = 0;
      for (std::size_t r = 1; r < trace[t].probs.size(); ++r)
        if (trace[t].probs[r] > trace[t].probs[argmax]) argmax = r;
      if (argmax == targets[t]) ++correct;
    }

    Vector dh(H, 0.0), dc(H, 0.0);
    Vector dpre[kGates];
    for (auto& v : dpre) v.assign(H, 0.0);
    for (std::size_t t = T; t-- > 0;) {
      const auto& tr = trace[t];
      // Softmax + CE: dlogits = p - onehot(target), scaled to the mean.
      for (std::size_t r = 0; r < vocab_.size(); ++r) {
        const double dl = (tr.probs[r] - (r == targets[t] ? 1.0 : 0.0)) * scale;
        if (dl == 0.0) continue;
        double* gw = grads.wy.row(r);
        for (std::size_t j = 0; j < H; ++j) gw[j] += dl * tr.h[j];
        grads.by[r] += dl;
        const double* wrow = wy_.row(r);
        for (std::size_t j = 0; j < H; ++j) dh[j] += dl * wrow[j];
      }
      for (std::size_t j = 0; j < H; ++j) {
        const double do_ = dh[j] * tr.tanh_c[j];
        const double dtc = dh[j] * tr.o[j];
        dc[j] += dtc * (1.0 - tr.tanh_c[j] * tr.tanh_c[j]);
        const double df = dc[j] * c_prev[t][j];
        const double di = dc[j] * tr.cbar[j];
        const double dcbar = dc[j] * tr.i[j];
        dpre[0][j] = df * tr.f[j] * (1.0 - tr.f[j]);
        dpre[1][j] = di * tr.i[j] * (1.0 - tr.i[j]);
        dpre[2][j] = do_ * tr.o[j] * (1.0 - tr.o[j]);
        dpre[3][j] = dcbar * (1.0 - tr.cbar[j] * tr.cbar[j]);
        dc[j] *= tr.f[j];  // flows to c_{t-1}
      }
      std::fill(dh.begin(), dh.end(), 0.0);
      for (std::size_t g = 0; g < kGates; ++g) {
        double* gw = grads.wx[g].row(tr.input);
        for (std::size_t j = 0; j < H; ++j) {
          const double d = dpre[g][j];
          if (d == 0.0) continue;
          gw[j] += d;
          grads.bias[g][j] += d;
          double* gu = grads.uh[g].row(j);
          const double* hp = h_prev[t].data();
          for (std::size_t r = 0; r < H; ++r) gu[r] += d * hp[r];
          const Matrix& u = uh_[g];
          const double* urow = u.row(j);
          for (std::size_t r = 0; r < H; ++r) dh[r] += d * urow[r];
        }
      }
    }
    return {loss / static_cast<double>(T), correct};
  }

  struct TrainResult {
    Curve curve;
  };

  TrainResult train(const std::string& corpus, const LstmConfig& cfg);

  /// Autoregressive sampling. The prime text conditions the state; exactly
  /// `length` new characters are returned. Logits divide by temperature
  /// before Eq. 9.
  std::string sample_text(const std::string& prime, std::size_t length, double temperature,
                          std::uint64_t seed) const {
    if (temperature <= 0.0) raise(Errc::config_error, "temperature must be > 0");
    Rng rng(seed);
    State state(hidden_);
    std::string effective_prime = prime.empty() ? "\n" : prime;
    Vector logits;
    for (char ch : effective_prime) logits = cell_step(vocab_.require(ch), state);
    std::string out;
    out.reserve(length);
    for (std::size_t i = 0; i < length; ++i) {
      Vector scaled(logits.size());
      for (std::size_t r = 0; r < logits.size(); ++r) scaled[r] = logits[r] / temperature;
      auto p = softmax(scaled);
      const double u = rng.uniform();
      double acc = 0.0;
      std::size_t pick = p.size() - 1;
      for (std::size_t r = 0; r < p.size(); ++r) {
        acc += p[r];
        if (u < acc) {
          pick = r;
          break;
        }
      }
      out.push_back(vocab_.at(pick));
      logits = cell_step(pick, state);
    }
    return out;
  }

  void save(const std::string& path) const {
    ByteWriter w;
    w.magic("ARHL");
    w.u64(kFormatVersion);
    w.u64(hidden_);
    w.str(vocab_.chars());
    for (std::size_t g = 0; g < kGates; ++g) {
      w.f64_array(wx_[g].a);
      w.f64_array(uh_[g].a);
      w.f64_array(bias_[g]);
    }
    w.f64_array(wy_.a);
    w.f64_array(by_);
    w.finish_to_file(path);
  }

  static LstmModel load(const std::string& path) {
    auto [bytes, r] = open_checked(path, "ARHL");
    if (r.u64() != kFormatVersion) raise(Errc::version_mismatch, "unsupported ARHL version");
    LstmModel m;
    m.hidden_ = r.u64();
    m.vocab_ = CharVocabulary(r.str());
    const std::size_t X = m.vocab_.size();
    for (std::size_t g = 0; g < kGates; ++g) {
      m.wx_[g].a = r.f64_array();
      m.wx_[g].rows = X;
      m.wx_[g].cols = m.hidden_;
      m.uh_[g].a = r.f64_array();
      m.uh_[g].rows = m.hidden_;
      m.uh_[g].cols = m.hidden_;
      m.bias_[g] = r.f64_array();
    }
    m.wy_.a = r.f64_array();
    m.wy_.rows = X;
    m.wy_.cols = m.hidden_;
    m.by_ = r.f64_array();
    return m;
  }

  bool operator==(const LstmModel& o) const {
    for (std::size_t g = 0; g < kGates; ++g)
      if (wx_[g].a != o.wx_[g].a || uh_[g].a != o.uh_[g].a || bias_[g] != o.bias_[g]) return false;
    return vocab_ == o.vocab_ && hidden_ == o.hidden_ && wy_.a == o.wy_.a && by_ == o.by_;
  }

 private:
  static constexpr std::uint64_t kFormatVersion = 1;

  CharVocabulary vocab_;
  std::size_t hidden_ = 0;
  Matrix wx_[kGates];   // per-char input rows, X x H
  Matrix uh_[kGates];   // recurrent, H x H
  Vector bias_[kGates];
  Matrix wy_;           // output projection, X x H
  Vector by_;
};

inline LstmModel::TrainResult LstmModel::train(const std::string& corpus, const LstmConfig& cfg) {
  if (corpus.size() <= cfg.seq_len)
    raise(Errc::corpus_too_short, "corpus must be longer than seq_len");
  std::vector<std::size_t> ids;
  ids.reserve(corpus.size());
  for (char c : corpus) ids.push_back(vocab_.require(c));

  // Held-out tail for validation CE.
  std::size_t val_len = static_cast<std::size_t>(static_cast<double>(ids.size()) * cfg.val_fraction);
  if (ids.size() - val_len < cfg.seq_len + 1) val_len = 0;
  if (val_len < 2) val_len = 0;
  const std::size_t train_len = ids.size() - val_len;

  // Contiguous lanes over the training stream.
  std::size_t lanes = std::max<std::size_t>(1, std::min(cfg.batch_lanes, train_len / (cfg.seq_len + 1)));
  const std::size_t lane_len = train_len / lanes;

  Optimizer opt(cfg.optimizer);
  Grads grads;
  grads.init_like(*this);

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<State> states(lanes, State(hidden_));
    double loss_sum = 0.0;
    std::size_t loss_terms = 0;
    std::size_t correct = 0, predicted = 0;
    for (std::size_t start = 0; start + 1 < lane_len; start += cfg.seq_len) {
      const std::size_t T = std::min(cfg.seq_len, lane_len - 1 - start);
      grads.zero();
      for (std::size_t lane = 0; lane < lanes; ++lane) {
        const std::size_t base = lane * lane_len + start;
        auto [loss, ok] = forward_backward(std::span(ids).subspan(base, T),
                                           std::span(ids).subspan(base + 1, T), states[lane], grads);
        loss_sum += loss * static_cast<double>(T);
        loss_terms += T;
        correct += ok;
        predicted += T;
      }
      if (lanes > 1) {
        const double lane_scale = 1.0 / static_cast<double>(lanes);
        for (std::size_t g = 0; g < kGates; ++g) {
          for (auto& v : grads.wx[g].a) v *= lane_scale;
          for (auto& v : grads.uh[g].a) v *= lane_scale;
          for (auto& v : grads.bias[g]) v *= lane_scale;
        }
        for (auto& v : grads.wy.a) v *= lane_scale;
        for (auto& v : grads.by) v *= lane_scale;
      }
      std::vector<Vector*> clip_refs;
      for (std::size_t g = 0; g < kGates; ++g) {
        clip_refs.push_back(&grads.wx[g].a);
        clip_refs.push_back(&grads.uh[g].a);
        clip_refs.push_back(&grads.bias[g]);
      }
      clip_refs.push_back(&grads.wy.a);
      clip_refs.push_back(&grads.by);
      clip_gradients(clip_refs, cfg.grad_clip);
      auto refs = tensor_refs(grads);
      for (std::size_t t = 0; t < refs.size(); ++t) opt.step(refs[t].first, refs[t].second, t);
      opt.advance();
    }

    CurvePoint pt;
    pt.epoch = epoch;
    pt.train_loss = loss_terms ? loss_sum / static_cast<double>(loss_terms) : 0.0;
    pt.train_acc = predicted ? static_cast<double>(correct) / static_cast<double>(predicted) : 0.0;
    if (val_len >= 2) {
      State vstate(hidden_);
      double vloss = 0.0;
      std::size_t vcorrect = 0;
      const std::size_t vt = val_len - 1;
      for (std::size_t t = 0; t < vt; ++t) {
        auto logits = cell_step(ids[train_len + t], vstate);
        auto p = softmax(logits);
        vloss += -std::log(std::max(p[ids[train_len + t + 1]], 1e-300));
        std::size_t argmax = 0;
        for (std::size_t r = 1; r < p.size(); ++r)
          if (p[r] > p[argmax]) argmax = r;
        if (argmax == ids[train_len + t + 1]) ++vcorrect;
      }
      pt.val_loss = vloss / static_cast<double>(vt);
      pt.val_acc = static_cast<double>(vcorrect) / static_cast<double>(vt);
    }
    result.curve.points.push_back(pt);
  }
  return result;
}

/// Convenience: concatenates one class's raw lines into an LM training corpus.
inline std::string class_corpus(const LabeledDataset& data, Label label) {
  std::string corpus;
  for (const auto& rec : data) {
    if (rec.label != label) continue;
    for (const auto& line : rec.lines) {
      corpus += line;
      corpus += '\n';
    }
  }
  return corpus;
}

struct AugmentStats {
  std::size_t requested_lines = 0;
  std::size_t accepted_lines = 0;
  std::size_t discarded_lines = 0;
};

/// Appends ceil(fraction * class line count) generated lines to the dataset.
/// Sampled text splits on newlines; a line is admitted only when it re-parses
/// through the ingest rules for the class's source and lands inside the
/// class's observed structural band (token count range, line length range).
/// Original records are never touched. Throws GenerationStarvation when the
/// malformed rate exceeds 90% over the sampling budget.
inline AugmentStats augment_dataset(LabeledDataset& data, const LstmModel& model, Label label,
                                    double fraction, std::uint64_t seed,
                                    double temperature = 1.0) {
  if (fraction <= 0.0) raise(Errc::config_error, "augmentation fraction must be > 0");
  const std::size_t base_lines = class_line_count(data, label);
  if (base_lines == 0) raise(Errc::data_error, "dataset has no lines of the requested class");
  Source source = Source::syscall;
  std::size_t lines_per_record = 1;
  bool found = false;
  std::size_t min_tokens = SIZE_MAX, max_tokens = 0;
  std::size_t min_chars = SIZE_MAX, max_chars = 0;
  for (const auto& rec : data) {
    if (rec.label != label) continue;
    if (!found) {
      source = rec.source;
      lines_per_record = std::max<std::size_t>(1, rec.lines.size());
      found = true;
    }
    for (const auto& line : rec.lines) {
      if (auto parsed = try_parse_trace_line(rec.source, line)) {
        min_tokens = std::min(min_tokens, parsed->tokens.size());
        max_tokens = std::max(max_tokens, parsed->tokens.size());
        min_chars = std::min(min_chars, line.size());
        max_chars = std::max(max_chars, line.size());
      }
    }
  }
  if (min_tokens > max_tokens) raise(Errc::data_error, "class has no parseable lines");
  const std::size_t lo_chars = static_cast<std::size_t>(static_cast<double>(min_chars) * 0.8);
  const std::size_t hi_chars = static_cast<std::size_t>(static_cast<double>(max_chars) * 1.2) + 1;
  auto admit = [&](const std::string& line) {
    if (line.size() < lo_chars || line.size() > hi_chars) return false;
    auto parsed = try_parse_trace_line(source, line);
    return parsed && parsed->tokens.size() >= min_tokens && parsed->tokens.size() <= max_tokens;
  };

  AugmentStats stats;
  stats.requested_lines =
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(base_lines)));

  const std::size_t budget_lines = std::max<std::size_t>(200, 40 * stats.requested_lines);
  constexpr std::size_t kMaxLineChars = 400;

  Rng rng(seed);
  LstmModel::State state(model.hidden_size());
  Vector logits = model.cell_step(model.vocab().require('\n'), state);

  std::vector<std::string> accepted;
  std::string current;
  std::size_t attempted = 0;
  while (accepted.size() < stats.requested_lines) {
    if (attempted >= budget_lines) {
      const double ok_rate =
          attempted ? static_cast<double>(accepted.size()) / static_cast<double>(attempted) : 0.0;
      if (ok_rate < 0.10)
        raise(Errc::generation_starvation, "generated text rarely parses; model unusable");
      // Past the budget but producing: extend it rather than loop forever.
      if (attempted >= budget_lines * 4)
        raise(Errc::generation_starvation, "sampling budget exhausted");
    }
    Vector scaled(logits.size());
    for (std::size_t r = 0; r < logits.size(); ++r) scaled[r] = logits[r] / temperature;
    auto p = softmax(scaled);
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = p.size() - 1;
    for (std::size_t r = 0; r < p.size(); ++r) {
      acc += p[r];
      if (u < acc) {
        pick = r;
        break;
      }
    }
    const char ch = model.vocab().at(pick);
    logits = model.cell_step(pick, state);
    if (ch == '\n' || current.size() >= kMaxLineChars) {
      if (!current.empty()) {
        ++attempted;
        if (ch == '\n' && admit(current))
          accepted.push_back(current);
        else
          ++stats.discarded_lines;
        current.clear();
      }
      continue;
    }
    current.push_back(ch);
  }

  stats.accepted_lines = accepted.size();
  for (std::size_t i = 0; i < accepted.size(); i += lines_per_record) {
    LabeledLines rec;
    rec.source = source;
    rec.label = label;
    for (std::size_t j = i; j < std::min(accepted.size(), i + lines_per_record); ++j)
      rec.lines.push_back(accepted[j]);
    data.push_back(std::move(rec));
  }
  return stats;
}

}  // namespace arhuaco
