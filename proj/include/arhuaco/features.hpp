#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "arhuaco/error.hpp"
#include "arhuaco/ingest.hpp"
#include "arhuaco/nn.hpp"
#include "arhuaco/rng.hpp"
#include "arhuaco/serialize.hpp"

namespace arhuaco {

/// Token vocabulary. Index 0 is `<PAD>`, index 1 is `<UNK>`; lookup of an
/// unknown token yields the `<UNK>` index.
class Vocabulary {
 public:
  static constexpr std::size_t kPadIndex = 0;
  static constexpr std::size_t kUnkIndex = 1;

  Vocabulary() {
    tokens_ = {kPadToken, kUnkToken};
    rebuild_index();
  }

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 2 || tokens_[0] != kPadToken || tokens_[1] != kUnkToken)
      raise(Errc::data_error, "vocabulary must start with <PAD>, <UNK>");
    rebuild_index();
    if (index_.size() != tokens_.size()) raise(Errc::data_error, "vocabulary tokens not distinct");
  }

  std::size_t size() const { return tokens_.size(); }

  std::size_t lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkIndex : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  const std::string& token(std::size_t i) const { return tokens_[i]; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::size_t> ids(const TokenSequence& seq) const {
    std::vector<std::size_t> out;
    out.reserve(seq.tokens.size());
    for (const auto& t : seq.tokens) out.push_back(lookup(t));
    return out;
  }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  void rebuild_index() {
    index_.clear();
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Most-frequent-first vocabulary over a window corpus. Ties break by first
/// occurrence; `max_size` caps the total size including the two reserved
/// slots; tokens below `min_count` are dropped. The reserved literals
/// themselves are never counted as corpus tokens.
inline Vocabulary build_vocabulary(const std::vector<TokenSequence>& corpus, std::size_t max_size,
                                   std::size_t min_count = 1) {
  if (corpus.empty()) raise(Errc::empty_corpus, "cannot build vocabulary from empty corpus");
  if (max_size < 2) raise(Errc::config_error, "max_size must be >= 2");
  struct Entry {
    std::size_t count = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, Entry> counts;
  std::size_t tick = 0;
  for (const auto& seq : corpus) {
    for (const auto& tok : seq.tokens) {
      ++tick;
      if (tok == kPadToken || tok == kUnkToken) continue;
      auto [it, inserted] = counts.try_emplace(tok);
      if (inserted) it->second.first_seen = tick;
      ++it->second.count;
    }
  }
  std::vector<std::pair<std::string, Entry>> order(counts.begin(), counts.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first_seen < b.second.first_seen;
  });
  std::vector<std::string> tokens = {kPadToken, kUnkToken};
  for (const auto& [tok, e] : order) {
    if (tokens.size() >= max_size) break;
    if (e.count < min_count) break;  // sorted by count, nothing further qualifies
    tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens));
}

// ---------------------------------------------------------------------------

/// V x k token-vector table. Row 0 (`<PAD>`) is all zeros and stays frozen
/// through every training path.
struct EmbeddingTable {
  Vocabulary vocab;
  std::size_t dim = 0;  // k
  Matrix vectors;       // V x k

  EmbeddingTable() = default;
  EmbeddingTable(Vocabulary v, std::size_t k) : vocab(std::move(v)), dim(k), vectors(vocab.size(), k) {}

  /// Binary layout: magic "ARH1", V and k as LE u64, token list
  /// (length-prefixed UTF-8), then V*k LE f64 row-major.
  void write_block(ByteWriter& w) const {
    w.magic("ARH1");
    w.u64(vocab.size());
    w.u64(dim);
    for (const auto& t : vocab.tokens()) w.str(t);
    for (double v : vectors.a) w.f64(v);
  }

  static EmbeddingTable read_block(ByteReader& r) {
    r.expect_magic("ARH1");
    const std::uint64_t v = r.u64();
    const std::uint64_t k = r.u64();
    std::vector<std::string> tokens;
    tokens.reserve(v);
    for (std::uint64_t i = 0; i < v; ++i) tokens.push_back(r.str());
    EmbeddingTable table(Vocabulary(std::move(tokens)), k);
    for (auto& x : table.vectors.a) x = r.f64();
    return table;
  }

  void save(const std::string& path) const {
    ByteWriter w;
    write_block(w);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(Errc::io_error, "cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(w.data().data()),
              static_cast<std::streamsize>(w.data().size()));
    if (!out) raise(Errc::io_error, "short write: " + path);
  }

  static EmbeddingTable load(const std::string& path) {
    auto bytes = read_file_bytes(path);
    ByteReader r(bytes);
    return read_block(r);
  }
};

/// Eq. 7: the window's tokens as the row-stacked concatenation a_1 .. a_n,
/// an n x k matrix. Out-of-vocabulary tokens use the `<UNK>` row.
inline Matrix embed_sequence(const TokenSequence& seq, const EmbeddingTable& table) {
  const std::size_t n = seq.tokens.size();
  Matrix out(n, table.dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t id = table.vocab.lookup(seq.tokens[i]);
    const double* src = table.vectors.row(id);
    std::copy(src, src + table.dim, out.row(i));
  }
  return out;
}

inline Matrix embed_ids(std::span<const std::size_t> ids, const EmbeddingTable& table) {
  Matrix out(ids.size(), table.dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double* src = table.vectors.row(ids[i]);
    std::copy(src, src + table.dim, out.row(i));
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Occurrence counts over the reduced vocabulary; entry j counts token j in
/// the window. Every token maps somewhere, so the counts always sum to n.
struct BowVector {
  Vector counts;
};

inline BowVector bow_featurize(const TokenSequence& seq, const Vocabulary& vocab) {
  BowVector x;
  x.counts.assign(vocab.size(), 0.0);
  for (const auto& t : seq.tokens) x.counts[vocab.lookup(t)] += 1.0;
  return x;
}

/// Sparse (index, count) form of the same feature map, for the SVM hot path.
inline std::vector<std::pair<std::uint32_t, double>> bow_featurize_sparse(const TokenSequence& seq,
                                                                          const Vocabulary& vocab) {
  std::unordered_map<std::uint32_t, double> acc;
  for (const auto& t : seq.tokens) acc[static_cast<std::uint32_t>(vocab.lookup(t))] += 1.0;
  std::vector<std::pair<std::uint32_t, double>> out(acc.begin(), acc.end());
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// word2vec. Skip-gram with negative sampling is the default; CBOW is kept
// behind the config switch as the paper's alternative.

struct Word2VecConfig {
  std::size_t dim = 20;       // k; Table 3 gives 20 (syscall) / 10 (network)
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  bool cbow = false;
  std::uint64_t seed = 1;
};

namespace detail {

/// Vose alias sampler over a fixed discrete distribution.
class AliasSampler {
 public:
  explicit AliasSampler(const Vector& weights) {
    const std::size_t n = weights.size();
    prob_.resize(n);
    alias_.resize(n);
    double total = 0.0;
    for (double w : weights) total += w;
    std::vector<double> scaled(n);
    for (std::size_t i = 0; i < n; ++i) scaled[i] = weights[i] * static_cast<double>(n) / total;
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n; ++i) (scaled[i] < 1.0 ? small : large).push_back(i);
    while (!small.empty() && !large.empty()) {
      const std::size_t s = small.back(), l = large.back();
      small.pop_back();
      large.pop_back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      (scaled[l] < 1.0 ? small : large).push_back(l);
    }
    for (std::size_t i : large) prob_[i] = 1.0;
    for (std::size_t i : small) prob_[i] = 1.0;
  }

  std::size_t sample(Rng& rng) const {
    const std::size_t i = static_cast<std::size_t>(rng.below(prob_.size()));
    return rng.uniform() < prob_[i] ? i : alias_[i];
  }

 private:
  Vector prob_;
  std::vector<std::size_t> alias_;
};

}  // namespace detail

/// Trains token embeddings on a window corpus. Deterministic for a fixed
/// seed; `<PAD>` is excluded from training and its row stays zero.
inline EmbeddingTable train_word2vec(const std::vector<TokenSequence>& corpus,
                                     const Vocabulary& vocab, const Word2VecConfig& cfg) {
  if (corpus.empty()) raise(Errc::empty_corpus, "word2vec needs a nonempty corpus");
  if (cfg.dim < 1) raise(Errc::config_error, "embedding dim must be >= 1");
  const std::size_t V = vocab.size();
  const std::size_t k = cfg.dim;

  // Sequences as id lists with padding removed.
  std::vector<std::vector<std::uint32_t>> seqs;
  seqs.reserve(corpus.size());
  Vector freq(V, 0.0);
  std::size_t total_tokens = 0;
  for (const auto& seq : corpus) {
    std::vector<std::uint32_t> ids;
    ids.reserve(seq.tokens.size());
    for (const auto& t : seq.tokens) {
      if (t == kPadToken) continue;
      const auto id = static_cast<std::uint32_t>(vocab.lookup(t));
      ids.push_back(id);
      freq[id] += 1.0;
    }
    total_tokens += ids.size();
    if (!ids.empty()) seqs.push_back(std::move(ids));
  }
  if (total_tokens == 0) raise(Errc::empty_corpus, "corpus holds only padding");

  // Unigram^0.75 noise distribution, PAD excluded.
  Vector noise(V, 0.0);
  for (std::size_t i = 1; i < V; ++i) noise[i] = std::pow(freq[i], 0.75);
  double noise_total = 0.0;
  for (double w : noise) noise_total += w;
  if (noise_total <= 0.0) noise[Vocabulary::kUnkIndex] = 1.0;
  detail::AliasSampler sampler(noise);

  Rng rng(cfg.seed);
  EmbeddingTable table(vocab, k);
  const double init = 0.5 / static_cast<double>(k);
  for (std::size_t i = 1; i < V; ++i)
    for (std::size_t j = 0; j < k; ++j) table.vectors(i, j) = rng.uniform(-init, init);
  Matrix out_vectors(V, k);  // context matrix, discarded after training

  const double total_work =
      static_cast<double>(cfg.epochs) * static_cast<double>(std::max<std::size_t>(total_tokens, 1));
  double processed = 0.0;
  Vector accum(k);

  auto train_pair = [&](std::uint32_t input, std::uint32_t target, double label, double lr,
                        double* in_row, Vector& err) {
    double* u = out_vectors.row(target);
    const double f = sigmoid(dot(std::span(in_row, k), std::span(u, k)));
    const double g = (label - f) * lr;
    for (std::size_t j = 0; j < k; ++j) err[j] += g * u[j];
    for (std::size_t j = 0; j < k; ++j) u[j] += g * in_row[j];
    (void)input;
  };

  Vector cbow_hidden(k);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& ids : seqs) {
      for (std::size_t t = 0; t < ids.size(); ++t) {
        const double lr =
            std::max(cfg.learning_rate * (1.0 - processed / total_work), cfg.learning_rate * 1e-4);
        processed += 1.0;
        const std::size_t shrink = 1 + static_cast<std::size_t>(rng.below(cfg.window));
        const std::size_t lo = t >= shrink ? t - shrink : 0;
        const std::size_t hi = std::min(ids.size() - 1, t + shrink);
        if (!cfg.cbow) {
          const std::uint32_t center = ids[t];
          for (std::size_t c = lo; c <= hi; ++c) {
            if (c == t) continue;
            const std::uint32_t target = ids[c];
            std::fill(accum.begin(), accum.end(), 0.0);
            double* v = table.vectors.row(center);
            train_pair(center, target, 1.0, lr, v, accum);
            for (std::size_t neg = 0; neg < cfg.negatives; ++neg) {
              auto sample = static_cast<std::uint32_t>(sampler.sample(rng));
              if (sample == target) continue;
              train_pair(center, sample, 0.0, lr, v, accum);
            }
            for (std::size_t j = 0; j < k; ++j) v[j] += accum[j];
          }
        } else {
          // CBOW: mean of context rows predicts the center token.
          std::fill(cbow_hidden.begin(), cbow_hidden.end(), 0.0);
          std::size_t n_ctx = 0;
          for (std::size_t c = lo; c <= hi; ++c) {
            if (c == t) continue;
            const double* v = table.vectors.row(ids[c]);
            for (std::size_t j = 0; j < k; ++j) cbow_hidden[j] += v[j];
            ++n_ctx;
          }
          if (n_ctx == 0) continue;
          for (std::size_t j = 0; j < k; ++j) cbow_hidden[j] /= static_cast<double>(n_ctx);
          std::fill(accum.begin(), accum.end(), 0.0);
          train_pair(0, ids[t], 1.0, lr, cbow_hidden.data(), accum);
          for (std::size_t neg = 0; neg < cfg.negatives; ++neg) {
            auto sample = static_cast<std::uint32_t>(sampler.sample(rng));
            if (sample == ids[t]) continue;
            train_pair(0, sample, 0.0, lr, cbow_hidden.data(), accum);
          }
          const double scale = 1.0 / static_cast<double>(n_ctx);
          for (std::size_t c = lo; c <= hi; ++c) {
            if (c == t) continue;
            double* v = table.vectors.row(ids[c]);
            for (std::size_t j = 0; j < k; ++j) v[j] += accum[j] * scale;
          }
        }
      }
    }
  }
  for (std::size_t j = 0; j < k; ++j) table.vectors(Vocabulary::kPadIndex, j) = 0.0;
  return table;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

}  // namespace arhuaco
