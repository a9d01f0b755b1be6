#include <catch2/catch.hpp>

#include <cstdio>
#include <filesystem>

#include "arhuaco/features.hpp"

using namespace arhuaco;

namespace {

TokenSequence make_seq(std::vector<std::string> tokens) {
  TokenSequence seq;
  seq.spec = {tokens.size(), 1};
  seq.tokens = std::move(tokens);
  return seq;
}

}  // namespace

TEST_CASE("vocabulary construction", "[features]") {
  SECTION("frequency order with reserved slots") {
    auto vocab = build_vocabulary({make_seq({"a", "a", "b"})}, 10, 1);
    CHECK(vocab.tokens() == std::vector<std::string>{kPadToken, kUnkToken, "a", "b"});
  }
  SECTION("min count filters singletons") {
    auto vocab = build_vocabulary({make_seq({"a", "a", "b"})}, 10, 2);
    CHECK(vocab.tokens() == std::vector<std::string>{kPadToken, kUnkToken, "a"});
  }
  SECTION("empty corpus") {
    CHECK_THROWS_MATCHES(build_vocabulary({}, 10, 1), Error,
                         Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::empty_corpus; }));
  }
  SECTION("max size truncates including reserved slots") {
    auto vocab = build_vocabulary({make_seq({"a", "a", "b", "b", "c"})}, 3, 1);
    CHECK(vocab.size() == 3);
    CHECK(vocab.token(2) == "a");
  }
  SECTION("frequency ties break by first occurrence") {
    auto vocab = build_vocabulary({make_seq({"z", "q", "z", "q", "m"})}, 10, 1);
    CHECK(vocab.token(2) == "z");
    CHECK(vocab.token(3) == "q");
    CHECK(vocab.token(4) == "m");
  }
  SECTION("padding tokens in windows are not counted") {
    auto vocab = build_vocabulary({make_seq({"a", kPadToken, kPadToken})}, 10, 1);
    CHECK(vocab.tokens() == std::vector<std::string>{kPadToken, kUnkToken, "a"});
  }
  SECTION("build is order-stable") {
    std::vector<TokenSequence> corpus{make_seq({"x", "y"}), make_seq({"y", "z"})};
    auto v1 = build_vocabulary(corpus, 100, 1);
    auto v2 = build_vocabulary(corpus, 100, 1);
    CHECK(v1 == v2);
  }
}

TEST_CASE("bag of words featurization", "[features]") {
  Vocabulary vocab({kPadToken, kUnkToken, "a", "b"});

  SECTION("counts per vocabulary slot") {
    auto x = bow_featurize(make_seq({"a", "a", "b"}), vocab);
    CHECK(x.counts == Vector{0.0, 0.0, 2.0, 1.0});
  }
  SECTION("unseen tokens land in the unk bucket") {
    auto x = bow_featurize(make_seq({"mystery", "mystery"}), vocab);
    CHECK(x.counts == Vector{0.0, 2.0, 0.0, 0.0});
  }
  SECTION("padding lands in the pad bucket") {
    auto x = bow_featurize(make_seq(std::vector<std::string>(5, kPadToken)), vocab);
    CHECK(x.counts == Vector{5.0, 0.0, 0.0, 0.0});
  }
  SECTION("counts always sum to n") {
    Rng rng(3);
    const std::vector<std::string> pool{"a", "b", "c", "d", kPadToken};
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::string> tokens;
      const std::size_t n = 1 + rng.below(60);
      for (std::size_t i = 0; i < n; ++i) tokens.push_back(pool[rng.below(pool.size())]);
      auto x = bow_featurize(make_seq(tokens), vocab);
      double sum = 0.0;
      for (double c : x.counts) sum += c;
      CHECK(sum == static_cast<double>(n));
    }
  }
  SECTION("sparse and dense featurizations agree") {
    auto seq = make_seq({"a", "b", "b", "nope", kPadToken});
    auto dense = bow_featurize(seq, vocab);
    auto sparse = bow_featurize_sparse(seq, vocab);
    Vector rebuilt(vocab.size(), 0.0);
    for (auto [i, c] : sparse) rebuilt[i] = c;
    CHECK(rebuilt == dense.counts);
  }
}

TEST_CASE("sequence embedding", "[features]") {
  Vocabulary vocab({kPadToken, kUnkToken, "a", "b"});
  EmbeddingTable table(vocab, 3);
  for (std::size_t i = 1; i < vocab.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) table.vectors(i, j) = static_cast<double>(i * 10 + j);

  SECTION("rows follow token order") {
    auto m = embed_sequence(make_seq({"b", "a"}), table);
    REQUIRE(m.rows == 2);
    REQUIRE(m.cols == 3);
    CHECK(m(0, 0) == 30.0);
    CHECK(m(1, 0) == 20.0);
  }
  SECTION("all-pad window embeds to zeros") {
    auto m = embed_sequence(make_seq(std::vector<std::string>(4, kPadToken)), table);
    for (double v : m.a) CHECK(v == 0.0);
  }
  SECTION("oov tokens use the unk row") {
    auto m = embed_sequence(make_seq({"never-seen"}), table);
    CHECK(m(0, 0) == 10.0);
  }
}

TEST_CASE("embedding table file round trip", "[features]") {
  Vocabulary vocab({kPadToken, kUnkToken, "file", "open", "/etc/passwd"});
  EmbeddingTable table(vocab, 4);
  Rng rng(9);
  for (std::size_t i = 1; i < vocab.size(); ++i)
    for (std::size_t j = 0; j < 4; ++j) table.vectors(i, j) = rng.normal();

  const auto path = std::filesystem::temp_directory_path() / "arhuaco_test_emb.arh1";
  table.save(path.string());
  auto loaded = EmbeddingTable::load(path.string());
  CHECK(loaded.vocab == table.vocab);
  CHECK(loaded.dim == table.dim);
  CHECK(loaded.vectors.a == table.vectors.a);  // bit-exact
  std::filesystem::remove(path);
}

namespace {

// Two disjoint co-occurrence clusters; tokens never cross clusters.
std::vector<TokenSequence> cluster_corpus(Rng& rng, int sequences) {
  const std::vector<std::string> cluster_a{"a0", "a1", "a2", "a3", "a4"};
  const std::vector<std::string> cluster_b{"b0", "b1", "b2", "b3", "b4"};
  std::vector<TokenSequence> corpus;
  for (int i = 0; i < sequences; ++i) {
    const auto& pool = (i % 2 == 0) ? cluster_a : cluster_b;
    std::vector<std::string> tokens;
    for (int t = 0; t < 8; ++t) tokens.push_back(pool[rng.below(pool.size())]);
    corpus.push_back(make_seq(tokens));
  }
  return corpus;
}

}  // namespace

TEST_CASE("word2vec learns co-occurrence geometry", "[features]") {
  Rng rng(17);
  auto corpus = cluster_corpus(rng, 400);
  auto vocab = build_vocabulary(corpus, 100, 1);

  Word2VecConfig cfg;
  cfg.dim = 8;
  cfg.window = 3;
  cfg.negatives = 4;
  cfg.epochs = 10;
  cfg.seed = 11;
  auto table = train_word2vec(corpus, vocab, cfg);

  CHECK(table.vectors.cols == 8);
  for (double v : table.vectors.a) CHECK(std::isfinite(v));
  for (std::size_t j = 0; j < table.dim; ++j) CHECK(table.vectors(Vocabulary::kPadIndex, j) == 0.0);

  double intra = 0.0, inter = 0.0;
  int n_intra = 0, n_inter = 0;
  auto row = [&](const std::string& t) {
    const std::size_t id = vocab.lookup(t);
    return std::span<const double>(table.vectors.row(id), table.dim);
  };
  const std::vector<std::string> a{"a0", "a1", "a2", "a3", "a4"};
  const std::vector<std::string> b{"b0", "b1", "b2", "b3", "b4"};
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      intra += cosine_similarity(row(a[i]), row(a[j]));
      intra += cosine_similarity(row(b[i]), row(b[j]));
      n_intra += 2;
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
      inter += cosine_similarity(row(a[i]), row(b[j]));
      ++n_inter;
    }
  }
  CHECK(intra / n_intra > inter / n_inter);
}

TEST_CASE("word2vec is deterministic per seed", "[features]") {
  Rng rng(23);
  auto corpus = cluster_corpus(rng, 60);
  auto vocab = build_vocabulary(corpus, 100, 1);
  Word2VecConfig cfg;
  cfg.dim = 6;
  cfg.epochs = 2;
  cfg.seed = 5;
  auto t1 = train_word2vec(corpus, vocab, cfg);
  auto t2 = train_word2vec(corpus, vocab, cfg);
  CHECK(t1.vectors.a == t2.vectors.a);

  cfg.seed = 6;
  auto t3 = train_word2vec(corpus, vocab, cfg);
  CHECK(t1.vectors.a != t3.vectors.a);
}

TEST_CASE("word2vec dimension follows the profile", "[features]") {
  Rng rng(31);
  auto corpus = cluster_corpus(rng, 40);
  auto vocab = build_vocabulary(corpus, 100, 1);
  for (std::size_t k : {20, 10}) {
    Word2VecConfig cfg;
    cfg.dim = k;
    cfg.epochs = 1;
    auto table = train_word2vec(corpus, vocab, cfg);
    CHECK(table.vectors.cols == k);
    CHECK(table.vectors.rows == vocab.size());
  }
}

TEST_CASE("cbow variant trains and stays finite", "[features]") {
  Rng rng(37);
  auto corpus = cluster_corpus(rng, 80);
  auto vocab = build_vocabulary(corpus, 100, 1);
  Word2VecConfig cfg;
  cfg.dim = 6;
  cfg.epochs = 3;
  cfg.cbow = true;
  auto table = train_word2vec(corpus, vocab, cfg);
  for (double v : table.vectors.a) CHECK(std::isfinite(v));
}
