#include <catch2/catch.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "arhuaco/svm.hpp"

using namespace arhuaco;

namespace {

Vocabulary toy_vocab(std::size_t extra) {
  std::vector<std::string> tokens{kPadToken, kUnkToken};
  for (std::size_t i = 0; i < extra; ++i) tokens.push_back("t" + std::to_string(i));
  return Vocabulary(tokens);
}

TokenSequence window(const Vocabulary& vocab, const std::vector<std::size_t>& ids, WindowSpec spec,
                     std::optional<Label> label = std::nullopt) {
  TokenSequence seq;
  seq.spec = spec;
  seq.label = label;
  for (auto id : ids) seq.tokens.push_back(vocab.token(id));
  return seq;
}

}  // namespace

TEST_CASE("decision function", "[svm]") {
  auto vocab = toy_vocab(2);  // size 4

  SECTION("zero model decides malicious on the boundary") {
    SvmModel model(vocab, SvmConfig{});
    BowVector x{Vector(vocab.size(), 0.0)};
    CHECK(model.decision_function(x) == 0.0);
    SvmConfig cfg;
    cfg.window_spec = {2, 1};
    SvmModel fitted(vocab, Vector(vocab.size(), 0.0), 0.0, cfg);
    CHECK(fitted.predict(window(vocab, {2, 3}, {2, 1})).label == Label::malicious);
  }
  SECTION("w.x + b with matching dimension") {
    SvmModel model(vocab, Vector{0.0, 0.0, 1.0, 0.0}, -0.5, SvmConfig{});
    BowVector x{Vector{0.0, 0.0, 1.0, 0.0}};
    CHECK(model.decision_function(x) == Approx(0.5));
  }
  SECTION("wrong length is a dimension mismatch") {
    SvmModel model(vocab, SvmConfig{});
    BowVector x{Vector(vocab.size() + 1, 0.0)};
    CHECK_THROWS_MATCHES(model.decision_function(x), Error,
                         Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::dimension_mismatch; }));
  }
}

TEST_CASE("hinge loss", "[svm]") {
  auto vocab = toy_vocab(2);

  SECTION("satisfied margin has zero loss") {
    SvmModel model(vocab, Vector{0.0, 0.0, 2.0, 0.0}, 0.0, SvmConfig{});
    BowVector x{Vector{0.0, 0.0, 1.0, 0.0}};  // decision = 2
    CHECK(model.hinge_loss(x, +1.0, 0.0) == 0.0);
  }
  SECTION("zero decision with positive class costs one") {
    SvmModel model(vocab, SvmConfig{});
    BowVector x{Vector(vocab.size(), 1.0)};
    CHECK(model.hinge_loss(x, +1.0, 0.0) == 1.0);
  }
  SECTION("hand-evaluated regularized case") {
    // w = [1,0], decision 0.5 against c=-1: hinge 1.5, regularizer 0.5.
    Vocabulary two({kPadToken, kUnkToken});
    SvmModel model(two, Vector{1.0, 0.0}, 0.0, SvmConfig{});
    BowVector x{Vector{0.5, 0.0}};
    CHECK(model.decision_function(x) == Approx(0.5));
    CHECK(model.hinge_loss(x, -1.0, 1.0) == Approx(2.0));
  }
  SECTION("labels outside the encoding are rejected") {
    SvmModel model(vocab, SvmConfig{});
    BowVector x{Vector(vocab.size(), 0.0)};
    CHECK_THROWS_MATCHES(model.hinge_loss(x, 0.5, 0.0), Error,
                         Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::invalid_label; }));
  }
  SECTION("loss is zero exactly when the margin constraint holds") {
    Rng rng(3);
    Vocabulary two({kPadToken, kUnkToken});
    for (int trial = 0; trial < 200; ++trial) {
      SvmModel model(two, Vector{rng.uniform(-2, 2), rng.uniform(-2, 2)}, rng.uniform(-1, 1),
                     SvmConfig{});
      BowVector x{Vector{rng.uniform(0, 3), rng.uniform(0, 3)}};
      const double c = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const double margin = c * model.decision_function(x);
      const double loss = model.hinge_loss(x, c, 0.0);
      if (margin >= 1.0)
        CHECK(loss == 0.0);
      else
        CHECK(loss > 0.0);
    }
  }
}

TEST_CASE("positive scaling of features never flips the zero-bias decision sign", "[svm]") {
  Rng rng(17);
  Vocabulary vocab = toy_vocab(6);
  for (int trial = 0; trial < 100; ++trial) {
    Vector w(vocab.size());
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    SvmModel model(vocab, w, 0.0, SvmConfig{});
    BowVector x{Vector(vocab.size())};
    for (auto& v : x.counts) v = rng.uniform(0.0, 4.0);
    const double base = model.decision_function(x);
    const double scale = rng.uniform(0.1, 10.0);
    BowVector scaled{x.counts};
    for (auto& v : scaled.counts) v *= scale;
    const double scaled_value = model.decision_function(scaled);
    CHECK(scaled_value == Approx(base * scale).margin(1e-9));
    if (base != 0.0) CHECK(std::signbit(scaled_value) == std::signbit(base));
  }
}

TEST_CASE("subgradient matches finite differences away from the kink", "[svm]") {
  Rng rng(29);
  Vocabulary vocab = toy_vocab(4);
  const double lambda = 0.3;
  for (int trial = 0; trial < 50; ++trial) {
    Vector w(vocab.size());
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    BowVector x{Vector(vocab.size())};
    for (auto& v : x.counts) v = rng.uniform(0.0, 2.0);
    const double c = rng.bernoulli(0.5) ? 1.0 : -1.0;

    SvmModel probe(vocab, w, b, SvmConfig{});
    const double margin = c * probe.decision_function(x);
    if (std::fabs(margin - 1.0) < 1e-3) continue;  // sample away from the kink

    // Analytic subgradient of hinge + lambda/2 ||w||^2.
    Vector grad(w.size());
    for (std::size_t i = 0; i < w.size(); ++i)
      grad[i] = lambda * w[i] + (margin < 1.0 ? -c * x.counts[i] : 0.0);

    Vector params = w;
    auto loss = [&]() {
      SvmModel m(vocab, params, b, SvmConfig{});
      return m.hinge_loss(x, c, lambda);
    };
    auto res = finite_diff_check(loss, params, grad, 1e-6);
    CHECK(res.max_rel_error <= 1e-4);
  }
}

namespace {

std::vector<TokenSequence> separable_set(const Vocabulary& vocab, int per_class, Rng& rng) {
  // normal windows draw from t0/t1, malicious from t2/t3.
  std::vector<TokenSequence> out;
  const WindowSpec spec{2, 1};
  for (int i = 0; i < per_class; ++i) {
    out.push_back(window(vocab, {2, 2 + rng.below(2)}, spec, Label::normal));
    out.push_back(window(vocab, {4, 4 + rng.below(2)}, spec, Label::malicious));
  }
  return out;
}

}  // namespace

TEST_CASE("training separates a toy problem", "[svm]") {
  Rng rng(31);
  auto vocab = toy_vocab(4);
  SvmConfig cfg;
  cfg.window_spec = {2, 1};
  cfg.lambda = 1e-6;
  cfg.epochs = 200;
  cfg.batch_size = 8;
  cfg.seed = 5;
  SvmModel model(vocab, cfg);
  auto data = separable_set(vocab, 40, rng);
  auto result = model.train(data, {});
  CHECK(result.curve.points.back().train_acc == 1.0);

  SECTION("margins approach one as lambda vanishes") {
    std::size_t satisfied = 0, total = 0;
    for (const auto& seq : data) {
      const double margin =
          label_sign(*seq.label) * model.decision_function(bow_featurize(seq, vocab));
      ++total;
      if (margin >= 0.99) ++satisfied;
    }
    CHECK(satisfied == total);
  }
  SECTION("prediction uses the composed pipeline") {
    CHECK(model.predict(window(vocab, {4, 5}, cfg.window_spec)).label == Label::malicious);
    CHECK(model.predict(window(vocab, {2, 3}, cfg.window_spec)).label == Label::normal);
  }
  SECTION("spec-mismatched window is a dimension mismatch") {
    CHECK_THROWS_MATCHES(model.predict(window(vocab, {2, 3, 2}, {3, 1})), Error,
                         Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::dimension_mismatch; }));
  }
}

TEST_CASE("huge regularization collapses the weights", "[svm]") {
  Rng rng(37);
  auto vocab = toy_vocab(4);
  SvmConfig cfg;
  cfg.window_spec = {2, 1};
  cfg.lambda = 1e5;
  cfg.epochs = 60;
  cfg.seed = 2;
  SvmModel model(vocab, cfg);
  auto data = separable_set(vocab, 20, rng);
  model.train(data, {});
  double wmax = 0.0;
  for (double v : model.weights()) wmax = std::max(wmax, std::fabs(v));
  CHECK(wmax < 0.05);
}

TEST_CASE("svm training is deterministic per seed", "[svm]") {
  Rng rng(43);
  auto vocab = toy_vocab(4);
  SvmConfig cfg;
  cfg.window_spec = {2, 1};
  cfg.epochs = 10;
  cfg.seed = 7;
  auto data = separable_set(vocab, 15, rng);
  SvmModel m1(vocab, cfg), m2(vocab, cfg);
  m1.train(data, {});
  m2.train(data, {});
  CHECK(m1 == m2);
}

TEST_CASE("single-class svm training is rejected", "[svm]") {
  auto vocab = toy_vocab(4);
  SvmConfig cfg;
  cfg.window_spec = {2, 1};
  SvmModel model(vocab, cfg);
  std::vector<TokenSequence> only_normal;
  for (int i = 0; i < 10; ++i)
    only_normal.push_back(window(vocab, {2, 3}, cfg.window_spec, Label::normal));
  CHECK_THROWS_MATCHES(model.train(only_normal, {}), Error,
                       Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::single_class_dataset; }));
}

TEST_CASE("svm model file round trip", "[svm]") {
  Rng rng(53);
  auto vocab = toy_vocab(4);
  SvmConfig cfg;
  cfg.window_spec = {2, 1};
  cfg.epochs = 15;
  SvmModel model(vocab, cfg);
  auto data = separable_set(vocab, 20, rng);
  model.train(data, {});

  const auto path = (std::filesystem::temp_directory_path() / "arhuaco_test_svm.arhs").string();
  model.save(path);
  auto loaded = SvmModel::load(path);
  CHECK(loaded == model);
  for (int trial = 0; trial < 100; ++trial) {
    auto seq = window(vocab, {rng.below(vocab.size()), rng.below(vocab.size())}, cfg.window_spec);
    CHECK(model.predict(seq).score == loaded.predict(seq).score);
  }

  SECTION("bit flips are caught") {
    auto bytes = read_file_bytes(path);
    bytes[bytes.size() / 3] ^= 0x40;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_MATCHES(SvmModel::load(path), Error,
                         Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::checksum_mismatch; }));
  }
  std::filesystem::remove(path);
}
