#include <catch2/catch.hpp>

#include <cmath>

#include "arhuaco/nn.hpp"
#include "arhuaco/rng.hpp"

using namespace arhuaco;

TEST_CASE("average loss is the arithmetic mean", "[nn]") {
  CHECK(average_loss(std::vector<double>{1.0, 3.0}) == Approx(2.0));
  CHECK(average_loss(std::vector<double>{0.0}) == 0.0);
  CHECK_THROWS_MATCHES(average_loss(std::vector<double>{}), Error,
                       Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::empty_batch; }));
}

TEST_CASE("sgd with momentum", "[nn]") {
  OptimizerConfig cfg;
  cfg.kind = OptimKind::sgd_momentum;
  cfg.learning_rate = 0.1;
  cfg.decay = 0.0;

  SECTION("plain sgd when momentum is zero") {
    cfg.momentum = 0.0;
    Vector p{0.0}, g{1.0};
    OptimState st;
    sgd_momentum_step(p, g, st, cfg, 0);
    CHECK(p[0] == Approx(-0.1));
  }
  SECTION("zero gradient leaves params unchanged") {
    cfg.momentum = 0.0;
    Vector p{1.5, -2.0}, g{0.0, 0.0};
    OptimState st;
    sgd_momentum_step(p, g, st, cfg, 0);
    CHECK(p == Vector{1.5, -2.0});
  }
  SECTION("two identical steps with momentum 0.8 reach -0.28") {
    // v1 = -0.1, p1 = -0.1; v2 = 0.8*(-0.1) - 0.1 = -0.18, p2 = -0.28.
    cfg.momentum = 0.8;
    Vector p{0.0}, g{1.0};
    OptimState st;
    sgd_momentum_step(p, g, st, cfg, 0);
    sgd_momentum_step(p, g, st, cfg, 1);
    CHECK(p[0] == Approx(-0.28));
  }
  SECTION("learning-rate decay divides by 1 + decay*t") {
    cfg.momentum = 0.0;
    cfg.decay = 1.0;
    Vector p{0.0}, g{1.0};
    OptimState st;
    sgd_momentum_step(p, g, st, cfg, 1);  // lr_t = 0.1 / 2
    CHECK(p[0] == Approx(-0.05));
  }
  SECTION("shape mismatch") {
    Vector p{0.0}, g{1.0, 2.0};
    OptimState st;
    CHECK_THROWS_MATCHES(sgd_momentum_step(p, g, st, cfg, 0), Error,
                         Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::shape_mismatch; }));
  }
}

TEST_CASE("adadelta", "[nn]") {
  auto cfg = adadelta_config(0.95, 1e-6);

  SECTION("first step matches the closed form") {
    Vector p{0.0}, g{1.0};
    OptimState st;
    adadelta_step(p, g, st, cfg);
    const double expected = -std::sqrt(1e-6 / (0.05 + 1e-6));
    CHECK(p[0] == Approx(expected).epsilon(1e-12));
  }
  SECTION("zero gradient leaves params unchanged but decays accumulators") {
    Vector p{1.0}, g{1.0};
    OptimState st;
    adadelta_step(p, g, st, cfg);
    const double p_after = p[0];
    const double eg2 = st.acc1[0];
    Vector zero{0.0};
    adadelta_step(p, zero, st, cfg);
    CHECK(p[0] == p_after);
    CHECK(st.acc1[0] == Approx(0.95 * eg2));
  }
  SECTION("deterministic") {
    Vector p1{0.3}, p2{0.3}, g{0.7};
    OptimState s1, s2;
    for (int i = 0; i < 5; ++i) {
      adadelta_step(p1, g, s1, cfg);
      adadelta_step(p2, g, s2, cfg);
    }
    CHECK(p1[0] == p2[0]);
  }
}

TEST_CASE("rmsprop", "[nn]") {
  auto cfg = rmsprop_config(0.01, 0.9, 1e-8);

  SECTION("first step") {
    Vector p{0.0}, g{1.0};
    OptimState st;
    rmsprop_step(p, g, st, cfg);
    CHECK(p[0] == Approx(-0.01 / std::sqrt(0.1 + 1e-8)).epsilon(1e-12));
  }
  SECTION("zero gradient leaves params unchanged") {
    Vector p{2.0}, g{0.0};
    OptimState st;
    rmsprop_step(p, g, st, cfg);
    CHECK(p[0] == 2.0);
  }
  SECTION("zero learning rate is a no-op") {
    auto frozen = rmsprop_config(0.0, 0.9, 1e-8);
    Vector p{2.0}, g{5.0};
    OptimState st;
    rmsprop_step(p, g, st, frozen);
    CHECK(p[0] == 2.0);
  }
}

TEST_CASE("dropout masks", "[nn]") {
  SECTION("rate zero is the identity") {
    Rng rng(1);
    auto mask = dropout_mask(64, 0.0, rng);
    for (double m : mask) CHECK(m == 1.0);
  }
  SECTION("rate one is rejected") {
    Rng rng(1);
    CHECK_THROWS_MATCHES(dropout_mask(4, 1.0, rng), Error,
                         Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::invalid_rate; }));
  }
  SECTION("scaled mask preserves expectation") {
    Rng rng(42);
    auto mask = dropout_mask(1'000'000, 0.5, rng);
    double mean = 0.0;
    for (double m : mask) mean += m;
    mean /= static_cast<double>(mask.size());
    CHECK(mean == Approx(1.0).margin(0.01));
  }
  SECTION("deterministic per seed") {
    Rng a(7), b(7);
    CHECK(dropout_mask(256, 0.3, a) == dropout_mask(256, 0.3, b));
  }
}

TEST_CASE("finite difference check on a quadratic", "[nn]") {
  Vector p{3.0, -1.0, 0.5};
  Vector analytic{6.0, -2.0, 1.0};
  auto loss = [&p]() {
    double s = 0.0;
    for (double x : p) s += x * x;
    return s;
  };
  auto res = finite_diff_check(loss, p, analytic, 1e-5);
  CHECK(res.max_rel_error < 1e-8);
  CHECK(p == Vector{3.0, -1.0, 0.5});  // params restored
}

TEST_CASE("every optimizer is idle on zero gradients", "[nn]") {
  Rng rng(11);
  for (auto kind : {OptimKind::sgd_momentum, OptimKind::adadelta, OptimKind::rmsprop}) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    cfg.learning_rate = 0.05;
    Optimizer opt(cfg);
    Vector p(32), g(32, 0.0);
    for (auto& x : p) x = rng.uniform(-2.0, 2.0);
    const Vector before = p;
    for (int step = 0; step < 3; ++step) {
      opt.step(p, g, 0);
      opt.advance();
    }
    CHECK(p == before);
  }
}

TEST_CASE("gradient clipping caps the global norm", "[nn]") {
  Vector a{3.0, 4.0};   // norm 5
  Vector b{0.0, 12.0};  // combined norm 13
  const double norm = clip_gradients({&a, &b}, 6.5);
  CHECK(norm == Approx(13.0));
  CHECK(a[0] == Approx(1.5));
  CHECK(b[1] == Approx(6.0));
}
