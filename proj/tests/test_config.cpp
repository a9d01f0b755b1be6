#include <catch2/catch.hpp>

#include <sstream>

#include "arhuaco/config.hpp"

using namespace arhuaco;

TEST_CASE("config document parsing", "[config]") {
  std::istringstream in(R"(
# run profile
[run]
seed = 42          # trailing comment
profile = "network"

[cnn]
filter_sizes = [2, 3]
dropout_rate = 0.25
fine_tune_embeddings = false

[engine]
mode = "network_first"
responses = ["alert", "stop_job"]
)");
  auto doc = ConfigDoc::parse(in);
  CHECK(doc.find("run", "seed")->as_int("seed") == 42);
  CHECK(doc.find("run", "profile")->as_string("profile") == "network");
  CHECK(doc.find("cnn", "dropout_rate")->as_double("x") == 0.25);
  CHECK(doc.find("cnn", "fine_tune_embeddings")->as_bool("x") == false);
  CHECK(doc.find("cnn", "filter_sizes")->as_array("x").size() == 2);
  CHECK(doc.find("engine", "responses")->as_array("x")[1].as_string("x") == "stop_job");
  CHECK(doc.find("nope", "nope") == nullptr);

  SECTION("type coercion only widens integers") {
    CHECK(doc.find("run", "seed")->as_double("seed") == 42.0);
    CHECK_THROWS_MATCHES(doc.find("run", "profile")->as_int("profile"), Error,
                         Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::config_error; }));
  }
}

TEST_CASE("config syntax errors", "[config]") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return ConfigDoc::parse(in);
  };
  CHECK_THROWS_MATCHES(parse("[broken\n"), Error,
                       Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::config_error; }));
  CHECK_THROWS_MATCHES(parse("key value\n"), Error,
                       Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::config_error; }));
  CHECK_THROWS_MATCHES(parse("key = \"open\n"), Error,
                       Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::config_error; }));
  CHECK_THROWS_MATCHES(parse("key = what\n"), Error,
                       Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::config_error; }));
}

TEST_CASE("profiles bake in the published hyperparameters", "[config]") {
  auto sys = RunConfig::for_profile("syscall");
  CHECK(sys.window.tokens_per_line == 7);
  CHECK(sys.window.lines == 6);
  CHECK(sys.window.total_tokens() == 42);
  CHECK(sys.w2v.dim == 20);
  CHECK(sys.cnn.filter_sizes == std::vector<std::size_t>{3, 4, 5});
  CHECK(sys.cnn.total_filters == 20);
  CHECK(sys.cnn.optimizer.kind == OptimKind::sgd_momentum);
  CHECK(sys.cnn.optimizer.learning_rate == 0.001);
  CHECK(sys.cnn.optimizer.momentum == 0.80);
  CHECK(sys.cnn.optimizer.decay == 1e-5);

  auto net = RunConfig::for_profile("network");
  CHECK(net.window.tokens_per_line == 5);
  CHECK(net.window.lines == 1);
  CHECK(net.window.total_tokens() == 5);
  CHECK(net.w2v.dim == 10);
  CHECK(net.cnn.filter_sizes == std::vector<std::size_t>{2, 3});
  CHECK(net.cnn.total_filters == 3);

  CHECK(net.lstm.optimizer.kind == OptimKind::rmsprop);
  CHECK(net.lstm.optimizer.learning_rate == 0.01);
  CHECK(net.svm.optimizer.kind == OptimKind::adadelta);

  CHECK_THROWS_MATCHES(RunConfig::for_profile("bogus"), Error,
                       Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::config_error; }));
}

TEST_CASE("config file application and overrides", "[config]") {
  std::istringstream in(R"(
[run]
profile = "network"
seed = 9

[features]
epochs = 2
embedding_dim = 12

[svm]
lambda = 0.01

[engine]
mode = "random_sample"
sample_probability = 0.25
responses = ["alert", "forensics"]
forensics_retention = 64
)");
  auto doc = ConfigDoc::parse(in);
  auto rc = RunConfig::for_profile("syscall");
  rc.apply_file(doc);
  CHECK(rc.profile == "network");
  CHECK(rc.seed == 9);
  CHECK(rc.w2v.epochs == 2);
  CHECK(rc.w2v.dim == 12);
  CHECK(rc.cnn.embedding_dim == 12);
  CHECK(rc.svm.lambda == 0.01);
  CHECK(rc.engine.policy.mode == AnalysisMode::random_sample);
  CHECK(rc.engine.policy.sample_probability == 0.25);
  REQUIRE(rc.engine.policy.responses.size() == 2);
  CHECK(rc.engine.policy.responses[1].kind == ResponseAction::Kind::forensics);
  CHECK(rc.engine.policy.responses[1].forensics_retention == 64);

  SECTION("profile can be pinned against the file") {
    auto rc2 = RunConfig::for_profile("syscall");
    rc2.apply_file(doc, /*ignore_profile=*/true);
    CHECK(rc2.profile == "syscall");
    CHECK(rc2.w2v.dim == 12);  // other keys still apply
  }
}

TEST_CASE("unknown keys and sections are rejected", "[config]") {
  auto rc = RunConfig::for_profile("syscall");
  {
    std::istringstream in("[run]\nspeed = 3\n");
    auto doc = ConfigDoc::parse(in);
    CHECK_THROWS_MATCHES(rc.apply_file(doc), Error,
                         Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::config_error; }));
  }
  {
    std::istringstream in("[rocket]\nfuel = 3\n");
    auto doc = ConfigDoc::parse(in);
    CHECK_THROWS_MATCHES(rc.apply_file(doc), Error,
                         Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::config_error; }));
  }
}

TEST_CASE("manifest snapshot records every knob", "[config]") {
  auto rc = RunConfig::for_profile("network");
  auto j = rc.to_manifest_json();
  CHECK(j["profile"] == "network");
  CHECK(j["ingest"]["m"] == 5);
  CHECK(j["ingest"]["l"] == 1);
  CHECK(j["cnn"]["total_filters"] == 3);
  CHECK(j["cnn"]["learning_rate"] == 0.001);
  CHECK(j["svm"]["lambda"] == 1e-4);
  CHECK(j["lstm"]["learning_rate"] == 0.01);
  CHECK(j["engine"]["alarm_threshold"] == 3);
  CHECK(j["engine"]["alarm_window"] == 20);
  CHECK(j["synth"]["source"] == "network");
}
