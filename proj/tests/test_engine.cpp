#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "arhuaco/engine.hpp"

using namespace arhuaco;

namespace {

// Hand-weighted SVM classifiers give exact control over verdicts.
Classifier passwd_syscall_model() {
  Vocabulary vocab({kPadToken, kUnkToken, "/etc/passwd"});
  SvmConfig cfg;
  cfg.window_spec = syscall_window_spec();
  return Classifier(SvmModel(vocab, Vector{0.0, 0.0, 1.0}, -0.5, cfg));
}

Classifier irc_network_model() {
  Vocabulary vocab({kPadToken, kUnkToken, "irc.qeast.net"});
  SvmConfig cfg;
  cfg.window_spec = network_window_spec();
  return Classifier(SvmModel(vocab, Vector{0.0, 0.0, 1.0}, -0.5, cfg));
}

std::vector<std::string> benign_syscall_lines(int windows) {
  std::vector<std::string> lines;
  for (int w = 0; w < windows; ++w)
    for (int i = 0; i < 6; ++i) lines.push_back("file read fd 4 size 4096");
  return lines;
}

std::vector<std::string> malicious_syscall_window() {
  std::vector<std::string> lines;
  for (int i = 0; i < 5; ++i) lines.push_back("file read fd 4 size 4096");
  lines.push_back("file open fd 4 name /etc/passwd");
  return lines;
}

std::vector<std::string> benign_network_lines(int n) {
  std::vector<std::string> lines;
  for (int i = 0; i < n; ++i) lines.push_back("IP.z IP.w alice-disk-se.gridka.de 1 C_INTERNET");
  return lines;
}

EngineConfig basic_config(AnalysisMode mode = AnalysisMode::secure_full,
                          std::size_t threshold = 1, std::size_t window = 20) {
  EngineConfig cfg;
  cfg.policy.mode = mode;
  cfg.policy.alarm_threshold = threshold;
  cfg.policy.alarm_window = window;
  cfg.policy.responses = {ResponseAction{ResponseAction::Kind::alert, "", 100}};
  cfg.seed = 7;
  return cfg;
}

std::size_t count_events(const JobReport& rep, const std::string& type,
                         const std::string& source = "") {
  std::size_t n = 0;
  for (const auto& e : rep.events) {
    if (e.at("event") != type) continue;
    if (!source.empty() && e.value("source", "") != source) continue;
    ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("accounting identity holds exactly", "[engine]") {
  Engine engine(passwd_syscall_model(), irc_network_model(), basic_config());

  auto sys = benign_syscall_lines(4);
  sys[3] = "   ";           // malformed inside slot 0
  sys.push_back("tail_1");  // incomplete slot, never counted
  auto net = benign_network_lines(3);
  net.push_back("singleton");  // malformed network slot

  auto rep = engine.process_lines("job-a", sys, net);
  CHECK(rep.syscall.lines_in == 25);
  CHECK(rep.syscall.windows_in == 4);
  CHECK(rep.syscall.malformed == 1);
  CHECK(rep.syscall.verdicts == 3);
  CHECK(rep.syscall.skipped == 0);
  CHECK(rep.syscall.windows_in ==
        rep.syscall.verdicts + rep.syscall.skipped + rep.syscall.malformed);

  CHECK(rep.network.lines_in == 4);
  CHECK(rep.network.windows_in == 4);
  CHECK(rep.network.malformed == 1);
  CHECK(rep.network.windows_in ==
        rep.network.verdicts + rep.network.skipped + rep.network.malformed);
}

TEST_CASE("network-first escalation", "[engine]") {
  SECTION("benign network admits zero syscall verdicts") {
    Engine engine(passwd_syscall_model(), irc_network_model(),
                  basic_config(AnalysisMode::network_first));
    auto rep = engine.process_lines("job-b", malicious_syscall_window(), benign_network_lines(10));
    CHECK(rep.syscall.verdicts == 0);
    CHECK(rep.syscall.skipped == rep.syscall.windows_in);
    CHECK(count_events(rep, "verdict", "syscall") == 0);
    CHECK(rep.network.verdicts == 10);
  }
  SECTION("suspicious network activates syscall analysis") {
    Engine engine(passwd_syscall_model(), irc_network_model(),
                  basic_config(AnalysisMode::network_first));
    std::vector<std::string> net{"IP.x IP.y irc.qeast.net 1 C_INTERNET"};
    auto net_rest = benign_network_lines(9);
    net.insert(net.end(), net_rest.begin(), net_rest.end());
    std::vector<std::string> sys;
    for (int w = 0; w < 8; ++w)
      for (const auto& l : malicious_syscall_window()) sys.push_back(l);
    auto rep = engine.process_lines("job-c", sys, net);
    CHECK(count_events(rep, "escalation") == 1);
    CHECK(rep.syscall.verdicts > 0);
    CHECK(rep.syscall.verdicts + rep.syscall.skipped == rep.syscall.windows_in);
    // escalation is monotone: verdicts form a suffix of the window sequence
    bool seen_verdict = false;
    for (const auto& e : rep.events) {
      if (e.at("event") == "verdict" && e.value("source", "") == "syscall") seen_verdict = true;
    }
    CHECK(seen_verdict);
  }
}

TEST_CASE("random sampling is all-or-nothing per job", "[engine]") {
  SECTION("probability zero yields no verdicts at all") {
    auto cfg = basic_config(AnalysisMode::random_sample);
    cfg.policy.sample_probability = 0.0;
    Engine engine(passwd_syscall_model(), irc_network_model(), cfg);
    auto rep = engine.process_lines("job-d", benign_syscall_lines(5), benign_network_lines(5));
    CHECK(rep.syscall.verdicts == 0);
    CHECK(rep.network.verdicts == 0);
    CHECK(rep.syscall.skipped == rep.syscall.windows_in);
    CHECK(rep.network.skipped == rep.network.windows_in);
  }
  SECTION("probability one monitors every job") {
    auto cfg = basic_config(AnalysisMode::random_sample);
    cfg.policy.sample_probability = 1.0;
    Engine engine(passwd_syscall_model(), irc_network_model(), cfg);
    auto rep = engine.process_lines("job-e", benign_syscall_lines(5), {});
    CHECK(rep.syscall.verdicts == 5);
  }
  SECTION("intermediate probability splits jobs deterministically") {
    auto cfg = basic_config(AnalysisMode::random_sample);
    cfg.policy.sample_probability = 0.5;
    Engine engine(passwd_syscall_model(), irc_network_model(), cfg);
    std::size_t monitored = 0;
    for (int j = 0; j < 40; ++j) {
      auto rep = engine.process_lines("job-" + std::to_string(j), benign_syscall_lines(2), {});
      const bool mon = rep.syscall.verdicts > 0;
      CHECK((mon ? rep.syscall.verdicts == 2 : rep.syscall.skipped == 2));
      monitored += mon;
      auto rep2 = engine.process_lines("job-" + std::to_string(j), benign_syscall_lines(2), {});
      CHECK((rep2.syscall.verdicts > 0) == mon);  // stable per job id
    }
    CHECK(monitored > 8);
    CHECK(monitored < 32);
  }
}

TEST_CASE("alarm policy", "[engine]") {
  SECTION("threshold one alerts on a single malicious verdict") {
    Engine engine(passwd_syscall_model(), irc_network_model(), basic_config());
    auto rep = engine.process_lines("job-f", malicious_syscall_window(), {});
    CHECK(rep.alarms == 1);
    CHECK(count_events(rep, "action") == 1);
  }
  SECTION("two malicious verdicts under threshold three stay silent") {
    Engine engine(passwd_syscall_model(), irc_network_model(),
                  basic_config(AnalysisMode::secure_full, 3));
    std::vector<std::string> sys;
    for (int i = 0; i < 2; ++i)
      for (const auto& l : malicious_syscall_window()) sys.push_back(l);
    auto rep = engine.process_lines("job-g", sys, {});
    CHECK(rep.syscall.verdicts == 2);
    CHECK(rep.alarms == 0);
  }
  SECTION("episodes are per job") {
    Engine engine(passwd_syscall_model(), irc_network_model(),
                  basic_config(AnalysisMode::secure_full, 2));
    std::vector<std::string> two_bad;
    for (int i = 0; i < 2; ++i)
      for (const auto& l : malicious_syscall_window()) two_bad.push_back(l);
    auto rep_a = engine.process_lines("job-A", two_bad, {});
    auto rep_b = engine.process_lines("job-B", malicious_syscall_window(), {});
    CHECK(rep_a.alarms == 1);  // A saw two malicious verdicts
    CHECK(rep_b.alarms == 0);  // B saw only one
  }
  SECTION("episode resets after firing") {
    Engine engine(passwd_syscall_model(), irc_network_model(),
                  basic_config(AnalysisMode::secure_full, 2, 10));
    std::vector<std::string> sys;
    for (int i = 0; i < 4; ++i)
      for (const auto& l : malicious_syscall_window()) sys.push_back(l);
    auto rep = engine.process_lines("job-h", sys, {});
    CHECK(rep.syscall.verdicts == 4);
    CHECK(rep.alarms == 2);  // 2 + 2 verdicts, one alarm per pair
  }
}

TEST_CASE("stop requests on the control channel", "[engine]") {
  auto cfg = basic_config();
  cfg.policy.responses = {ResponseAction{ResponseAction::Kind::alert, "", 100},
                          ResponseAction{ResponseAction::Kind::stop_job, "", 100}};
  Engine engine(passwd_syscall_model(), irc_network_model(), cfg);

  SECTION("one stop per alarm episode") {
    auto rep = engine.process_lines("job-i", malicious_syscall_window(), {});
    REQUIRE(rep.control_events.size() == 1);
    CHECK(rep.control_events[0].at("action") == "stop");
    CHECK(rep.control_events[0].at("job_id") == "job-i");
  }
  SECTION("two episodes emit two stops") {
    std::vector<std::string> sys;
    for (int i = 0; i < 2; ++i)
      for (const auto& l : malicious_syscall_window()) sys.push_back(l);
    auto rep = engine.process_lines("job-j", sys, {});
    CHECK(rep.control_events.size() == 2);
  }
  SECTION("alert-only policy emits no stops") {
    Engine quiet(passwd_syscall_model(), irc_network_model(), basic_config());
    auto rep = quiet.process_lines("job-k", malicious_syscall_window(), {});
    CHECK(rep.control_events.empty());
  }
}

TEST_CASE("forensic bundles", "[engine]") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "arhuaco_engine_forensics";
  fs::remove_all(dir);
  auto cfg = basic_config(AnalysisMode::secure_full, 1);
  cfg.forensics_dir = dir.string();
  cfg.policy.responses = {ResponseAction{ResponseAction::Kind::forensics, "", 100}};
  Engine engine(passwd_syscall_model(), irc_network_model(), cfg);

  // 49 benign windows then one malicious: the ring holds all 50.
  auto sys = benign_syscall_lines(49);
  for (const auto& l : malicious_syscall_window()) sys.push_back(l);
  auto rep = engine.process_lines("job-x", sys, {});
  REQUIRE(rep.alarms == 1);

  const auto bundle = dir / "job-x_ep1";
  REQUIRE(fs::exists(bundle / "raw_windows.txt"));
  REQUIRE(fs::exists(bundle / "verdicts.jsonl"));
  REQUIRE(fs::exists(bundle / "meta.json"));

  SECTION("bundle holds the windows seen so far") {
    std::ifstream raw(bundle / "raw_windows.txt");
    std::string line;
    std::size_t headers = 0;
    while (std::getline(raw, line))
      if (line.rfind("# window ", 0) == 0) ++headers;
    CHECK(headers == 50);
  }
  SECTION("bundle references its own job only") {
    std::ifstream meta(bundle / "meta.json");
    nlohmann::json m = nlohmann::json::parse(meta);
    CHECK(m.at("job_id") == "job-x");
    std::ifstream verdicts(bundle / "verdicts.jsonl");
    std::string line;
    while (std::getline(verdicts, line)) {
      if (line.empty()) continue;
      CHECK(nlohmann::json::parse(line).at("job") == "job-x");
    }
  }
  SECTION("replaying the bundle reproduces every verdict") {
    auto replay = replay_bundle(bundle.string(), passwd_syscall_model(), irc_network_model());
    CHECK(replay.windows == 50);
    CHECK(replay.compared == 50);
    CHECK(replay.mismatches == 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("replay runs are byte-identical", "[engine]") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "arhuaco_engine_replay";
  fs::create_directories(dir);

  // Two jobs with mixed content on disk.
  auto write_lines = [&](const std::string& name, const std::vector<std::string>& lines) {
    std::ofstream out(dir / name);
    for (const auto& l : lines) out << l << '\n';
    return (dir / name).string();
  };
  std::vector<std::string> sys_a = benign_syscall_lines(3);
  for (const auto& l : malicious_syscall_window()) sys_a.push_back(l);
  auto sys_a_path = write_lines("a_sys.log", sys_a);
  auto net_a_path = write_lines("a_net.log", benign_network_lines(4));
  auto sys_b_path = write_lines("b_sys.log", benign_syscall_lines(5));
  std::vector<std::string> net_b{"IP.x IP.y irc.qeast.net 1 C_INTERNET"};
  auto net_b_path = write_lines("b_net.log", net_b);

  std::vector<JobSpec> jobs{{"alpha", sys_a_path, net_a_path}, {"beta", sys_b_path, net_b_path}};

  auto cfg = basic_config();
  cfg.policy.responses = {ResponseAction{ResponseAction::Kind::alert, "", 100},
                          ResponseAction{ResponseAction::Kind::stop_job, "", 100}};
  auto run_once = [&]() {
    Engine engine(passwd_syscall_model(), irc_network_model(), cfg);
    std::ostringstream sink, control;
    engine.run(jobs, sink, control);
    return std::pair(sink.str(), control.str());
  };

  auto [s1, c1] = run_once();
  auto [s2, c2] = run_once();
  auto [s3, c3] = run_once();
  CHECK(s1 == s2);
  CHECK(s2 == s3);
  CHECK(c1 == c2);
  CHECK(c2 == c3);
  CHECK(!s1.empty());
  CHECK(c1.find("\"job_id\":\"alpha\"") != std::string::npos);

  SECTION("per-job events are independent of manifest interleaving") {
    std::vector<JobSpec> swapped{jobs[1], jobs[0]};
    Engine engine(passwd_syscall_model(), irc_network_model(), cfg);
    std::ostringstream sink, control;
    engine.run(swapped, sink, control);
    auto pick_job = [](const std::string& all, const std::string& job) {
      std::vector<std::string> lines;
      std::istringstream in(all);
      std::string line;
      while (std::getline(in, line))
        if (line.find("\"job\":\"" + job + "\"") != std::string::npos) lines.push_back(line);
      return lines;
    };
    CHECK(pick_job(sink.str(), "alpha") == pick_job(s1, "alpha"));
    CHECK(pick_job(sink.str(), "beta") == pick_job(s1, "beta"));
  }
  fs::remove_all(dir);
}

TEST_CASE("manifest parsing and spec checks", "[engine]") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "arhuaco_manifest.json";

  SECTION("round trip") {
    std::ofstream out(path);
    out << R"({"jobs":[{"job_id":"j1","syscall_path":"/tmp/s.log","network_path":"/tmp/n.log"}]})";
    out.close();
    auto jobs = read_job_manifest(path.string());
    REQUIRE(jobs.size() == 1);
    CHECK(jobs[0].job_id == "j1");
    CHECK(jobs[0].syscall_path == "/tmp/s.log");
  }
  SECTION("expected window specs are enforced at startup") {
    EngineConfig cfg = basic_config();
    cfg.expect_syscall_spec = WindowSpec{9, 9};
    CHECK_THROWS_MATCHES(Engine(passwd_syscall_model(), irc_network_model(), cfg), Error,
                         Catch::Predicate<Error>([](const Error& e) { return e.code() == Errc::model_spec_mismatch; }));
  }
  fs::remove(path);
}

TEST_CASE("benchmark fixture produces throughput numbers", "[engine]") {
  auto bench = benchmark_classification(passwd_syscall_model(), 6'000, 3);
  CHECK(bench.lines == 6'000);
  CHECK(bench.windows == 1'000);
  CHECK(bench.lines_per_sec > 0.0);
}
