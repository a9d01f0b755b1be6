#pragma once

#include <chrono>
#include <cstdint>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "arhuaco/cnn.hpp"
#include "arhuaco/error.hpp"
#include "arhuaco/ingest.hpp"
#include "arhuaco/rng.hpp"
#include "arhuaco/svm.hpp"
#include "arhuaco/synth.hpp"

namespace arhuaco {

/// Either trained classifier behind one predict surface.
class Classifier {
 public:
  Classifier() : model_(CnnModel{}) {}
  explicit Classifier(CnnModel m) : model_(std::move(m)) {}
  explicit Classifier(SvmModel m) : model_(std::move(m)) {}

  Prediction predict(const TokenSequence& seq) const {
    return std::visit([&](const auto& m) { return m.predict(seq); }, model_);
  }

  WindowSpec window_spec() const {
    if (std::holds_alternative<CnnModel>(model_))
      return std::get<CnnModel>(model_).config().window_spec;
    return std::get<SvmModel>(model_).config().window_spec;
  }

  const char* kind() const { return std::holds_alternative<CnnModel>(model_) ? "cnn" : "svm"; }

  /// Sniffs the magic to pick the right loader.
  static Classifier load(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), "ARHC", 4) == 0)
      return Classifier(CnnModel::load(path));
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), "ARHS", 4) == 0)
      return Classifier(SvmModel::load(path));
    raise(Errc::version_mismatch, "not a classifier model file: " + path);
  }

 private:
  std::variant<CnnModel, SvmModel> model_;
};

enum class AnalysisMode { secure_full, network_first, random_sample };

inline const char* analysis_mode_name(AnalysisMode m) {
  switch (m) {
    case AnalysisMode::secure_full: return "secure_full";
    case AnalysisMode::network_first: return "network_first";
    case AnalysisMode::random_sample: return "random_sample";
  }
  return "?";
}

inline AnalysisMode analysis_mode_from_name(const std::string& s) {
  if (s == "secure_full") return AnalysisMode::secure_full;
  if (s == "network_first") return AnalysisMode::network_first;
  if (s == "random_sample") return AnalysisMode::random_sample;
  raise(Errc::config_error, "unknown analysis mode: " + s);
}

struct ResponseAction {
  enum class Kind { alert, stop_job, forensics };
  Kind kind = Kind::alert;
  std::string alert_sink;                // optional extra file for alerts
  std::size_t forensics_retention = 100; // ring size for bundles
};

inline const char* action_kind_name(ResponseAction::Kind k) {
  switch (k) {
    case ResponseAction::Kind::alert: return "alert";
    case ResponseAction::Kind::stop_job: return "stop_job";
    case ResponseAction::Kind::forensics: return "forensics";
  }
  return "?";
}

struct DetectionPolicy {
  AnalysisMode mode = AnalysisMode::secure_full;  // the paper's default mode
  double sample_probability = 1.0;                // used by random_sample only
  std::size_t alarm_threshold = 3;                // malicious verdicts ...
  std::size_t alarm_window = 20;                  // ... within the last N verdicts
  std::vector<ResponseAction> responses = {ResponseAction{}};

  void validate() const {
    if (responses.empty()) raise(Errc::config_error, "policy needs at least one response action");
    if (mode == AnalysisMode::random_sample &&
        (sample_probability < 0.0 || sample_probability > 1.0))
      raise(Errc::config_error, "sample_probability must be in [0,1]");
    if (alarm_threshold < 1 || alarm_window < alarm_threshold)
      raise(Errc::config_error, "alarm threshold must fit inside the alarm window");
  }
};

struct JobSpec {
  std::string job_id;
  std::string syscall_path;
  std::string network_path;
};

inline std::vector<JobSpec> read_job_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_error, "cannot open manifest: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("jobs") || !j["jobs"].is_array())
    raise(Errc::data_error, "manifest must hold a jobs array");
  std::vector<JobSpec> jobs;
  for (const auto& e : j["jobs"]) {
    JobSpec spec;
    spec.job_id = e.at("job_id").get<std::string>();
    spec.syscall_path = e.value("syscall_path", "");
    spec.network_path = e.value("network_path", "");
    if (spec.job_id.empty()) raise(Errc::data_error, "manifest job with empty job_id");
    jobs.push_back(std::move(spec));
  }
  return jobs;
}

struct SourceCounters {
  std::size_t lines_in = 0;
  std::size_t windows_in = 0;
  std::size_t verdicts = 0;
  std::size_t skipped = 0;
  std::size_t malformed = 0;
};

struct JobReport {
  std::string job_id;
  bool monitored = true;
  SourceCounters syscall;
  SourceCounters network;
  std::size_t alarms = 0;
  std::vector<nlohmann::json> events;         // verdicts + actions, in order
  std::vector<nlohmann::json> control_events; // stop requests
};

struct EngineConfig {
  DetectionPolicy policy;
  std::uint64_t seed = 1;
  std::string forensics_dir = "forensics";
  std::size_t threads = 0;  // 0: one per job up to hardware concurrency
  // When set, the models' window specs must match at startup.
  std::optional<WindowSpec> expect_syscall_spec;
  std::optional<WindowSpec> expect_network_spec;
};

namespace detail {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

/// Replay/streaming detection engine. One worker per job; a job's two
/// streams interleave one-network-then-one-syscall per tick, which defines
/// the job's logical clock. Window accounting is slot-based and tumbling:
/// every l consumed lines complete one slot, and a slot containing any
/// malformed line counts as a malformed window. The identity
/// windows_in == verdicts + skipped + malformed holds exactly per source.
class Engine {
 public:
  Engine(Classifier syscall_model, Classifier network_model, EngineConfig config)
      : syscall_model_(std::move(syscall_model)),
        network_model_(std::move(network_model)),
        config_(std::move(config)) {
    config_.policy.validate();
    syscall_model_.window_spec().validate();
    network_model_.window_spec().validate();
    if (config_.expect_syscall_spec && *config_.expect_syscall_spec != syscall_model_.window_spec())
      raise(Errc::model_spec_mismatch, "syscall model window spec differs from configuration");
    if (config_.expect_network_spec && *config_.expect_network_spec != network_model_.window_spec())
      raise(Errc::model_spec_mismatch, "network model window spec differs from configuration");
  }

  /// Streams from recorded files, in-memory fixtures or pipes. Events merge
  /// into the sink in manifest order, so a fixed seed reproduces the output
  /// byte for byte.
  std::vector<JobReport> run(const std::vector<JobSpec>& jobs, std::ostream& sink,
                             std::ostream& control) {
    std::vector<JobReport> reports(jobs.size());
    const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    const std::size_t workers =
        config_.threads ? config_.threads : std::min<std::size_t>(jobs.size(), hw);
    std::size_t next = 0;
    while (next < jobs.size()) {
      const std::size_t batch = std::min(workers, jobs.size() - next);
      std::vector<std::future<JobReport>> futs;
      for (std::size_t i = 0; i < batch; ++i) {
        const JobSpec& spec = jobs[next + i];
        futs.push_back(std::async(batch > 1 ? std::launch::async : std::launch::deferred,
                                  [this, &spec] { return process_job(spec); }));
      }
      for (std::size_t i = 0; i < batch; ++i) reports[next + i] = futs[i].get();
      next += batch;
    }
    for (auto& rep : reports) {
      for (const auto& e : rep.events) sink << e.dump() << '\n';
      for (const auto& e : rep.control_events) control << e.dump() << '\n';
      for (Source source : {Source::syscall, Source::network}) {
        const auto& c = source == Source::syscall ? rep.syscall : rep.network;
        nlohmann::json acct{{"event", "accounting"},
                            {"job", rep.job_id},
                            {"source", source_name(source)},
                            {"lines_in", c.lines_in},
                            {"windows_in", c.windows_in},
                            {"verdicts", c.verdicts},
                            {"skipped", c.skipped},
                            {"malformed", c.malformed},
                            {"monitored", rep.monitored}};
        sink << acct.dump() << '\n';
      }
    }
    return reports;
  }

  /// In-memory variant for fixtures and tests.
  JobReport process_lines(const std::string& job_id, const std::vector<std::string>& syscall_lines,
                          const std::vector<std::string>& network_lines) const {
    return process_streams(job_id, syscall_lines, network_lines);
  }

  JobReport process_job(const JobSpec& spec) const {
    auto read_lines = [](const std::string& path) {
      std::vector<std::string> lines;
      if (path.empty()) return lines;
      std::istream* in = nullptr;
      std::ifstream file;
      if (path == "-") {
        in = &std::cin;
      } else {
        file.open(path);
        if (!file) raise(Errc::io_error, "cannot open stream: " + path);
        in = &file;
      }
      std::string line;
      while (std::getline(*in, line)) lines.push_back(line);
      return lines;
    };
    return process_streams(spec.job_id, read_lines(spec.syscall_path),
                           read_lines(spec.network_path));
  }

 private:
  struct SlotWindower {
    WindowSpec spec;
    std::vector<std::string> raw;
    std::vector<TraceLine> parsed;
    SourceCounters counters;
    std::size_t window_index = 0;

    struct Slot {
      bool malformed = false;
      std::optional<TokenSequence> window;
      std::vector<std::string> raw_lines;
      std::size_t index = 0;
    };

    std::optional<Slot> push(Source source, const std::string& line) {
      ++counters.lines_in;
      raw.push_back(line);
      if (auto parsed_line = try_parse_trace_line(source, line)) parsed.push_back(*parsed_line);
      if (raw.size() < spec.lines) return std::nullopt;
      Slot slot;
      slot.index = window_index++;
      slot.raw_lines = std::move(raw);
      ++counters.windows_in;
      if (parsed.size() == spec.lines)
        slot.window = build_window(parsed, spec);
      else {
        slot.malformed = true;
        ++counters.malformed;
      }
      raw.clear();
      parsed.clear();
      return slot;
    }
  };

  struct ForensicEntry {
    Source source;
    std::size_t index;
    std::vector<std::string> raw_lines;
    std::optional<nlohmann::json> verdict;
  };

  bool job_monitored(const std::string& job_id) const {
    if (config_.policy.mode != AnalysisMode::random_sample) return true;
    Rng rng(config_.seed ^ detail::fnv1a64(job_id));
    return rng.uniform() < config_.policy.sample_probability;
  }

  JobReport process_streams(const std::string& job_id,
                            const std::vector<std::string>& syscall_lines,
                            const std::vector<std::string>& network_lines) const {
    JobReport rep;
    rep.job_id = job_id;
    rep.monitored = job_monitored(job_id);

    SlotWindower sys_w{syscall_model_.window_spec()};
    SlotWindower net_w{network_model_.window_spec()};
    bool syscalls_active = config_.policy.mode != AnalysisMode::network_first;
    std::deque<Label> recent;  // verdict labels within the alarm window
    std::size_t episode = 0;
    std::deque<ForensicEntry> ring;
    std::size_t retention = 100;
    for (const auto& action : config_.policy.responses)
      if (action.kind == ResponseAction::Kind::forensics) retention = action.forensics_retention;
    std::uint64_t clock = 0;

    auto classify = [&](Source source, SlotWindower::Slot& slot, SlotWindower& w) {
      ForensicEntry entry{source, slot.index, slot.raw_lines, std::nullopt};
      if (slot.malformed) {
        push_ring(ring, std::move(entry), retention);
        return;
      }
      const bool gated_out =
          !rep.monitored || (source == Source::syscall && !syscalls_active);
      if (gated_out) {
        ++w.counters.skipped;
        push_ring(ring, std::move(entry), retention);
        return;
      }
      const auto& model = source == Source::syscall ? syscall_model_ : network_model_;
      const Prediction pred = model.predict(*slot.window);
      ++w.counters.verdicts;
      nlohmann::json verdict{{"event", "verdict"},
                             {"job", job_id},
                             {"source", source_name(source)},
                             {"window", slot.index},
                             {"score", pred.score},
                             {"label", label_name(pred.label)},
                             {"ts", clock}};
      rep.events.push_back(verdict);
      entry.verdict = verdict;
      push_ring(ring, std::move(entry), retention);

      if (pred.label == Label::malicious) {
        if (source == Source::network && config_.policy.mode == AnalysisMode::network_first &&
            !syscalls_active) {
          syscalls_active = true;  // escalation is monotone within a run
          rep.events.push_back(nlohmann::json{{"event", "escalation"},
                                              {"job", job_id},
                                              {"detail", "syscall analysis activated"},
                                              {"ts", clock}});
        }
      }
      recent.push_back(pred.label);
      if (recent.size() > config_.policy.alarm_window) recent.pop_front();
      std::size_t bad = 0;
      for (Label l : recent)
        if (l == Label::malicious) ++bad;
      if (bad >= config_.policy.alarm_threshold) {
        ++episode;
        ++rep.alarms;
        fire_actions(rep, job_id, episode, clock, ring);
        recent.clear();  // episode resets after firing
      }
    };

    std::size_t si = 0, ni = 0;
    while (si < syscall_lines.size() || ni < network_lines.size()) {
      if (ni < network_lines.size()) {
        ++clock;
        if (auto slot = net_w.push(Source::network, network_lines[ni++]))
          classify(Source::network, *slot, net_w);
      }
      if (si < syscall_lines.size()) {
        ++clock;
        if (auto slot = sys_w.push(Source::syscall, syscall_lines[si++]))
          classify(Source::syscall, *slot, sys_w);
      }
    }

    rep.syscall = sys_w.counters;
    rep.network = net_w.counters;
    return rep;
  }

  static void push_ring(std::deque<ForensicEntry>& ring, ForensicEntry entry,
                        std::size_t retention) {
    ring.push_back(std::move(entry));
    while (ring.size() > retention) ring.pop_front();
  }

  void fire_actions(JobReport& rep, const std::string& job_id, std::size_t episode,
                    std::uint64_t clock, const std::deque<ForensicEntry>& ring) const {
    for (const auto& action : config_.policy.responses) {
      nlohmann::json event{{"event", "action"},
                           {"kind", action_kind_name(action.kind)},
                           {"job", job_id},
                           {"episode", episode},
                           {"ts", clock}};
      switch (action.kind) {
        case ResponseAction::Kind::alert:
          if (!action.alert_sink.empty()) {
            std::ofstream out(action.alert_sink, std::ios::app);
            if (out)
              out << event.dump() << '\n';
            else
              event["error"] = "ActionFailure: cannot open alert sink";
          }
          break;
        case ResponseAction::Kind::stop_job:
          rep.control_events.push_back(nlohmann::json{{"action", "stop"}, {"job_id", job_id}});
          break;
        case ResponseAction::Kind::forensics:
          try {
            event["bundle"] = write_forensics(job_id, episode, ring);
          } catch (const Error& e) {
            event["error"] = std::string("ActionFailure: ") + e.what();
          }
          break;
      }
      rep.events.push_back(std::move(event));
    }
  }

  std::string write_forensics(const std::string& job_id, std::size_t episode,
                              const std::deque<ForensicEntry>& ring) const {
    namespace fs = std::filesystem;
    const fs::path dir =
        fs::path(config_.forensics_dir) / (job_id + "_ep" + std::to_string(episode));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) raise(Errc::io_error, "cannot create forensics dir: " + dir.string());

    std::ofstream raw(dir / "raw_windows.txt", std::ios::trunc);
    std::ofstream verdicts(dir / "verdicts.jsonl", std::ios::trunc);
    std::ofstream meta(dir / "meta.json", std::ios::trunc);
    if (!raw || !verdicts || !meta) raise(Errc::io_error, "cannot write forensics bundle");
    for (const auto& entry : ring) {
      raw << "# window " << source_name(entry.source) << ' ' << entry.index
          << (entry.verdict ? "" : " unclassified") << '\n';
      for (const auto& line : entry.raw_lines) raw << line << '\n';
      if (entry.verdict) verdicts << entry.verdict->dump() << '\n';
    }
    nlohmann::json m{{"job_id", job_id},
                     {"episode", episode},
                     {"engine_seed", config_.seed},
                     {"retention", ring.size()},
                     {"mode", analysis_mode_name(config_.policy.mode)},
                     {"syscall_model", syscall_model_.kind()},
                     {"network_model", network_model_.kind()},
                     {"format", "arhuaco-forensics-1"}};
    meta << m.dump(2) << '\n';
    return dir.string();
  }

  Classifier syscall_model_;
  Classifier network_model_;
  EngineConfig config_;
};

/// Re-classifies a forensic bundle's raw windows and counts verdict
/// mismatches against the recorded verdicts.jsonl.
struct BundleReplay {
  std::size_t windows = 0;
  std::size_t compared = 0;
  std::size_t mismatches = 0;
};

inline BundleReplay replay_bundle(const std::string& bundle_dir, const Classifier& syscall_model,
                                  const Classifier& network_model) {
  namespace fs = std::filesystem;
  std::ifstream raw(fs::path(bundle_dir) / "raw_windows.txt");
  if (!raw) raise(Errc::io_error, "cannot open bundle: " + bundle_dir);
  std::ifstream verdicts_in(fs::path(bundle_dir) / "verdicts.jsonl");
  std::map<std::pair<std::string, std::size_t>, nlohmann::json> recorded;
  std::string vline;
  while (std::getline(verdicts_in, vline)) {
    if (vline.empty()) continue;
    auto j = nlohmann::json::parse(vline);
    recorded[{j.at("source").get<std::string>(), j.at("window").get<std::size_t>()}] = j;
  }

  BundleReplay result;
  std::string line;
  std::string source;
  std::size_t index = 0;
  bool classified = false;
  std::vector<std::string> lines;
  auto flush = [&]() {
    if (source.empty()) return;
    ++result.windows;
    if (classified) {
      const Source src = source_from_name(source);
      const auto& model = src == Source::syscall ? syscall_model : network_model;
      std::vector<TraceLine> parsed;
      for (const auto& l : lines) parsed.push_back(parse_trace_line(src, l));
      auto window = build_window(parsed, model.window_spec());
      const auto pred = model.predict(window);
      auto it = recorded.find({source, index});
      if (it != recorded.end()) {
        ++result.compared;
        if (it->second.at("score").get<double>() != pred.score ||
            it->second.at("label").get<std::string>() != label_name(pred.label))
          ++result.mismatches;
      }
    }
    lines.clear();
  };
  while (std::getline(raw, line)) {
    if (line.rfind("# window ", 0) == 0) {
      flush();
      std::istringstream hdr(line.substr(9));
      std::string unclassified;
      hdr >> source >> index >> unclassified;
      classified = unclassified.empty();
    } else {
      lines.push_back(line);
    }
  }
  flush();
  return result;
}

/// Built-in single-core benchmark: parse + window + classify synthetic
/// benign syscall lines against a trained model.
struct BenchResult {
  std::size_t lines = 0;
  std::size_t windows = 0;
  double seconds = 0.0;
  double lines_per_sec = 0.0;
};

inline BenchResult benchmark_classification(const Classifier& model, std::size_t n_lines,
                                            std::uint64_t seed) {
  auto spec = syscall_corpus_spec(n_lines, 1, seed);
  auto data = synth_benign_corpus(spec);
  std::vector<std::string> lines;
  lines.reserve(n_lines);
  for (const auto& rec : data)
    for (const auto& l : rec.lines) lines.push_back(l);

  BenchResult res;
  res.lines = lines.size();
  WindowStream ws(Source::syscall, model.window_spec(), model.window_spec().lines);
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t malicious = 0;
  for (const auto& line : lines) {
    if (auto w = ws.push_line(line)) {
      ++res.windows;
      if (model.predict(*w).label == Label::malicious) ++malicious;
    }
  }
  const auto t1 = std::chrono::steady_clock::now();
  res.seconds = std::chrono::duration<double>(t1 - t0).count();
  res.lines_per_sec = res.seconds > 0.0 ? static_cast<double>(res.lines) / res.seconds : 0.0;
  (void)malicious;
  return res;
}

}  // namespace arhuaco
