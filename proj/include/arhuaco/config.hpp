#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "arhuaco/cnn.hpp"
#include "arhuaco/engine.hpp"
#include "arhuaco/error.hpp"
#include "arhuaco/features.hpp"
#include "arhuaco/generator.hpp"
#include "arhuaco/svm.hpp"
#include "arhuaco/synth.hpp"

namespace arhuaco {

// ---------------------------------------------------------------------------
// TOML-like config documents: [section] headers, key = value pairs, full-line
// or trailing # comments. Values: "strings", integers, floats, booleans and
// flat arrays [a, b, c]. That subset is the whole grammar.

struct ConfigValue;
using ConfigArray = std::vector<ConfigValue>;

struct ConfigValue {
  std::variant<std::int64_t, double, bool, std::string, ConfigArray> v;

  bool is_string() const { return std::holds_alternative<std::string>(v); }

  std::int64_t as_int(const std::string& key) const {
    if (auto* p = std::get_if<std::int64_t>(&v)) return *p;
    raise(Errc::config_error, "expected integer for " + key);
  }
  double as_double(const std::string& key) const {
    if (auto* p = std::get_if<double>(&v)) return *p;
    if (auto* p = std::get_if<std::int64_t>(&v)) return static_cast<double>(*p);
    raise(Errc::config_error, "expected number for " + key);
  }
  bool as_bool(const std::string& key) const {
    if (auto* p = std::get_if<bool>(&v)) return *p;
    raise(Errc::config_error, "expected boolean for " + key);
  }
  const std::string& as_string(const std::string& key) const {
    if (auto* p = std::get_if<std::string>(&v)) return *p;
    raise(Errc::config_error, "expected string for " + key);
  }
  const ConfigArray& as_array(const std::string& key) const {
    if (auto* p = std::get_if<ConfigArray>(&v)) return *p;
    raise(Errc::config_error, "expected array for " + key);
  }
};

class ConfigDoc {
 public:
  static ConfigDoc parse(std::istream& in) {
    ConfigDoc doc;
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      strip_comment(line);
      const std::string t = trim(line);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']') fail(lineno, "unterminated section header");
        section = trim(t.substr(1, t.size() - 2));
        if (section.empty()) fail(lineno, "empty section name");
        doc.sections_[section];
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) fail(lineno, "expected key = value");
      const std::string key = trim(t.substr(0, eq));
      const std::string raw = trim(t.substr(eq + 1));
      if (key.empty() || raw.empty()) fail(lineno, "empty key or value");
      doc.sections_[section][key] = parse_value(raw, lineno);
    }
    return doc;
  }

  static ConfigDoc parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::io_error, "cannot open config: " + path);
    return parse(in);
  }

  const ConfigValue* find(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }

  /// Unknown sections or keys are configuration errors.
  void validate_known(const std::map<std::string, std::set<std::string>>& schema) const {
    for (const auto& [section, keys] : sections_) {
      auto s = schema.find(section);
      if (s == schema.end()) raise(Errc::config_error, "unknown config section [" + section + "]");
      for (const auto& [key, value] : keys)
        if (!s->second.count(key))
          raise(Errc::config_error, "unknown key '" + key + "' in [" + section + "]");
    }
  }

  const std::map<std::string, std::map<std::string, ConfigValue>>& sections() const {
    return sections_;
  }

 private:
  [[noreturn]] static void fail(std::size_t lineno, const std::string& what) {
    raise(Errc::config_error, "config line " + std::to_string(lineno) + ": " + what);
  }

  static void strip_comment(std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_string = !in_string;
      if (line[i] == '#' && !in_string) {
        line.resize(i);
        return;
      }
    }
  }

  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  static ConfigValue parse_value(const std::string& raw, std::size_t lineno) {
    if (raw.front() == '"') {
      if (raw.size() < 2 || raw.back() != '"') fail(lineno, "unterminated string");
      return {raw.substr(1, raw.size() - 2)};
    }
    if (raw.front() == '[') {
      if (raw.back() != ']') fail(lineno, "unterminated array");
      ConfigArray arr;
      std::string inner = raw.substr(1, raw.size() - 2);
      std::string item;
      std::istringstream ss(inner);
      while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty()) arr.push_back(parse_value(t, lineno));
      }
      return {arr};
    }
    if (raw == "true") return {true};
    if (raw == "false") return {false};
    try {
      std::size_t used = 0;
      if (raw.find('.') == std::string::npos && raw.find('e') == std::string::npos &&
          raw.find('E') == std::string::npos) {
        const std::int64_t i = std::stoll(raw, &used);
        if (used == raw.size()) return {i};
      }
      const double d = std::stod(raw, &used);
      if (used == raw.size()) return {d};
    } catch (...) {
    }
    fail(lineno, "cannot parse value: " + raw);
  }

  std::map<std::string, std::map<std::string, ConfigValue>> sections_;
};

// ---------------------------------------------------------------------------

/// Every knob of a run, assembled from profile defaults, then the config
/// file, then command-line flags. The manifest records the final values.
struct RunConfig {
  std::string profile = "syscall";
  std::uint64_t seed = 1;

  WindowSpec window = syscall_window_spec();
  std::size_t stride = 6;  // tumbling by default

  std::size_t vocab_max_size = 10'000;
  std::size_t vocab_min_count = 2;
  Word2VecConfig w2v;

  CnnConfig cnn;
  CnnModel::TrainConfig cnn_train;

  SvmConfig svm;

  LstmConfig lstm;
  double augment_fraction = 0.20;
  double temperature = 1.0;
  Label augment_label = Label::malicious;

  EngineConfig engine;

  CorpusSpec synth;

  static RunConfig for_profile(const std::string& profile) {
    RunConfig rc;
    rc.profile = profile;
    if (profile == "syscall") {
      rc.window = syscall_window_spec();
      rc.cnn = syscall_cnn_config();
      rc.w2v.dim = 20;
      rc.synth = syscall_corpus_spec(60'000, 60'000, 1);
    } else if (profile == "network") {
      rc.window = network_window_spec();
      rc.cnn = network_cnn_config();
      rc.w2v.dim = 10;
      rc.synth = network_corpus_spec(17'500, 2'500, 1);
    } else {
      raise(Errc::config_error, "unknown profile: " + profile + " (syscall|network)");
    }
    rc.stride = rc.window.lines;
    rc.svm.window_spec = rc.window;
    rc.cnn_train.epochs = 5;
    rc.svm.epochs = 20;
    return rc;
  }

  /// Applies a parsed config file on top of the current values. When the
  /// caller already resolved the profile (e.g. from a flag), set
  /// `ignore_profile` so the file's [run] profile cannot reset it.
  void apply_file(const ConfigDoc& doc, bool ignore_profile = false);

  nlohmann::json to_manifest_json() const {
    nlohmann::json j;
    j["profile"] = profile;
    j["seed"] = seed;
    j["ingest"] = {{"m", window.tokens_per_line}, {"l", window.lines}, {"stride", stride}};
    j["features"] = {{"vocab_max_size", vocab_max_size},
                     {"vocab_min_count", vocab_min_count},
                     {"embedding_dim", w2v.dim},
                     {"window", w2v.window},
                     {"negatives", w2v.negatives},
                     {"epochs", w2v.epochs},
                     {"learning_rate", w2v.learning_rate},
                     {"cbow", w2v.cbow}};
    j["cnn"] = {{"filter_sizes", cnn.filter_sizes},
                {"total_filters", cnn.total_filters},
                {"per_size_filters", cnn.per_size_filters},
                {"dense_units", cnn.dense_units},
                {"dropout_rate", cnn.dropout_rate},
                {"threshold", cnn.threshold},
                {"fine_tune_embeddings", cnn.fine_tune_embeddings},
                {"optimizer", optim_kind_name(cnn.optimizer.kind)},
                {"learning_rate", cnn.optimizer.learning_rate},
                {"momentum", cnn.optimizer.momentum},
                {"decay", cnn.optimizer.decay},
                {"epochs", cnn_train.epochs},
                {"batch_size", cnn_train.batch_size},
                {"balanced_batches", cnn_train.balanced_batches}};
    j["svm"] = {{"lambda", svm.lambda},
                {"epochs", svm.epochs},
                {"batch_size", svm.batch_size},
                {"balanced_batches", svm.balanced_batches},
                {"rho", svm.optimizer.rho},
                {"epsilon", svm.optimizer.epsilon}};
    j["lstm"] = {{"hidden", lstm.hidden},
                 {"seq_len", lstm.seq_len},
                 {"batch_lanes", lstm.batch_lanes},
                 {"epochs", lstm.epochs},
                 {"learning_rate", lstm.optimizer.learning_rate},
                 {"grad_clip", lstm.grad_clip},
                 {"val_fraction", lstm.val_fraction}};
    j["augment"] = {{"fraction", augment_fraction},
                    {"temperature", temperature},
                    {"label", label_name(augment_label)}};
    nlohmann::json responses = nlohmann::json::array();
    for (const auto& r : engine.policy.responses) responses.push_back(action_kind_name(r.kind));
    j["engine"] = {{"mode", analysis_mode_name(engine.policy.mode)},
                   {"sample_probability", engine.policy.sample_probability},
                   {"alarm_threshold", engine.policy.alarm_threshold},
                   {"alarm_window", engine.policy.alarm_window},
                   {"responses", responses},
                   {"forensics_dir", engine.forensics_dir},
                   {"threads", engine.threads}};
    j["synth"] = {{"source", source_name(synth.source)},
                  {"normal_lines", synth.normal_lines},
                  {"malicious_lines", synth.malicious_lines},
                  {"motif_rate", synth.motif_rate},
                  {"benign_noise_rate", synth.benign_noise_rate},
                  {"lines_per_record", synth.lines_per_record}};
    return j;
  }
};

inline void RunConfig::apply_file(const ConfigDoc& doc, bool ignore_profile) {
  static const std::map<std::string, std::set<std::string>> schema{
      {"run", {"seed", "profile"}},
      {"ingest", {"m", "l", "stride"}},
      {"features",
       {"vocab_max_size", "vocab_min_count", "embedding_dim", "window", "negatives", "epochs",
        "learning_rate", "cbow"}},
      {"cnn",
       {"filter_sizes", "total_filters", "per_size_filters", "dense_units", "dropout_rate",
        "threshold", "fine_tune_embeddings", "optimizer", "learning_rate", "momentum", "decay",
        "epochs", "batch_size", "balanced_batches"}},
      {"svm", {"lambda", "epochs", "batch_size", "balanced_batches", "rho", "epsilon"}},
      {"lstm",
       {"hidden", "seq_len", "batch_lanes", "epochs", "learning_rate", "grad_clip",
        "val_fraction"}},
      {"augment", {"fraction", "temperature", "label"}},
      {"engine",
       {"mode", "sample_probability", "alarm_threshold", "alarm_window", "responses",
        "forensics_dir", "forensics_retention", "threads"}},
      {"synth",
       {"source", "normal_lines", "malicious_lines", "motif_rate", "benign_noise_rate",
        "lines_per_record", "scratch_job_pool", "internal_ip_pool", "external_ip_pool"}},
  };
  doc.validate_known(schema);

  auto get_u64 = [&](const char* sec, const char* key, auto& out) {
    if (const auto* v = doc.find(sec, key)) {
      const auto i = v->as_int(key);
      if (i < 0) raise(Errc::config_error, std::string(key) + " must be >= 0");
      out = static_cast<std::remove_reference_t<decltype(out)>>(i);
    }
  };
  auto get_f = [&](const char* sec, const char* key, double& out) {
    if (const auto* v = doc.find(sec, key)) out = v->as_double(key);
  };
  auto get_b = [&](const char* sec, const char* key, bool& out) {
    if (const auto* v = doc.find(sec, key)) out = v->as_bool(key);
  };

  if (const auto* v = doc.find("run", "profile"); v && !ignore_profile) {
    const std::string p = v->as_string("profile");
    if (p != profile) *this = for_profile(p);
  }
  get_u64("run", "seed", seed);

  get_u64("ingest", "m", window.tokens_per_line);
  get_u64("ingest", "l", window.lines);
  get_u64("ingest", "stride", stride);
  window.validate();
  cnn.window_spec = window;
  svm.window_spec = window;

  get_u64("features", "vocab_max_size", vocab_max_size);
  get_u64("features", "vocab_min_count", vocab_min_count);
  get_u64("features", "embedding_dim", w2v.dim);
  get_u64("features", "window", w2v.window);
  get_u64("features", "negatives", w2v.negatives);
  get_u64("features", "epochs", w2v.epochs);
  get_f("features", "learning_rate", w2v.learning_rate);
  get_b("features", "cbow", w2v.cbow);
  cnn.embedding_dim = w2v.dim;

  if (const auto* v = doc.find("cnn", "filter_sizes")) {
    cnn.filter_sizes.clear();
    for (const auto& e : v->as_array("filter_sizes"))
      cnn.filter_sizes.push_back(static_cast<std::size_t>(e.as_int("filter_sizes[]")));
  }
  get_u64("cnn", "total_filters", cnn.total_filters);
  get_b("cnn", "per_size_filters", cnn.per_size_filters);
  get_u64("cnn", "dense_units", cnn.dense_units);
  get_f("cnn", "dropout_rate", cnn.dropout_rate);
  get_f("cnn", "threshold", cnn.threshold);
  get_b("cnn", "fine_tune_embeddings", cnn.fine_tune_embeddings);
  if (const auto* v = doc.find("cnn", "optimizer"))
    cnn.optimizer.kind = optim_kind_from_name(v->as_string("optimizer"));
  get_f("cnn", "learning_rate", cnn.optimizer.learning_rate);
  get_f("cnn", "momentum", cnn.optimizer.momentum);
  get_f("cnn", "decay", cnn.optimizer.decay);
  get_u64("cnn", "epochs", cnn_train.epochs);
  get_u64("cnn", "batch_size", cnn_train.batch_size);
  get_b("cnn", "balanced_batches", cnn_train.balanced_batches);

  get_f("svm", "lambda", svm.lambda);
  get_u64("svm", "epochs", svm.epochs);
  get_u64("svm", "batch_size", svm.batch_size);
  get_b("svm", "balanced_batches", svm.balanced_batches);
  get_f("svm", "rho", svm.optimizer.rho);
  get_f("svm", "epsilon", svm.optimizer.epsilon);

  get_u64("lstm", "hidden", lstm.hidden);
  get_u64("lstm", "seq_len", lstm.seq_len);
  get_u64("lstm", "batch_lanes", lstm.batch_lanes);
  get_u64("lstm", "epochs", lstm.epochs);
  get_f("lstm", "learning_rate", lstm.optimizer.learning_rate);
  get_f("lstm", "grad_clip", lstm.grad_clip);
  get_f("lstm", "val_fraction", lstm.val_fraction);

  get_f("augment", "fraction", augment_fraction);
  get_f("augment", "temperature", temperature);
  if (const auto* v = doc.find("augment", "label"))
    augment_label = label_from_name(v->as_string("label"));

  if (const auto* v = doc.find("engine", "mode"))
    engine.policy.mode = analysis_mode_from_name(v->as_string("mode"));
  get_f("engine", "sample_probability", engine.policy.sample_probability);
  get_u64("engine", "alarm_threshold", engine.policy.alarm_threshold);
  get_u64("engine", "alarm_window", engine.policy.alarm_window);
  if (const auto* v = doc.find("engine", "responses")) {
    engine.policy.responses.clear();
    std::size_t retention = 100;
    if (const auto* r = doc.find("engine", "forensics_retention"))
      retention = static_cast<std::size_t>(r->as_int("forensics_retention"));
    for (const auto& e : v->as_array("responses")) {
      const std::string& name = e.as_string("responses[]");
      ResponseAction action;
      if (name == "alert")
        action.kind = ResponseAction::Kind::alert;
      else if (name == "stop_job")
        action.kind = ResponseAction::Kind::stop_job;
      else if (name == "forensics")
        action.kind = ResponseAction::Kind::forensics;
      else
        raise(Errc::config_error, "unknown response action: " + name);
      action.forensics_retention = retention;
      engine.policy.responses.push_back(action);
    }
  }
  if (const auto* v = doc.find("engine", "forensics_dir"))
    engine.forensics_dir = v->as_string("forensics_dir");
  get_u64("engine", "threads", engine.threads);

  if (const auto* v = doc.find("synth", "source"))
    synth.source = source_from_name(v->as_string("source"));
  get_u64("synth", "normal_lines", synth.normal_lines);
  get_u64("synth", "malicious_lines", synth.malicious_lines);
  get_f("synth", "motif_rate", synth.motif_rate);
  get_f("synth", "benign_noise_rate", synth.benign_noise_rate);
  get_u64("synth", "lines_per_record", synth.lines_per_record);
  get_u64("synth", "scratch_job_pool", synth.scratch_job_pool);
  get_u64("synth", "internal_ip_pool", synth.internal_ip_pool);
  get_u64("synth", "external_ip_pool", synth.external_ip_pool);
}

}  // namespace arhuaco
