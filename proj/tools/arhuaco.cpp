// arhuaco: streaming trace classification toolkit.
//
// Subcommands cover the full pipeline: synthesize corpora, build
// vocabularies and embeddings, train the CNN / SVM / LSTM models, augment
// training data, evaluate, run the detection engine, and gradient-check the
// backward passes.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "arhuaco/arhuaco.hpp"

using namespace arhuaco;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

nlohmann::json input_digest(const std::string& path) {
  auto bytes = read_file_bytes(path);
  return {{"path", path}, {"bytes", bytes.size()}, {"crc32", crc32(bytes.data(), bytes.size())}};
}

/// Every file-producing run records its exact configuration next to the
/// primary output.
void write_manifest(const std::string& out_path, const std::string& subcommand,
                    const RunConfig& rc, const std::vector<std::string>& inputs,
                    const nlohmann::json& extra = {}) {
  nlohmann::json m;
  m["tool"] = "arhuaco";
  m["version"] = kVersion;
  m["subcommand"] = subcommand;
  m["config"] = rc.to_manifest_json();
  m["inputs"] = nlohmann::json::array();
  for (const auto& p : inputs)
    if (!p.empty() && p != "-") m["inputs"].push_back(input_digest(p));
  if (!extra.is_null()) m["result"] = extra;
  std::ofstream out(out_path + ".manifest.json", std::ios::trunc);
  if (!out) raise(Errc::io_error, "cannot write manifest beside " + out_path);
  out << m.dump(2) << '\n';
}

std::vector<TokenSequence> load_windows(const std::string& path, const WindowSpec& spec,
                                        WindowingStats* stats = nullptr) {
  return windows_from_dataset(read_dataset(path), spec, stats);
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::config_error:
      return 2;
    case Errc::io_error:
      return 4;
    default:
      return 3;  // data/domain errors
  }
}

struct Cli {
  CLI::App app{"arhuaco - trace classification and detection toolkit"};
  std::string config_path;
  std::string profile_flag;
  std::uint64_t seed_flag = 0;
  bool seed_given = false;

  RunConfig assemble() {
    std::optional<ConfigDoc> doc;
    if (!config_path.empty()) doc = ConfigDoc::parse_file(config_path);
    std::string profile = profile_flag;
    if (profile.empty() && doc) {
      if (const auto* v = doc->find("run", "profile")) profile = v->as_string("profile");
    }
    if (profile.empty()) profile = "syscall";
    RunConfig rc = RunConfig::for_profile(profile);
    if (doc) rc.apply_file(*doc, /*ignore_profile=*/!profile_flag.empty());
    if (seed_given) rc.seed = seed_flag;
    return rc;
  }
};

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

// --------------------------------------------------------------------------

int cmd_synth(Cli& cli, const std::string& out, const std::string& source, std::size_t normal,
              std::size_t malicious, double motif_rate, double noise_rate,
              std::size_t lines_per_record, bool flags[4]) {
  RunConfig rc = cli.assemble();
  CorpusSpec spec = rc.synth;
  if (!source.empty()) {
    spec = source == "network" ? network_corpus_spec(17'500, 2'500, rc.seed)
                               : syscall_corpus_spec(60'000, 60'000, rc.seed);
  }
  spec.seed = rc.seed;
  if (flags[0]) spec.normal_lines = normal;
  if (flags[1]) spec.malicious_lines = malicious;
  if (flags[2]) spec.motif_rate = motif_rate;
  if (flags[3]) spec.benign_noise_rate = noise_rate;
  if (lines_per_record) spec.lines_per_record = lines_per_record;
  rc.synth = spec;

  auto data = synth_corpus(spec);
  write_dataset(data, out);
  nlohmann::json result{{"records", data.size()},
                        {"normal_lines", class_line_count(data, Label::normal)},
                        {"malicious_lines", class_line_count(data, Label::malicious)}};
  write_manifest(out, "synth", rc, {cli.config_path}, result);
  print_json(result);
  return 0;
}

int cmd_vocab(Cli& cli, const std::string& data_path, const std::string& out) {
  RunConfig rc = cli.assemble();
  auto windows = load_windows(data_path, rc.window);
  auto vocab = build_vocabulary(windows, rc.vocab_max_size, rc.vocab_min_count);
  nlohmann::json j{{"tokens", vocab.tokens()}};
  std::ofstream f(out, std::ios::trunc);
  if (!f) raise(Errc::io_error, "cannot open for writing: " + out);
  f << j.dump() << '\n';
  write_manifest(out, "vocab", rc, {cli.config_path, data_path},
                 nlohmann::json{{"vocab_size", vocab.size()}});
  print_json({{"vocab_size", vocab.size()}, {"out", out}});
  return 0;
}

Vocabulary vocab_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_error, "cannot open vocabulary: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("tokens"))
    raise(Errc::data_error, "vocabulary file must hold a tokens array");
  return Vocabulary(j["tokens"].get<std::vector<std::string>>());
}

int cmd_embed(Cli& cli, const std::string& data_path, const std::string& vocab_path,
              const std::string& out) {
  RunConfig rc = cli.assemble();
  auto windows = load_windows(data_path, rc.window);
  Vocabulary vocab = vocab_path.empty()
                         ? build_vocabulary(windows, rc.vocab_max_size, rc.vocab_min_count)
                         : vocab_from_file(vocab_path);
  Word2VecConfig w2v = rc.w2v;
  w2v.seed = rc.seed;
  auto table = train_word2vec(windows, vocab, w2v);
  table.save(out);
  write_manifest(out, "embed", rc, {cli.config_path, data_path, vocab_path},
                 nlohmann::json{{"vocab_size", vocab.size()}, {"dim", table.dim}});
  print_json({{"vocab_size", vocab.size()}, {"dim", table.dim}, {"out", out}});
  return 0;
}

struct LabeledSplits {
  std::vector<TokenSequence> train;
  std::vector<TokenSequence> val;
};

LabeledSplits train_val_windows(const RunConfig& rc, const std::string& train_path,
                                const std::string& val_path) {
  LabeledSplits s;
  if (!val_path.empty()) {
    s.train = load_windows(train_path, rc.window);
    s.val = load_windows(val_path, rc.window);
  } else {
    auto data = read_dataset(train_path);
    auto split = split_dataset(data, 0.9, rc.seed);
    split.val.insert(split.val.end(), split.test.begin(), split.test.end());
    s.train = windows_from_dataset(split.train, rc.window);
    s.val = windows_from_dataset(split.val, rc.window);
  }
  return s;
}

int cmd_train_cnn(Cli& cli, const std::string& train_path, const std::string& val_path,
                  const std::string& embed_path, const std::string& out,
                  const std::string& curves_path) {
  RunConfig rc = cli.assemble();
  auto splits = train_val_windows(rc, train_path, val_path);

  EmbeddingTable table;
  if (!embed_path.empty()) {
    table = EmbeddingTable::load(embed_path);
  } else {
    auto vocab = build_vocabulary(splits.train, rc.vocab_max_size, rc.vocab_min_count);
    Word2VecConfig w2v = rc.w2v;
    w2v.seed = rc.seed;
    table = train_word2vec(splits.train, vocab, w2v);
  }
  CnnConfig cfg = rc.cnn;
  cfg.embedding_dim = table.dim;
  CnnModel model(cfg, table, rc.seed);
  CnnModel::TrainConfig tc = rc.cnn_train;
  tc.seed = rc.seed;
  auto result = model.train(splits.train, splits.val, tc);
  model.save(out);
  if (!curves_path.empty()) export_curves(result.curve, curves_path);

  nlohmann::json summary{{"epochs", result.curve.points.size()},
                         {"best_val_acc", result.best_val_acc},
                         {"best_epoch", result.best_epoch},
                         {"train_windows", splits.train.size()},
                         {"val_windows", splits.val.size()},
                         {"out", out}};
  write_manifest(out, "train-cnn", rc, {cli.config_path, train_path, val_path, embed_path},
                 summary);
  print_json(summary);
  return 0;
}

int cmd_train_svm(Cli& cli, const std::string& train_path, const std::string& val_path,
                  const std::string& out, const std::string& curves_path) {
  RunConfig rc = cli.assemble();
  auto splits = train_val_windows(rc, train_path, val_path);
  auto vocab = build_vocabulary(splits.train, rc.vocab_max_size, rc.vocab_min_count);
  SvmConfig cfg = rc.svm;
  cfg.seed = rc.seed;
  SvmModel model(vocab, cfg);
  auto result = model.train(splits.train, splits.val);
  model.save(out);
  if (!curves_path.empty()) export_curves(result.curve, curves_path);

  nlohmann::json summary{{"epochs", result.curve.points.size()},
                         {"train_windows", splits.train.size()},
                         {"val_windows", splits.val.size()},
                         {"final_val_acc",
                          result.curve.points.empty() ? 0.0 : result.curve.points.back().val_acc},
                         {"out", out}};
  write_manifest(out, "train-svm", rc, {cli.config_path, train_path, val_path}, summary);
  print_json(summary);
  return 0;
}

int cmd_train_lm(Cli& cli, const std::string& data_path, const std::string& label,
                 const std::string& out, const std::string& curves_path) {
  RunConfig rc = cli.assemble();
  auto data = read_dataset(data_path);
  const Label cls = label_from_name(label);
  auto corpus = class_corpus(data, cls);
  if (corpus.empty()) raise(Errc::data_error, "no lines with label " + label);
  LstmConfig cfg = rc.lstm;
  cfg.seed = rc.seed;
  LstmModel model(CharVocabulary::from_corpus(corpus), cfg.hidden, rc.seed);
  auto result = model.train(corpus, cfg);
  model.save(out);
  if (!curves_path.empty()) export_curves(result.curve, curves_path);

  nlohmann::json summary{{"corpus_chars", corpus.size()},
                         {"vocab_size", model.vocab().size()},
                         {"final_train_ce",
                          result.curve.points.empty() ? 0.0 : result.curve.points.back().train_loss},
                         {"out", out}};
  write_manifest(out, "train-lm", rc, {cli.config_path, data_path}, summary);
  print_json(summary);
  return 0;
}

int cmd_augment(Cli& cli, const std::string& data_path, const std::string& model_path,
                const std::string& out, double fraction, bool fraction_given,
                const std::string& label) {
  RunConfig rc = cli.assemble();
  if (fraction_given) rc.augment_fraction = fraction;
  rc.augment_label = label_from_name(label);
  auto data = read_dataset(data_path);
  auto model = LstmModel::load(model_path);
  auto stats =
      augment_dataset(data, model, rc.augment_label, rc.augment_fraction, rc.seed, rc.temperature);
  write_dataset(data, out);
  nlohmann::json summary{{"requested_lines", stats.requested_lines},
                         {"accepted_lines", stats.accepted_lines},
                         {"discarded_lines", stats.discarded_lines},
                         {"records", data.size()},
                         {"out", out}};
  write_manifest(out, "augment", rc, {cli.config_path, data_path, model_path}, summary);
  print_json(summary);
  return 0;
}

int cmd_evaluate(Cli& cli, const std::string& model_path, const std::string& data_path,
                 const std::string& out, const std::string& dataset_name) {
  RunConfig rc = cli.assemble();
  auto model = Classifier::load(model_path);
  WindowingStats wstats;
  auto windows = windows_from_dataset(read_dataset(data_path), model.window_spec(), &wstats);
  std::vector<std::pair<Label, Label>> pairs;
  pairs.reserve(windows.size());
  for (const auto& w : windows) {
    if (!w.label) raise(Errc::data_error, "evaluation windows must be labeled");
    pairs.push_back({model.predict(w).label, *w.label});
  }
  auto counts = confusion_from_predictions(pairs);
  auto summary = evaluation_summary(dataset_name.empty() ? data_path : dataset_name,
                                    std::string(model.kind()) + ":" + model_path, counts);
  summary["windows"] = windows.size();
  summary["skipped_lines"] = wstats.skipped_lines;
  if (!out.empty()) {
    std::ofstream f(out, std::ios::trunc);
    if (!f) raise(Errc::io_error, "cannot open for writing: " + out);
    f << summary.dump(2) << '\n';
    write_manifest(out, "evaluate", rc, {cli.config_path, model_path, data_path}, summary);
  }
  print_json(summary);
  return 0;
}

int cmd_monitor(Cli& cli, const std::string& manifest_path, const std::string& sys_model_path,
                const std::string& net_model_path, const std::string& sink_path,
                const std::string& control_path, const std::string& replay_dir,
                std::size_t bench_lines) {
  RunConfig rc = cli.assemble();
  Classifier sys_model = Classifier::load(sys_model_path);
  Classifier net_model =
      net_model_path.empty() ? sys_model : Classifier::load(net_model_path);

  if (bench_lines > 0) {
    auto bench = benchmark_classification(sys_model, bench_lines, rc.seed);
    print_json({{"lines", bench.lines},
                {"windows", bench.windows},
                {"seconds", bench.seconds},
                {"lines_per_sec", bench.lines_per_sec}});
    return 0;
  }
  if (!replay_dir.empty()) {
    auto replay = replay_bundle(replay_dir, sys_model, net_model);
    print_json({{"windows", replay.windows},
                {"compared", replay.compared},
                {"mismatches", replay.mismatches}});
    return replay.mismatches == 0 ? 0 : 1;
  }

  EngineConfig ec = rc.engine;
  ec.seed = rc.seed;
  Engine engine(std::move(sys_model), std::move(net_model), ec);
  auto jobs = read_job_manifest(manifest_path);

  std::ofstream sink_file, control_file;
  std::ostream* sink = &std::cout;
  if (sink_path != "-") {
    sink_file.open(sink_path, std::ios::trunc);
    if (!sink_file) raise(Errc::io_error, "cannot open sink: " + sink_path);
    sink = &sink_file;
  }
  std::ostream* control = &std::cerr;
  if (control_path != "-") {
    control_file.open(control_path, std::ios::trunc);
    if (!control_file) raise(Errc::io_error, "cannot open control channel: " + control_path);
    control = &control_file;
  }

  auto reports = engine.run(jobs, *sink, *control);
  sink->flush();
  control->flush();

  std::size_t verdicts = 0, alarms = 0;
  for (const auto& r : reports) {
    verdicts += r.syscall.verdicts + r.network.verdicts;
    alarms += r.alarms;
  }
  if (sink_path != "-")
    write_manifest(sink_path, "monitor", rc,
                   {cli.config_path, manifest_path, sys_model_path, net_model_path},
                   nlohmann::json{{"jobs", jobs.size()}, {"verdicts", verdicts}, {"alarms", alarms}});
  print_json({{"jobs", jobs.size()}, {"verdicts", verdicts}, {"alarms", alarms}});
  return 0;
}

int cmd_gradcheck(std::size_t seeds) {
  auto reports = run_gradient_checks(seeds);
  bool ok = true;
  for (const auto& r : reports) {
    std::cout << (r.max_rel_error <= 1e-4 ? "[PASS] " : "[FAIL] ") << r.layer
              << ": max relative error " << r.max_rel_error << " over " << r.seeds << " seeds\n";
    ok = ok && r.max_rel_error <= 1e-4;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  Cli cli;
  cli.app.require_subcommand(1);
  cli.app.fallthrough();
  cli.app.add_option("--config", cli.config_path, "TOML-like config file (flags override it)");
  cli.app.add_option("--profile", cli.profile_flag, "parameter profile: syscall | network");
  auto* seed_opt = cli.app.add_option("--seed", cli.seed_flag, "run seed");

  std::string out, source, data_path, vocab_path, embed_path, val_path, curves_path;
  std::string model_path, label = "malicious", dataset_name, manifest_path;
  std::string sys_model_path, net_model_path, sink_path = "-", control_path = "-", replay_dir;
  std::size_t normal = 0, malicious = 0, lines_per_record = 0, bench_lines = 0, gc_seeds = 20;
  double motif_rate = 0.0, noise_rate = 0.0, fraction = 0.2;

  auto* synth = cli.app.add_subcommand("synth", "generate a labeled synthetic corpus");
  synth->add_option("--out", out, "output dataset (JSONL)")->required();
  synth->add_option("--source", source, "syscall | network");
  auto* on = synth->add_option("--normal", normal, "normal line count");
  auto* om = synth->add_option("--malicious", malicious, "malicious line count");
  auto* omr = synth->add_option("--motif-rate", motif_rate, "malicious motif rate");
  auto* onr = synth->add_option("--noise-rate", noise_rate, "benign weak-motif rate");
  synth->add_option("--lines-per-record", lines_per_record, "lines per dataset record");

  auto* vocab = cli.app.add_subcommand("vocab", "build a token vocabulary from a dataset");
  vocab->add_option("--data", data_path, "labeled dataset (JSONL)");
  vocab->add_option("--out", out, "output vocabulary (JSON)")->required();

  auto* embed = cli.app.add_subcommand("embed", "train word2vec embeddings");
  embed->add_option("--data", data_path, "labeled dataset (JSONL)");
  embed->add_option("--vocab", vocab_path, "vocabulary JSON (built from data when absent)");
  embed->add_option("--out", out, "output embedding table (.arh1)")->required();

  auto* tcnn = cli.app.add_subcommand("train-cnn", "train the convolutional classifier");
  tcnn->add_option("--train", data_path, "training dataset (JSONL)");
  tcnn->add_option("--val", val_path, "validation dataset (JSONL; split from train when absent)");
  tcnn->add_option("--embed", embed_path, "embedding table (.arh1; trained inline when absent)");
  tcnn->add_option("--out", out, "output model (.arhc)")->required();
  tcnn->add_option("--curves", curves_path, "per-epoch CSV");

  auto* tsvm = cli.app.add_subcommand("train-svm", "train the linear SVM baseline");
  tsvm->add_option("--train", data_path, "training dataset (JSONL)");
  tsvm->add_option("--val", val_path, "validation dataset (JSONL; split from train when absent)");
  tsvm->add_option("--out", out, "output model (.arhs)")->required();
  tsvm->add_option("--curves", curves_path, "per-epoch CSV");

  auto* tlm = cli.app.add_subcommand("train-lm", "train the character-level LSTM generator");
  tlm->add_option("--data", data_path, "labeled dataset (JSONL)");
  tlm->add_option("--label", label, "class to model: normal | malicious");
  tlm->add_option("--out", out, "output model (.arhl)")->required();
  tlm->add_option("--curves", curves_path, "per-epoch CSV");

  auto* aug = cli.app.add_subcommand("augment", "extend a dataset with generated lines");
  aug->add_option("--data", data_path, "labeled dataset (JSONL)");
  aug->add_option("--model", model_path, "LSTM model (.arhl)");
  auto* ofr = aug->add_option("--fraction", fraction, "generated share of the class line count");
  aug->add_option("--label", label, "class to augment");
  aug->add_option("--out", out, "output dataset (JSONL)")->required();

  auto* eval = cli.app.add_subcommand("evaluate", "evaluate a model on a labeled dataset");
  eval->add_option("--model", model_path, "classifier model (.arhc | .arhs)");
  eval->add_option("--data", data_path, "labeled dataset (JSONL)");
  eval->add_option("--out", out, "write the JSON summary here as well");
  eval->add_option("--dataset-name", dataset_name, "name recorded in the summary");

  auto* mon = cli.app.add_subcommand("monitor", "run the detection engine over job streams");
  mon->add_option("--manifest", manifest_path, "job manifest JSON");
  mon->add_option("--model-syscall", sys_model_path, "syscall classifier model");
  mon->add_option("--model-network", net_model_path, "network classifier model");
  mon->add_option("--sink", sink_path, "verdict/action sink path or - for stdout");
  mon->add_option("--control", control_path, "control channel path or - for stderr");
  mon->add_option("--replay-bundle", replay_dir, "re-classify a forensic bundle and compare");
  mon->add_option("--bench", bench_lines, "benchmark classification over N synthetic lines");

  auto* gc = cli.app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
  gc->add_option("--seeds", gc_seeds, "random seeds per layer");

  try {
    cli.app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  cli.seed_given = seed_opt->count() > 0;
  if (data_path.empty()) data_path = env_or("ARHUACO_DATA", data_path);
  if (model_path.empty()) model_path = env_or("ARHUACO_MODEL", model_path);
  if (out.empty()) out = env_or("ARHUACO_OUT", out);

  try {
    if (synth->parsed()) {
      bool flags[4] = {on->count() > 0, om->count() > 0, omr->count() > 0, onr->count() > 0};
      return cmd_synth(cli, out, source, normal, malicious, motif_rate, noise_rate,
                       lines_per_record, flags);
    }
    if (vocab->parsed()) return cmd_vocab(cli, data_path, out);
    if (embed->parsed()) return cmd_embed(cli, data_path, vocab_path, out);
    if (tcnn->parsed()) return cmd_train_cnn(cli, data_path, val_path, embed_path, out, curves_path);
    if (tsvm->parsed()) return cmd_train_svm(cli, data_path, val_path, out, curves_path);
    if (tlm->parsed()) return cmd_train_lm(cli, data_path, label, out, curves_path);
    if (aug->parsed())
      return cmd_augment(cli, data_path, model_path, out, fraction, ofr->count() > 0, label);
    if (eval->parsed()) return cmd_evaluate(cli, model_path, data_path, out, dataset_name);
    if (mon->parsed())
      return cmd_monitor(cli, manifest_path, sys_model_path, net_model_path, sink_path,
                         control_path, replay_dir, bench_lines);
    if (gc->parsed()) return cmd_gradcheck(gc_seeds);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
