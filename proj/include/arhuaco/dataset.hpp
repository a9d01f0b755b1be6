#pragma once

#include <fstream>
#include <istream>
#include <string>
#include <vector>

#include <json.hpp>

#include "arhuaco/error.hpp"
#include "arhuaco/ingest.hpp"

namespace arhuaco {

/// One labeled observation: a group of consecutive raw trace lines from a
/// single source. The on-disk form is JSONL, one object per line:
///   {"source":"syscall"|"network","label":"normal"|"malicious","lines":[...]}
struct LabeledLines {
  Source source = Source::syscall;
  Label label = Label::normal;
  std::vector<std::string> lines;
};

using LabeledDataset = std::vector<LabeledLines>;

inline nlohmann::json to_json(const LabeledLines& e) {
  return {{"source", source_name(e.source)}, {"label", label_name(e.label)}, {"lines", e.lines}};
}

inline LabeledLines labeled_lines_from_json(const nlohmann::json& j) {
  LabeledLines e;
  if (!j.contains("source") || !j.contains("label") || !j.contains("lines"))
    raise(Errc::data_error, "dataset record missing source/label/lines");
  e.source = source_from_name(j.at("source").get<std::string>());
  e.label = label_from_name(j.at("label").get<std::string>());
  e.lines = j.at("lines").get<std::vector<std::string>>();
  return e;
}

inline void write_dataset(const LabeledDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::io_error, "cannot open for writing: " + path);
  for (const auto& e : data) out << to_json(e).dump() << '\n';
  if (!out) raise(Errc::io_error, "short write: " + path);
}

inline LabeledDataset read_dataset(std::istream& in) {
  LabeledDataset data;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      raise(Errc::data_error, "invalid JSON at dataset line " + std::to_string(lineno));
    data.push_back(labeled_lines_from_json(j));
  }
  return data;
}

inline LabeledDataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_error, "cannot open: " + path);
  return read_dataset(in);
}

struct WindowingStats {
  std::size_t windows = 0;
  std::size_t skipped_lines = 0;
};

/// Converts labeled line groups into labeled windows. Each record is windowed
/// independently (tumbling stride = l); malformed lines inside a record are
/// skipped and counted.
inline std::vector<TokenSequence> windows_from_dataset(const LabeledDataset& data,
                                                       const WindowSpec& spec,
                                                       WindowingStats* stats = nullptr) {
  std::vector<TokenSequence> out;
  std::size_t skipped = 0;
  for (const auto& rec : data) {
    WindowStream ws(rec.source, spec, spec.lines);
    for (const auto& line : rec.lines) {
      if (auto w = ws.push_line(line)) {
        w->label = rec.label;
        out.push_back(std::move(*w));
      }
    }
    skipped += ws.skipped_lines();
  }
  if (stats) {
    stats->windows = out.size();
    stats->skipped_lines = skipped;
  }
  return out;
}

/// Total raw line count for one class (the generator's augmentation unit).
inline std::size_t class_line_count(const LabeledDataset& data, Label label) {
  std::size_t n = 0;
  for (const auto& e : data)
    if (e.label == label) n += e.lines.size();
  return n;
}

}  // namespace arhuaco
