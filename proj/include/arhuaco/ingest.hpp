#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arhuaco/error.hpp"

namespace arhuaco {

enum class Source : std::uint8_t { syscall = 0, network = 1 };

inline const char* source_name(Source s) { return s == Source::syscall ? "syscall" : "network"; }

inline Source source_from_name(const std::string& s) {
  if (s == "syscall") return Source::syscall;
  if (s == "network") return Source::network;
  raise(Errc::data_error, "unknown source: " + s);
}

enum class Label : std::uint8_t { normal = 0, malicious = 1 };

inline const char* label_name(Label l) { return l == Label::normal ? "normal" : "malicious"; }

inline Label label_from_name(const std::string& s) {
  if (s == "normal") return Label::normal;
  if (s == "malicious") return Label::malicious;
  raise(Errc::data_error, "unknown label: " + s);
}

/// Reserved vocabulary literals. `<PAD>` fills short lines; `<UNK>` absorbs
/// out-of-vocabulary tokens downstream.
inline const std::string kPadToken = "<PAD>";
inline const std::string kUnkToken = "<UNK>";

struct TraceLine {
  Source source = Source::syscall;
  std::string raw;
  std::vector<std::string> tokens;
};

struct WindowSpec {
  std::size_t tokens_per_line = 0;  // m
  std::size_t lines = 0;            // l

  std::size_t total_tokens() const { return tokens_per_line * lines; }  // n = m * l

  void validate() const {
    if (tokens_per_line < 1 || lines < 1)
      raise(Errc::config_error, "window spec requires m >= 1 and l >= 1");
  }

  bool operator==(const WindowSpec&) const = default;
};

/// Table 4 defaults for the two trace profiles.
inline WindowSpec syscall_window_spec() { return {7, 6}; }
inline WindowSpec network_window_spec() { return {5, 1}; }

struct TokenSequence {
  WindowSpec spec;
  Source source = Source::syscall;
  std::vector<std::string> tokens;  // exactly spec.total_tokens()
  std::optional<Label> label;
};

namespace detail {

// Characters deleted during normalization. Slashes, dots, colons, dashes,
// underscores and equals survive: paths, IPs and flags carry signal.
inline bool is_stripped_char(char c) {
  switch (c) {
    case '(': case ')': case '[': case ']': case '{': case '}':
    case ',': case ';': case '"': case '\'':
      return true;
    default:
      return false;
  }
}

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
}

// Replaces ill-formed UTF-8 byte sequences with U+FFFD so arbitrary byte
// input never propagates invalid text.
inline std::string sanitize_utf8(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  const auto* p = reinterpret_cast<const unsigned char*>(in.data());
  std::size_t i = 0, n = in.size();
  auto put_replacement = [&out] { out += "\xEF\xBF\xBD"; };
  while (i < n) {
    const unsigned char c = p[i];
    std::size_t len;
    if (c < 0x80) len = 1;
    else if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    else { put_replacement(); ++i; continue; }
    if (i + len > n) { put_replacement(); ++i; continue; }
    bool ok = true;
    for (std::size_t k = 1; k < len; ++k)
      if ((p[i + k] & 0xC0) != 0x80) { ok = false; break; }
    if (len == 2 && c < 0xC2) ok = false;                    // overlong
    if (len == 3 && c == 0xE0 && p[i + 1] < 0xA0) ok = false;
    if (len == 4 && (c > 0xF4 || (c == 0xF0 && p[i + 1] < 0x90))) ok = false;
    if (!ok) { put_replacement(); ++i; continue; }
    out.append(reinterpret_cast<const char*>(p + i), len);
    i += len;
  }
  return out;
}

}  // namespace detail

/// Strips uninformative characters and splits on whitespace runs.
/// Tokens are case-preserved and never empty.
inline std::vector<std::string> normalize_tokens(std::string_view raw) {
  const std::string clean = detail::sanitize_utf8(raw);
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : clean) {
    if (detail::is_space(c)) {
      if (!cur.empty()) { tokens.push_back(std::move(cur)); cur.clear(); }
    } else if (!detail::is_stripped_char(c)) {
      cur += c;
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace detail {

inline TraceLine parse_line(Source source, std::string_view raw) {
  bool all_space = true;
  for (char c : raw)
    if (!is_space(c)) { all_space = false; break; }
  if (all_space) raise(Errc::empty_line, "blank input line");
  TraceLine line;
  line.source = source;
  line.raw = std::string(raw);
  line.tokens = normalize_tokens(raw);
  if (line.tokens.size() < 2)
    raise(Errc::malformed_line, "fewer than 2 fields after normalization: " + line.raw);
  return line;
}

}  // namespace detail

inline TraceLine parse_syscall_line(std::string_view raw) {
  return detail::parse_line(Source::syscall, raw);
}

inline TraceLine parse_network_line(std::string_view raw) {
  return detail::parse_line(Source::network, raw);
}

inline TraceLine parse_trace_line(Source source, std::string_view raw) {
  return detail::parse_line(source, raw);
}

/// Non-throwing variant for streaming consumers.
inline std::optional<TraceLine> try_parse_trace_line(Source source, std::string_view raw) noexcept {
  try {
    return detail::parse_line(source, raw);
  } catch (const Error&) {
    return std::nullopt;
  }
}

/// Keeps the first m tokens, padding the tail with `pad` when shorter.
inline std::vector<std::string> truncate_pad_line(const std::vector<std::string>& tokens,
                                                  std::size_t m,
                                                  const std::string& pad = kPadToken) {
  if (m < 1) raise(Errc::config_error, "truncate_pad_line requires m >= 1");
  std::vector<std::string> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m && i < tokens.size(); ++i) out.push_back(tokens[i]);
  while (out.size() < m) out.push_back(pad);
  return out;
}

inline TokenSequence build_window(const std::vector<TraceLine>& lines, const WindowSpec& spec,
                                  std::optional<Label> label = std::nullopt) {
  spec.validate();
  if (lines.size() != spec.lines)
    raise(Errc::wrong_line_count,
          "expected " + std::to_string(spec.lines) + " lines, got " + std::to_string(lines.size()));
  TokenSequence seq;
  seq.spec = spec;
  seq.source = lines.front().source;
  seq.label = label;
  seq.tokens.reserve(spec.total_tokens());
  for (const auto& line : lines) {
    if (line.source != seq.source) raise(Errc::mixed_sources, "window mixes trace sources");
    auto row = truncate_pad_line(line.tokens, spec.tokens_per_line);
    for (auto& t : row) seq.tokens.push_back(std::move(t));
  }
  return seq;
}

/// Renders a window back into its l space-joined lines (padding visible).
inline std::vector<std::string> render_window_lines(const TokenSequence& seq) {
  std::vector<std::string> lines;
  lines.reserve(seq.spec.lines);
  for (std::size_t li = 0; li < seq.spec.lines; ++li) {
    std::string line;
    for (std::size_t i = 0; i < seq.spec.tokens_per_line; ++i) {
      if (i) line += ' ';
      line += seq.tokens[li * seq.spec.tokens_per_line + i];
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

/// Sliding windower over a single trace stream. Emits a window every `stride`
/// lines once l lines are buffered; malformed lines are skipped and counted,
/// never fatal. Single consumer per stream.
class WindowStream {
 public:
  WindowStream(Source source, WindowSpec spec, std::size_t stride)
      : source_(source), spec_(spec), stride_(stride) {
    spec_.validate();
    if (stride_ < 1) raise(Errc::config_error, "stride must be >= 1");
  }

  /// Feeds one raw line; returns a window when one completes.
  std::optional<TokenSequence> push_line(std::string_view raw) {
    auto line = try_parse_trace_line(source_, raw);
    if (!line) {
      ++skipped_lines_;
      return std::nullopt;
    }
    buffer_.push_back(truncate_pad_line(line->tokens, spec_.tokens_per_line));
    ++since_last_;
    if (buffer_.size() > spec_.lines) buffer_.pop_front();
    if (buffer_.size() == spec_.lines && since_last_ >= stride_) {
      since_last_ = 0;
      TokenSequence seq;
      seq.spec = spec_;
      seq.source = source_;
      seq.tokens.reserve(spec_.total_tokens());
      for (const auto& row : buffer_)
        for (const auto& t : row) seq.tokens.push_back(t);
      ++emitted_;
      return seq;
    }
    return std::nullopt;
  }

  std::size_t skipped_lines() const { return skipped_lines_; }
  std::size_t emitted() const { return emitted_; }

 private:
  Source source_;
  WindowSpec spec_;
  std::size_t stride_;
  std::deque<std::vector<std::string>> buffer_;
  std::size_t since_last_ = 0;
  std::size_t skipped_lines_ = 0;
  std::size_t emitted_ = 0;
};

/// Windows an entire line stream; the incomplete tail buffer is discarded at EOF.
inline std::vector<TokenSequence> stream_windows(std::istream& in, Source source,
                                                 const WindowSpec& spec, std::size_t stride,
                                                 std::size_t* skipped_lines = nullptr) {
  WindowStream ws(source, spec, stride);
  std::vector<TokenSequence> out;
  std::string line;
  while (std::getline(in, line))
    if (auto w = ws.push_line(line)) out.push_back(std::move(*w));
  if (skipped_lines) *skipped_lines = ws.skipped_lines();
  return out;
}

inline std::vector<TokenSequence> stream_windows(const std::vector<std::string>& lines, Source source,
                                                 const WindowSpec& spec, std::size_t stride,
                                                 std::size_t* skipped_lines = nullptr) {
  WindowStream ws(source, spec, stride);
  std::vector<TokenSequence> out;
  for (const auto& line : lines)
    if (auto w = ws.push_line(line)) out.push_back(std::move(*w));
  if (skipped_lines) *skipped_lines = ws.skipped_lines();
  return out;
}

}  // namespace arhuaco
