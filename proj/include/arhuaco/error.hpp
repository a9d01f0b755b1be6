#pragma once

#include <stdexcept>
#include <string>

namespace arhuaco {

enum class Errc {
  // ingest
  empty_line,
  malformed_line,
  wrong_line_count,
  mixed_sources,
  // features
  empty_corpus,
  // nn-core
  shape_mismatch,
  empty_batch,
  invalid_rate,
  // cnn
  kernel_too_large,
  empty_feature_map,
  spec_mismatch,
  single_class_dataset,
  // svm
  dimension_mismatch,
  invalid_label,
  // generator
  empty_logits,
  corpus_too_short,
  unknown_prime_char,
  generation_starvation,
  // metrics
  empty_evaluation,
  no_negatives,
  // synth
  too_small_for_split,
  // engine
  model_spec_mismatch,
  action_failure,
  // serialization / cli
  io_error,
  version_mismatch,
  checksum_mismatch,
  config_error,
  data_error,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::empty_line: return "EmptyLine";
    case Errc::malformed_line: return "MalformedLine";
    case Errc::wrong_line_count: return "WrongLineCount";
    case Errc::mixed_sources: return "MixedSources";
    case Errc::empty_corpus: return "EmptyCorpus";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::empty_batch: return "EmptyBatch";
    case Errc::invalid_rate: return "InvalidRate";
    case Errc::kernel_too_large: return "KernelTooLarge";
    case Errc::empty_feature_map: return "EmptyFeatureMap";
    case Errc::spec_mismatch: return "SpecMismatch";
    case Errc::single_class_dataset: return "SingleClassDataset";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::invalid_label: return "InvalidLabel";
    case Errc::empty_logits: return "EmptyLogits";
    case Errc::corpus_too_short: return "CorpusTooShort";
    case Errc::unknown_prime_char: return "UnknownPrimeChar";
    case Errc::generation_starvation: return "GenerationStarvation";
    case Errc::empty_evaluation: return "EmptyEvaluation";
    case Errc::no_negatives: return "NoNegatives";
    case Errc::too_small_for_split: return "TooSmallForSplit";
    case Errc::model_spec_mismatch: return "ModelSpecMismatch";
    case Errc::action_failure: return "ActionFailure";
    case Errc::io_error: return "IoError";
    case Errc::version_mismatch: return "VersionMismatch";
    case Errc::checksum_mismatch: return "ChecksumMismatch";
    case Errc::config_error: return "ConfigError";
    case Errc::data_error: return "DataError";
  }
  return "UnknownError";
}

/// Exception carrying a stable error code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace arhuaco
