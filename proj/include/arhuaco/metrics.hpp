#pragma once

#include <fstream>
#include <span>
#include <string>
#include <utility>

#include <json.hpp>

#include "arhuaco/error.hpp"
#include "arhuaco/ingest.hpp"
#include "arhuaco/metrics_types.hpp"

namespace arhuaco {

/// Positive class is malicious everywhere.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
};

inline ConfusionCounts confusion_from_predictions(
    std::span<const std::pair<Label, Label>> predicted_actual) {
  ConfusionCounts c;
  for (const auto& [predicted, actual] : predicted_actual) {
    if (predicted == Label::malicious)
      (actual == Label::malicious ? c.tp : c.fp)++;
    else
      (actual == Label::malicious ? c.fn : c.tn)++;
  }
  return c;
}

/// Eq. 10: (TP+TN) / (TP+TN+FP+FN).
inline double accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) raise(Errc::empty_evaluation, "no evaluated samples");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

/// Eq. 11: FP / (FP+TN).
inline double false_positive_rate(const ConfusionCounts& c) {
  if (c.fp + c.tn == 0) raise(Errc::no_negatives, "no negative samples");
  return static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
}

inline void export_curves(const Curve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::io_error, "cannot open for writing: " + path);
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  out.precision(17);
  for (const auto& p : curve.points)
    out << p.epoch << ',' << p.train_loss << ',' << p.train_acc << ',' << p.val_loss << ','
        << p.val_acc << '\n';
  if (!out) raise(Errc::io_error, "short write: " + path);
}

inline nlohmann::json evaluation_summary(const std::string& dataset, const std::string& model,
                                         const ConfusionCounts& c) {
  nlohmann::json j;
  j["dataset"] = dataset;
  j["model"] = model;
  j["acc"] = accuracy(c);
  j["fpr"] = (c.fp + c.tn) ? nlohmann::json(false_positive_rate(c)) : nlohmann::json();
  j["counts"] = {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}};
  return j;
}

}  // namespace arhuaco
