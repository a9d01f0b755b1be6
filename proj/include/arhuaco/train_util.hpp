#pragma once

#include <span>
#include <vector>

#include "arhuaco/ingest.hpp"
#include "arhuaco/rng.hpp"

namespace arhuaco {

struct Prediction {
  Label label = Label::normal;
  double score = 0.0;  // sigmoid probability (CNN) or decision value (SVM)
};

/// Epoch index order: plain shuffle, or minority oversampling to parity when
/// balancing is on. Deterministic per rng state.
inline std::vector<std::size_t> epoch_order(std::span<const Label> labels, bool balanced, Rng& rng) {
  std::vector<std::size_t> normal, malicious;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (labels[i] == Label::malicious ? malicious : normal).push_back(i);
  std::vector<std::size_t> order;
  if (!balanced || normal.empty() || malicious.empty() || normal.size() == malicious.size()) {
    order.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) order[i] = i;
  } else {
    auto& minority = normal.size() < malicious.size() ? normal : malicious;
    auto& majority = normal.size() < malicious.size() ? malicious : normal;
    order = majority;
    order.insert(order.end(), minority.begin(), minority.end());
    for (std::size_t i = minority.size(); i < majority.size(); ++i)
      order.push_back(minority[rng.below(minority.size())]);
  }
  rng.shuffle(order);
  return order;
}

}  // namespace arhuaco
