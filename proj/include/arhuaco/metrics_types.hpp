#pragma once

#include <cstddef>
#include <limits>
#include <vector>

namespace arhuaco {

struct CurvePoint {
  std::size_t epoch = 0;
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double train_acc = std::numeric_limits<double>::quiet_NaN();
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double val_acc = std::numeric_limits<double>::quiet_NaN();
};

/// Per-epoch training/validation record; epochs strictly increasing.
struct Curve {
  std::vector<CurvePoint> points;
};

}  // namespace arhuaco
