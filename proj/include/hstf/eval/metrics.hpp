#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hstf/ingest/types.hpp"

namespace hstf::eval {

using ingest::Label;

/// Malicious is the positive class.
struct ConfusionCounts {
  uint64_t tp = 0;
  uint64_t fp = 0;
  uint64_t tn = 0;
  uint64_t fn = 0;

  uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct PointMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double beta = 1.0;
  double f_beta = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

/// (1+b^2)PR / (b^2 P + R); 0 when both are 0.
double f_beta(double precision, double recall, double beta = 1.0);

/// P = TP/(TP+FP) (0 when nothing is flagged), R = TPR = TP/(TP+FN),
/// F_beta = (1+b^2)PR / (b^2 P + R), FPR = FP/(FP+TN) (0 without negatives).
/// Throws Error(kData) for an empty test set or one without positives.
PointMetrics compute_metrics(const ConfusionCounts& counts, double beta = 1.0);

/// Counts verdicts `score > lambda` against labels; unlabeled entries are an
/// Error(kData).
ConfusionCounts count_predictions(std::span<const double> scores, std::span<const Label> labels,
                                  double lambda);

/// FPR implied by precision and recall when positives and negatives are equal
/// in number: R(1-P)/P.
double balanced_fpr(double precision, double recall);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double lambda = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  ///< FPR ascending
  double auc = 0.0;
};

/// Sweeps lambda over {1} + unique scores (descending) + {0}, flagging
/// `score > lambda`; a final point at lambda = -1 closes the curve when some
/// score is <= 0. AUC is the trapezoid area. Throws Error(kData) unless both
/// classes are present.
RocCurve roc_sweep(std::span<const double> scores, std::span<const Label> labels);

}  // namespace hstf::eval
