#include "hstf/eval/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "hstf/common/error.hpp"

namespace hstf::eval {

double f_beta(double precision, double recall, double beta) {
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  return denom > 0.0 ? (1.0 + b2) * precision * recall / denom : 0.0;
}

PointMetrics compute_metrics(const ConfusionCounts& c, double beta) {
  if (c.total() == 0) throw Error(ErrorCode::kData, "cannot compute metrics on an empty test set");
  if (c.tp + c.fn == 0) throw Error(ErrorCode::kData, "recall is undefined: the test set has no malicious samples");
  if (!(beta > 0.0)) throw Error(ErrorCode::kConfig, "beta must be positive");
  PointMetrics m;
  m.beta = beta;
  m.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  m.tpr = m.recall;
  m.f_beta = f_beta(m.precision, m.recall, beta);
  m.fpr = c.fp + c.tn > 0 ? static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn) : 0.0;
  return m;
}

ConfusionCounts count_predictions(std::span<const double> scores, std::span<const Label> labels, double lambda) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::kData, "score and label counts differ");
  ConfusionCounts c;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == Label::kUnlabeled) throw Error(ErrorCode::kData, "cannot score an unlabeled sample");
    const bool flagged = scores[i] > lambda;
    const bool mal = labels[i] == Label::kMalicious;
    if (flagged && mal) ++c.tp;
    else if (flagged) ++c.fp;
    else if (mal) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double balanced_fpr(double precision, double recall) {
  return precision > 0.0 ? recall * (1.0 - precision) / precision : 0.0;
}

RocCurve roc_sweep(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::kData, "score and label counts differ");
  uint64_t pos = 0, neg = 0;
  for (auto l : labels) {
    if (l == Label::kMalicious) ++pos;
    else if (l == Label::kBenign) ++neg;
    else throw Error(ErrorCode::kData, "cannot score an unlabeled sample");
  }
  if (pos == 0 || neg == 0) throw Error(ErrorCode::kData, "ROC needs both malicious and benign samples");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  uint64_t tp = 0, fp = 0;
  size_t k = 0;
  auto emit = [&](double lambda) {
    // Everything strictly above lambda is flagged.
    while (k < order.size() && scores[order[k]] > lambda) {
      if (labels[order[k]] == Label::kMalicious) ++tp;
      else ++fp;
      ++k;
    }
    roc.points.push_back(RocPoint{static_cast<double>(fp) / static_cast<double>(neg),
                                  static_cast<double>(tp) / static_cast<double>(pos), lambda});
  };
  emit(1.0);
  for (size_t i = 0; i < order.size(); ++i) {
    const double s = scores[order[i]];
    if (s >= 1.0 || s <= 0.0) continue;
    if (i > 0 && s == scores[order[i - 1]]) continue;
    emit(s);
  }
  emit(0.0);
  if (k < order.size()) emit(-1.0);

  for (size_t i = 1; i < roc.points.size(); ++i) {
    const auto& a = roc.points[i - 1];
    const auto& b = roc.points[i];
    roc.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return roc;
}

}  // namespace hstf::eval
