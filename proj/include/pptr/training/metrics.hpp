#pragma once

#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pptr/common/error.hpp"
#include "pptr/data/io.hpp"

namespace pptr::training {

struct Metrics {
  std::vector<double> iou;     // per class; NaN where the class is absent from pred and gt
  double miou = 0.0;           // mean over the non-NaN entries of iou
  double accuracy = 0.0;
  std::vector<double> loss_history;  // training loss per epoch

  bool scored(std::size_t c) const { return !std::isnan(iou[c]); }
};

/// Confusion-based IoU per class, TP / (TP + FP + FN).
inline Metrics mean_iou(std::span<const int> pred, std::span<const int> gt, std::size_t num_classes) {
  if (pred.size() != gt.size())
    throw Error(Errc::LengthMismatch, "pred has " + std::to_string(pred.size()) + " labels, gt has " +
                                          std::to_string(gt.size()));
  if (gt.empty()) throw Error(Errc::InvalidConfig, "mean_iou of no labels");
  if (num_classes < 1) throw Error(Errc::InvalidConfig, "num_classes must be >= 1");
  std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int p = pred[i], g = gt[i];
    if (p < 0 || g < 0 || static_cast<std::size_t>(p) >= num_classes || static_cast<std::size_t>(g) >= num_classes)
      throw Error(Errc::InvalidConfig, "class id out of range at index " + std::to_string(i));
    if (p == g) {
      ++tp[static_cast<std::size_t>(g)];
      ++correct;
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(g)];
    }
  }
  Metrics m;
  m.iou.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  std::size_t scored = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t denom = tp[c] + fp[c] + fn[c];
    if (denom == 0) continue;
    m.iou[c] = static_cast<double>(tp[c]) / static_cast<double>(denom);
    sum += m.iou[c];
    ++scored;
  }
  m.miou = sum / static_cast<double>(scored);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(gt.size());
  return m;
}

/// Header of the metrics CSV for `num_classes` classes.
inline void write_metrics_header(std::ostream& out, std::size_t num_classes, const std::string& extra = {}) {
  out << "epoch,loss,acc,miou";
  for (std::size_t c = 0; c < num_classes; ++c) out << ",iou_" << c;
  if (!extra.empty()) out << ',' << extra;
  out << '\n';
}

/// One CSV row; unscored classes are written as "nan".
inline void write_metrics_row(std::ostream& out, std::size_t epoch, double loss, const Metrics& m,
                              const std::string& extra = {}) {
  auto num = [](double v) { return std::isnan(v) ? std::string("nan") : data::format_double(v); };
  out << epoch << ',' << num(loss) << ',' << num(m.accuracy) << ',' << num(m.miou);
  for (double v : m.iou) out << ',' << num(v);
  if (!extra.empty()) out << ',' << extra;
  out << '\n';
}

}  // namespace pptr::training
