#include "eadk/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace eadk::eval {

std::vector<bool> match_detections(const std::vector<geom::BoxXYXY>& dets,
                                   const std::vector<geom::BoxXYXY>& gts,
                                   double iou_thr) {
  std::vector<bool> tp(dets.size(), false);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    double best = -1.0;
    int pick = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double i = geom::iou(dets[d], gts[g]);
      if (i >= iou_thr && i > best) {
        best = i;
        pick = static_cast<int>(g);
      }
    }
    if (pick >= 0) {
      tp[d] = true;
      taken[pick] = true;
    }
  }
  return tp;
}

double average_precision(const std::vector<bool>& tp_flags, int n_gt) {
  if (n_gt <= 0) return 0.0;
  const std::size_t n = tp_flags.size();
  std::vector<double> recall(n), precision(n);
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp_flags[i]) ++tp;
    recall[i] = static_cast<double>(tp) / n_gt;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // precision envelope: max precision at recall >= r
  double ap = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    double p = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (recall[i] >= r) p = std::max(p, precision[i]);
    ap += p / 101.0;
  }
  return ap;
}

Summary evaluate(const std::vector<Det>& dets, const std::vector<Gt>& gts,
                 const std::vector<int>& category_ids) {
  Summary s;
  s.n_detections = static_cast<int>(dets.size());
  s.n_ground_truth = static_cast<int>(gts.size());

  std::vector<double> thresholds;
  for (int k = 0; k < 10; ++k) thresholds.push_back(0.50 + 0.05 * k);

  std::vector<double> map_per_thr(thresholds.size(), 0.0);
  for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
    const double thr = thresholds[ti];
    double ap_sum = 0.0;
    int n_classes = 0;
    for (int cat : category_ids) {
      // detections of this class, globally sorted by descending score;
      // stable so ties keep insertion order
      std::vector<const Det*> cds;
      for (const Det& d : dets)
        if (d.category == cat) cds.push_back(&d);
      std::stable_sort(cds.begin(), cds.end(),
                       [](const Det* a, const Det* b) { return a->score > b->score; });
      int n_gt = 0;
      std::set<int> image_ids;
      for (const Gt& g : gts)
        if (g.category == cat) {
          ++n_gt;
          image_ids.insert(g.image_id);
        }
      for (const Det* d : cds) image_ids.insert(d->image_id);
      if (n_gt == 0 && cds.empty()) continue;  // class absent entirely
      ++n_classes;
      // per-image greedy matching, flags reassembled in global score order
      std::vector<bool> flags(cds.size(), false);
      for (int img : image_ids) {
        std::vector<geom::BoxXYXY> dboxes, gboxes;
        std::vector<std::size_t> dpos;
        for (std::size_t i = 0; i < cds.size(); ++i)
          if (cds[i]->image_id == img) {
            dboxes.push_back(cds[i]->box);
            dpos.push_back(i);
          }
        for (const Gt& g : gts)
          if (g.category == cat && g.image_id == img) gboxes.push_back(g.box);
        std::vector<bool> tp = match_detections(dboxes, gboxes, thr);
        for (std::size_t i = 0; i < dpos.size(); ++i) flags[dpos[i]] = tp[i];
      }
      const double ap = average_precision(flags, n_gt);
      ap_sum += ap;
      if (thr == 0.50) s.per_class_ap50[cat] = ap;
    }
    map_per_thr[ti] = n_classes > 0 ? ap_sum / n_classes : 0.0;
  }
  s.map_50 = map_per_thr[0];
  s.map_75 = map_per_thr[5];
  double m = 0.0;
  for (double v : map_per_thr) m += v;
  s.map_5095 = m / map_per_thr.size();
  return s;
}

Aggregate aggregate_runs(const std::vector<double>& per_run) {
  if (per_run.empty()) throw ad::ContractError("aggregate_runs of zero runs");
  Aggregate a;
  a.n_runs = static_cast<int>(per_run.size());
  for (double v : per_run) a.mean += v;
  a.mean /= a.n_runs;
  double ss = 0.0;
  for (double v : per_run) ss += (v - a.mean) * (v - a.mean);
  a.stddev = std::sqrt(ss / a.n_runs);
  return a;
}

}  // namespace eadk::eval
