#pragma once

#include <map>
#include <vector>

#include "eadk/geometry.hpp"

namespace eadk::eval {

struct Det {
  int image_id = 0;
  int category = 0;
  double score = 0;
  geom::BoxXYXY box;
};

struct Gt {
  int image_id = 0;
  int category = 0;
  geom::BoxXYXY box;
};

struct Summary {
  double map_5095 = 0;
  double map_50 = 0;
  double map_75 = 0;
  std::map<int, double> per_class_ap50;
  int n_detections = 0;
  int n_ground_truth = 0;
};

struct Aggregate {
  double mean = 0;
  double stddev = 0;  // population (divisor n)
  int n_runs = 0;
};

// Greedy COCO-style matching for one image and one class. dets must be in
// descending score order; each detection takes the unmatched ground truth
// with highest IoU when that IoU >= iou_thr.
std::vector<bool> match_detections(const std::vector<geom::BoxXYXY>& dets,
                                   const std::vector<geom::BoxXYXY>& gts,
                                   double iou_thr);

// 101-point interpolated AP from TP flags in descending score order.
// n_gt == 0 with detections present yields 0.
double average_precision(const std::vector<bool>& tp_flags, int n_gt);

Summary evaluate(const std::vector<Det>& dets, const std::vector<Gt>& gts,
                 const std::vector<int>& category_ids);

Aggregate aggregate_runs(const std::vector<double>& per_run);

}  // namespace eadk::eval
