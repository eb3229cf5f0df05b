#pragma once

#include "eadk/tensor.hpp"

namespace eadk::geom {

// boxes are unitless fractions of the image; cxcywh is the regression space
struct BoxCxCyWH {
  double cx = 0, cy = 0, w = 0, h = 0;
};

struct BoxXYXY {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

BoxXYXY to_xyxy(const BoxCxCyWH& b);  // throws ContractError on negative w/h
BoxCxCyWH to_cxcywh(const BoxXYXY& b);

double area(const BoxXYXY& b);
double iou(const BoxXYXY& a, const BoxXYXY& b);

// iou - (enclosing - union) / enclosing, in (-1, 1]
double giou(const BoxXYXY& a, const BoxXYXY& b);

struct BoxLosses {
  double l1 = 0;         // sum |delta| over the four cxcywh components
  double giou_loss = 0;  // 1 - giou of the corner forms
};
BoxLosses box_losses(const BoxCxCyWH& pred, const BoxCxCyWH& gt);

// Differentiable counterparts over [K x 4] cxcywh tensors (row per pair).
// Returns a [K x 1] column of per-pair values.
ad::Tensor l1_tensor(const ad::Tensor& pred, const ad::Tensor& gt);
ad::Tensor giou_loss_tensor(const ad::Tensor& pred, const ad::Tensor& gt);

}  // namespace eadk::geom
