#include "eadk/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace eadk::geom {

using ad::Tensor;

BoxXYXY to_xyxy(const BoxCxCyWH& b) {
  if (b.w < 0 || b.h < 0)
    throw ad::ContractError("box with negative extent: w=" + std::to_string(b.w) +
                            " h=" + std::to_string(b.h));
  return {b.cx - b.w / 2, b.cy - b.h / 2, b.cx + b.w / 2, b.cy + b.h / 2};
}

BoxCxCyWH to_cxcywh(const BoxXYXY& b) {
  if (b.x2 < b.x1 || b.y2 < b.y1)
    throw ad::ContractError("inverted corner box");
  return {(b.x1 + b.x2) / 2, (b.y1 + b.y2) / 2, b.x2 - b.x1, b.y2 - b.y1};
}

double area(const BoxXYXY& b) { return (b.x2 - b.x1) * (b.y2 - b.y1); }

namespace {

double inter_area(const BoxXYXY& a, const BoxXYXY& b) {
  double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return std::max(0.0, w) * std::max(0.0, h);
}

double enclose_area(const BoxXYXY& a, const BoxXYXY& b) {
  double w = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
  double h = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
  return w * h;
}

}  // namespace

double iou(const BoxXYXY& a, const BoxXYXY& b) {
  double inter = inter_area(a, b);
  double uni = area(a) + area(b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double giou(const BoxXYXY& a, const BoxXYXY& b) {
  double inter = inter_area(a, b);
  double uni = area(a) + area(b) - inter;
  double enc = enclose_area(a, b);
  if (enc <= 0.0) return 0.0;  // both boxes degenerate to the same point
  double i = uni > 0.0 ? inter / uni : 0.0;
  return i - (enc - uni) / enc;
}

BoxLosses box_losses(const BoxCxCyWH& pred, const BoxCxCyWH& gt) {
  BoxLosses r;
  r.l1 = std::fabs(pred.cx - gt.cx) + std::fabs(pred.cy - gt.cy) +
         std::fabs(pred.w - gt.w) + std::fabs(pred.h - gt.h);
  r.giou_loss = 1.0 - giou(to_xyxy(pred), to_xyxy(gt));
  return r;
}

Tensor l1_tensor(const Tensor& pred, const Tensor& gt) {
  return ad::reduce(ad::eabs(ad::sub(pred, gt)), 1, ad::Reduce::Sum);
}

namespace {

struct Corners {
  Tensor x1, y1, x2, y2;
};

Corners to_corners(const Tensor& cxcywh) {
  Tensor cx = ad::slice_cols(cxcywh, 0, 1);
  Tensor cy = ad::slice_cols(cxcywh, 1, 2);
  Tensor hw = ad::scale(ad::slice_cols(cxcywh, 2, 3), 0.5);
  Tensor hh = ad::scale(ad::slice_cols(cxcywh, 3, 4), 0.5);
  return {ad::sub(cx, hw), ad::sub(cy, hh), ad::add(cx, hw), ad::add(cy, hh)};
}

}  // namespace

Tensor giou_loss_tensor(const Tensor& pred, const Tensor& gt) {
  Corners p = to_corners(pred);
  Corners g = to_corners(gt);
  Tensor zero = Tensor::zeros({pred.dim(0), 1});
  Tensor iw = ad::emax(ad::sub(ad::emin(p.x2, g.x2), ad::emax(p.x1, g.x1)), zero);
  Tensor ih = ad::emax(ad::sub(ad::emin(p.y2, g.y2), ad::emax(p.y1, g.y1)), zero);
  Tensor inter = ad::mul(iw, ih);
  Tensor area_p = ad::mul(ad::sub(p.x2, p.x1), ad::sub(p.y2, p.y1));
  Tensor area_g = ad::mul(ad::sub(g.x2, g.x1), ad::sub(g.y2, g.y1));
  Tensor uni = ad::sub(ad::add(area_p, area_g), inter);
  Tensor ew = ad::sub(ad::emax(p.x2, g.x2), ad::emin(p.x1, g.x1));
  Tensor eh = ad::sub(ad::emax(p.y2, g.y2), ad::emin(p.y1, g.y1));
  // guard denominators; boxes from sigmoid outputs can be near-degenerate
  Tensor enc = ad::emax(ad::mul(ew, eh), Tensor::full({pred.dim(0), 1}, 1e-9));
  Tensor uni_safe = ad::emax(uni, Tensor::full({pred.dim(0), 1}, 1e-9));
  Tensor iou_t = ad::mul(inter, ad::reciprocal(uni_safe));
  Tensor dead = ad::mul(ad::sub(enc, uni), ad::reciprocal(enc));
  Tensor giou_t = ad::sub(iou_t, dead);
  return ad::sub(Tensor::full({pred.dim(0), 1}, 1.0), giou_t);
}

}  // namespace eadk::geom
