#include "eadk/losses.hpp"

#include <cmath>
#include <string>

namespace eadk::loss {

using ad::Tensor;

namespace {

constexpr double kProbEps = 1e-8;

// x^gamma for x in (0,1); fast path for the default gamma = 2
Tensor pow_gamma(const Tensor& x, double gamma) {
  if (gamma == 2.0) return ad::mul(x, x);
  if (gamma == 0.0) return Tensor::full(x.shape(), 1.0);
  if (gamma == 1.0) return x;
  return ad::exp(ad::scale(ad::log(x), gamma));
}

}  // namespace

Tensor focal_loss(const Tensor& p_raw, const Tensor& target,
                  const FocalParams& fp) {
  // affine squash into [eps, 1-eps]: unlike a hard clamp it keeps gradient
  // alive on saturated probabilities
  Tensor p = ad::add_scalar(ad::scale(p_raw, 1.0 - 2.0 * kProbEps), kProbEps);
  Tensor one = Tensor::full(p.shape(), 1.0);
  Tensor q = ad::sub(one, p);
  Tensor pos = ad::scale(ad::mul(pow_gamma(q, fp.gamma), ad::log(p)), -fp.alpha);
  Tensor neg = ad::scale(ad::mul(pow_gamma(p, fp.gamma), ad::log(q)),
                         -(1.0 - fp.alpha));
  Tensor one_minus_t = ad::sub(Tensor::full(target.shape(), 1.0), target);
  return ad::add(ad::mul(target, pos), ad::mul(one_minus_t, neg));
}

std::vector<double> build_targets(const match::Assignment& assignment,
                                  const std::vector<match::GtObject>& gts,
                                  const match::Layout& layout, int n_queries) {
  const int nt = layout.n_tokens();
  std::vector<double> t(static_cast<std::size_t>(n_queries) * nt, 0.0);
  for (auto [pred, gt] : assignment.pairs) {
    if (pred < 0 || pred >= n_queries || gt < 0 ||
        gt >= static_cast<int>(gts.size()))
      throw ad::ContractError("assignment pair (" + std::to_string(pred) + "," +
                              std::to_string(gt) + ") out of range");
    const int c = gts[gt].category;
    if (c < 0 || c >= layout.C)
      throw ad::ContractError("class " + std::to_string(c) +
                              " outside layout with C=" + std::to_string(layout.C));
    for (int k = layout.token_begin(c); k < layout.token_end(c); ++k)
      t[static_cast<std::size_t>(pred) * nt + k] = 1.0;
  }
  return t;
}

Breakdown total_loss(const Tensor& p_out, const Tensor& pred_boxes,
                     const std::vector<match::GtObject>& gts,
                     const match::Assignment& assignment,
                     const match::Layout& layout, const Weights& w,
                     const FocalParams& fp) {
  const int n_queries = p_out.dim(0);
  Tensor targets = Tensor::from_data(
      p_out.shape(), build_targets(assignment, gts, layout, n_queries));
  const int matched = static_cast<int>(assignment.pairs.size());
  const double norm = std::max(1, matched);

  Breakdown b;
  b.cls = ad::scale(ad::reduce(focal_loss(p_out, targets, fp), ad::Reduce::Sum),
                    1.0 / norm);

  if (matched > 0) {
    std::vector<int> pred_rows;
    std::vector<double> gt_data;
    for (auto [pred, gt] : assignment.pairs) {
      pred_rows.push_back(pred);
      const auto& g = gts[gt].box;
      gt_data.insert(gt_data.end(), {g.cx, g.cy, g.w, g.h});
    }
    Tensor matched_pred = ad::gather_rows(pred_boxes, pred_rows);
    Tensor gt_boxes = Tensor::from_data({matched, 4}, std::move(gt_data));
    b.l1 = ad::reduce(geom::l1_tensor(matched_pred, gt_boxes), ad::Reduce::Mean);
    b.giou = ad::reduce(geom::giou_loss_tensor(matched_pred, gt_boxes),
                        ad::Reduce::Mean);
  } else {
    b.l1 = Tensor::scalar(0.0);
    b.giou = Tensor::scalar(0.0);
  }

  b.total = ad::add(ad::add(ad::scale(b.cls, w.cls), ad::scale(b.l1, w.l1)),
                    ad::scale(b.giou, w.giou));
  return b;
}

}  // namespace eadk::loss
