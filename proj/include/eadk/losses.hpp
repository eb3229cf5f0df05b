#pragma once

#include <vector>

#include "eadk/matching.hpp"
#include "eadk/tensor.hpp"

namespace eadk::loss {

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

struct Weights {
  double cls = 1.0;
  double l1 = 5.0;
  double giou = 2.0;
};

struct Breakdown {
  ad::Tensor cls;
  ad::Tensor l1;
  ad::Tensor giou;
  ad::Tensor total;
};

// per-element focal loss; p is clamped to [1e-8, 1-1e-8] first
ad::Tensor focal_loss(const ad::Tensor& p, const ad::Tensor& target,
                      const FocalParams& fp = {});

// N_I x N_T zeros/ones; row i carries ones on the matched class's token
// columns, unmatched rows and the dummy columns stay zero
std::vector<double> build_targets(const match::Assignment& assignment,
                                  const std::vector<match::GtObject>& gts,
                                  const match::Layout& layout, int n_queries);

// cls summed over all entries / max(1, matched); l1 and giou averaged over
// matched pairs; pass an empty assignment for zero-ground-truth images
Breakdown total_loss(const ad::Tensor& p_out, const ad::Tensor& pred_boxes,
                     const std::vector<match::GtObject>& gts,
                     const match::Assignment& assignment,
                     const match::Layout& layout, const Weights& w = {},
                     const FocalParams& fp = {});

}  // namespace eadk::loss
