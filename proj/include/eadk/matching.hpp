#pragma once

#include <utility>
#include <vector>

#include "eadk/geometry.hpp"
#include "eadk/tensor.hpp"

namespace eadk::match {

// token layout of the embedding table: row 0 is the start dummy,
// class c owns rows [1 + c*T, 1 + (c+1)*T), row C*T+1 is the end dummy
struct Layout {
  int C = 0;
  int T = 0;
  int n_tokens() const { return C * T + 2; }
  int token_begin(int c) const { return 1 + c * T; }
  int token_end(int c) const { return 1 + (c + 1) * T; }
};

struct GtObject {
  int category = 0;  // index into the layout's class range
  geom::BoxCxCyWH box;
};

struct CostMatrix {
  int rows = 0;  // predictions
  int cols = 0;  // ground-truth objects
  std::vector<double> c;
  double at(int i, int j) const { return c[static_cast<std::size_t>(i) * cols + j]; }
  double& at(int i, int j) { return c[static_cast<std::size_t>(i) * cols + j]; }
};

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (prediction, ground truth)
  double total_cost = 0;
};

enum class TokenAgg { Mean, Max };

struct CostWeights {
  double cls = 1.0;
  double l1 = 5.0;
  double giou = 2.0;
  double alpha = 0.25;
  double gamma = 2.0;
  TokenAgg token_agg = TokenAgg::Mean;
};

// cost(i,j) = cls*cls_cost(i, class_j) + l1*L1(box_i, box_j)
//           + giou*(1 - giou(box_i, box_j)); classification cost is the
// focal-style positive-minus-negative form aggregated over the class's
// token columns. Probabilities are read detached from p_out.
CostMatrix build_cost_matrix(const ad::Tensor& p_out,
                             const std::vector<geom::BoxCxCyWH>& pred_boxes,
                             const std::vector<GtObject>& gts,
                             const Layout& layout,
                             const CostWeights& w = {});

// Minimum-cost injection of columns into rows (rows >= cols). Among
// minimum-cost solutions, returns the one whose row sequence over columns
// 0,1,... is lexicographically smallest. Pairs are listed by ground-truth
// index.
Assignment hungarian(const CostMatrix& cost);

}  // namespace eadk::match
