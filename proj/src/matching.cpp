#include "eadk/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace eadk::match {

namespace {

double focal_pos(double p, double alpha, double gamma) {
  return alpha * std::pow(1.0 - p, gamma) * (-std::log(p));
}

double focal_neg(double p, double alpha, double gamma) {
  return (1.0 - alpha) * std::pow(p, gamma) * (-std::log(1.0 - p));
}

constexpr double kProbEps = 1e-8;

// Jonker-Volgenant shortest augmenting path; a is n x m with n <= m.
// Returns min cost; assigned[i] = column matched to row i.
double jv_min_cost(const std::vector<double>& a, int n, int m,
                   std::vector<int>* assigned) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = inf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = a[static_cast<std::size_t>(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double cost = 0.0;
  if (assigned) assigned->assign(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) {
      cost += a[static_cast<std::size_t>(p[j] - 1) * m + (j - 1)];
      if (assigned) (*assigned)[p[j] - 1] = j - 1;
    }
  }
  return cost;
}

}  // namespace

CostMatrix build_cost_matrix(const ad::Tensor& p_out,
                             const std::vector<geom::BoxCxCyWH>& pred_boxes,
                             const std::vector<GtObject>& gts,
                             const Layout& layout, const CostWeights& w) {
  if (gts.empty())
    throw ad::ContractError("build_cost_matrix with zero ground-truth objects");
  const int n = static_cast<int>(pred_boxes.size());
  const int m = static_cast<int>(gts.size());
  const int nt = layout.n_tokens();
  if (p_out.rank() != 2 || p_out.dim(0) != n || p_out.dim(1) != nt)
    throw ad::DimensionError("p_out shape " + ad::shape_str(p_out.shape()) +
                             " inconsistent with " + std::to_string(n) +
                             " predictions and layout of " + std::to_string(nt) +
                             " tokens");
  CostMatrix cm;
  cm.rows = n;
  cm.cols = m;
  cm.c.resize(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const GtObject& gt = gts[j];
      if (gt.category < 0 || gt.category >= layout.C)
        throw ad::ContractError("ground-truth class " + std::to_string(gt.category) +
                                " outside layout with C=" + std::to_string(layout.C));
      double cls = w.token_agg == TokenAgg::Max
                       ? -std::numeric_limits<double>::infinity()
                       : 0.0;
      for (int t = layout.token_begin(gt.category); t < layout.token_end(gt.category); ++t) {
        double p = p_out.at(static_cast<std::size_t>(i) * nt + t);
        p = std::min(1.0 - kProbEps, std::max(kProbEps, p));
        double c = focal_pos(p, w.alpha, w.gamma) - focal_neg(p, w.alpha, w.gamma);
        if (w.token_agg == TokenAgg::Max)
          cls = std::max(cls, c);
        else
          cls += c / layout.T;
      }
      geom::BoxLosses bl = geom::box_losses(pred_boxes[i], gt.box);
      cm.at(i, j) = w.cls * cls + w.l1 * bl.l1 + w.giou * bl.giou_loss;
    }
  }
  return cm;
}

Assignment hungarian(const CostMatrix& cost) {
  const int n = cost.rows, m = cost.cols;
  if (n < m)
    throw ad::ContractError("hungarian requires rows >= cols, got " +
                            std::to_string(n) + " x " + std::to_string(m));
  for (double v : cost.c)
    if (!std::isfinite(v))
      throw ad::ContractError("non-finite entry in cost matrix");

  // solve with ground-truth columns as JV rows (m <= n)
  auto transposed = [&](const std::vector<int>& gt_rows,
                        const std::vector<int>& pred_cols) {
    std::vector<double> a(gt_rows.size() * pred_cols.size());
    for (std::size_t j = 0; j < gt_rows.size(); ++j)
      for (std::size_t i = 0; i < pred_cols.size(); ++i)
        a[j * pred_cols.size() + i] = cost.at(pred_cols[i], gt_rows[j]);
    return a;
  };

  std::vector<int> all_gts(m), all_preds(n);
  for (int j = 0; j < m; ++j) all_gts[j] = j;
  for (int i = 0; i < n; ++i) all_preds[i] = i;
  const double best = jv_min_cost(transposed(all_gts, all_preds), m, n, nullptr);
  const double tol = 1e-9 * std::max(1.0, std::fabs(best));

  // fix columns in order to the lowest prediction index that preserves
  // optimality; deterministic lexicographic tie-break for golden tests
  std::vector<int> pred_for_gt(m, -1);
  std::vector<char> used(n, 0);
  double fixed_cost = 0.0;
  for (int j = 0; j < m; ++j) {
    std::vector<int> rest_gts;
    for (int jj = j + 1; jj < m; ++jj) rest_gts.push_back(jj);
    for (int r = 0; r < n; ++r) {
      if (used[r]) continue;
      std::vector<int> free_preds;
      for (int i = 0; i < n; ++i)
        if (!used[i] && i != r) free_preds.push_back(i);
      double rest = 0.0;
      if (!rest_gts.empty())
        rest = jv_min_cost(transposed(rest_gts, free_preds),
                           static_cast<int>(rest_gts.size()),
                           static_cast<int>(free_preds.size()), nullptr);
      if (fixed_cost + cost.at(r, j) + rest <= best + tol) {
        pred_for_gt[j] = r;
        used[r] = 1;
        fixed_cost += cost.at(r, j);
        break;
      }
    }
  }

  Assignment a;
  a.total_cost = 0.0;
  for (int j = 0; j < m; ++j) {
    a.pairs.emplace_back(pred_for_gt[j], j);
    a.total_cost += cost.at(pred_for_gt[j], j);
  }
  return a;
}

}  // namespace eadk::match
