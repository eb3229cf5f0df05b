#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "eadk/matching.hpp"
#include "eadk/rng.hpp"

using namespace eadk;
using match::Assignment;
using match::CostMatrix;

namespace {

CostMatrix make_cost(int rows, int cols, std::vector<double> v) {
  CostMatrix cm;
  cm.rows = rows;
  cm.cols = cols;
  cm.c = std::move(v);
  return cm;
}

// brute force: minimum over all injections of columns into rows
double brute_force_min(const CostMatrix& cm) {
  std::vector<int> rows(cm.rows);
  std::iota(rows.begin(), rows.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::sort(rows.begin(), rows.end());
  do {
    double c = 0;
    for (int j = 0; j < cm.cols; ++j) c += cm.at(rows[j], j);
    best = std::min(best, c);
  } while (std::next_permutation(rows.begin(), rows.end()));
  return best;
}

}  // namespace

TEST_CASE("hungarian worked examples") {
  Assignment one = match::hungarian(make_cost(1, 1, {7}));
  CHECK(one.pairs == std::vector<std::pair<int, int>>{{0, 0}});
  CHECK(one.total_cost == 7.0);

  // 3 predictions x 2 ground truths; optimum pairs pred1-gt0, pred0-gt1
  Assignment a = match::hungarian(make_cost(3, 2, {4, 1, 2, 0, 6, 5}));
  CHECK(a.total_cost == 3.0);
  CHECK(a.pairs == std::vector<std::pair<int, int>>{{1, 0}, {0, 1}});
}

TEST_CASE("hungarian equals brute force on random matrices") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    int m = 2 + rng.uniform_int(5);       // columns
    int n = m + rng.uniform_int(3);       // rows >= columns
    std::vector<double> v(static_cast<std::size_t>(n) * m);
    for (double& x : v) x = rng.uniform(-5.0, 5.0);
    CostMatrix cm = make_cost(n, m, std::move(v));
    Assignment a = match::hungarian(cm);
    CHECK(a.total_cost == doctest::Approx(brute_force_min(cm)).epsilon(1e-9));

    // pairs are a valid injection and re-sum to total_cost
    std::vector<char> used(n, 0);
    double resum = 0;
    for (auto [p, g] : a.pairs) {
      CHECK_FALSE(used[p]);
      used[p] = 1;
      resum += cm.at(p, g);
    }
    CHECK(resum == doctest::Approx(a.total_cost).epsilon(1e-12));
  }
}

TEST_CASE("hungarian tie-break is lexicographically smallest") {
  // constant matrix: every injection is optimal, gt j must take pred j
  Assignment a = match::hungarian(make_cost(3, 3, {1, 1, 1, 1, 1, 1, 1, 1, 1}));
  CHECK(a.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}});

  // swapping two prediction rows maps the assignment through the swap
  Rng rng(55);
  std::vector<double> v(12);
  for (double& x : v) x = rng.uniform(0.0, 1.0);
  CostMatrix cm = make_cost(4, 3, v);
  std::swap_ranges(v.begin(), v.begin() + 3, v.begin() + 3);
  CostMatrix swapped = make_cost(4, 3, v);
  Assignment a0 = match::hungarian(cm);
  Assignment a1 = match::hungarian(swapped);
  auto map_row = [](int r) { return r == 0 ? 1 : r == 1 ? 0 : r; };
  CHECK(a0.total_cost == doctest::Approx(a1.total_cost).epsilon(1e-12));
  for (std::size_t k = 0; k < a0.pairs.size(); ++k)
    CHECK(map_row(a0.pairs[k].first) == a1.pairs[k].first);
}

TEST_CASE("hungarian contract errors") {
  CHECK_THROWS_AS(match::hungarian(make_cost(1, 2, {1, 2})), ad::ContractError);
  CHECK_THROWS_AS(
      match::hungarian(make_cost(1, 1, {std::numeric_limits<double>::quiet_NaN()})),
      ad::ContractError);
}

TEST_CASE("cost matrix matches a scalar re-computation") {
  const match::Layout layout{2, 3};
  const int nt = layout.n_tokens();
  Rng rng(202);
  std::vector<double> probs(static_cast<std::size_t>(3) * nt);
  for (double& p : probs) p = rng.uniform(0.02, 0.98);
  ad::Tensor p_out = ad::Tensor::from_data({3, nt}, probs);

  std::vector<geom::BoxCxCyWH> preds;
  std::vector<match::GtObject> gts;
  for (int i = 0; i < 3; ++i)
    preds.push_back({rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7),
                     rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)});
  for (int j = 0; j < 2; ++j)
    gts.push_back({j, {rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7),
                       rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)}});

  CostMatrix cm = match::build_cost_matrix(p_out, preds, gts, layout);
  const double alpha = 0.25, gamma = 2.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      double cls = 0;
      for (int t = 0; t < layout.T; ++t) {
        double p = probs[static_cast<std::size_t>(i) * nt +
                         layout.token_begin(gts[j].category) + t];
        double pos = alpha * std::pow(1 - p, gamma) * (-std::log(p));
        double neg = (1 - alpha) * std::pow(p, gamma) * (-std::log(1 - p));
        cls += (pos - neg) / layout.T;
      }
      geom::BoxLosses bl = geom::box_losses(preds[i], gts[j].box);
      double want = 1.0 * cls + 5.0 * bl.l1 + 2.0 * bl.giou_loss;
      CHECK(cm.at(i, j) == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("cost matrix limits and symmetry") {
  const match::Layout layout{1, 2};
  const int nt = layout.n_tokens();

  // near-perfect prediction on the right tokens and exact box: the box
  // terms vanish and the classification cost sits at the formula's minimum
  // (pos term ~ 0, neg term maximal), so this is the cheapest possible entry
  std::vector<double> probs(nt, 1e-8);
  probs[1] = 1.0 - 1e-9;
  probs[2] = 1.0 - 1e-9;
  ad::Tensor p_out = ad::Tensor::from_data({1, nt}, probs);
  geom::BoxCxCyWH box{0.5, 0.5, 0.2, 0.2};
  CostMatrix cm = match::build_cost_matrix(p_out, {box}, {{0, box}}, layout);
  double p = 1.0 - 1e-8;  // clamp limit
  double floor_cls = 0.25 * std::pow(1 - p, 2) * -std::log(p) -
                     0.75 * p * p * -std::log(1 - p);
  CHECK(cm.at(0, 0) == doctest::Approx(floor_cls).epsilon(1e-9));
  CHECK(cm.at(0, 0) < 0.0);

  // a worse prediction on the same box always costs more
  std::vector<double> worse = probs;
  worse[1] = 0.5;
  worse[2] = 0.5;
  ad::Tensor pw = ad::Tensor::from_data({1, nt}, worse);
  CostMatrix cw = match::build_cost_matrix(pw, {box}, {{0, box}}, layout);
  CHECK(cw.at(0, 0) > cm.at(0, 0));

  // identical predictions give equal column entries
  std::vector<double> two = probs;
  two.insert(two.end(), probs.begin(), probs.end());
  ad::Tensor p2 = ad::Tensor::from_data({2, nt}, two);
  CostMatrix cm2 = match::build_cost_matrix(p2, {box, box}, {{0, box}}, layout);
  CHECK(cm2.at(0, 0) == cm2.at(1, 0));

  // and adding a column-constant to every row preserves the argmin pair set
  CHECK_THROWS_AS(match::build_cost_matrix(p2, {box, box}, {}, layout),
                  ad::ContractError);
}
