#include <doctest.h>

#include <cmath>
#include <numeric>

#include "eadk/losses.hpp"
#include "eadk/rng.hpp"

using namespace eadk;
using ad::Tensor;

TEST_CASE("focal loss worked values") {
  Tensor sure = loss::focal_loss(Tensor::scalar(1.0 - 1e-8), Tensor::scalar(1.0));
  CHECK(std::fabs(sure.value()) < 1e-12);

  Tensor pos = loss::focal_loss(Tensor::scalar(0.5), Tensor::scalar(1.0));
  CHECK(pos.value() == doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-12));
  CHECK(pos.value() == doctest::Approx(0.043322).epsilon(1e-4));

  Tensor neg = loss::focal_loss(Tensor::scalar(0.5), Tensor::scalar(0.0));
  CHECK(neg.value() == doctest::Approx(0.75 * 0.25 * std::log(2.0)).epsilon(1e-12));
  CHECK(neg.value() == doctest::Approx(0.129966).epsilon(1e-4));
}

TEST_CASE("focal loss: gamma=0 reduces to alpha-weighted BCE; monotonicity") {
  loss::FocalParams fp{0.25, 0.0};
  for (double p : {0.1, 0.4, 0.9}) {
    // the input squash moves p by O(1e-8), hence the relaxed epsilon
    Tensor t1 = loss::focal_loss(Tensor::scalar(p), Tensor::scalar(1.0), fp);
    CHECK(t1.value() == doctest::Approx(-0.25 * std::log(p)).epsilon(1e-7));
    Tensor t0 = loss::focal_loss(Tensor::scalar(p), Tensor::scalar(0.0), fp);
    CHECK(t0.value() == doctest::Approx(-0.75 * std::log(1 - p)).epsilon(1e-7));
  }

  // positive-target loss decreases as p grows
  double prev = 1e9;
  for (double p = 0.1; p < 1.0; p += 0.1) {
    double cur = loss::focal_loss(Tensor::scalar(p), Tensor::scalar(1.0)).value();
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("focal loss gradient check") {
  Rng rng(31);
  std::vector<double> probs(6);
  for (double& p : probs) p = rng.uniform(0.05, 0.95);
  Tensor target = Tensor::from_data({6}, {1, 0, 0, 1, 0, 1});
  double err = ad::grad_check(
      [&](const Tensor& p) {
        return ad::reduce(loss::focal_loss(p, target), ad::Reduce::Sum);
      },
      Tensor::from_data({6}, probs));
  CHECK(err < 1e-6);
}

TEST_CASE("build_targets layout") {
  match::Layout layout{2, 4};
  CHECK(layout.n_tokens() == 10);

  match::Assignment a;
  a.pairs = {{3, 0}};
  std::vector<match::GtObject> gts = {{0, {0.5, 0.5, 0.2, 0.2}}};
  std::vector<double> t = loss::build_targets(a, gts, layout, 5);
  REQUIRE(t.size() == 50);
  for (int q = 0; q < 5; ++q)
    for (int c = 0; c < 10; ++c) {
      double want = (q == 3 && c >= 1 && c <= 4) ? 1.0 : 0.0;
      CHECK(t[static_cast<std::size_t>(q) * 10 + c] == want);
    }

  // zero ground truth: all rows zero
  std::vector<double> empty =
      loss::build_targets(match::Assignment{}, {}, layout, 5);
  CHECK(std::accumulate(empty.begin(), empty.end(), 0.0) == 0.0);

  // counting oracle on a random instance
  Rng rng(8);
  match::Assignment a2;
  std::vector<match::GtObject> gts2;
  for (int j = 0; j < 3; ++j) {
    a2.pairs.emplace_back(j * 2, j);
    gts2.push_back({rng.uniform_int(2), {0.5, 0.5, 0.2, 0.2}});
  }
  std::vector<double> t2 = loss::build_targets(a2, gts2, layout, 8);
  CHECK(std::accumulate(t2.begin(), t2.end(), 0.0) ==
        static_cast<double>(layout.T) * 3);
}

TEST_CASE("total loss: weighting, perfect limit, gradient") {
  match::Layout layout{2, 2};
  const int nt = layout.n_tokens();
  Rng rng(12);

  std::vector<match::GtObject> gts = {
      {0, {0.3, 0.4, 0.2, 0.25}},
      {1, {0.65, 0.6, 0.3, 0.2}},
  };

  SUBCASE("weighted sum of components") {
    std::vector<double> probs(static_cast<std::size_t>(4) * nt);
    for (double& p : probs) p = rng.uniform(0.05, 0.95);
    Tensor p_out = Tensor::from_data({4, nt}, probs);
    std::vector<double> bx(16);
    for (double& v : bx) v = rng.uniform(0.2, 0.6);
    Tensor boxes = Tensor::from_data({4, 4}, bx);

    std::vector<geom::BoxCxCyWH> pb(4);
    for (int i = 0; i < 4; ++i) pb[i] = {bx[4 * i], bx[4 * i + 1], bx[4 * i + 2], bx[4 * i + 3]};
    match::Assignment a =
        match::hungarian(match::build_cost_matrix(p_out, pb, gts, layout));

    loss::Breakdown b = loss::total_loss(p_out, boxes, gts, a, layout);
    CHECK(b.total.value() ==
          doctest::Approx(1.0 * b.cls.value() + 5.0 * b.l1.value() +
                          2.0 * b.giou.value())
              .epsilon(1e-12));
    // lambda arithmetic: (0.1, 0.02, 0.05) -> 0.3
    CHECK(1.0 * 0.1 + 5.0 * 0.02 + 2.0 * 0.05 == doctest::Approx(0.3));
  }

  SUBCASE("perfect predictions give near-zero loss") {
    std::vector<double> probs(static_cast<std::size_t>(2) * nt, 1e-8);
    std::vector<double> bx;
    for (int j = 0; j < 2; ++j) {
      for (int t = layout.token_begin(gts[j].category);
           t < layout.token_end(gts[j].category); ++t)
        probs[static_cast<std::size_t>(j) * nt + t] = 1.0 - 1e-9;
      bx.insert(bx.end(), {gts[j].box.cx, gts[j].box.cy, gts[j].box.w, gts[j].box.h});
    }
    Tensor p_out = Tensor::from_data({2, nt}, probs);
    Tensor boxes = Tensor::from_data({2, 4}, bx);
    match::Assignment a;
    a.pairs = {{0, 0}, {1, 1}};
    loss::Breakdown b = loss::total_loss(p_out, boxes, gts, a, layout);
    CHECK(b.total.value() < 1e-6);
  }

  SUBCASE("empty assignment zeroes the box terms") {
    std::vector<double> probs(static_cast<std::size_t>(2) * nt, 0.3);
    Tensor p_out = Tensor::from_data({2, nt}, probs);
    Tensor boxes = Tensor::full({2, 4}, 0.4);
    loss::Breakdown b =
        loss::total_loss(p_out, boxes, {}, match::Assignment{}, layout);
    CHECK(b.l1.value() == 0.0);
    CHECK(b.giou.value() == 0.0);
    CHECK(b.cls.value() > 0.0);
  }

  SUBCASE("gradient vs finite differences") {
    std::vector<double> probs(static_cast<std::size_t>(2) * nt);
    for (double& p : probs) p = rng.uniform(0.1, 0.9);
    match::Assignment a;
    a.pairs = {{1, 0}, {0, 1}};

    // through the probabilities (logit parameterization keeps p in range)
    std::vector<double> logits(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i)
      logits[i] = std::log(probs[i] / (1 - probs[i]));
    std::vector<double> bx(8);
    for (double& v : bx) v = rng.uniform(0.25, 0.6);
    double err_p = ad::grad_check(
        [&](const Tensor& z) {
          Tensor p = ad::sigmoid(ad::reshape(z, {2, nt}));
          return loss::total_loss(p, Tensor::from_data({2, 4}, bx), gts, a, layout)
              .total;
        },
        Tensor::from_data({static_cast<int>(logits.size())}, logits));
    CHECK(err_p < 1e-4);

    // through the boxes
    double err_b = ad::grad_check(
        [&](const Tensor& bxs) {
          Tensor p = Tensor::from_data({2, nt}, probs);
          return loss::total_loss(p, ad::reshape(bxs, {2, 4}), gts, a, layout).total;
        },
        Tensor::from_data({8}, bx));
    CHECK(err_b < 1e-4);
  }
}
