#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "eadk/detector.hpp"
#include "eadk/rng.hpp"

using namespace eadk;
using ad::Tensor;

namespace {

det::Config tiny_config() {
  det::Config cfg;
  cfg.image_size = 16;
  cfg.patch_size = 8;
  cfg.model_dim = 8;
  cfg.enhancer_layers = 1;
  cfg.decoder_layers = 1;
  cfg.heads = 2;
  cfg.num_queries = 3;
  cfg.ffn_dim = 16;
  return cfg;
}

det::Image random_image(int size, uint64_t seed) {
  det::Image img{size, size, {}};
  img.rgb.resize(static_cast<std::size_t>(size) * size * 3);
  Rng rng(seed);
  for (double& v : img.rgb) v = rng.uniform();
  return img;
}

Tensor rand_tensor(std::vector<int> shape, Rng& rng, double s = 1.0) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<double> v(n);
  for (double& x : v) x = s * rng.uniform(-1.0, 1.0);
  return Tensor::from_data(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("embedding table init: shape, determinism, statistics") {
  det::EmbeddingTable t = det::init_embedding_table(2, 4, 64, 5);
  CHECK(t.W.shape() == std::vector<int>{10, 64});
  CHECK(t.layout().n_tokens() == 10);

  det::EmbeddingTable t2 = det::init_embedding_table(2, 4, 64, 5);
  CHECK(t.W.values() == t2.W.values());

  double mean = 0, var = 0;
  for (double v : t.W.values()) mean += v;
  mean /= static_cast<double>(t.W.size());
  for (double v : t.W.values()) var += (v - mean) * (v - mean);
  double sd = std::sqrt(var / static_cast<double>(t.W.size()));
  CHECK(std::fabs(mean) < 0.02 * 0.2);
  CHECK(sd == doctest::Approx(0.02).epsilon(0.05));
}

TEST_CASE("weights init is deterministic") {
  det::Config cfg = tiny_config();
  det::Weights a = det::init_weights(cfg, 3);
  det::Weights b = det::init_weights(cfg, 3);
  REQUIRE(a.params.size() == b.params.size());
  for (const auto& [name, t] : a.params) CHECK(t.values() == b.at(name).values());
}

TEST_CASE("image encoder: shapes and patch locality") {
  det::Config cfg;
  cfg.image_size = 64;
  cfg.patch_size = 8;
  cfg.model_dim = 64;
  det::Weights w = det::init_weights(cfg, 1);

  det::Image img = random_image(64, 2);
  Tensor tok = det::encode_image(img, w);
  CHECK(tok.shape() == std::vector<int>{64, 64});

  // swap the pixels of patches 0 and 1: only those two token rows change,
  // and by exactly the same amounts the original rows differed (positions
  // stay with the grid slot)
  det::Image swapped = img;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) {
        std::size_t a = (static_cast<std::size_t>(y) * 64 + x) * 3 + c;
        std::size_t b = (static_cast<std::size_t>(y) * 64 + x + 8) * 3 + c;
        std::swap(swapped.rgb[a], swapped.rgb[b]);
      }
  Tensor tok2 = det::encode_image(swapped, w);
  det::Image zero{64, 64, std::vector<double>(64 * 64 * 3, 0.0)};
  Tensor tokz = det::encode_image(zero, w);

  for (int i = 2; i < 64; ++i)
    for (int d = 0; d < 64; ++d)
      CHECK(tok2.at(static_cast<std::size_t>(i) * 64 + d) ==
            tok.at(static_cast<std::size_t>(i) * 64 + d));
  for (int d = 0; d < 64; ++d) {
    // token0(swapped) - pos0 == token1(original) - pos1
    double lhs = tok2.at(d) - tokz.at(d);
    double rhs = tok.at(64 + d) - tokz.at(64 + d);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("text attention mask isolates class blocks") {
  match::Layout layout{2, 3};
  const int nt = layout.n_tokens();
  const int D = 8, heads = 2;
  Tensor mask = det::text_attention_mask(layout);
  REQUIRE(mask.shape() == std::vector<int>{nt, nt});

  Rng rng(19);
  Tensor x = rand_tensor({nt, D}, rng);
  Tensor wq = rand_tensor({D, D}, rng, 0.3), wk = rand_tensor({D, D}, rng, 0.3),
         wv = rand_tensor({D, D}, rng, 0.3), wo = rand_tensor({D, D}, rng, 0.3);
  Tensor b = Tensor::zeros({D});

  Tensor probs;
  Tensor y = det::multi_head_attention(x, x, wq, b, wk, b, wv, b, wo, b, heads,
                                       &mask, &probs);

  // attention weight is exactly zero outside the sender's block
  auto same_block = [&](int i, int j) {
    if (i == j) return true;
    for (int c = 0; c < layout.C; ++c)
      if (i >= layout.token_begin(c) && i < layout.token_end(c) &&
          j >= layout.token_begin(c) && j < layout.token_end(c))
        return true;
    return false;
  };
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < nt; ++i)
      for (int j = 0; j < nt; ++j) {
        double p = probs.at((static_cast<std::size_t>(h) * nt + i) * nt + j);
        if (!same_block(i, j)) CHECK(p == 0.0);
      }

  // zeroing class 1's rows leaves class 0's outputs untouched
  Tensor x2 = x.detached_copy();
  for (int i = layout.token_begin(1); i < layout.token_end(1); ++i)
    for (int d = 0; d < D; ++d)
      x2.values()[static_cast<std::size_t>(i) * D + d] = 0.0;
  Tensor y2 = det::multi_head_attention(x2, x2, wq, b, wk, b, wv, b, wo, b,
                                        heads, &mask);
  for (int i = layout.token_begin(0); i < layout.token_end(0); ++i)
    for (int d = 0; d < D; ++d)
      CHECK(y2.at(static_cast<std::size_t>(i) * D + d) ==
            doctest::Approx(y.at(static_cast<std::size_t>(i) * D + d))
                .epsilon(1e-12));
}

TEST_CASE("enhancer keeps shapes and stays finite") {
  det::Config cfg = tiny_config();
  det::Weights w = det::init_weights(cfg, 7);
  det::EmbeddingTable t = det::init_embedding_table(2, 2, cfg.model_dim, 1, 2.0);
  Tensor img_tokens = det::encode_image(random_image(cfg.image_size, 4), w);
  auto [img_f, txt_f] = det::enhance(img_tokens, t, w);
  CHECK(img_f.shape() == img_tokens.shape());
  CHECK(txt_f.shape() == t.W.shape());
  for (double v : img_f.values()) CHECK(std::isfinite(v));
  for (double v : txt_f.values()) CHECK(std::isfinite(v));
}

TEST_CASE("query selection: scores, ties, brute force") {
  match::Layout layout{1, 1};  // N_T = 3, single class token at row 1
  Tensor text = Tensor::from_data({3, 1}, {5.0, 1.0, 5.0});  // dummies excluded

  Tensor img = Tensor::from_data({3, 1}, {0.2, 0.9, 0.5});
  CHECK(det::select_queries(img, text, 2, layout) == std::vector<int>{1, 2});

  Tensor flat = Tensor::from_data({4, 1}, {0.7, 0.7, 0.7, 0.7});
  CHECK(det::select_queries(flat, text, 2, layout) == std::vector<int>{0, 1});

  Rng rng(91);
  match::Layout l2{2, 3};
  Tensor text2 = rand_tensor({l2.n_tokens(), 4}, rng);
  Tensor img2 = rand_tensor({10, 4}, rng);
  std::vector<int> picked = det::select_queries(img2, text2, 4, l2);
  // oracle: per-row max dot over non-dummy tokens, full sort
  std::vector<std::pair<double, int>> scored;
  for (int i = 0; i < 10; ++i) {
    double best = -1e300;
    for (int t = 1; t < l2.n_tokens() - 1; ++t) {
      double dot = 0;
      for (int d = 0; d < 4; ++d)
        dot += img2.at(static_cast<std::size_t>(i) * 4 + d) *
               text2.at(static_cast<std::size_t>(t) * 4 + d);
      best = std::max(best, dot);
    }
    scored.emplace_back(-best, i);
  }
  std::stable_sort(scored.begin(), scored.end());
  for (int k = 0; k < 4; ++k) CHECK(picked[k] == scored[k].second);
}

TEST_CASE("decoder: shape, row symmetry, gradient to text") {
  det::Config cfg = tiny_config();
  det::Weights w = det::init_weights(cfg, 13);
  Rng rng(3);
  Tensor img_f = rand_tensor({4, cfg.model_dim}, rng);
  Tensor txt_f = rand_tensor({6, cfg.model_dim}, rng);

  std::vector<double> row(cfg.model_dim);
  for (double& v : row) v = rng.uniform(-1, 1);
  std::vector<double> dup = row;
  dup.insert(dup.end(), row.begin(), row.end());
  Tensor queries = Tensor::from_data({2, cfg.model_dim}, dup);

  Tensor out = det::decode(queries, img_f, txt_f, w);
  CHECK(out.shape() == std::vector<int>{2, cfg.model_dim});
  for (int d = 0; d < cfg.model_dim; ++d)
    CHECK(out.at(d) == doctest::Approx(out.at(cfg.model_dim + d)).epsilon(1e-12));

  Tensor probe = rand_tensor({2, cfg.model_dim}, rng);
  double err = ad::grad_check(
      [&](const Tensor& t) {
        return ad::reduce(ad::mul(det::decode(queries, img_f, t, w), probe),
                          ad::Reduce::Sum);
      },
      txt_f);
  CHECK(err < 1e-4);
}

TEST_CASE("forward: output contract and embedding sensitivity") {
  det::Config cfg;
  cfg.image_size = 64;
  cfg.patch_size = 8;
  cfg.model_dim = 64;
  cfg.num_queries = 16;
  det::Weights w = det::init_weights(cfg, 2);
  w.set_trainable(false);
  det::EmbeddingTable table = det::init_embedding_table(2, 4, 64, 3, 0.5);
  det::Image img = random_image(64, 6);

  det::Output out = det::forward(img, table, w);
  CHECK(out.p_out.shape() == std::vector<int>{16, 10});
  CHECK(out.boxes.shape() == std::vector<int>{16, 4});
  for (double v : out.p_out.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (double v : out.boxes.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  // same inputs -> identical outputs
  det::Output again = det::forward(img, table, w);
  CHECK(again.p_out.values() == out.p_out.values());
  CHECK(again.boxes.values() == out.boxes.values());

  // perturbing one embedding row moves P_out
  det::EmbeddingTable bumped = table;
  bumped.W = table.W.detached_copy();
  for (int d = 0; d < 64; ++d) bumped.W.values()[64 + d] += 0.5;
  det::Output out2 = det::forward(img, bumped, w);
  double delta = 0;
  for (std::size_t i = 0; i < out.p_out.size(); ++i)
    delta += std::fabs(out2.p_out.at(i) - out.p_out.at(i));
  CHECK(delta > 0.0);

  // frozen weights receive no gradient; the table does
  det::EmbeddingTable live = table;
  live.W = table.W.detached_copy();
  live.W.set_requires_grad(true);
  det::Output out3 = det::forward(img, live, w);
  ad::backward(ad::reduce(out3.p_out, ad::Reduce::Sum));
  CHECK(live.W.has_grad());
  for (const auto& [name, t] : w.params) CHECK_FALSE(t.has_grad());
}

TEST_CASE("detection extraction") {
  match::Layout layout{2, 4};
  det::Output out;
  out.p_out = Tensor::from_data(
      {1, 10}, {0.01, 0.9, 0.2, 0.1, 0.1, 0.05, 0.05, 0.05, 0.05, 0.01});
  out.boxes = Tensor::from_data({1, 4}, {0.5, 0.5, 0.2, 0.2});

  std::vector<det::Detection> dets = det::extract_detections(out, layout);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].category == 0);
  CHECK(dets[0].score == doctest::Approx(0.9).epsilon(1e-15));

  CHECK(det::extract_detections(out, layout, 0.95).empty());

  // truncation keeps the global top max_dets by score
  Rng rng(44);
  const int nq = 12;
  std::vector<double> probs(static_cast<std::size_t>(nq) * 10);
  for (double& p : probs) p = rng.uniform(0.0, 1.0);
  det::Output big;
  big.p_out = Tensor::from_data({nq, 10}, probs);
  big.boxes = Tensor::full({nq, 4}, 0.4);
  std::vector<det::Detection> all = det::extract_detections(big, layout, 0.0, 100);
  std::vector<det::Detection> top = det::extract_detections(big, layout, 0.0, 5);
  REQUIRE(all.size() == static_cast<std::size_t>(nq));
  REQUIRE(top.size() == 5);
  std::vector<det::Detection> sorted = all;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  for (int k = 0; k < 5; ++k) {
    CHECK(top[k].score == sorted[k].score);
    CHECK(top[k].category == sorted[k].category);
  }
}
