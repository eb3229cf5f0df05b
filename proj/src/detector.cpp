#include "eadk/detector.hpp"

#include <algorithm>
#include <cmath>

#include "eadk/rng.hpp"

namespace eadk::det {

using ad::Tensor;

void Config::validate() const {
  if (image_size % patch_size != 0)
    throw ad::ContractError("image_size must be divisible by patch_size");
  if (model_dim % heads != 0)
    throw ad::ContractError("model_dim must be divisible by heads");
  if (num_queries > num_patches())
    throw ad::ContractError("more queries than image tokens");
}

EmbeddingTable init_embedding_table(int C, int T, int D, uint64_t seed,
                                    double sigma_init) {
  if (C < 1 || T < 1) throw ad::ContractError("need C >= 1 and T >= 1");
  const int rows = C * T + 2;
  Rng rng(seed);
  std::vector<double> data(static_cast<std::size_t>(rows) * D);
  for (auto& v : data) v = rng.normal(0.0, sigma_init);
  EmbeddingTable t;
  t.W = Tensor::from_data({rows, D}, std::move(data), true);
  t.C = C;
  t.T = T;
  return t;
}

ad::Tensor& Weights::at(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ad::ContractError("unknown parameter " + name);
  return it->second;
}

const ad::Tensor& Weights::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw ad::ContractError("unknown parameter " + name);
  return it->second;
}

void Weights::set_trainable(bool trainable) {
  for (auto& [name, t] : params) t.set_requires_grad(trainable);
}

Weights Weights::clone() const {
  Weights w;
  w.config = config;
  for (const auto& [name, t] : params) w.params.emplace(name, t.detached_copy());
  return w;
}

namespace {

Tensor linear_init(Rng& rng, int in, int out) {
  std::vector<double> data(static_cast<std::size_t>(in) * out);
  const double s = std::sqrt(1.0 / in);
  for (auto& v : data) v = rng.normal(0.0, s);
  return Tensor::from_data({in, out}, std::move(data), true);
}

void add_attention(Weights& w, Rng& rng, const std::string& prefix, int d) {
  for (const char* part : {"wq", "wk", "wv", "wo"})
    w.params.emplace(prefix + "." + part, linear_init(rng, d, d));
  for (const char* part : {"bq", "bk", "bv", "bo"})
    w.params.emplace(prefix + "." + part, Tensor::zeros({d}, true));
}

void add_layer_norm(Weights& w, const std::string& prefix, int d) {
  w.params.emplace(prefix + ".g", Tensor::full({d}, 1.0, true));
  w.params.emplace(prefix + ".b", Tensor::zeros({d}, true));
}

void add_ffn(Weights& w, Rng& rng, const std::string& prefix, int d, int f) {
  w.params.emplace(prefix + ".w1", linear_init(rng, d, f));
  w.params.emplace(prefix + ".b1", Tensor::zeros({f}, true));
  w.params.emplace(prefix + ".w2", linear_init(rng, f, d));
  w.params.emplace(prefix + ".b2", Tensor::zeros({d}, true));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ad::add(ad::matmul(x, w), b);
}

Tensor ffn(const Weights& w, const std::string& prefix, const Tensor& x) {
  Tensor h = ad::relu(linear(x, w.at(prefix + ".w1"), w.at(prefix + ".b1")));
  return linear(h, w.at(prefix + ".w2"), w.at(prefix + ".b2"));
}

Tensor ln(const Weights& w, const std::string& prefix, const Tensor& x) {
  return ad::layer_norm(x, w.at(prefix + ".g"), w.at(prefix + ".b"));
}

Tensor attn(const Weights& w, const std::string& prefix, const Tensor& q,
            const Tensor& kv, int heads, const Tensor* mask = nullptr) {
  return multi_head_attention(q, kv, w.at(prefix + ".wq"), w.at(prefix + ".bq"),
                              w.at(prefix + ".wk"), w.at(prefix + ".bk"),
                              w.at(prefix + ".wv"), w.at(prefix + ".bv"),
                              w.at(prefix + ".wo"), w.at(prefix + ".bo"), heads,
                              mask);
}

// fixed sinusoidal encoding of integer position ids
std::vector<double> sincos_encoding(const std::vector<int>& ids, int dim) {
  std::vector<double> pe(ids.size() * dim);
  for (std::size_t p = 0; p < ids.size(); ++p)
    for (int i = 0; i < dim; i += 2) {
      double freq = std::pow(10000.0, -static_cast<double>(i) / dim);
      pe[p * dim + i] = std::sin(ids[p] * freq);
      if (i + 1 < dim) pe[p * dim + i + 1] = std::cos(ids[p] * freq);
    }
  return pe;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

Weights init_weights(const Config& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Weights w;
  w.config = cfg;
  const int d = cfg.model_dim;
  const int pd = cfg.patch_size * cfg.patch_size * 3;
  w.params.emplace("patch.w", linear_init(rng, pd, d));
  w.params.emplace("patch.b", Tensor::zeros({d}, true));
  for (int l = 0; l < cfg.enhancer_layers; ++l) {
    const std::string p = "enh" + std::to_string(l);
    add_attention(w, rng, p + ".img_sa", d);
    add_layer_norm(w, p + ".img_sa_ln", d);
    add_attention(w, rng, p + ".txt_sa", d);
    add_layer_norm(w, p + ".txt_sa_ln", d);
    add_attention(w, rng, p + ".t2i", d);
    add_layer_norm(w, p + ".t2i_ln", d);
    add_attention(w, rng, p + ".i2t", d);
    add_layer_norm(w, p + ".i2t_ln", d);
    add_ffn(w, rng, p + ".img_ffn", d, cfg.ffn_dim);
    add_layer_norm(w, p + ".img_ffn_ln", d);
    add_ffn(w, rng, p + ".txt_ffn", d, cfg.ffn_dim);
    add_layer_norm(w, p + ".txt_ffn_ln", d);
  }
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    add_attention(w, rng, p + ".sa", d);
    add_layer_norm(w, p + ".sa_ln", d);
    add_attention(w, rng, p + ".xi", d);
    add_layer_norm(w, p + ".xi_ln", d);
    add_attention(w, rng, p + ".xt", d);
    add_layer_norm(w, p + ".xt_ln", d);
    add_ffn(w, rng, p + ".ffn", d, cfg.ffn_dim);
    add_layer_norm(w, p + ".ffn_ln", d);
  }
  w.params.emplace("box.w1", linear_init(rng, d, d));
  w.params.emplace("box.b1", Tensor::zeros({d}, true));
  w.params.emplace("box.w2", linear_init(rng, d, d));
  w.params.emplace("box.b2", Tensor::zeros({d}, true));
  w.params.emplace("box.w3", linear_init(rng, d, 4));
  w.params.emplace("box.b3", Tensor::zeros({4}, true));
  // score calibration: start sharp and biased toward "background"
  w.params.emplace("head.scale", Tensor::full({1, 1}, 2.0, true));
  w.params.emplace("head.bias", Tensor::full({1, 1}, -2.0, true));
  return w;
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in,
                            const Tensor& wq, const Tensor& bq,
                            const Tensor& wk, const Tensor& bk,
                            const Tensor& wv, const Tensor& bv,
                            const Tensor& wo, const Tensor& bo, int heads,
                            const Tensor* mask, Tensor* attn_probs) {
  const int d = q_in.dim(1);
  if (d % heads != 0) throw ad::ContractError("model dim not divisible by heads");
  const int hd = d / heads;
  Tensor q = linear(q_in, wq, bq);
  Tensor k = linear(kv_in, wk, bk);
  Tensor v = linear(kv_in, wv, bv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Tensor> outs;
  std::vector<double> probe;
  for (int h = 0; h < heads; ++h) {
    Tensor qh = ad::scale(ad::slice_cols(q, h * hd, (h + 1) * hd), scale);
    Tensor kh = ad::slice_cols(k, h * hd, (h + 1) * hd);
    Tensor vh = ad::slice_cols(v, h * hd, (h + 1) * hd);
    Tensor scores = ad::matmul(qh, ad::transpose(kh));
    if (mask) scores = ad::add(scores, *mask);
    Tensor a = ad::softmax(scores, 1);
    if (attn_probs)
      probe.insert(probe.end(), a.values().begin(), a.values().end());
    outs.push_back(ad::matmul(a, vh));
  }
  if (attn_probs)
    *attn_probs = Tensor::from_data({heads * q_in.dim(0), kv_in.dim(0)},
                                    std::move(probe));
  return linear(ad::concat_cols(outs), wo, bo);
}

Tensor text_attention_mask(const match::Layout& layout) {
  const int n = layout.n_tokens();
  std::vector<double> m(static_cast<std::size_t>(n) * n, -1e9);
  auto allow = [&](int i, int j) { m[static_cast<std::size_t>(i) * n + j] = 0.0; };
  allow(0, 0);
  allow(n - 1, n - 1);
  for (int c = 0; c < layout.C; ++c)
    for (int i = layout.token_begin(c); i < layout.token_end(c); ++i)
      for (int j = layout.token_begin(c); j < layout.token_end(c); ++j)
        allow(i, j);
  return Tensor::from_data({n, n}, std::move(m));
}

Tensor text_position_encoding(const match::Layout& layout, int dim) {
  const int n = layout.n_tokens();
  std::vector<int> ids(n, 0);  // dummies keep id 0; ids restart per class
  for (int c = 0; c < layout.C; ++c)
    for (int t = 0; t < layout.T; ++t) ids[layout.token_begin(c) + t] = t + 1;
  return Tensor::from_data({n, dim}, sincos_encoding(ids, dim));
}

Tensor encode_image(const Image& image, const Weights& w) {
  const Config& cfg = w.config;
  if (image.width != cfg.image_size || image.height != cfg.image_size ||
      image.rgb.size() != static_cast<std::size_t>(image.width) * image.height * 3)
    throw ad::ContractError("image does not match configured size " +
                            std::to_string(cfg.image_size));
  const int ps = cfg.patch_size, grid = cfg.patches_per_side();
  const int pd = ps * ps * 3, np = cfg.num_patches();
  std::vector<double> patches(static_cast<std::size_t>(np) * pd);
  for (int py = 0; py < grid; ++py)
    for (int px = 0; px < grid; ++px) {
      double* dst = patches.data() + static_cast<std::size_t>(py * grid + px) * pd;
      for (int y = 0; y < ps; ++y)
        for (int x = 0; x < ps; ++x) {
          const std::size_t src =
              (static_cast<std::size_t>(py * ps + y) * image.width + px * ps + x) * 3;
          const std::size_t d = (static_cast<std::size_t>(y) * ps + x) * 3;
          dst[d] = image.rgb[src];
          dst[d + 1] = image.rgb[src + 1];
          dst[d + 2] = image.rgb[src + 2];
        }
    }
  Tensor x = Tensor::from_data({np, pd}, std::move(patches));
  Tensor tokens = linear(x, w.at("patch.w"), w.at("patch.b"));
  std::vector<int> ids(np);
  for (int i = 0; i < np; ++i) ids[i] = i;
  Tensor pos = Tensor::from_data({np, cfg.model_dim},
                                 sincos_encoding(ids, cfg.model_dim));
  return ad::add(tokens, pos);
}

std::pair<Tensor, Tensor> enhance(const Tensor& img_tokens,
                                  const EmbeddingTable& table,
                                  const Weights& w) {
  const Config& cfg = w.config;
  Tensor mask = text_attention_mask(table.layout());
  Tensor img = img_tokens;
  Tensor txt = ad::add(table.W, text_position_encoding(table.layout(), cfg.model_dim));
  for (int l = 0; l < cfg.enhancer_layers; ++l) {
    const std::string p = "enh" + std::to_string(l);
    img = ln(w, p + ".img_sa_ln", ad::add(img, attn(w, p + ".img_sa", img, img, cfg.heads)));
    txt = ln(w, p + ".txt_sa_ln",
             ad::add(txt, attn(w, p + ".txt_sa", txt, txt, cfg.heads, &mask)));
    Tensor img2 = ln(w, p + ".t2i_ln",
                     ad::add(img, attn(w, p + ".t2i", img, txt, cfg.heads)));
    Tensor txt2 = ln(w, p + ".i2t_ln",
                     ad::add(txt, attn(w, p + ".i2t", txt, img, cfg.heads)));
    img = ln(w, p + ".img_ffn_ln", ad::add(img2, ffn(w, p + ".img_ffn", img2)));
    txt = ln(w, p + ".txt_ffn_ln", ad::add(txt2, ffn(w, p + ".txt_ffn", txt2)));
  }
  return {img, txt};
}

std::vector<int> select_queries(const Tensor& img_feats, const Tensor& text_feats,
                                int n_queries, const match::Layout& layout) {
  const int np = img_feats.dim(0), d = img_feats.dim(1);
  const int nt = text_feats.dim(0);
  if (n_queries > np)
    throw ad::ContractError("cannot select " + std::to_string(n_queries) +
                            " queries from " + std::to_string(np) + " tokens");
  std::vector<double> score(np, -std::numeric_limits<double>::infinity());
  for (int p = 0; p < np; ++p)
    for (int t = 1; t < nt - 1; ++t) {  // dummies excluded from scoring
      double dot = 0.0;
      for (int i = 0; i < d; ++i)
        dot += img_feats.at(static_cast<std::size_t>(p) * d + i) *
               text_feats.at(static_cast<std::size_t>(t) * d + i);
      score[p] = std::max(score[p], dot);
    }
  std::vector<int> idx(np);
  for (int i = 0; i < np; ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return score[a] > score[b]; });
  idx.resize(n_queries);
  return idx;
}

Tensor decode(const Tensor& queries, const Tensor& img_feats,
              const Tensor& text_feats, const Weights& w) {
  const Config& cfg = w.config;
  Tensor q = queries;
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    q = ln(w, p + ".sa_ln", ad::add(q, attn(w, p + ".sa", q, q, cfg.heads)));
    q = ln(w, p + ".xi_ln", ad::add(q, attn(w, p + ".xi", q, img_feats, cfg.heads)));
    q = ln(w, p + ".xt_ln", ad::add(q, attn(w, p + ".xt", q, text_feats, cfg.heads)));
    q = ln(w, p + ".ffn_ln", ad::add(q, ffn(w, p + ".ffn", q)));
  }
  return q;
}

Output forward(const Image& image, const EmbeddingTable& table,
               const Weights& w) {
  const Config& cfg = w.config;
  Tensor tokens = encode_image(image, w);
  auto [img_feats, txt_feats] = enhance(tokens, table, w);
  std::vector<int> idx =
      select_queries(img_feats, txt_feats, cfg.num_queries, table.layout());

  Tensor queries = ad::gather_rows(img_feats, idx);
  Tensor x = decode(queries, img_feats, txt_feats, w);

  Output out;
  out.query_indices = idx;
  // 1/sqrt(D) keeps the contrastive logits of unit-variance features in a
  // range where the sigmoid still has gradient; the learnable scale/bias pair
  // lets training sharpen score calibration without fighting the focal loss
  Tensor logits = ad::scale(ad::matmul(x, ad::transpose(txt_feats)),
                            1.0 / std::sqrt(double(cfg.model_dim)));
  out.p_out = ad::sigmoid(
      ad::add(ad::mul(logits, w.at("head.scale")), w.at("head.bias")));

  // box head predicts offsets in logit space around the patch-center anchor
  const int grid = cfg.patches_per_side();
  std::vector<double> anchors(idx.size() * 4);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int row = idx[i] / grid, col = idx[i] % grid;
    anchors[i * 4 + 0] = logit((col + 0.5) / grid);
    anchors[i * 4 + 1] = logit((row + 0.5) / grid);
    anchors[i * 4 + 2] = logit(0.2);
    anchors[i * 4 + 3] = logit(0.2);
  }
  Tensor anchor_t =
      Tensor::from_data({static_cast<int>(idx.size()), 4}, std::move(anchors));
  Tensor h = ad::relu(linear(x, w.at("box.w1"), w.at("box.b1")));
  h = ad::relu(linear(h, w.at("box.w2"), w.at("box.b2")));
  Tensor offsets = linear(h, w.at("box.w3"), w.at("box.b3"));
  out.boxes = ad::sigmoid(ad::add(offsets, anchor_t));
  return out;
}

std::vector<Detection> extract_detections(const Output& out,
                                          const match::Layout& layout,
                                          double score_thr, int max_dets) {
  const int n = out.p_out.dim(0), nt = out.p_out.dim(1);
  if (nt != layout.n_tokens())
    throw ad::ContractError("output token count does not match layout");
  std::vector<Detection> dets;
  for (int i = 0; i < n; ++i) {
    int best_c = -1;
    double best_s = -1.0;
    for (int c = 0; c < layout.C; ++c) {
      double s = 0.0;
      for (int t = layout.token_begin(c); t < layout.token_end(c); ++t)
        s = std::max(s, out.p_out.at(static_cast<std::size_t>(i) * nt + t));
      if (s > best_s) {
        best_s = s;
        best_c = c;
      }
    }
    if (best_s >= score_thr) {
      Detection d;
      d.category = best_c;
      d.score = best_s;
      d.box = {out.boxes.at(static_cast<std::size_t>(i) * 4 + 0),
               out.boxes.at(static_cast<std::size_t>(i) * 4 + 1),
               out.boxes.at(static_cast<std::size_t>(i) * 4 + 2),
               out.boxes.at(static_cast<std::size_t>(i) * 4 + 3)};
      dets.push_back(d);
    }
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (static_cast<int>(dets.size()) > max_dets) dets.resize(max_dets);
  return dets;
}

}  // namespace eadk::det
