#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "eadk/geometry.hpp"
#include "eadk/matching.hpp"
#include "eadk/tensor.hpp"

namespace eadk::det {

struct Config {
  int image_size = 64;
  int patch_size = 8;
  int model_dim = 64;
  int enhancer_layers = 2;
  int decoder_layers = 2;
  int heads = 4;
  int num_queries = 16;
  int ffn_dim = 128;

  int patches_per_side() const { return image_size / patch_size; }
  int num_patches() const { return patches_per_side() * patches_per_side(); }
  void validate() const;
};

// The trainable text side: a (C*T+2) x D table with per-class token layout.
// Row 0 and row C*T+1 are the start/end dummies; class c owns T rows.
struct EmbeddingTable {
  ad::Tensor W;
  int C = 0;
  int T = 0;
  match::Layout layout() const { return {C, T}; }
};

EmbeddingTable init_embedding_table(int C, int T, int D, uint64_t seed,
                                    double sigma_init = 0.02);

// All frozen-side parameters, keyed by name; the map order is the
// checkpoint order.
struct Weights {
  Config config;
  std::map<std::string, ad::Tensor> params;

  ad::Tensor& at(const std::string& name);
  const ad::Tensor& at(const std::string& name) const;
  void set_trainable(bool trainable);
  Weights clone() const;
};

Weights init_weights(const Config& cfg, uint64_t seed);

// H x W x 3 floats in [0,1], row-major
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;
};

struct Output {
  ad::Tensor p_out;   // N_I x N_T token probabilities
  ad::Tensor boxes;   // N_I x 4 cxcywh in [0,1]
  std::vector<int> query_indices;  // selected image-token positions
};

// additive attention mask confining text self-attention to class blocks;
// the dummies attend only to themselves
ad::Tensor text_attention_mask(const match::Layout& layout);

// per-class position encoding added to the table before the enhancer;
// position ids restart at every class block
ad::Tensor text_position_encoding(const match::Layout& layout, int dim);

ad::Tensor encode_image(const Image& image, const Weights& w);
std::pair<ad::Tensor, ad::Tensor> enhance(const ad::Tensor& img_tokens,
                                          const EmbeddingTable& table,
                                          const Weights& w);
std::vector<int> select_queries(const ad::Tensor& img_feats,
                                const ad::Tensor& text_feats, int n_queries,
                                const match::Layout& layout);
ad::Tensor decode(const ad::Tensor& queries, const ad::Tensor& img_feats,
                  const ad::Tensor& text_feats, const Weights& w);

Output forward(const Image& image, const EmbeddingTable& table,
               const Weights& w);

struct Detection {
  int category = 0;
  double score = 0;
  geom::BoxCxCyWH box;
};

std::vector<Detection> extract_detections(const Output& out,
                                          const match::Layout& layout,
                                          double score_thr = 0.05,
                                          int max_dets = 100);

// multi-head attention primitive, exposed for the mask-inspection tests;
// attn_probs, when given, receives the heads*Lq x Lk stacked weights
ad::Tensor multi_head_attention(const ad::Tensor& q_in, const ad::Tensor& kv_in,
                                const ad::Tensor& wq, const ad::Tensor& bq,
                                const ad::Tensor& wk, const ad::Tensor& bk,
                                const ad::Tensor& wv, const ad::Tensor& bv,
                                const ad::Tensor& wo, const ad::Tensor& bo,
                                int heads, const ad::Tensor* mask = nullptr,
                                ad::Tensor* attn_probs = nullptr);

}  // namespace eadk::det
