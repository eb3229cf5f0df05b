#include "eadk/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace eadk::train {

namespace fs = std::filesystem;
using ad::Tensor;

double cosine_lr(int step, int total_steps, double lr0) {
  if (step < 0 || step > total_steps)
    throw ad::ContractError("cosine_lr step " + std::to_string(step) +
                            " outside [0, " + std::to_string(total_steps) + "]");
  return lr0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / total_steps));
}

void AdamW::step(std::map<std::string, ad::Tensor*>& params, double lr,
                 double weight_decay) {
  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, t_);
  const double bc2 = 1.0 - std::pow(b2_, t_);
  for (auto& [name, tp] : params) {
    Tensor& p = *tp;
    Moments& mom = state_[name];
    if (mom.m.empty()) {
      mom.m.assign(p.size(), 0.0);
      mom.v.assign(p.size(), 0.0);
    }
    auto& w = p.values();
    const bool has_grad = p.has_grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has_grad ? p.grad()[i] : 0.0;
      if (!std::isfinite(g))
        throw TrainingError("non-finite gradient in " + name, t_);
      mom.m[i] = b1_ * mom.m[i] + (1.0 - b1_) * g;
      mom.v[i] = b2_ * mom.v[i] + (1.0 - b2_) * g * g;
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay * w[i]);
    }
  }
}

Dataset load_dataset(const std::string& split_dir) {
  const fs::path dir(split_dir);
  data::Manifest m = data::read_manifest((dir / "manifest.json").string());
  Dataset ds;
  std::map<int, int> cat_index;  // manifest id -> 0-based index
  for (const auto& c : m.categories) {
    cat_index[c.id] = static_cast<int>(ds.category_ids.size());
    ds.category_ids.push_back(c.id);
    ds.category_names.push_back(c.name);
  }
  std::map<int, std::vector<match::GtObject>> anns;
  std::map<int, const data::ImageRec*> recs;
  for (const auto& im : m.images) recs[im.id] = &im;
  for (const auto& a : m.annotations) {
    const data::ImageRec& im = *recs.at(a.image_id);
    match::GtObject g;
    g.category = cat_index.at(a.category_id);
    g.box = {(a.bbox[0] + a.bbox[2] / 2.0) / im.width,
             (a.bbox[1] + a.bbox[3] / 2.0) / im.height,
             static_cast<double>(a.bbox[2]) / im.width,
             static_cast<double>(a.bbox[3]) / im.height};
    anns[a.image_id].push_back(g);
  }
  for (const auto& im : m.images) {
    Sample s;
    s.image = data::to_image(data::read_ppm((dir / im.file).string()));
    s.gts = anns[im.id];
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Sample augment(const Sample& s, Rng& rng) {
  Sample out = s;
  const int W = s.image.width, H = s.image.height;
  if (rng.uniform() < 0.5) {  // horizontal flip
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int c = 0; c < 3; ++c)
          out.image.rgb[(static_cast<std::size_t>(y) * W + x) * 3 + c] =
              s.image.rgb[(static_cast<std::size_t>(y) * W + (W - 1 - x)) * 3 + c];
    for (auto& g : out.gts) g.box.cx = 1.0 - g.box.cx;
  }

  const Sample flipped = out;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double scale = rng.uniform(0.6, 1.0);
    const int side = std::max(1, static_cast<int>(std::lround(scale * W)));
    if (side >= W) return flipped;  // identity crop
    const int x0 = rng.uniform_int(W - side + 1);
    const int y0 = rng.uniform_int(H - side + 1);
    std::vector<match::GtObject> kept;
    for (const auto& g : flipped.gts) {
      const double cx_px = g.box.cx * W, cy_px = g.box.cy * H;
      if (cx_px < x0 || cx_px >= x0 + side || cy_px < y0 || cy_px >= y0 + side)
        continue;
      // clip to the crop window, then renormalize
      geom::BoxXYXY b = geom::to_xyxy(g.box);
      double bx1 = std::max(b.x1 * W, static_cast<double>(x0));
      double by1 = std::max(b.y1 * H, static_cast<double>(y0));
      double bx2 = std::min(b.x2 * W, static_cast<double>(x0 + side));
      double by2 = std::min(b.y2 * H, static_cast<double>(y0 + side));
      match::GtObject ng = g;
      ng.box = geom::to_cxcywh({(bx1 - x0) / side, (by1 - y0) / side,
                                (bx2 - x0) / side, (by2 - y0) / side});
      kept.push_back(ng);
    }
    if (kept.empty() && !flipped.gts.empty()) continue;  // resample crop
    Sample cropped;
    cropped.image.width = W;
    cropped.image.height = H;
    cropped.image.rgb.resize(flipped.image.rgb.size());
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int sx = x0 + static_cast<int>((x + 0.5) * side / W);
        const int sy = y0 + static_cast<int>((y + 0.5) * side / H);
        for (int c = 0; c < 3; ++c)
          cropped.image.rgb[(static_cast<std::size_t>(y) * W + x) * 3 + c] =
              flipped.image.rgb[(static_cast<std::size_t>(sy) * W + sx) * 3 + c];
      }
    cropped.gts = std::move(kept);
    return cropped;
  }
  return flipped;  // ten crops all emptied the annotations
}

std::vector<int> few_shot_sample(int dataset_size, int k, uint64_t seed) {
  if (k > dataset_size)
    throw ad::ContractError("cannot sample " + std::to_string(k) +
                            " images from " + std::to_string(dataset_size));
  std::vector<int> ids(dataset_size);
  for (int i = 0; i < dataset_size; ++i) ids[i] = i;
  Rng rng(seed);
  for (int i = 0; i < k; ++i) {
    const int j = i + rng.uniform_int(dataset_size - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  return ids;
}

namespace {

struct BatchLoss {
  Tensor total, cls, l1, giou;
};

// bipartite-matched loss for one image; matching costs are detached
loss::Breakdown image_loss(const det::Output& out,
                           const std::vector<match::GtObject>& gts,
                           const match::Layout& layout) {
  match::Assignment assignment;
  if (!gts.empty()) {
    std::vector<geom::BoxCxCyWH> pred_boxes;
    const int n = out.boxes.dim(0);
    for (int i = 0; i < n; ++i)
      pred_boxes.push_back({out.boxes.at(i * 4 + 0), out.boxes.at(i * 4 + 1),
                            out.boxes.at(i * 4 + 2), out.boxes.at(i * 4 + 3)});
    assignment = match::hungarian(
        match::build_cost_matrix(out.p_out, pred_boxes, gts, layout));
  }
  return loss::total_loss(out.p_out, out.boxes, gts, assignment, layout);
}

BatchLoss batch_loss(const det::Weights& weights, const det::EmbeddingTable& table,
                     const std::vector<const Sample*>& batch) {
  BatchLoss bl;
  bl.total = Tensor::scalar(0.0);
  bl.cls = Tensor::scalar(0.0);
  bl.l1 = Tensor::scalar(0.0);
  bl.giou = Tensor::scalar(0.0);
  for (const Sample* s : batch) {
    det::Output out = det::forward(s->image, table, weights);
    loss::Breakdown b = image_loss(out, s->gts, table.layout());
    bl.total = ad::add(bl.total, b.total);
    bl.cls = ad::add(bl.cls, b.cls);
    bl.l1 = ad::add(bl.l1, b.l1);
    bl.giou = ad::add(bl.giou, b.giou);
  }
  return bl;
}

}  // namespace

std::pair<det::Weights, det::EmbeddingTable> pretrain(
    const Dataset& dataset, const PretrainConfig& cfg,
    const det::Config& detector_cfg, const MetricsSink& sink) {
  if (dataset.samples.empty())
    throw ad::ContractError("pretrain on empty dataset");
  const int C = static_cast<int>(dataset.category_ids.size());
  det::Weights weights = det::init_weights(detector_cfg, Rng::derive(cfg.seed, 1));
  weights.set_trainable(true);
  det::EmbeddingTable table = det::init_embedding_table(
      C, cfg.embeddings_per_class, detector_cfg.model_dim,
      Rng::derive(cfg.seed, 2), cfg.sigma_init);

  std::map<std::string, ad::Tensor*> params;
  for (auto& [name, t] : weights.params) params["weights." + name] = &t;
  params["table.W"] = &table.W;

  AdamW opt(cfg.beta1, cfg.beta2, cfg.eps);
  Rng rng(Rng::derive(cfg.seed, 3));
  const int n = static_cast<int>(dataset.samples.size());
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<Sample> batch_storage;
    std::vector<const Sample*> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Sample& s = dataset.samples[rng.uniform_int(n)];
      batch_storage.push_back(cfg.augment ? augment(s, rng) : s);
    }
    for (const Sample& s : batch_storage) batch.push_back(&s);
    BatchLoss bl = batch_loss(weights, table, batch);
    if (!std::isfinite(bl.total.value()))
      throw TrainingError("loss diverged", it);
    ad::backward(bl.total);
    const double lr = cosine_lr(it, cfg.iterations, cfg.lr0);
    opt.step(params, lr, cfg.weight_decay);
    if (sink)
      sink({it, bl.total.value(), bl.cls.value(), bl.l1.value(),
            bl.giou.value(), lr});
  }
  weights.set_trainable(false);
  return {std::move(weights), std::move(table)};
}

det::EmbeddingTable adapt(const det::Weights& frozen_weights, const Dataset& pool,
                          int C, int T, const TrainConfig& cfg,
                          const MetricsSink& sink) {
  if (pool.samples.empty()) throw ad::ContractError("adapt with an empty pool");
  det::EmbeddingTable table = det::init_embedding_table(
      C, T, frozen_weights.config.model_dim, Rng::derive(cfg.seed, 11),
      cfg.sigma_init);

  std::map<std::string, ad::Tensor*> params;
  params["table.W"] = &table.W;

  AdamW opt(cfg.beta1, cfg.beta2, cfg.eps);
  Rng rng(Rng::derive(cfg.seed, 12));
  const int n = static_cast<int>(pool.samples.size());
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<Sample> batch_storage;
    std::vector<const Sample*> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Sample& s = pool.samples[rng.uniform_int(n)];  // with replacement
      batch_storage.push_back(cfg.augment ? augment(s, rng) : s);
    }
    for (const Sample& s : batch_storage) batch.push_back(&s);
    BatchLoss bl = batch_loss(frozen_weights, table, batch);
    if (!std::isfinite(bl.total.value()))
      throw TrainingError("loss diverged", it);
    ad::backward(bl.total);
    const double lr = cosine_lr(it, cfg.iterations, cfg.lr0);
    opt.step(params, lr, cfg.weight_decay);
    if (sink)
      sink({it, bl.total.value(), bl.cls.value(), bl.l1.value(),
            bl.giou.value(), lr});
  }
  return table;
}

eval::Summary evaluate_model(const det::Weights& weights,
                             const det::EmbeddingTable& table,
                             const Dataset& dataset, double score_thr,
                             int max_dets) {
  std::vector<eval::Det> dets;
  std::vector<eval::Gt> gts;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const Sample& s = dataset.samples[i];
    const int image_id = static_cast<int>(i);
    det::Output out = det::forward(s.image, table, weights);
    for (const det::Detection& d :
         det::extract_detections(out, table.layout(), score_thr, max_dets)) {
      const int cat = dataset.category_ids[d.category];
      dets.push_back({image_id, cat, d.score, geom::to_xyxy(d.box)});
    }
    for (const match::GtObject& g : s.gts)
      gts.push_back({image_id, dataset.category_ids[g.category],
                     geom::to_xyxy(g.box)});
  }
  return eval::evaluate(dets, gts, dataset.category_ids);
}

}  // namespace eadk::train
