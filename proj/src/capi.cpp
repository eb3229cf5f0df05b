#include "eadk.h"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "eadk/checkpoint.hpp"
#include "eadk/datagen.hpp"
#include "eadk/detector.hpp"
#include "eadk/eval.hpp"
#include "eadk/train.hpp"

using namespace eadk;

struct eadk_model {
  det::Weights weights;
  det::EmbeddingTable base;
};

struct eadk_table {
  det::EmbeddingTable t;
};

namespace {

thread_local std::string g_error;

template <typename Fn>
eadk_status guarded(Fn&& fn) {
  try {
    fn();
    return EADK_OK;
  } catch (const data::IoError& e) {
    g_error = e.what();
    return EADK_ERR_IO;
  } catch (const ckpt::IoError& e) {
    g_error = e.what();
    return EADK_ERR_IO;
  } catch (const data::ParseError& e) {
    g_error = e.what();
    return EADK_ERR_IO;
  } catch (const train::TrainingError& e) {
    g_error = e.what();
    return EADK_ERR_NUMERIC;
  } catch (const ad::DomainError& e) {
    g_error = e.what();
    return EADK_ERR_NUMERIC;
  } catch (const ad::DimensionError& e) {
    g_error = e.what();
    return EADK_ERR_MISMATCH;
  } catch (const ad::ContractError& e) {
    g_error = e.what();
    return EADK_ERR_MISMATCH;
  } catch (const std::exception& e) {
    g_error = e.what();
    return EADK_ERR_USAGE;
  }
}

// per-iteration training CSV; header written once per new file
class MetricsCsv {
 public:
  MetricsCsv(const char* path, uint64_t run_seed, int shots)
      : run_seed_(run_seed), shots_(shots) {
    if (!path) return;
    const bool fresh =
        !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    os_.open(path, std::ios::app);
    if (!os_) throw data::IoError(std::string("cannot open for write: ") + path);
    if (fresh)
      os_ << "run_seed,shots,iteration,loss_total,loss_cls,loss_l1,loss_giou,lr\n";
  }

  train::MetricsSink sink() {
    if (!os_.is_open()) return nullptr;
    return [this](const train::LossRow& r) {
      os_ << run_seed_ << "," << shots_ << "," << r.iteration << "," << r.total
          << "," << r.cls << "," << r.l1 << "," << r.giou << "," << r.lr << "\n";
    };
  }

 private:
  uint64_t run_seed_;
  int shots_;
  std::ofstream os_;
};

}  // namespace

extern "C" {

const char* eadk_last_error(void) { return g_error.c_str(); }

void eadk_gen_params_init(eadk_gen_params* p) {
  data::BenchmarkSpec s;
  p->image_size = s.image_size;
  p->base_train_scenes = s.base_train;
  p->base_val_scenes = s.base_val;
  p->novel_train_scenes = s.novel_train;
  p->novel_test_scenes = s.novel_test;
  p->max_objects = s.max_objects;
  p->occlusion = s.occlusion;
}

eadk_status eadk_gen_data(const char* out_dir, uint64_t seed,
                          const eadk_gen_params* p) {
  return guarded([&] {
    data::BenchmarkSpec s;
    if (p) {
      s.image_size = p->image_size;
      s.base_train = p->base_train_scenes;
      s.base_val = p->base_val_scenes;
      s.novel_train = p->novel_train_scenes;
      s.novel_test = p->novel_test_scenes;
      s.max_objects = p->max_objects;
      s.occlusion = p->occlusion;
    }
    data::build_benchmark(out_dir, seed, s);
  });
}

eadk_status eadk_split_stats_read(const char* split_dir, eadk_split_stats* out) {
  return guarded([&] {
    data::Manifest m = data::read_manifest(
        (std::filesystem::path(split_dir) / "manifest.json").string());
    out->images = static_cast<int>(m.images.size());
    out->annotations = static_cast<int>(m.annotations.size());
    out->categories = static_cast<int>(m.categories.size());
  });
}

void eadk_pretrain_params_init(eadk_pretrain_params* p) {
  train::PretrainConfig c;
  det::Config d;
  p->iterations = c.iterations;
  p->batch_size = c.batch_size;
  p->lr0 = c.lr0;
  p->beta1 = c.beta1;
  p->beta2 = c.beta2;
  p->eps = c.eps;
  p->weight_decay = c.weight_decay;
  p->seed = c.seed;
  p->augment = c.augment ? 1 : 0;
  p->sigma_init = c.sigma_init;
  p->embeddings_per_class = c.embeddings_per_class;
  p->image_size = d.image_size;
  p->patch_size = d.patch_size;
  p->model_dim = d.model_dim;
  p->enhancer_layers = d.enhancer_layers;
  p->decoder_layers = d.decoder_layers;
  p->heads = d.heads;
  p->num_queries = d.num_queries;
  p->ffn_dim = d.ffn_dim;
}

eadk_status eadk_pretrain(const char* train_split_dir, const char* out_checkpoint,
                          const char* loss_csv, const eadk_pretrain_params* p) {
  return guarded([&] {
    train::PretrainConfig c;
    det::Config d;
    if (p) {
      c.iterations = p->iterations;
      c.batch_size = p->batch_size;
      c.lr0 = p->lr0;
      c.beta1 = p->beta1;
      c.beta2 = p->beta2;
      c.eps = p->eps;
      c.weight_decay = p->weight_decay;
      c.seed = p->seed;
      c.augment = p->augment != 0;
      c.sigma_init = p->sigma_init;
      c.embeddings_per_class = p->embeddings_per_class;
      d.image_size = p->image_size;
      d.patch_size = p->patch_size;
      d.model_dim = p->model_dim;
      d.enhancer_layers = p->enhancer_layers;
      d.decoder_layers = p->decoder_layers;
      d.heads = p->heads;
      d.num_queries = p->num_queries;
      d.ffn_dim = p->ffn_dim;
    }
    train::Dataset ds = train::load_dataset(train_split_dir);
    MetricsCsv csv(loss_csv, c.seed, 0);
    auto [weights, table] = train::pretrain(ds, c, d, csv.sink());
    ckpt::save_model(out_checkpoint, weights, table);
  });
}

eadk_status eadk_model_open(const char* checkpoint, eadk_model** out) {
  return guarded([&] {
    auto [weights, table] = ckpt::load_model(checkpoint);
    *out = new eadk_model{std::move(weights), std::move(table)};
  });
}

eadk_status eadk_model_save(const eadk_model* m, const char* path) {
  return guarded([&] { ckpt::save_model(path, m->weights, m->base); });
}

void eadk_model_close(eadk_model* m) { delete m; }

eadk_status eadk_table_open(const char* path, eadk_table** out) {
  return guarded([&] { *out = new eadk_table{ckpt::load_table(path)}; });
}

eadk_status eadk_table_save(const eadk_table* t, const char* path) {
  return guarded([&] { ckpt::save_table(path, t->t); });
}

eadk_status eadk_table_base(const eadk_model* m, eadk_table** out) {
  return guarded([&] {
    eadk_table* t = new eadk_table;
    t->t.W = m->base.W.detached_copy();
    t->t.C = m->base.C;
    t->t.T = m->base.T;
    *out = t;
  });
}

eadk_status eadk_table_random(const eadk_model* m, int num_classes,
                              int embeddings_per_class, uint64_t seed,
                              eadk_table** out) {
  return guarded([&] {
    det::EmbeddingTable t = det::init_embedding_table(
        num_classes, embeddings_per_class, m->weights.config.model_dim, seed);
    t.W.set_requires_grad(false);
    *out = new eadk_table{std::move(t)};
  });
}

void eadk_table_close(eadk_table* t) { delete t; }

void eadk_adapt_params_init(eadk_adapt_params* p) {
  train::TrainConfig c;
  p->shots = 16;
  p->embeddings_per_class = 4;
  p->iterations = c.iterations;
  p->batch_size = c.batch_size;
  p->lr0 = c.lr0;
  p->beta1 = c.beta1;
  p->beta2 = c.beta2;
  p->eps = c.eps;
  p->weight_decay = c.weight_decay;
  p->seed = c.seed;
  p->augment = c.augment ? 1 : 0;
  p->sigma_init = c.sigma_init;
}

eadk_status eadk_adapt(const eadk_model* m, const char* train_split_dir,
                       const eadk_adapt_params* p, const char* metrics_csv,
                       eadk_table** out) {
  return guarded([&] {
    train::TrainConfig c;
    c.iterations = p->iterations;
    c.batch_size = p->batch_size;
    c.lr0 = p->lr0;
    c.beta1 = p->beta1;
    c.beta2 = p->beta2;
    c.eps = p->eps;
    c.weight_decay = p->weight_decay;
    c.seed = p->seed;
    c.augment = p->augment != 0;
    c.sigma_init = p->sigma_init;

    train::Dataset full = train::load_dataset(train_split_dir);
    std::vector<int> picked = train::few_shot_sample(
        static_cast<int>(full.samples.size()), p->shots, Rng::derive(p->seed, 21));
    train::Dataset pool;
    pool.category_ids = full.category_ids;
    pool.category_names = full.category_names;
    for (int i : picked) pool.samples.push_back(full.samples[i]);

    MetricsCsv csv(metrics_csv, p->seed, p->shots);
    det::EmbeddingTable table = train::adapt(
        m->weights, pool, static_cast<int>(full.category_ids.size()),
        p->embeddings_per_class, c, csv.sink());
    table.W.set_requires_grad(false);
    *out = new eadk_table{std::move(table)};
  });
}

eadk_status eadk_evaluate(const eadk_model* m, const eadk_table* t,
                          const char* split_dir, double score_thr,
                          eadk_eval_summary* out) {
  return guarded([&] {
    train::Dataset ds = train::load_dataset(split_dir);
    if (static_cast<int>(ds.category_ids.size()) != t->t.C)
      throw ad::ContractError(
          "table has " + std::to_string(t->t.C) + " classes but split has " +
          std::to_string(ds.category_ids.size()));
    eval::Summary s = train::evaluate_model(m->weights, t->t, ds, score_thr);
    out->map_5095 = s.map_5095;
    out->map_50 = s.map_50;
    out->map_75 = s.map_75;
    out->n_detections = s.n_detections;
    out->n_ground_truth = s.n_ground_truth;
  });
}

namespace {

// 3x5 glyphs for the burned-in labels
const char* glyph(char c) {
  switch (c) {
    case '0': return "111101101101111";
    case '1': return "010110010010111";
    case '2': return "111001111100111";
    case '3': return "111001111001111";
    case '4': return "101101111001001";
    case '5': return "111100111001111";
    case '6': return "111100111101111";
    case '7': return "111001010010010";
    case '8': return "111101111101111";
    case '9': return "111101111001111";
    case '.': return "000000000000010";
    case ':': return "000010000010000";
    case ' ': return "000000000000000";
    default: return "111111111111111";
  }
}

void draw_text(data::Raster& r, int x0, int y0, const std::string& text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char* g = glyph(text[i]);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 3; ++x) {
        if (g[y * 3 + x] != '1') continue;
        const int px = x0 + static_cast<int>(i) * 4 + x, py = y0 + y;
        if (px < 0 || px >= r.width || py < 0 || py >= r.height) continue;
        const std::size_t k = (static_cast<std::size_t>(py) * r.width + px) * 3;
        r.px[k] = r.px[k + 1] = r.px[k + 2] = 255;
      }
  }
}

void draw_rect(data::Raster& r, int x0, int y0, int x1, int y1) {
  x0 = std::clamp(x0, 0, r.width - 1);
  x1 = std::clamp(x1, 0, r.width - 1);
  y0 = std::clamp(y0, 0, r.height - 1);
  y1 = std::clamp(y1, 0, r.height - 1);
  auto put = [&](int x, int y) {
    const std::size_t k = (static_cast<std::size_t>(y) * r.width + x) * 3;
    r.px[k] = r.px[k + 1] = r.px[k + 2] = 255;
  };
  for (int x = x0; x <= x1; ++x) {
    put(x, y0);
    put(x, y1);
  }
  for (int y = y0; y <= y1; ++y) {
    put(x0, y);
    put(x1, y);
  }
}

}  // namespace

eadk_status eadk_predict(const eadk_model* m, const eadk_table* t,
                         const char* image_ppm, const char* out_ppm,
                         const char* out_json, double score_thr) {
  return guarded([&] {
    data::Raster raster = data::read_ppm(image_ppm);
    det::Image img = data::to_image(raster);
    det::Output out = det::forward(img, t->t, m->weights);
    auto dets = det::extract_detections(out, t->t.layout(), score_thr);

    nlohmann::json j = nlohmann::json::array();
    for (const det::Detection& d : dets) {
      geom::BoxXYXY b = geom::to_xyxy(d.box);
      const int x = static_cast<int>(std::lround(std::clamp(b.x1, 0.0, 1.0) * raster.width));
      const int y = static_cast<int>(std::lround(std::clamp(b.y1, 0.0, 1.0) * raster.height));
      const int x2 = static_cast<int>(std::lround(std::clamp(b.x2, 0.0, 1.0) * raster.width));
      const int y2 = static_cast<int>(std::lround(std::clamp(b.y2, 0.0, 1.0) * raster.height));
      j.push_back({{"category", d.category},
                   {"score", d.score},
                   {"bbox", {x, y, std::max(0, x2 - x), std::max(0, y2 - y)}}});
      draw_rect(raster, x, y, x2, y2);
      char label[32];
      std::snprintf(label, sizeof(label), "%d:%.2f", d.category, d.score);
      draw_text(raster, x + 1, y + 1, label);
    }
    data::write_ppm(out_ppm, raster);
    std::ofstream os(out_json);
    if (!os) throw data::IoError(std::string("cannot open for write: ") + out_json);
    os << j.dump(2) << "\n";
  });
}

}  // extern "C"
