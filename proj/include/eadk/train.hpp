#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "eadk/datagen.hpp"
#include "eadk/detector.hpp"
#include "eadk/eval.hpp"
#include "eadk/losses.hpp"
#include "eadk/rng.hpp"

namespace eadk::train {

struct TrainingError : std::runtime_error {
  int step = -1;
  TrainingError(const std::string& what, int step_)
      : std::runtime_error(what + " at iteration " + std::to_string(step_)),
        step(step_) {}
};

struct TrainConfig {
  int iterations = 400;
  int batch_size = 4;
  double lr0 = 2.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  uint64_t seed = 0;
  bool augment = true;
  double sigma_init = 0.02;
};

struct PretrainConfig {
  int iterations = 36000;
  int batch_size = 8;
  double lr0 = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  uint64_t seed = 0;
  bool augment = true;
  double sigma_init = 0.02;
  int embeddings_per_class = 4;
};

// lr0 * 0.5 * (1 + cos(pi * step / total))
double cosine_lr(int step, int total_steps, double lr0);

// Decoupled AdamW over a named parameter set; moments are keyed by name so
// the optimizer survives graph rebuilds.
class AdamW {
 public:
  AdamW(double beta1, double beta2, double eps) : b1_(beta1), b2_(beta2), eps_(eps) {}

  // applies one update from each tensor's current .grad(); parameters with
  // no gradient this step are skipped (decay still applies)
  void step(std::map<std::string, ad::Tensor*>& params, double lr,
            double weight_decay);

  int t() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  double b1_, b2_, eps_;
  int t_ = 0;
  std::map<std::string, Moments> state_;
};

struct Sample {
  det::Image image;
  std::vector<match::GtObject> gts;  // normalized cxcywh, 0-based categories
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<int> category_ids;       // manifest ids, ascending
  std::vector<std::string> category_names;
};

Dataset load_dataset(const std::string& split_dir);

// hflip with p=0.5 and random crop with scale in [0.6, 1], annotations
// kept when their center survives; a crop that would drop every
// annotation is resampled up to 10 times
Sample augment(const Sample& s, Rng& rng);

// k distinct indices, uniform without replacement
std::vector<int> few_shot_sample(int dataset_size, int k, uint64_t seed);

struct LossRow {
  int iteration = 0;
  double total = 0, cls = 0, l1 = 0, giou = 0, lr = 0;
};
using MetricsSink = std::function<void(const LossRow&)>;

std::pair<det::Weights, det::EmbeddingTable> pretrain(
    const Dataset& dataset, const PretrainConfig& cfg,
    const det::Config& detector_cfg, const MetricsSink& sink = nullptr);

// embedding-only adaptation against frozen weights; pool holds the k
// sampled images
det::EmbeddingTable adapt(const det::Weights& frozen_weights,
                          const Dataset& pool, int C, int T,
                          const TrainConfig& cfg,
                          const MetricsSink& sink = nullptr);

// run the detector over a dataset and score it COCO-style
eval::Summary evaluate_model(const det::Weights& weights,
                             const det::EmbeddingTable& table,
                             const Dataset& dataset, double score_thr = 0.05,
                             int max_dets = 100);

}  // namespace eadk::train
