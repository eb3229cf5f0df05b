/* eadk: few-shot embedding adaptation for a frozen toy open-vocabulary
 * detector. C interface over the shared library; all handles are opaque and
 * must be released with the matching _close call. */
#ifndef EADK_H
#define EADK_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define EADK_API __attribute__((visibility("default")))

typedef enum {
  EADK_OK = 0,
  EADK_ERR_USAGE = 1,
  EADK_ERR_IO = 2,
  EADK_ERR_NUMERIC = 3,
  EADK_ERR_MISMATCH = 4
} eadk_status;

/* message for the most recent failure on this thread */
EADK_API const char* eadk_last_error(void);

typedef struct eadk_model eadk_model; /* frozen detector weights + base table */
typedef struct eadk_table eadk_table; /* text-embedding table */

/* ---- synthetic benchmark generation ---- */

typedef struct {
  int image_size;
  int base_train_scenes;
  int base_val_scenes;
  int novel_train_scenes;
  int novel_test_scenes;
  int max_objects;
  double occlusion; /* 0..1 placement-overlap bias */
} eadk_gen_params;

EADK_API void eadk_gen_params_init(eadk_gen_params* p);
EADK_API eadk_status eadk_gen_data(const char* out_dir, uint64_t seed,
                                   const eadk_gen_params* p);

typedef struct {
  int images;
  int annotations;
  int categories;
} eadk_split_stats;

EADK_API eadk_status eadk_split_stats_read(const char* split_dir,
                                           eadk_split_stats* out);

/* ---- pretraining ---- */

typedef struct {
  int iterations;
  int batch_size;
  double lr0;
  double beta1, beta2, eps;
  double weight_decay;
  uint64_t seed;
  int augment;
  double sigma_init;
  int embeddings_per_class;
  /* detector geometry */
  int image_size, patch_size, model_dim, enhancer_layers, decoder_layers,
      heads, num_queries, ffn_dim;
} eadk_pretrain_params;

EADK_API void eadk_pretrain_params_init(eadk_pretrain_params* p);

/* trains all detector weights plus a base-class table on a split directory
 * and writes a model checkpoint; loss_csv (optional) receives one row per
 * iteration */
EADK_API eadk_status eadk_pretrain(const char* train_split_dir,
                                   const char* out_checkpoint,
                                   const char* loss_csv,
                                   const eadk_pretrain_params* p);

/* ---- model and table handles ---- */

EADK_API eadk_status eadk_model_open(const char* checkpoint, eadk_model** out);
EADK_API eadk_status eadk_model_save(const eadk_model* m, const char* path);
EADK_API void eadk_model_close(eadk_model* m);

EADK_API eadk_status eadk_table_open(const char* path, eadk_table** out);
EADK_API eadk_status eadk_table_save(const eadk_table* t, const char* path);
/* the base-class table bundled in the model checkpoint */
EADK_API eadk_status eadk_table_base(const eadk_model* m, eadk_table** out);
/* frozen random table: the zero-shot proxy baseline */
EADK_API eadk_status eadk_table_random(const eadk_model* m, int num_classes,
                                       int embeddings_per_class, uint64_t seed,
                                       eadk_table** out);
EADK_API void eadk_table_close(eadk_table* t);

/* ---- few-shot adaptation ---- */

typedef struct {
  int shots;                 /* k images sampled from the train split */
  int embeddings_per_class;  /* T */
  int iterations;
  int batch_size;
  double lr0;
  double beta1, beta2, eps;
  double weight_decay;
  uint64_t seed; /* drives shot sampling, init and batch order */
  int augment;
  double sigma_init;
} eadk_adapt_params;

EADK_API void eadk_adapt_params_init(eadk_adapt_params* p);

/* samples k images from the split, trains a fresh table against the frozen
 * weights, and returns it; metrics_csv (optional) receives one row per
 * iteration */
EADK_API eadk_status eadk_adapt(const eadk_model* m, const char* train_split_dir,
                                const eadk_adapt_params* p,
                                const char* metrics_csv, eadk_table** out);

/* ---- evaluation and prediction ---- */

typedef struct {
  double map_5095;
  double map_50;
  double map_75;
  int n_detections;
  int n_ground_truth;
} eadk_eval_summary;

EADK_API eadk_status eadk_evaluate(const eadk_model* m, const eadk_table* t,
                                   const char* split_dir, double score_thr,
                                   eadk_eval_summary* out);

/* writes a copy of the PPM with detection overlays plus a JSON list of
 * {category, score, bbox} records */
EADK_API eadk_status eadk_predict(const eadk_model* m, const eadk_table* t,
                                  const char* image_ppm, const char* out_ppm,
                                  const char* out_json, double score_thr);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* EADK_H */
