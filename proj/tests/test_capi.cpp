// exercises the shared-library C interface end to end at smoke scale
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "eadk.h"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "eadk_test_capi";

std::string path(const char* rel) { return (kRoot / rel).string(); }

struct Fixture {
  Fixture() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);

    eadk_gen_params gp;
    eadk_gen_params_init(&gp);
    gp.base_train_scenes = 6;
    gp.base_val_scenes = 2;
    gp.novel_train_scenes = 6;
    gp.novel_test_scenes = 3;
    REQUIRE(eadk_gen_data(path("data").c_str(), 3, &gp) == EADK_OK);

    eadk_pretrain_params pp;
    eadk_pretrain_params_init(&pp);
    pp.iterations = 20;
    pp.batch_size = 2;
    pp.lr0 = 2e-3;
    pp.model_dim = 16;
    pp.patch_size = 16;
    pp.enhancer_layers = 1;
    pp.decoder_layers = 1;
    pp.heads = 2;
    pp.num_queries = 8;
    pp.ffn_dim = 32;
    REQUIRE(eadk_pretrain(path("data/base_train").c_str(), path("model.eadk").c_str(),
                          path("loss.csv").c_str(), &pp) == EADK_OK);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("gen-data artifacts and stats") {
  fixture();
  eadk_split_stats st;
  REQUIRE(eadk_split_stats_read(path("data/novel_train").c_str(), &st) == EADK_OK);
  CHECK(st.images == 6);
  CHECK(st.categories == 2);
  CHECK(st.annotations >= st.images);

  CHECK(eadk_split_stats_read(path("data/nope").c_str(), &st) == EADK_ERR_IO);
  CHECK(std::strlen(eadk_last_error()) > 0);
}

TEST_CASE("pretrain wrote a loadable checkpoint and a loss csv") {
  fixture();
  std::ifstream csv(path("loss.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "run_seed,shots,iteration,loss_total,loss_cls,loss_l1,loss_giou,lr");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  CHECK(rows == 20);

  eadk_model* model = nullptr;
  REQUIRE(eadk_model_open(path("model.eadk").c_str(), &model) == EADK_OK);
  REQUIRE(eadk_model_save(model, path("model_copy.eadk").c_str()) == EADK_OK);

  std::ifstream a(path("model.eadk"), std::ios::binary);
  std::ifstream b(path("model_copy.eadk"), std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {});
  std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  eadk_model_close(model);

  CHECK(eadk_model_open(path("missing.eadk").c_str(), &model) == EADK_ERR_IO);
}

TEST_CASE("tables: base, random, save, open") {
  fixture();
  eadk_model* model = nullptr;
  REQUIRE(eadk_model_open(path("model.eadk").c_str(), &model) == EADK_OK);

  eadk_table* base = nullptr;
  REQUIRE(eadk_table_base(model, &base) == EADK_OK);
  REQUIRE(eadk_table_save(base, path("base.eadk").c_str()) == EADK_OK);

  eadk_table* loaded = nullptr;
  REQUIRE(eadk_table_open(path("base.eadk").c_str(), &loaded) == EADK_OK);

  eadk_table* rnd1 = nullptr;
  eadk_table* rnd2 = nullptr;
  REQUIRE(eadk_table_random(model, 2, 4, 42, &rnd1) == EADK_OK);
  REQUIRE(eadk_table_random(model, 2, 4, 42, &rnd2) == EADK_OK);
  REQUIRE(eadk_table_save(rnd1, path("r1.eadk").c_str()) == EADK_OK);
  REQUIRE(eadk_table_save(rnd2, path("r2.eadk").c_str()) == EADK_OK);
  std::ifstream a(path("r1.eadk"), std::ios::binary);
  std::ifstream b(path("r2.eadk"), std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {});
  std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);

  eadk_table_close(base);
  eadk_table_close(loaded);
  eadk_table_close(rnd1);
  eadk_table_close(rnd2);
  eadk_model_close(model);
}

TEST_CASE("adapt + evaluate + predict round trip") {
  fixture();
  eadk_model* model = nullptr;
  REQUIRE(eadk_model_open(path("model.eadk").c_str(), &model) == EADK_OK);

  eadk_adapt_params ap;
  eadk_adapt_params_init(&ap);
  CHECK(ap.iterations == 400);
  CHECK(ap.batch_size == 4);
  CHECK(ap.lr0 == 2.0);
  CHECK(ap.embeddings_per_class == 4);
  ap.iterations = 10;
  ap.batch_size = 2;
  ap.shots = 4;
  ap.embeddings_per_class = 2;
  ap.seed = 1;

  eadk_table* adapted = nullptr;
  REQUIRE(eadk_adapt(model, path("data/novel_train").c_str(), &ap,
                     path("metrics.csv").c_str(), &adapted) == EADK_OK);
  std::ifstream csv(path("metrics.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "run_seed,shots,iteration,loss_total,loss_cls,loss_l1,loss_giou,lr");

  eadk_eval_summary s;
  REQUIRE(eadk_evaluate(model, adapted, path("data/novel_test").c_str(), 0.05,
                        &s) == EADK_OK);
  CHECK(s.map_50 >= 0.0);
  CHECK(s.map_50 <= 1.0);
  CHECK(s.map_75 <= s.map_50 + 1e-12);
  CHECK(s.n_ground_truth > 0);

  // shots beyond the split size is a data mismatch
  eadk_adapt_params big = ap;
  big.shots = 1000;
  eadk_table* none = nullptr;
  CHECK(eadk_adapt(model, path("data/novel_train").c_str(), &big, nullptr,
                   &none) == EADK_ERR_MISMATCH);

  // prediction artifacts
  REQUIRE(eadk_predict(model, adapted,
                       path("data/novel_test/images/scene_00001.ppm").c_str(),
                       path("pred.ppm").c_str(), path("pred.json").c_str(),
                       0.25) == EADK_OK);
  CHECK(fs::exists(path("pred.ppm")));
  std::ifstream js(path("pred.json"));
  std::string json((std::istreambuf_iterator<char>(js)), {});
  CHECK(json.find('[') != std::string::npos);

  eadk_table_close(adapted);
  eadk_model_close(model);
}

TEST_CASE("category mismatch is surfaced") {
  fixture();
  eadk_model* model = nullptr;
  REQUIRE(eadk_model_open(path("model.eadk").c_str(), &model) == EADK_OK);
  eadk_table* odd = nullptr;
  REQUIRE(eadk_table_random(model, 5, 2, 1, &odd) == EADK_OK);
  eadk_eval_summary s;
  CHECK(eadk_evaluate(model, odd, path("data/novel_test").c_str(), 0.05, &s) ==
        EADK_ERR_MISMATCH);
  CHECK(std::strlen(eadk_last_error()) > 0);
  eadk_table_close(odd);
  eadk_model_close(model);
}
