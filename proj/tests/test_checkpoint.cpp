#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "eadk/checkpoint.hpp"
#include "eadk/rng.hpp"

using namespace eadk;
using ad::Tensor;
namespace fs = std::filesystem;

namespace {
fs::path tmp(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "eadk_test_ckpt";
  fs::create_directories(dir);
  return dir / name;
}
}  // namespace

TEST_CASE("tensor map round trip") {
  std::map<std::string, Tensor> in;
  in["a"] = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  in["b.nested"] = Tensor::from_data({4}, {-0.5, 1e-30, 3e18, 0});
  ckpt::save(tmp("map.eadk").string(), in);
  std::map<std::string, Tensor> out = ckpt::load(tmp("map.eadk").string());
  REQUIRE(out.size() == 2);
  CHECK(out.at("a").shape() == std::vector<int>{2, 3});
  CHECK(out.at("a").values() == in.at("a").values());
  CHECK(out.at("b.nested").values() == in.at("b.nested").values());
}

TEST_CASE("f32 records are widened on read") {
  // hand-built file: magic, version 1, one f32 record "x" of shape [2]
  std::ofstream f(tmp("f32.eadk"), std::ios::binary);
  f.write("EADK", 4);
  uint16_t ver = 1;
  uint32_t count = 1, name_len = 1, dim = 2;
  uint8_t dtype = 0, rank = 1;
  f.write(reinterpret_cast<char*>(&ver), 2);
  f.write(reinterpret_cast<char*>(&count), 4);
  f.write(reinterpret_cast<char*>(&name_len), 4);
  f.write("x", 1);
  f.write(reinterpret_cast<char*>(&dtype), 1);
  f.write(reinterpret_cast<char*>(&rank), 1);
  f.write(reinterpret_cast<char*>(&dim), 4);
  float payload[2] = {1.5f, -2.25f};
  f.write(reinterpret_cast<char*>(payload), 8);
  f.close();

  std::map<std::string, Tensor> out = ckpt::load(tmp("f32.eadk").string());
  CHECK(out.at("x").values() == std::vector<double>{1.5, -2.25});
}

TEST_CASE("corrupt files are rejected") {
  std::ofstream f(tmp("bad.eadk"), std::ios::binary);
  f << "NOPE";
  f.close();
  CHECK_THROWS_AS(ckpt::load(tmp("bad.eadk").string()), ckpt::IoError);
  CHECK_THROWS_AS(ckpt::load(tmp("missing.eadk").string()), ckpt::IoError);
}

TEST_CASE("model and table round trips") {
  det::Config cfg;
  cfg.image_size = 16;
  cfg.patch_size = 8;
  cfg.model_dim = 8;
  cfg.enhancer_layers = 1;
  cfg.decoder_layers = 1;
  cfg.heads = 2;
  cfg.num_queries = 4;
  cfg.ffn_dim = 16;
  det::Weights w = det::init_weights(cfg, 9);
  det::EmbeddingTable t = det::init_embedding_table(2, 3, cfg.model_dim, 4);

  ckpt::save_model(tmp("model.eadk").string(), w, t);
  auto [w2, t2] = ckpt::load_model(tmp("model.eadk").string());
  CHECK(w2.config.model_dim == cfg.model_dim);
  CHECK(w2.config.num_queries == cfg.num_queries);
  REQUIRE(w2.params.size() == w.params.size());
  for (const auto& [name, tensor] : w.params)
    CHECK(w2.at(name).values() == tensor.values());
  CHECK(t2.C == 2);
  CHECK(t2.T == 3);
  CHECK(t2.W.values() == t.W.values());

  // repeated save is byte-identical (map ordering pins record order)
  ckpt::save_model(tmp("model2.eadk").string(), w, t);
  std::ifstream a(tmp("model.eadk"), std::ios::binary);
  std::ifstream b(tmp("model2.eadk"), std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {});
  std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);

  ckpt::save_table(tmp("table.eadk").string(), t);
  det::EmbeddingTable t3 = ckpt::load_table(tmp("table.eadk").string());
  CHECK(t3.C == t.C);
  CHECK(t3.T == t.T);
  CHECK(t3.W.values() == t.W.values());
}
