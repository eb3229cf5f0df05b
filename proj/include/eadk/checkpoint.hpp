#pragma once

#include <map>
#include <string>

#include "eadk/detector.hpp"
#include "eadk/tensor.hpp"

namespace eadk::ckpt {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// "EADK" magic, u16 version, u32 record count, then per record:
// u32 name length + UTF-8 name, u8 dtype (0=f32, 1=f64), u8 rank,
// u32 dims, little-endian row-major payload. f64 is written; f32 is
// accepted on read and widened.
void save(const std::string& path, const std::map<std::string, ad::Tensor>& tensors);
std::map<std::string, ad::Tensor> load(const std::string& path);

// model checkpoints bundle the frozen weights, the base-class table and the
// config (as meta.* records)
void save_model(const std::string& path, const det::Weights& weights,
                const det::EmbeddingTable& table);
std::pair<det::Weights, det::EmbeddingTable> load_model(const std::string& path);

// embedding-only checkpoints carry just the table
void save_table(const std::string& path, const det::EmbeddingTable& table);
det::EmbeddingTable load_table(const std::string& path);

}  // namespace eadk::ckpt
