#include "eadk/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

namespace eadk::ckpt {

namespace {

constexpr char kMagic[4] = {'E', 'A', 'D', 'K'};
constexpr uint16_t kVersion = 1;

template <typename T>
void write_raw(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& is, const std::string& path) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated checkpoint: " + path);
  return v;
}

}  // namespace

void save(const std::string& path,
          const std::map<std::string, ad::Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os.write(kMagic, 4);
  write_raw(os, kVersion);
  write_raw(os, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    write_raw(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw(os, static_cast<uint8_t>(1));  // f64
    write_raw(os, static_cast<uint8_t>(t.rank()));
    for (int d : t.shape()) write_raw(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw IoError("write failed: " + path);
}

std::map<std::string, ad::Tensor> load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kMagic, 4))
    throw IoError("bad magic in checkpoint: " + path);
  const auto version = read_raw<uint16_t>(is, path);
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto count = read_raw<uint32_t>(is, path);
  std::map<std::string, ad::Tensor> out;
  for (uint32_t r = 0; r < count; ++r) {
    const auto name_len = read_raw<uint32_t>(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto dtype = read_raw<uint8_t>(is, path);
    const auto rank = read_raw<uint8_t>(is, path);
    std::vector<int> shape(rank);
    std::size_t n = 1;
    for (int i = 0; i < rank; ++i) {
      shape[i] = static_cast<int>(read_raw<uint32_t>(is, path));
      n *= shape[i];
    }
    std::vector<double> data(n);
    if (dtype == 1) {
      is.read(reinterpret_cast<char*>(data.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
    } else if (dtype == 0) {
      std::vector<float> f(n);
      is.read(reinterpret_cast<char*>(f.data()),
              static_cast<std::streamsize>(n * sizeof(float)));
      for (std::size_t i = 0; i < n; ++i) data[i] = f[i];
    } else {
      throw IoError("unknown dtype " + std::to_string(dtype) + " in " + path);
    }
    if (!is) throw IoError("truncated checkpoint: " + path);
    out.emplace(name, ad::Tensor::from_data(std::move(shape), std::move(data)));
  }
  return out;
}

void save_model(const std::string& path, const det::Weights& weights,
                const det::EmbeddingTable& table) {
  std::map<std::string, ad::Tensor> ts;
  for (const auto& [name, t] : weights.params) ts.emplace("weights." + name, t);
  const det::Config& c = weights.config;
  ts.emplace("meta.config",
             ad::Tensor::from_data(
                 {8}, {static_cast<double>(c.image_size),
                       static_cast<double>(c.patch_size),
                       static_cast<double>(c.model_dim),
                       static_cast<double>(c.enhancer_layers),
                       static_cast<double>(c.decoder_layers),
                       static_cast<double>(c.heads),
                       static_cast<double>(c.num_queries),
                       static_cast<double>(c.ffn_dim)}));
  ts.emplace("table.W", table.W);
  ts.emplace("table.layout", ad::Tensor::from_data(
                                 {2}, {static_cast<double>(table.C),
                                       static_cast<double>(table.T)}));
  save(path, ts);
}

std::pair<det::Weights, det::EmbeddingTable> load_model(const std::string& path) {
  auto ts = load(path);
  auto cfg_it = ts.find("meta.config");
  if (cfg_it == ts.end()) throw IoError("not a model checkpoint: " + path);
  const auto& cv = cfg_it->second.values();
  det::Weights w;
  w.config = {static_cast<int>(cv[0]), static_cast<int>(cv[1]),
              static_cast<int>(cv[2]), static_cast<int>(cv[3]),
              static_cast<int>(cv[4]), static_cast<int>(cv[5]),
              static_cast<int>(cv[6]), static_cast<int>(cv[7])};
  for (auto& [name, t] : ts)
    if (name.rfind("weights.", 0) == 0) w.params.emplace(name.substr(8), t);
  auto table_it = ts.find("table.W");
  auto layout_it = ts.find("table.layout");
  if (table_it == ts.end() || layout_it == ts.end())
    throw IoError("model checkpoint missing table: " + path);
  det::EmbeddingTable table;
  table.W = table_it->second;
  table.C = static_cast<int>(layout_it->second.values()[0]);
  table.T = static_cast<int>(layout_it->second.values()[1]);
  return {std::move(w), std::move(table)};
}

void save_table(const std::string& path, const det::EmbeddingTable& table) {
  std::map<std::string, ad::Tensor> ts;
  ts.emplace("table.W", table.W);
  ts.emplace("table.layout", ad::Tensor::from_data(
                                 {2}, {static_cast<double>(table.C),
                                       static_cast<double>(table.T)}));
  save(path, ts);
}

det::EmbeddingTable load_table(const std::string& path) {
  auto ts = load(path);
  auto table_it = ts.find("table.W");
  auto layout_it = ts.find("table.layout");
  if (table_it == ts.end() || layout_it == ts.end())
    throw IoError("not a table checkpoint: " + path);
  det::EmbeddingTable table;
  table.W = table_it->second;
  table.C = static_cast<int>(layout_it->second.values()[0]);
  table.T = static_cast<int>(layout_it->second.values()[1]);
  return table;
}

}  // namespace eadk::ckpt
