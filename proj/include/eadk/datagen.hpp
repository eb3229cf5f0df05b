#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "eadk/detector.hpp"
#include "eadk/rng.hpp"

namespace eadk::data {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ShapeKind { Disc, Square, Triangle, Cross, Ring, Bar };

struct CategorySpec {
  std::string name;
  ShapeKind kind = ShapeKind::Disc;
  std::array<uint8_t, 3> color_lo{0, 0, 0};
  std::array<uint8_t, 3> color_hi{255, 255, 255};
  double size_min = 0.12;  // shape diameter as a fraction of image size
  double size_max = 0.35;
};

struct Raster {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> px;  // row-major RGB
};

struct ImageRec {
  int id = 0;
  std::string file;
  int width = 0;
  int height = 0;
};

struct AnnotationRec {
  int id = 0;
  int image_id = 0;
  int category_id = 0;
  std::array<int, 4> bbox{0, 0, 0, 0};  // x, y, w, h in pixels
};

struct CategoryRec {
  int id = 0;
  std::string name;
};

struct Manifest {
  int schema_version = 1;
  std::vector<ImageRec> images;
  std::vector<AnnotationRec> annotations;
  std::vector<CategoryRec> categories;
};

struct SceneObject {
  int category = 0;            // index into the spec list
  std::array<int, 4> bbox{};   // full (amodal) extent in pixels
};

struct Scene {
  Raster raster;
  std::vector<SceneObject> objects;
};

// Integer-only rasterization; byte-identical for a given rng stream.
// occlusion_level in [0,1] biases placement toward overlap; at 0 the boxes
// are rejection-sampled disjoint. Shapes left > 90% covered are replaced.
Scene generate_scene(const std::vector<CategorySpec>& categories, int image_size,
                     int max_objects, double occlusion_level, Rng& rng);

struct BenchmarkSpec {
  int image_size = 64;
  int base_train = 1600;
  int base_val = 100;
  int novel_train = 64;
  int novel_test = 100;
  int max_objects = 3;
  double occlusion = 0.3;
};

// fixed benchmark: base split (disc, square), novel split (triangle, cross);
// writes {root}/{split}/manifest.json and {root}/{split}/images/*.ppm
void build_benchmark(const std::string& root, uint64_t seed,
                     const BenchmarkSpec& spec = {});

std::vector<CategorySpec> base_categories();
std::vector<CategorySpec> novel_categories();

Manifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& m);
void validate(const Manifest& m);

Raster read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Raster& r);

det::Image to_image(const Raster& r);
Raster to_raster(const det::Image& img);

}  // namespace eadk::data
