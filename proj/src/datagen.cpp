#include "eadk/datagen.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace eadk::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// pixel-inclusion predicate in pure integer arithmetic
bool inside(ShapeKind kind, int dx, int dy, int r) {
  const int arm = std::max(1, r / 3);
  switch (kind) {
    case ShapeKind::Disc:
      return dx * dx + dy * dy <= r * r;
    case ShapeKind::Square:
      return std::abs(dx) <= r && std::abs(dy) <= r;
    case ShapeKind::Triangle:
      return dy >= -r && dy <= r && 2 * std::abs(dx) <= dy + r;
    case ShapeKind::Cross:
      return (std::abs(dx) <= arm && std::abs(dy) <= r) ||
             (std::abs(dy) <= arm && std::abs(dx) <= r);
    case ShapeKind::Ring: {
      const int d2 = dx * dx + dy * dy;
      const int ri = std::max(1, r / 2);
      return d2 <= r * r && d2 >= ri * ri;
    }
    case ShapeKind::Bar:
      return std::abs(dx) <= r && std::abs(dy) <= arm;
  }
  return false;
}

struct Placed {
  int category = 0;
  ShapeKind kind;
  int cx = 0, cy = 0, r = 0;
  std::array<uint8_t, 3> color{};
  std::array<int, 4> bbox{};  // x, y, w, h
};

std::array<int, 4> shape_bbox(const Placed& p, int image_size) {
  int x0 = image_size, y0 = image_size, x1 = -1, y1 = -1;
  for (int dy = -p.r; dy <= p.r; ++dy)
    for (int dx = -p.r; dx <= p.r; ++dx)
      if (inside(p.kind, dx, dy, p.r)) {
        x0 = std::min(x0, p.cx + dx);
        x1 = std::max(x1, p.cx + dx);
        y0 = std::min(y0, p.cy + dy);
        y1 = std::max(y1, p.cy + dy);
      }
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

double box_iou_px(const std::array<int, 4>& a, const std::array<int, 4>& b) {
  const int ix0 = std::max(a[0], b[0]), iy0 = std::max(a[1], b[1]);
  const int ix1 = std::min(a[0] + a[2], b[0] + b[2]);
  const int iy1 = std::min(a[1] + a[3], b[1] + b[3]);
  const int iw = std::max(0, ix1 - ix0), ih = std::max(0, iy1 - iy0);
  const double inter = static_cast<double>(iw) * ih;
  const double uni = static_cast<double>(a[2]) * a[3] +
                     static_cast<double>(b[2]) * b[3] - inter;
  return uni > 0 ? inter / uni : 0.0;
}

void place(Placed& p, const std::vector<Placed>& existing, int image_size,
           double occlusion_level, Rng& rng) {
  const int lo = p.r, hi = image_size - 1 - p.r;
  for (int attempt = 0; attempt < 100; ++attempt) {
    if (occlusion_level > 0.0 && !existing.empty() &&
        rng.uniform() < occlusion_level) {
      const Placed& anchor = existing[rng.uniform_int(static_cast<int>(existing.size()))];
      const int spread = anchor.r + p.r / 2;
      p.cx = anchor.cx - spread + rng.uniform_int(2 * spread + 1);
      p.cy = anchor.cy - spread + rng.uniform_int(2 * spread + 1);
      p.cx = std::clamp(p.cx, lo, hi);
      p.cy = std::clamp(p.cy, lo, hi);
    } else {
      p.cx = lo + rng.uniform_int(hi - lo + 1);
      p.cy = lo + rng.uniform_int(hi - lo + 1);
    }
    p.bbox = shape_bbox(p, image_size);
    if (occlusion_level > 0.0) return;
    bool disjoint = true;
    for (const Placed& e : existing)
      if (box_iou_px(p.bbox, e.bbox) > 0.0) disjoint = false;
    if (disjoint) return;
  }
  // keep the last sample; the caller may still drop the shape later
}

}  // namespace

Scene generate_scene(const std::vector<CategorySpec>& categories, int image_size,
                     int max_objects, double occlusion_level, Rng& rng) {
  if (categories.empty() || max_objects < 1)
    throw ad::ContractError("generate_scene needs categories and max_objects >= 1");
  const int n_objects = 1 + rng.uniform_int(max_objects);

  std::vector<Placed> placed;
  for (int k = 0; k < n_objects; ++k) {
    Placed p;
    p.category = rng.uniform_int(static_cast<int>(categories.size()));
    const CategorySpec& spec = categories[p.category];
    p.kind = spec.kind;
    const int smin = std::max(4, static_cast<int>(spec.size_min * image_size));
    const int smax = std::max(smin, static_cast<int>(spec.size_max * image_size));
    p.r = (smin + rng.uniform_int(smax - smin + 1)) / 2;
    for (int c = 0; c < 3; ++c)
      p.color[c] = static_cast<uint8_t>(
          spec.color_lo[c] +
          rng.uniform_int(spec.color_hi[c] - spec.color_lo[c] + 1));
    place(p, placed, image_size, occlusion_level, rng);
    if (occlusion_level == 0.0) {
      bool disjoint = true;
      for (const Placed& e : placed)
        if (box_iou_px(p.bbox, e.bbox) > 0.0) disjoint = false;
      if (!disjoint) continue;  // bounded resampling failed; emit fewer objects
    }
    placed.push_back(p);
  }

  // replace shapes that ended up > 90% covered by later (on-top) shapes
  auto owners = [&](std::vector<int>& owner) {
    owner.assign(static_cast<std::size_t>(image_size) * image_size, -1);
    for (std::size_t k = 0; k < placed.size(); ++k) {
      const Placed& p = placed[k];
      for (int dy = -p.r; dy <= p.r; ++dy)
        for (int dx = -p.r; dx <= p.r; ++dx)
          if (inside(p.kind, dx, dy, p.r))
            owner[static_cast<std::size_t>(p.cy + dy) * image_size + p.cx + dx] =
                static_cast<int>(k);
    }
  };
  std::vector<int> owner;
  for (int attempt = 0; attempt < 100; ++attempt) {
    owners(owner);
    std::vector<int> visible(placed.size(), 0), total(placed.size(), 0);
    for (std::size_t k = 0; k < placed.size(); ++k) {
      const Placed& p = placed[k];
      for (int dy = -p.r; dy <= p.r; ++dy)
        for (int dx = -p.r; dx <= p.r; ++dx)
          if (inside(p.kind, dx, dy, p.r)) {
            ++total[k];
            if (owner[static_cast<std::size_t>(p.cy + dy) * image_size + p.cx + dx] ==
                static_cast<int>(k))
              ++visible[k];
          }
    }
    int worst = -1;
    for (std::size_t k = 0; k < placed.size(); ++k)
      if (visible[k] * 10 < total[k]) worst = static_cast<int>(k);
    if (worst < 0) break;
    if (attempt == 99) {
      placed.erase(placed.begin() + worst);
      break;
    }
    std::vector<Placed> others;
    for (std::size_t k = 0; k < placed.size(); ++k)
      if (k != static_cast<std::size_t>(worst)) others.push_back(placed[k]);
    place(placed[worst], others, image_size, occlusion_level, rng);
  }

  Scene scene;
  scene.raster.width = image_size;
  scene.raster.height = image_size;
  scene.raster.px.resize(static_cast<std::size_t>(image_size) * image_size * 3);
  // textured background
  for (std::size_t i = 0; i < static_cast<std::size_t>(image_size) * image_size; ++i) {
    const int n = rng.uniform_int(21) - 10;
    scene.raster.px[i * 3 + 0] = static_cast<uint8_t>(std::clamp(62 + n, 0, 255));
    scene.raster.px[i * 3 + 1] = static_cast<uint8_t>(std::clamp(72 + n, 0, 255));
    scene.raster.px[i * 3 + 2] = static_cast<uint8_t>(std::clamp(58 + n, 0, 255));
  }
  for (const Placed& p : placed)
    for (int dy = -p.r; dy <= p.r; ++dy)
      for (int dx = -p.r; dx <= p.r; ++dx)
        if (inside(p.kind, dx, dy, p.r)) {
          const std::size_t i =
              (static_cast<std::size_t>(p.cy + dy) * image_size + p.cx + dx) * 3;
          scene.raster.px[i] = p.color[0];
          scene.raster.px[i + 1] = p.color[1];
          scene.raster.px[i + 2] = p.color[2];
        }
  for (const Placed& p : placed)
    scene.objects.push_back({p.category, p.bbox});
  return scene;
}

// four base shapes give the box head appearance diversity; colors stay
// class-distinct so classification has a learnable signal at this scale
std::vector<CategorySpec> base_categories() {
  return {
      {"disc", ShapeKind::Disc, {150, 30, 30}, {230, 80, 80}, 0.15, 0.4},
      {"square", ShapeKind::Square, {30, 30, 150}, {80, 80, 230}, 0.15, 0.4},
      {"ring", ShapeKind::Ring, {30, 150, 30}, {80, 230, 80}, 0.15, 0.4},
      {"bar", ShapeKind::Bar, {30, 150, 150}, {80, 230, 230}, 0.15, 0.4},
  };
}

std::vector<CategorySpec> novel_categories() {
  return {
      {"triangle", ShapeKind::Triangle, {180, 160, 20}, {240, 220, 70}, 0.15, 0.4},
      {"cross", ShapeKind::Cross, {150, 30, 150}, {230, 80, 230}, 0.15, 0.4},
  };
}

namespace {

void write_split(const std::string& root, const std::string& split,
                 const std::vector<CategorySpec>& categories, int n_scenes,
                 int image_size, int max_objects, double occlusion,
                 uint64_t seed, uint64_t split_index) {
  const fs::path dir = fs::path(root) / split;
  const fs::path img_dir = dir / "images";
  std::error_code ec;
  fs::create_directories(img_dir, ec);
  if (ec) throw IoError("cannot create " + img_dir.string() + ": " + ec.message());

  Manifest m;
  for (std::size_t c = 0; c < categories.size(); ++c)
    m.categories.push_back({static_cast<int>(c + 1), categories[c].name});
  int ann_id = 1;
  for (int s = 0; s < n_scenes; ++s) {
    Rng rng(Rng::derive(seed, split_index, static_cast<uint64_t>(s)));
    Scene scene = generate_scene(categories, image_size, max_objects, occlusion, rng);
    std::ostringstream name;
    name << "images/scene_" << std::setw(5) << std::setfill('0') << s + 1 << ".ppm";
    write_ppm((dir / name.str()).string(), scene.raster);
    m.images.push_back({s + 1, name.str(), image_size, image_size});
    for (const SceneObject& o : scene.objects)
      m.annotations.push_back({ann_id++, s + 1, o.category + 1, o.bbox});
  }
  write_manifest((dir / "manifest.json").string(), m);
}

}  // namespace

void build_benchmark(const std::string& root, uint64_t seed,
                     const BenchmarkSpec& spec) {
  write_split(root, "base_train", base_categories(), spec.base_train,
              spec.image_size, spec.max_objects, spec.occlusion, seed, 1);
  write_split(root, "base_val", base_categories(), spec.base_val,
              spec.image_size, spec.max_objects, spec.occlusion, seed, 2);
  write_split(root, "novel_train", novel_categories(), spec.novel_train,
              spec.image_size, spec.max_objects, spec.occlusion, seed, 3);
  write_split(root, "novel_test", novel_categories(), spec.novel_test,
              spec.image_size, spec.max_objects, spec.occlusion, seed, 4);
}

namespace {

void expect_keys(const json& j, std::initializer_list<const char*> keys,
                 const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys)
      if (it.key() == k) known = true;
    if (!known)
      throw ParseError("unknown field '" + it.key() + "' in " + where);
  }
  for (const char* k : keys)
    if (!j.contains(k))
      throw ParseError("missing field '" + std::string(k) + "' in " + where);
}

}  // namespace

void validate(const Manifest& m) {
  std::set<int> image_ids, ann_ids, cat_ids;
  for (const auto& c : m.categories)
    if (!cat_ids.insert(c.id).second)
      throw ParseError("duplicate category id " + std::to_string(c.id));
  std::map<int, const ImageRec*> by_id;
  for (const auto& im : m.images) {
    if (!image_ids.insert(im.id).second)
      throw ParseError("duplicate image id " + std::to_string(im.id));
    by_id[im.id] = &im;
  }
  for (const auto& a : m.annotations) {
    if (!ann_ids.insert(a.id).second)
      throw ParseError("duplicate annotation id " + std::to_string(a.id));
    auto it = by_id.find(a.image_id);
    if (it == by_id.end())
      throw ParseError("annotation " + std::to_string(a.id) +
                       " references missing image id " + std::to_string(a.image_id));
    if (!cat_ids.count(a.category_id))
      throw ParseError("annotation " + std::to_string(a.id) +
                       " references missing category id " +
                       std::to_string(a.category_id));
    const ImageRec& im = *it->second;
    if (a.bbox[0] < 0 || a.bbox[1] < 0 || a.bbox[2] <= 0 || a.bbox[3] <= 0 ||
        a.bbox[0] + a.bbox[2] > im.width || a.bbox[1] + a.bbox[3] > im.height)
      throw ParseError("annotation " + std::to_string(a.id) +
                       " bbox extends past image bounds");
  }
}

Manifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed JSON in " + path + ": " + e.what());
  }
  expect_keys(j, {"schema_version", "images", "annotations", "categories"}, path);
  Manifest m;
  m.schema_version = j["schema_version"].get<int>();
  for (const auto& ji : j["images"]) {
    expect_keys(ji, {"id", "file", "width", "height"}, "images");
    m.images.push_back({ji["id"].get<int>(), ji["file"].get<std::string>(),
                        ji["width"].get<int>(), ji["height"].get<int>()});
  }
  for (const auto& ja : j["annotations"]) {
    expect_keys(ja, {"id", "image_id", "category_id", "bbox"}, "annotations");
    AnnotationRec a;
    a.id = ja["id"].get<int>();
    a.image_id = ja["image_id"].get<int>();
    a.category_id = ja["category_id"].get<int>();
    auto bb = ja["bbox"];
    if (!bb.is_array() || bb.size() != 4)
      throw ParseError("bbox of annotation " + std::to_string(a.id) +
                       " is not a 4-element array");
    for (int i = 0; i < 4; ++i) a.bbox[i] = bb[i].get<int>();
    m.annotations.push_back(a);
  }
  for (const auto& jc : j["categories"]) {
    expect_keys(jc, {"id", "name"}, "categories");
    m.categories.push_back({jc["id"].get<int>(), jc["name"].get<std::string>()});
  }
  validate(m);
  return m;
}

void write_manifest(const std::string& path, const Manifest& m) {
  validate(m);
  json j;
  j["schema_version"] = m.schema_version;
  j["images"] = json::array();
  for (const auto& im : m.images)
    j["images"].push_back({{"id", im.id},
                           {"file", im.file},
                           {"width", im.width},
                           {"height", im.height}});
  j["annotations"] = json::array();
  for (const auto& a : m.annotations)
    j["annotations"].push_back({{"id", a.id},
                                {"image_id", a.image_id},
                                {"category_id", a.category_id},
                                {"bbox", a.bbox}});
  j["categories"] = json::array();
  for (const auto& c : m.categories)
    j["categories"].push_back({{"id", c.id}, {"name", c.name}});
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for write: " + path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + path);
}

Raster read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6") throw ParseError("not a P6 PPM: " + path);
  if (maxval != 255) throw ParseError("unsupported maxval in " + path);
  is.get();  // single whitespace after header
  Raster r;
  r.width = w;
  r.height = h;
  r.px.resize(static_cast<std::size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(r.px.data()),
          static_cast<std::streamsize>(r.px.size()));
  if (!is) throw ParseError("truncated PPM payload: " + path);
  return r;
}

void write_ppm(const std::string& path, const Raster& r) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os << "P6\n" << r.width << " " << r.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(r.px.data()),
           static_cast<std::streamsize>(r.px.size()));
  if (!os) throw IoError("write failed: " + path);
}

det::Image to_image(const Raster& r) {
  det::Image img;
  img.width = r.width;
  img.height = r.height;
  img.rgb.resize(r.px.size());
  for (std::size_t i = 0; i < r.px.size(); ++i) img.rgb[i] = r.px[i] / 255.0;
  return img;
}

Raster to_raster(const det::Image& img) {
  Raster r;
  r.width = img.width;
  r.height = img.height;
  r.px.resize(img.rgb.size());
  for (std::size_t i = 0; i < img.rgb.size(); ++i)
    r.px[i] = static_cast<uint8_t>(
        std::clamp(std::lround(img.rgb[i] * 255.0), 0L, 255L));
  return r;
}

}  // namespace eadk::data
