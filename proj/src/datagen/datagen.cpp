#include "datagen/datagen.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "json.hpp"

#include "core/errors.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace simit::datagen {
namespace {

constexpr int kMaxClasses = 8;
constexpr int kMinClasses = 3;
constexpr int kMinSize = 64;

const double kSimPalette[kMaxClasses][3] = {
    {0.16, 0.18, 0.22}, {0.86, 0.29, 0.25}, {0.27, 0.74, 0.36}, {0.26, 0.45, 0.86},
    {0.90, 0.79, 0.28}, {0.68, 0.33, 0.80}, {0.32, 0.78, 0.78}, {0.92, 0.58, 0.26},
};
const double kRealPalette[kMaxClasses][3] = {
    {0.37, 0.32, 0.30}, {0.75, 0.38, 0.32}, {0.43, 0.63, 0.38}, {0.42, 0.47, 0.65},
    {0.77, 0.66, 0.33}, {0.65, 0.40, 0.62}, {0.46, 0.65, 0.61}, {0.79, 0.54, 0.33},
};

struct Shape {
  int kind = 0;  // 0 ellipse, 1 rectangle, 2 polyline
  int cls = 1;
  double cx = 0, cy = 0, rx = 0, ry = 0, theta = 0;
  std::vector<double> pts;  // polyline x,y pairs
  double thickness = 1;
};

// Real-style scenes come from a shifted layout: more shapes, rectangle-heavy,
// and class 1 over-represented, so the two domains have distinct statistics.
Shape sample_shape(Rng& rng, int size, int num_classes, bool real_style) {
  Shape s;
  double u = rng.uniform();
  if (real_style) {
    s.kind = u < 0.55 ? 1 : (u < 0.80 ? 0 : 2);
  } else {
    s.kind = u < 1.0 / 3 ? 0 : (u < 2.0 / 3 ? 1 : 2);
  }
  if (real_style && rng.coin(0.4)) {
    s.cls = 1;
  } else {
    s.cls = rng.uniform_int(1, num_classes - 1);
  }
  double sz = static_cast<double>(size);
  if (s.kind == 2) {
    int nseg = rng.uniform_int(2, 4);
    double x = (0.1 + 0.8 * rng.uniform()) * sz;
    double y = (0.1 + 0.8 * rng.uniform()) * sz;
    s.pts = {x, y};
    for (int i = 0; i < nseg; ++i) {
      x = std::clamp(x + (2 * rng.uniform() - 1) * 0.35 * sz, 2.0, sz - 3.0);
      y = std::clamp(y + (2 * rng.uniform() - 1) * 0.35 * sz, 2.0, sz - 3.0);
      s.pts.push_back(x);
      s.pts.push_back(y);
    }
    s.thickness = (1.0 + 2.0 * rng.uniform()) * sz / 64.0;
  } else {
    s.cx = (0.1 + 0.8 * rng.uniform()) * sz;
    s.cy = (0.1 + 0.8 * rng.uniform()) * sz;
    s.rx = (0.06 + 0.22 * rng.uniform()) * sz;
    s.ry = (0.06 + 0.22 * rng.uniform()) * sz;
    s.theta = rng.uniform() * std::numbers::pi;
  }
  return s;
}

double dist_to_segment(double px, double py, double ax, double ay, double bx, double by) {
  double dx = bx - ax, dy = by - ay;
  double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
}

void paint(Tensor& classes, const Shape& s) {
  int h = classes.dim(0), w = classes.dim(1);
  double* d = classes.data();
  if (s.kind == 2) {
    for (size_t i = 0; i + 3 < s.pts.size(); i += 2) {
      double ax = s.pts[i], ay = s.pts[i + 1], bx = s.pts[i + 2], by = s.pts[i + 3];
      int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - s.thickness - 1)));
      int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(ax, bx) + s.thickness + 1)));
      int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - s.thickness - 1)));
      int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(ay, by) + s.thickness + 1)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
          if (dist_to_segment(x + 0.5, y + 0.5, ax, ay, bx, by) <= s.thickness)
            d[y * w + x] = s.cls;
    }
    return;
  }
  double reach = std::hypot(s.rx, s.ry);
  int x0 = std::max(0, static_cast<int>(std::floor(s.cx - reach)));
  int x1 = std::min(w - 1, static_cast<int>(std::ceil(s.cx + reach)));
  int y0 = std::max(0, static_cast<int>(std::floor(s.cy - reach)));
  int y1 = std::min(h - 1, static_cast<int>(std::ceil(s.cy + reach)));
  double ct = std::cos(s.theta), st = std::sin(s.theta);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double px = x + 0.5 - s.cx, py = y + 0.5 - s.cy;
      double u = px * ct + py * st;
      double v = -px * st + py * ct;
      bool in = s.kind == 0 ? (u * u) / (s.rx * s.rx) + (v * v) / (s.ry * s.ry) <= 1.0
                            : std::abs(u) <= s.rx && std::abs(v) <= s.ry;
      if (in) d[y * w + x] = s.cls;
    }
  }
}

LabelMap make_layout(Rng& rng, const ToyConfig& cfg, bool real_style) {
  LabelMap lm;
  lm.num_classes = cfg.num_classes;
  lm.classes = Tensor::zeros({cfg.size, cfg.size});
  int lo = cfg.min_shapes, hi = cfg.max_shapes;
  if (real_style) {
    lo += 1;
    hi += 2;
  }
  int n = rng.uniform_int(lo, hi);
  for (int i = 0; i < n; ++i) paint(lm.classes, sample_shape(rng, cfg.size, cfg.num_classes, real_style));
  return lm;
}

Tensor render_sim(const LabelMap& lm, Rng& rng) {
  int h = lm.classes.dim(0), w = lm.classes.dim(1);
  Tensor img = Tensor::zeros({3, h, w});
  double fx = 0.03 + 0.05 * rng.uniform();
  double fy = 0.03 + 0.05 * rng.uniform();
  double phx = 2 * std::numbers::pi * rng.uniform();
  double phy = 2 * std::numbers::pi * rng.uniform();
  const double* cls = lm.classes.data();
  double* d = img.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int c = static_cast<int>(cls[y * w + x]);
      double tex = 0.02 * std::sin(2 * std::numbers::pi * fx * x + phx) *
                       std::sin(2 * std::numbers::pi * fy * y + phy) +
                   0.008 * (2 * rng.uniform() - 1);
      for (int ch = 0; ch < 3; ++ch)
        d[(ch * h + y) * w + x] = std::clamp(kSimPalette[c][ch] + tex, 0.0, 1.0);
    }
  }
  return img;
}

Tensor render_real(const LabelMap& lm, Rng& rng) {
  int h = lm.classes.dim(0), w = lm.classes.dim(1);
  int cell = std::max(4, lm.classes.dim(0) / 8);
  int gh = h / cell + 2, gw = w / cell + 2;
  std::vector<double> grid(static_cast<size_t>(gh) * gw);
  for (auto& g : grid) g = 0.06 * rng.normal();
  Tensor img = Tensor::zeros({3, h, w});
  const double* cls = lm.classes.data();
  double* d = img.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double gy = static_cast<double>(y) / cell, gx = static_cast<double>(x) / cell;
      int iy = static_cast<int>(gy), ix = static_cast<int>(gx);
      double ty = gy - iy, tx = gx - ix;
      double n00 = grid[iy * gw + ix], n01 = grid[iy * gw + ix + 1];
      double n10 = grid[(iy + 1) * gw + ix], n11 = grid[(iy + 1) * gw + ix + 1];
      double noise = (1 - ty) * ((1 - tx) * n00 + tx * n01) + ty * ((1 - tx) * n10 + tx * n11);
      double dy = (y + 0.5 - h / 2.0) / (h / 2.0), dx = (x + 0.5 - w / 2.0) / (w / 2.0);
      double vig = 1.0 - 0.15 * (dx * dx + dy * dy);
      int c = static_cast<int>(cls[y * w + x]);
      for (int ch = 0; ch < 3; ++ch)
        d[(ch * h + y) * w + x] = std::clamp(kRealPalette[c][ch] * vig + noise, 0.0, 1.0);
    }
  }
  return img;
}

std::string scene_id(const char* prefix, int i) {
  std::ostringstream os;
  os << prefix << std::setw(5) << std::setfill('0') << i;
  return os.str();
}

void ensure_parent(const std::string& path) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

}  // namespace

ToyScene generate_toy_scene(std::uint64_t seed, const ToyConfig& cfg) {
  if (cfg.size < kMinSize) throw ConfigError("scene size must be >= 64, got " + std::to_string(cfg.size));
  if (cfg.num_classes < kMinClasses || cfg.num_classes > kMaxClasses)
    throw ConfigError("num_classes must be in [3,8], got " + std::to_string(cfg.num_classes));
  if (cfg.min_shapes < 1 || cfg.min_shapes > cfg.max_shapes)
    throw ConfigError("invalid shape count range");
  ToyScene scene;
  Rng layout = Rng::substream(seed, 1);
  scene.paired.label = make_layout(layout, cfg, false);
  Rng tex = Rng::substream(seed, 2);
  scene.paired.sim_image = render_sim(scene.paired.label, tex);
  Rng rlayout = Rng::substream(seed, 3);
  scene.real_label = make_layout(rlayout, cfg, true);
  Rng rstyle = Rng::substream(seed, 4);
  scene.real_image = render_real(scene.real_label, rstyle);
  return scene;
}

Tensor one_hot_encode(const LabelMap& label) {
  if (label.classes.ndim() != 2)
    throw DataError("label map must be [H,W], got " + Tensor::shape_str(label.classes.shape()));
  if (label.num_classes < 2) throw DataError("label map needs >= 2 classes");
  int h = label.classes.dim(0), w = label.classes.dim(1), cc = label.num_classes;
  Tensor out = Tensor::zeros({cc, h, w});
  const double* src = label.classes.data();
  double* dst = out.data();
  std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < hw; ++i) {
    double v = src[i];
    int c = static_cast<int>(std::llround(v));
    if (c < 0 || c >= cc || static_cast<double>(c) != v)
      throw DataError("label value " + std::to_string(v) + " outside [0," + std::to_string(cc) + ")");
    dst[c * hw + i] = 1.0;
  }
  return out;
}

std::pair<int, int> crop_window(int h, int w, int size, Rng& rng) {
  if (size < 1 || size > h || size > w)
    throw DataError("crop size " + std::to_string(size) + " invalid for " + std::to_string(h) + "x" +
                    std::to_string(w));
  int y0 = rng.uniform_int(0, h - size);
  int x0 = rng.uniform_int(0, w - size);
  return {y0, x0};
}

Tensor crop(const Tensor& chw, int y0, int x0, int size) {
  if (chw.ndim() != 3) throw DataError("crop expects [C,H,W], got " + Tensor::shape_str(chw.shape()));
  int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  if (y0 < 0 || x0 < 0 || y0 + size > h || x0 + size > w) throw DataError("crop window out of range");
  Tensor out({c, size, size});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < size; ++y)
      std::copy_n(chw.data() + (static_cast<std::int64_t>(ch) * h + y0 + y) * w + x0, size,
                  out.data() + (static_cast<std::int64_t>(ch) * size + y) * size);
  return out;
}

std::pair<Tensor, Tensor> random_crop_synced(const Tensor& label_onehot, const Tensor& image,
                                             int size, Rng& rng) {
  if (label_onehot.ndim() != 3 || image.ndim() != 3 || label_onehot.dim(1) != image.dim(1) ||
      label_onehot.dim(2) != image.dim(2))
    throw DataError("synced crop needs [C,H,W] label and image with matching spatial dims");
  auto [y0, x0] = crop_window(label_onehot.dim(1), label_onehot.dim(2), size, rng);
  return {crop(label_onehot, y0, x0, size), crop(image, y0, x0, size)};
}

void write_image_png(const std::string& path, const Tensor& img) {
  if (img.ndim() != 3 || img.dim(0) != 3)
    throw DataError("image must be [3,H,W], got " + Tensor::shape_str(img.shape()));
  int h = img.dim(1), w = img.dim(2);
  cv::Mat mat(h, w, CV_8UC3);
  const double* d = img.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto& px = mat.at<cv::Vec3b>(y, x);
      for (int ch = 0; ch < 3; ++ch) {
        double v = std::clamp(d[(ch * h + y) * static_cast<std::int64_t>(w) + x], 0.0, 1.0);
        px[2 - ch] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  ensure_parent(path);
  if (!cv::imwrite(path, mat)) throw DataError("failed to write image: " + path);
}

Tensor read_image_png(const std::string& path) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_COLOR);
  if (mat.empty()) throw DataError("cannot read image: " + path);
  Tensor img({3, mat.rows, mat.cols});
  double* d = img.data();
  for (int y = 0; y < mat.rows; ++y) {
    for (int x = 0; x < mat.cols; ++x) {
      const auto& px = mat.at<cv::Vec3b>(y, x);
      for (int ch = 0; ch < 3; ++ch)
        d[(ch * mat.rows + y) * static_cast<std::int64_t>(mat.cols) + x] = px[2 - ch] / 255.0;
    }
  }
  return img;
}

void write_label_png(const std::string& path, const LabelMap& label) {
  if (label.classes.ndim() != 2)
    throw DataError("label map must be [H,W], got " + Tensor::shape_str(label.classes.shape()));
  int h = label.classes.dim(0), w = label.classes.dim(1);
  cv::Mat mat(h, w, CV_8UC1);
  const double* d = label.classes.data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int c = static_cast<int>(std::llround(d[y * static_cast<std::int64_t>(w) + x]));
      if (c < 0 || c > 255) throw DataError("class id " + std::to_string(c) + " not storable as 8-bit");
      mat.at<unsigned char>(y, x) = static_cast<unsigned char>(c);
    }
  ensure_parent(path);
  if (!cv::imwrite(path, mat)) throw DataError("failed to write label: " + path);
}

LabelMap read_label_png(const std::string& path, int num_classes) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (mat.empty()) throw DataError("cannot read label: " + path);
  LabelMap lm;
  lm.num_classes = num_classes;
  lm.classes = Tensor({mat.rows, mat.cols});
  double* d = lm.classes.data();
  for (int y = 0; y < mat.rows; ++y)
    for (int x = 0; x < mat.cols; ++x) {
      int c = mat.at<unsigned char>(y, x);
      if (c >= num_classes) throw DataError(path + ": class id " + std::to_string(c) + " out of range");
      d[y * static_cast<std::int64_t>(mat.cols) + x] = c;
    }
  return lm;
}

std::string DatasetManifest::label_path(const std::string& split, const std::string& id) const {
  return root + "/paired/labels/" + split + "/" + id + ".png";
}
std::string DatasetManifest::image_path(const std::string& split, const std::string& id) const {
  return root + "/paired/images/" + split + "/" + id + ".png";
}
std::string DatasetManifest::real_path(const std::string& split, const std::string& id) const {
  return root + "/real/" + split + "/" + id + ".png";
}
std::string DatasetManifest::real_label_path(const std::string& split, const std::string& id) const {
  return root + "/real_labels/" + split + "/" + id + ".png";
}

void save_manifest(const DatasetManifest& m) {
  json j;
  j["format"] = 1;
  j["num_classes"] = m.num_classes;
  j["image_size"] = m.image_size;
  j["color_mode"] = m.color_mode;
  j["eval_only"] = {{"real_labels", m.has_real_labels}};
  for (const auto& [name, lists] : m.splits) {
    j["splits"][name]["paired"] = lists.paired;
    j["splits"][name]["real"] = lists.real;
  }
  fs::create_directories(m.root);
  std::ofstream out(m.root + "/manifest.json");
  if (!out) throw DataError("cannot write manifest under " + m.root);
  out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& root) {
  std::string path = root + "/manifest.json";
  std::ifstream in(path);
  if (!in) throw DataError("manifest not found: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("manifest parse error in " + path + ": " + e.what());
  }
  DatasetManifest m;
  m.root = root;
  try {
    m.num_classes = j.at("num_classes").get<int>();
    m.image_size = j.at("image_size").get<int>();
    m.color_mode = j.value("color_mode", "rgb");
    m.has_real_labels = j.value("eval_only", json::object()).value("real_labels", false);
    for (const auto& [name, lists] : j.at("splits").items()) {
      SplitLists sl;
      sl.paired = lists.value("paired", std::vector<std::string>{});
      sl.real = lists.value("real", std::vector<std::string>{});
      m.splits[name] = sl;
    }
  } catch (const json::exception& e) {
    throw DataError("manifest field error in " + path + ": " + e.what());
  }
  if (m.num_classes < 2) throw DataError(path + ": num_classes must be >= 2");
  if (m.image_size < 1) throw DataError(path + ": image_size must be positive");
  std::set<std::string> seen_paired, seen_real;
  for (const auto& [name, lists] : m.splits) {
    for (const auto& id : lists.paired) {
      if (!seen_paired.insert(id).second) throw DataError("duplicate paired id across splits: " + id);
      for (const auto& p : {m.label_path(name, id), m.image_path(name, id)})
        if (!fs::exists(p)) throw DataError("missing file: " + p);
    }
    for (const auto& id : lists.real) {
      if (!seen_real.insert(id).second) throw DataError("duplicate real id across splits: " + id);
      if (!fs::exists(m.real_path(name, id))) throw DataError("missing file: " + m.real_path(name, id));
      if (m.has_real_labels && !fs::exists(m.real_label_path(name, id)))
        throw DataError("missing file: " + m.real_label_path(name, id));
    }
  }
  return m;
}

DatasetManifest make_toy_dataset(const std::string& root, int num_scenes, const ToyConfig& cfg,
                                 std::uint64_t seed) {
  if (num_scenes < 3) throw ConfigError("num_scenes must be >= 3, got " + std::to_string(num_scenes));
  generate_toy_scene(seed, cfg);  // fail fast on bad cfg before touching disk
  DatasetManifest m;
  m.root = root;
  m.num_classes = cfg.num_classes;
  m.image_size = cfg.size;
  m.has_real_labels = true;
  int n_val = std::max(1, num_scenes / 10);
  int n_test = std::max(1, num_scenes / 10);
  int n_train = num_scenes - n_val - n_test;
  for (int i = 0; i < num_scenes; ++i) {
    ToyScene scene = generate_toy_scene(mix_seed(seed, static_cast<std::uint64_t>(i)), cfg);
    std::string split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    std::string pid = scene_id("s", i);
    std::string rid = scene_id("r", i);
    write_label_png(m.label_path(split, pid), scene.paired.label);
    write_image_png(m.image_path(split, pid), scene.paired.sim_image);
    write_image_png(m.real_path(split, rid), scene.real_image);
    write_label_png(m.real_label_path(split, rid), scene.real_label);
    m.splits[split].paired.push_back(pid);
    m.splits[split].real.push_back(rid);
  }
  save_manifest(m);
  return load_manifest(root);
}

Loader::Loader(const DatasetManifest& m, const std::string& split, int batch_size, int crop_size,
               std::uint64_t seed, bool need_sim)
    : manifest_(m), split_(split), batch_size_(batch_size), crop_(crop_size), seed_(seed),
      need_sim_(need_sim) {
  auto it = m.splits.find(split);
  if (it == m.splits.end()) throw DataError("unknown split: " + split);
  paired_ = it->second.paired;
  real_ = it->second.real;
  if (paired_.empty()) throw DataError("paired split empty: " + split);
  if (real_.empty()) throw DataError("real split empty: " + split);
  if (batch_size_ < 1) throw ConfigError("batch size must be >= 1");
  if (crop_ < 1 || crop_ > m.image_size)
    throw ConfigError("crop size " + std::to_string(crop_) + " invalid for image size " +
                      std::to_string(m.image_size));
  auto pairs = std::min(paired_.size(), real_.size());
  batches_per_epoch_ = static_cast<int>(pairs) / batch_size_;
  if (batches_per_epoch_ < 1)
    throw ConfigError("batch size " + std::to_string(batch_size_) + " exceeds split size " +
                      std::to_string(pairs));
}

void Loader::reshuffle(int epoch) {
  auto shuffle_with = [](std::vector<int>& perm, size_t n, Rng rng) {
    perm.resize(n);
    for (size_t i = 0; i < n; ++i) perm[i] = static_cast<int>(i);
    for (size_t i = n; i > 1; --i) {
      int j = rng.uniform_int(0, static_cast<int>(i) - 1);
      std::swap(perm[i - 1], perm[static_cast<size_t>(j)]);
    }
  };
  std::uint64_t es = mix_seed(seed_, static_cast<std::uint64_t>(epoch));
  shuffle_with(perm_paired_, paired_.size(), Rng::substream(es, 11));
  shuffle_with(perm_real_, real_.size(), Rng::substream(es, 12));
  cached_epoch_ = epoch;
}

Batch Loader::batch(int epoch, int idx) {
  if (epoch < 0 || idx < 0 || idx >= batches_per_epoch_)
    throw DataError("batch index out of range: epoch " + std::to_string(epoch) + " idx " +
                    std::to_string(idx));
  if (epoch != cached_epoch_) reshuffle(epoch);
  Rng crng = Rng::substream(mix_seed(mix_seed(seed_, static_cast<std::uint64_t>(epoch)),
                                     static_cast<std::uint64_t>(idx)),
                            13);
  int n = batch_size_, cc = manifest_.num_classes, s = crop_;
  Batch b;
  b.labels_onehot = Tensor::zeros({n, cc, s, s});
  if (need_sim_) b.sim_images = Tensor::zeros({n, 3, s, s});
  b.real_images = Tensor::zeros({n, 3, s, s});
  for (int k = 0; k < n; ++k) {
    const std::string& pid = paired_[static_cast<size_t>(perm_paired_[idx * n + k])];
    b.paired_ids.push_back(pid);
    LabelMap lm = read_label_png(manifest_.label_path(split_, pid), cc);
    Tensor oh = one_hot_encode(lm);
    auto [y0, x0] = crop_window(oh.dim(1), oh.dim(2), s, crng);
    Tensor ohc = crop(oh, y0, x0, s);
    std::copy_n(ohc.data(), ohc.numel(), b.labels_onehot.data() + static_cast<std::int64_t>(k) * cc * s * s);
    if (need_sim_) {
      Tensor img = read_image_png(manifest_.image_path(split_, pid));
      ++sim_reads_;
      if (img.dim(1) != oh.dim(1) || img.dim(2) != oh.dim(2))
        throw DataError("label/image size mismatch for " + manifest_.image_path(split_, pid));
      Tensor imc = crop(img, y0, x0, s);
      std::copy_n(imc.data(), imc.numel(), b.sim_images.data() + static_cast<std::int64_t>(k) * 3 * s * s);
    }
    const std::string& rid = real_[static_cast<size_t>(perm_real_[idx * n + k])];
    b.real_ids.push_back(rid);
    Tensor rimg = read_image_png(manifest_.real_path(split_, rid));
    auto [ry0, rx0] = crop_window(rimg.dim(1), rimg.dim(2), s, crng);
    Tensor rimc = crop(rimg, ry0, rx0, s);
    std::copy_n(rimc.data(), rimc.numel(), b.real_images.data() + static_cast<std::int64_t>(k) * 3 * s * s);
  }
  return b;
}

}  // namespace simit::datagen
