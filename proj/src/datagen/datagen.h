#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "core/rng.h"
#include "core/tensor.h"

namespace simit::datagen {

/// Integer class image, values in {0..num_classes-1}, stored as doubles.
struct LabelMap {
  Tensor classes;  // [H,W]
  int num_classes = 0;
};

struct ToyConfig {
  int size = 256;
  int num_classes = 4;
  int min_shapes = 3;
  int max_shapes = 8;
};

struct PairedSample {
  LabelMap label;
  Tensor sim_image;  // [3,H,W] in [0,1]
  std::string id;
};

/// The real-style image comes from a fresh scene with a shifted layout
/// distribution; its label map exists for evaluation only.
struct ToyScene {
  PairedSample paired;
  Tensor real_image;  // [3,H,W] in [0,1]
  LabelMap real_label;
};

ToyScene generate_toy_scene(std::uint64_t seed, const ToyConfig& cfg);

Tensor one_hot_encode(const LabelMap& label);  // [C,H,W]

/// Identical crop window for a one-hot label and its paired image.
std::pair<Tensor, Tensor> random_crop_synced(const Tensor& label_onehot, const Tensor& image,
                                             int size, Rng& rng);

std::pair<int, int> crop_window(int h, int w, int size, Rng& rng);
Tensor crop(const Tensor& chw, int y0, int x0, int size);

void write_image_png(const std::string& path, const Tensor& img);
Tensor read_image_png(const std::string& path);
void write_label_png(const std::string& path, const LabelMap& label);
LabelMap read_label_png(const std::string& path, int num_classes);

struct SplitLists {
  std::vector<std::string> paired;
  std::vector<std::string> real;
};

struct DatasetManifest {
  std::string root;
  int num_classes = 0;
  int image_size = 0;
  std::string color_mode = "rgb";
  bool has_real_labels = false;
  std::map<std::string, SplitLists> splits;

  std::string label_path(const std::string& split, const std::string& id) const;
  std::string image_path(const std::string& split, const std::string& id) const;
  std::string real_path(const std::string& split, const std::string& id) const;
  std::string real_label_path(const std::string& split, const std::string& id) const;
};

void save_manifest(const DatasetManifest& m);
/// Reads root/manifest.json and checks the referenced files exist and no id
/// repeats across splits.
DatasetManifest load_manifest(const std::string& root);

/// Generates scenes, writes PNGs + manifest under root with an 80/10/10
/// train/val/test split, and returns the loaded manifest.
DatasetManifest make_toy_dataset(const std::string& root, int num_scenes, const ToyConfig& cfg,
                                 std::uint64_t seed);

struct Batch {
  Tensor labels_onehot;  // [n,C,s,s]
  Tensor sim_images;     // [n,3,s,s]; undefined when sim loading is off
  Tensor real_images;    // [n,3,s,s]
  std::vector<std::string> paired_ids;
  std::vector<std::string> real_ids;
};

/// Deterministic random-access batch source: batch(epoch, idx) depends only
/// on (manifest, split, sizes, seed), so resumed runs see identical data.
/// Paired and real streams are shuffled independently each epoch; the last
/// partial batch is dropped.
class Loader {
 public:
  Loader(const DatasetManifest& m, const std::string& split, int batch_size, int crop_size,
         std::uint64_t seed, bool need_sim = true);

  int batches_per_epoch() const { return batches_per_epoch_; }
  Batch batch(int epoch, int idx);

  const std::vector<std::string>& paired_ids() const { return paired_; }
  const std::vector<std::string>& real_ids() const { return real_; }
  std::int64_t sim_image_reads() const { return sim_reads_; }

 private:
  void reshuffle(int epoch);

  DatasetManifest manifest_;
  std::string split_;
  int batch_size_;
  int crop_;
  std::uint64_t seed_;
  bool need_sim_;
  int batches_per_epoch_ = 0;
  std::vector<std::string> paired_;
  std::vector<std::string> real_;
  std::vector<int> perm_paired_;
  std::vector<int> perm_real_;
  int cached_epoch_ = -1;
  std::int64_t sim_reads_ = 0;
};

}  // namespace simit::datagen
