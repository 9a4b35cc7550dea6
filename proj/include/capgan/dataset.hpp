#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "capgan/tensor.hpp"
#include "capgan/vocab.hpp"

namespace capgan {

// Synthetic scene world standing in for COCO + CNN features. Scenes are
// attribute tuples; references are grammar realizations with synonym choice,
// so per-scene caption diversity exists by construction.
struct ToyWorldConfig {
  std::size_t refs_per_image = 5;  // k
  std::size_t feature_dim = 32;    // x_c dimension
  double feature_noise = 0.1;
  std::size_t n_train = 2000;
  std::size_t n_val = 200;
  std::size_t n_test = 200;
  // Probability mass on the first synonym / first template; the rest is
  // split evenly. Skew is what makes peaky sampling collapse measurable.
  // 1.0 degenerates to a single realization per scene.
  double synonym_skew = 0.6;
  // Replaces the built-in templates when non-empty. Slot letters:
  // C color, Z size, O object, A action, L location.
  std::vector<std::string> templates_override;

  void validate() const;
  std::vector<std::string> active_templates() const;
};

struct DatasetItem {
  long long image_id = 0;
  Tensor x_c;                       // [feature_dim]
  std::vector<double> x_o;          // over object vocabulary, entries in [0,1]
  std::vector<std::string> references;  // normalized text
  std::vector<Caption> ref_ids;
};

struct DatasetSplit {
  std::string tag;
  std::vector<DatasetItem> items;
};

struct Dataset {
  ToyWorldConfig config;
  std::uint64_t seed = 0;
  Vocabulary vocab;
  std::vector<std::string> object_words;
  DatasetSplit train, val, test;

  const DatasetSplit& split(const std::string& tag) const;
  std::vector<std::vector<std::string>> training_corpus() const;  // tokenized refs
};

Dataset generate_toy_dataset(const ToyWorldConfig& config, std::uint64_t seed);

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// All surface words the grammar can emit (template words + synonyms).
std::vector<std::string> toy_grammar_inventory();
std::vector<std::string> toy_object_words();

// COCO-captions annotation JSON -> captions keyed by image id. Annotations
// referencing an unknown image id are kept and reported via `warnings`.
std::map<long long, std::vector<std::string>> load_coco_captions(
    const std::string& path, std::vector<std::string>* warnings = nullptr);

// Count-ordered vocabulary (ties alphabetical); tokens below min_count map
// to UNK implicitly by omission.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                            std::size_t min_count,
                            const std::vector<std::string>& object_words = {});

std::uint64_t file_hash(const std::string& path);

}  // namespace capgan
