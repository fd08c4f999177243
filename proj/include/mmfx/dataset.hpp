#pragma once

#include <string>
#include <vector>

#include "mmfx/clinical.hpp"
#include "mmfx/tensor.hpp"
#include "mmfx/vendor_json_fwd.hpp"

namespace mmfx {

struct Sample {
  std::string id;
  Tensor image;  // [1 x h x w], values in [0,1]
  ClinicalRecord record;
  std::vector<double> clinical;  // encoded one-hot vector
  int label = 0;                 // 0 benign, 1 malignant
};

// An on-disk dataset loaded through its manifest.json.
struct Dataset {
  ClinicalVocabulary vocab = ClinicalVocabulary::defaults();
  std::vector<Sample> samples;
  std::vector<int> train_idx, val_idx, test_idx;
  nlohmann::json manifest;
  std::string manifest_path;

  const Sample* find(const std::string& id) const;
  std::vector<int> indices_of_split(const std::string& split) const;  // "train"|"val"|"test"|"all"
};

Dataset load_dataset(const std::string& manifest_path);

}  // namespace mmfx
