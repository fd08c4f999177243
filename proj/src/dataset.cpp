#include "mmfx/dataset.hpp"

#include <filesystem>
#include <map>

#include "mmfx/image_io.hpp"
#include "mmfx/json_util.hpp"

namespace fs = std::filesystem;

namespace mmfx {

const Sample* Dataset::find(const std::string& id) const {
  for (const auto& s : samples)
    if (s.id == id) return &s;
  return nullptr;
}

std::vector<int> Dataset::indices_of_split(const std::string& split) const {
  if (split == "train") return train_idx;
  if (split == "val") return val_idx;
  if (split == "test") return test_idx;
  if (split == "all") {
    std::vector<int> all(samples.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return all;
  }
  throw InputError("unknown split '" + split + "' (expected train, val, test or all)");
}

Dataset load_dataset(const std::string& manifest_path) {
  Dataset ds;
  ds.manifest_path = manifest_path;
  ds.manifest = load_json_file(manifest_path);
  const nlohmann::json& m = ds.manifest;
  if (!m.is_object() || m.value("kind", "") != "mmfx_dataset")
    throw InputError(manifest_path + ": not an mmfx dataset manifest");

  ds.vocab = ClinicalVocabulary::from_json(m.at("vocabulary"));
  const fs::path root = fs::path(manifest_path).parent_path();

  auto records = load_clinical_csv((root / m.at("clinical_csv").get<std::string>()).string(), ds.vocab);
  std::map<std::string, const ClinicalRecord*> by_id;
  for (const auto& r : records) by_id[r.patient_id] = &r;

  std::map<std::string, int> index_of;
  for (const auto& entry : m.at("samples")) {
    Sample s;
    s.id = entry.at("id").get<std::string>();
    s.image = read_pgm((root / entry.at("image").get<std::string>()).string());
    const std::string lab = entry.at("label").get<std::string>();
    if (lab == "benign")
      s.label = 0;
    else if (lab == "malignant")
      s.label = 1;
    else
      throw InputError(manifest_path + ": sample " + s.id + " has bad label '" + lab + "'");
    auto it = by_id.find(s.id);
    if (it == by_id.end()) throw InputError(manifest_path + ": sample " + s.id + " missing from clinical CSV");
    s.record = *it->second;
    s.clinical = encode_record(s.record, ds.vocab);
    index_of[s.id] = static_cast<int>(ds.samples.size());
    ds.samples.push_back(std::move(s));
  }

  auto resolve = [&](const char* key) {
    std::vector<int> out;
    if (!m.contains("splits") || !m.at("splits").contains(key)) return out;
    for (const auto& id : m.at("splits").at(key)) {
      auto it = index_of.find(id.get<std::string>());
      if (it == index_of.end()) throw InputError(manifest_path + ": split references unknown sample " + id.dump());
      out.push_back(it->second);
    }
    return out;
  };
  ds.train_idx = resolve("train");
  ds.val_idx = resolve("val");
  ds.test_idx = resolve("test");
  return ds;
}

}  // namespace mmfx
