#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "vendor_json_fwd.hpp"

namespace mmfx {

inline constexpr int kNumClinicalFields = 5;

extern const std::array<std::string, kNumClinicalFields> kClinicalFieldNames;

// Ordered category inventory of the five categorical clinical fields. The
// encoded vector is the concatenation of one one-hot block per field, in
// field order; the default inventory totals 36 dimensions.
class ClinicalVocabulary {
 public:
  static ClinicalVocabulary defaults();
  static ClinicalVocabulary from_json(const nlohmann::json& j);
  static ClinicalVocabulary load(const std::string& path);
  nlohmann::json to_json() const;

  int total_dim() const { return total_dim_; }
  int field_dim(int field) const { return static_cast<int>(categories_[static_cast<size_t>(field)].size()); }
  int block_offset(int field) const { return offsets_[static_cast<size_t>(field)]; }
  const std::vector<std::string>& categories(int field) const { return categories_[static_cast<size_t>(field)]; }

  // Index of a category within its field, or nullopt if unknown.
  std::optional<int> category_index(int field, const std::string& value) const;

 private:
  ClinicalVocabulary() = default;
  void finalize();

  std::array<std::vector<std::string>, kNumClinicalFields> categories_;
  std::array<int, kNumClinicalFields> offsets_{};
  int total_dim_ = 0;
};

enum class Label { kBenign = 0, kMalignant = 1, kUnknown = -1 };

// One row of clinical data. Empty string in a field means MISSING.
struct ClinicalRecord {
  std::string patient_id;
  std::array<std::string, kNumClinicalFields> fields;  // "" = missing
  Label label = Label::kUnknown;

  bool missing(int field) const { return fields[static_cast<size_t>(field)].empty(); }
  // Copy with every clinical field blanked (all one-hot blocks become zero).
  ClinicalRecord withheld() const;
};

// Concatenated one-hot encoding; a missing field contributes an all-zero
// block. Throws InputError on a category not in the vocabulary.
std::vector<double> encode_record(const ClinicalRecord& r, const ClinicalVocabulary& v);

// Encoding restricted to one field's block (other blocks zero). Used to build
// per-field clinical tokens and coalition maskers.
std::vector<double> encode_field_block(const ClinicalRecord& r, const ClinicalVocabulary& v, int field);

// CSV schema: patient_id,breast_density,mass_shape,mass_margins,calc_type,
// calc_distribution,label. Header row required, empty cell = missing,
// label in {benign, malignant} or empty.
std::vector<ClinicalRecord> load_clinical_csv(const std::string& path, const ClinicalVocabulary& v);
void write_clinical_csv(const std::string& path, const std::vector<ClinicalRecord>& records);

}  // namespace mmfx
