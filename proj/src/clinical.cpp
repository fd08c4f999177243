#include "mmfx/clinical.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "mmfx/errors.hpp"

namespace mmfx {

const std::array<std::string, kNumClinicalFields> kClinicalFieldNames = {
    "breast_density", "mass_shape", "mass_margins", "calc_type", "calc_distribution"};

namespace {

std::vector<std::string> numbered(const std::string& prefix, int n) {
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 1; i <= n; ++i) out.push_back(prefix + "_" + std::to_string(i));
  return out;
}

}  // namespace

ClinicalVocabulary ClinicalVocabulary::defaults() {
  ClinicalVocabulary v;
  // Block sizes 4 + 8 + 5 + 14 + 5 = 36.
  v.categories_[0] = {"density_1", "density_2", "density_3", "density_4"};
  v.categories_[1] = {"round", "oval", "lobulated", "irregular", "architectural_distortion",
                      "asymmetric", "focal_asymmetric", "tubular"};
  v.categories_[2] = numbered("margin", 5);
  v.categories_[3] = numbered("calc_type", 14);
  v.categories_[4] = numbered("calc_dist", 5);
  v.finalize();
  return v;
}

void ClinicalVocabulary::finalize() {
  total_dim_ = 0;
  for (int f = 0; f < kNumClinicalFields; ++f) {
    std::set<std::string> seen;
    for (const auto& c : categories_[static_cast<size_t>(f)]) {
      if (c.empty()) throw ConfigError("vocabulary: empty category name in field " + kClinicalFieldNames[static_cast<size_t>(f)]);
      if (!seen.insert(c).second)
        throw ConfigError("vocabulary: duplicate category '" + c + "' in field " + kClinicalFieldNames[static_cast<size_t>(f)]);
    }
    if (categories_[static_cast<size_t>(f)].empty())
      throw ConfigError("vocabulary: field " + kClinicalFieldNames[static_cast<size_t>(f)] + " has no categories");
    offsets_[static_cast<size_t>(f)] = total_dim_;
    total_dim_ += field_dim(f);
  }
}

ClinicalVocabulary ClinicalVocabulary::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("vocabulary: expected a JSON object of field -> category list");
  ClinicalVocabulary v;
  for (int f = 0; f < kNumClinicalFields; ++f) {
    const std::string& name = kClinicalFieldNames[static_cast<size_t>(f)];
    if (!j.contains(name)) throw ConfigError("vocabulary: missing field '" + name + "'");
    v.categories_[static_cast<size_t>(f)] = j.at(name).get<std::vector<std::string>>();
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const auto& n : kClinicalFieldNames) known |= (it.key() == n);
    if (!known) throw ConfigError("vocabulary: unknown field '" + it.key() + "'");
  }
  v.finalize();
  return v;
}

ClinicalVocabulary ClinicalVocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open vocabulary file " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

nlohmann::json ClinicalVocabulary::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (int f = 0; f < kNumClinicalFields; ++f)
    j[kClinicalFieldNames[static_cast<size_t>(f)]] = categories_[static_cast<size_t>(f)];
  return j;
}

std::optional<int> ClinicalVocabulary::category_index(int field, const std::string& value) const {
  const auto& cats = categories_[static_cast<size_t>(field)];
  for (size_t i = 0; i < cats.size(); ++i)
    if (cats[i] == value) return static_cast<int>(i);
  return std::nullopt;
}

ClinicalRecord ClinicalRecord::withheld() const {
  ClinicalRecord r = *this;
  for (auto& f : r.fields) f.clear();
  return r;
}

std::vector<double> encode_record(const ClinicalRecord& r, const ClinicalVocabulary& v) {
  std::vector<double> out(static_cast<size_t>(v.total_dim()), 0.0);
  for (int f = 0; f < kNumClinicalFields; ++f) {
    if (r.missing(f)) continue;  // missing feature -> zero block
    auto idx = v.category_index(f, r.fields[static_cast<size_t>(f)]);
    if (!idx)
      throw InputError("unknown category '" + r.fields[static_cast<size_t>(f)] + "' for field " +
                       kClinicalFieldNames[static_cast<size_t>(f)]);
    out[static_cast<size_t>(v.block_offset(f) + *idx)] = 1.0;
  }
  return out;
}

std::vector<double> encode_field_block(const ClinicalRecord& r, const ClinicalVocabulary& v, int field) {
  std::vector<double> out(static_cast<size_t>(v.total_dim()), 0.0);
  if (r.missing(field)) return out;
  auto idx = v.category_index(field, r.fields[static_cast<size_t>(field)]);
  if (!idx)
    throw InputError("unknown category '" + r.fields[static_cast<size_t>(field)] + "' for field " +
                     kClinicalFieldNames[static_cast<size_t>(field)]);
  out[static_cast<size_t>(v.block_offset(field) + *idx)] = 1.0;
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

const std::string kCsvHeader =
    "patient_id,breast_density,mass_shape,mass_margins,calc_type,calc_distribution,label";

}  // namespace

std::vector<ClinicalRecord> load_clinical_csv(const std::string& path, const ClinicalVocabulary& v) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open clinical CSV " + path);
  std::string line;
  if (!std::getline(in, line)) throw InputError(path + ": empty file, header row required");
  // Tolerate a trailing \r from CRLF files.
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader)
    throw InputError(path + ": bad header, expected '" + kCsvHeader + "'");

  std::vector<ClinicalRecord> records;
  std::set<std::string> ids;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 7)
      throw InputError(path + ":" + std::to_string(line_no) + ": expected 7 cells, got " +
                       std::to_string(cells.size()));
    ClinicalRecord r;
    r.patient_id = cells[0];
    if (r.patient_id.empty()) throw InputError(path + ":" + std::to_string(line_no) + ": empty patient_id");
    if (!ids.insert(r.patient_id).second)
      throw InputError(path + ":" + std::to_string(line_no) + ": duplicate patient_id '" + r.patient_id + "'");
    for (int f = 0; f < kNumClinicalFields; ++f) {
      r.fields[static_cast<size_t>(f)] = cells[static_cast<size_t>(1 + f)];
      if (!r.missing(f) && !v.category_index(f, r.fields[static_cast<size_t>(f)]))
        throw InputError(path + ":" + std::to_string(line_no) + ": unknown category '" +
                         r.fields[static_cast<size_t>(f)] + "' for field " + kClinicalFieldNames[static_cast<size_t>(f)]);
    }
    const std::string& lab = cells[6];
    if (lab.empty())
      r.label = Label::kUnknown;
    else if (lab == "benign")
      r.label = Label::kBenign;
    else if (lab == "malignant")
      r.label = Label::kMalignant;
    else
      throw InputError(path + ":" + std::to_string(line_no) + ": bad label '" + lab + "'");
    records.push_back(std::move(r));
  }
  return records;
}

void write_clinical_csv(const std::string& path, const std::vector<ClinicalRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write clinical CSV " + path);
  out << kCsvHeader << "\n";
  for (const auto& r : records) {
    out << r.patient_id;
    for (const auto& f : r.fields) out << "," << f;
    out << ",";
    if (r.label == Label::kBenign)
      out << "benign";
    else if (r.label == Label::kMalignant)
      out << "malignant";
    out << "\n";
  }
}

}  // namespace mmfx
