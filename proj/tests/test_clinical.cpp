#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mmfx/clinical.hpp"
#include "mmfx/errors.hpp"
#include "mmfx/rng.hpp"

using namespace mmfx;
namespace fs = std::filesystem;

namespace {

ClinicalRecord make_record(const ClinicalVocabulary& v, const std::array<int, kNumClinicalFields>& cats,
                           const std::string& id = "p1") {
  ClinicalRecord r;
  r.patient_id = id;
  for (int f = 0; f < kNumClinicalFields; ++f)
    if (cats[static_cast<size_t>(f)] >= 0)
      r.fields[static_cast<size_t>(f)] = v.categories(f)[static_cast<size_t>(cats[static_cast<size_t>(f)])];
  return r;
}

fs::path temp_dir() {
  fs::path p = fs::temp_directory_path() / "mmfx_clinical_test";
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("default vocabulary matches the 4+8+5+14+5 layout") {
  ClinicalVocabulary v = ClinicalVocabulary::defaults();
  CHECK(v.total_dim() == 36);
  CHECK(v.field_dim(0) == 4);
  CHECK(v.field_dim(1) == 8);
  CHECK(v.field_dim(2) == 5);
  CHECK(v.field_dim(3) == 14);
  CHECK(v.field_dim(4) == 5);
  CHECK(v.block_offset(0) == 0);
  CHECK(v.block_offset(1) == 4);
  CHECK(v.block_offset(2) == 12);
  CHECK(v.block_offset(3) == 17);
  CHECK(v.block_offset(4) == 31);
}

TEST_CASE("vocabulary json round trip and validation") {
  ClinicalVocabulary v = ClinicalVocabulary::defaults();
  ClinicalVocabulary v2 = ClinicalVocabulary::from_json(v.to_json());
  CHECK(v2.total_dim() == 36);

  nlohmann::json bad = v.to_json();
  bad["breast_density"] = {"a", "a"};
  CHECK_THROWS_AS(ClinicalVocabulary::from_json(bad), ConfigError);

  nlohmann::json extra = v.to_json();
  extra["mystery_field"] = {"x"};
  CHECK_THROWS_AS(ClinicalVocabulary::from_json(extra), ConfigError);
}

TEST_CASE("encode_record: all missing gives the zero vector") {
  ClinicalVocabulary v = ClinicalVocabulary::defaults();
  ClinicalRecord r = make_record(v, {-1, -1, -1, -1, -1});
  auto enc = encode_record(r, v);
  CHECK(enc.size() == 36);
  for (double x : enc) CHECK(x == 0.0);
}

TEST_CASE("encode_record: one-hot placement and missing blocks") {
  ClinicalVocabulary v = ClinicalVocabulary::defaults();
  ClinicalRecord density_only = make_record(v, {0, -1, -1, -1, -1});
  auto enc = encode_record(density_only, v);
  CHECK(enc[0] == 1.0);
  for (size_t i = 1; i < enc.size(); ++i) CHECK(enc[i] == 0.0);

  // mass lesion: shape+margins present, both calc fields missing
  ClinicalRecord mass = make_record(v, {1, 3, 2, -1, -1});
  auto enc2 = encode_record(mass, v);
  double sum = 0.0;
  for (double x : enc2) sum += x;
  CHECK(sum == 3.0);  // one 1 per present field
  for (int i = v.block_offset(3); i < 36; ++i) CHECK(enc2[static_cast<size_t>(i)] == 0.0);
}

TEST_CASE("encode_record rejects unknown categories") {
  ClinicalVocabulary v = ClinicalVocabulary::defaults();
  ClinicalRecord r;
  r.patient_id = "x";
  r.fields[1] = "not_a_shape";
  CHECK_THROWS_WITH_AS(encode_record(r, v), doctest::Contains("mass_shape"), InputError);
}

TEST_CASE("masking a field commutes with encoding it as missing") {
  ClinicalVocabulary v = ClinicalVocabulary::defaults();
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    std::array<int, kNumClinicalFields> cats{};
    for (int f = 0; f < kNumClinicalFields; ++f)
      cats[static_cast<size_t>(f)] = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(v.field_dim(f))));
    ClinicalRecord r = make_record(v, cats);
    const int k = static_cast<int>(rng.uniform_int(kNumClinicalFields));

    auto enc = encode_record(r, v);
    for (int j = 0; j < v.field_dim(k); ++j) enc[static_cast<size_t>(v.block_offset(k) + j)] = 0.0;

    ClinicalRecord masked = r;
    masked.fields[static_cast<size_t>(k)].clear();
    CHECK(enc == encode_record(masked, v));
  }
}

TEST_CASE("encode blocks have at most one nonzero, values in {0,1}") {
  ClinicalVocabulary v = ClinicalVocabulary::defaults();
  Rng rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    std::array<int, kNumClinicalFields> cats{};
    for (int f = 0; f < kNumClinicalFields; ++f) {
      const bool missing = rng.bernoulli(0.3);
      cats[static_cast<size_t>(f)] =
          missing ? -1 : static_cast<int>(rng.uniform_int(static_cast<uint64_t>(v.field_dim(f))));
    }
    auto enc = encode_record(make_record(v, cats), v);
    for (int f = 0; f < kNumClinicalFields; ++f) {
      int nonzero = 0;
      for (int j = 0; j < v.field_dim(f); ++j) {
        const double x = enc[static_cast<size_t>(v.block_offset(f) + j)];
        CHECK((x == 0.0 || x == 1.0));
        if (x != 0.0) ++nonzero;
      }
      CHECK(nonzero <= 1);
      CHECK(nonzero == (cats[static_cast<size_t>(f)] >= 0 ? 1 : 0));
    }
  }
}

TEST_CASE("clinical CSV: loading and error reporting") {
  ClinicalVocabulary v = ClinicalVocabulary::defaults();
  fs::path dir = temp_dir();

  SUBCASE("empty data section") {
    fs::path p = dir / "empty.csv";
    std::ofstream(p) << "patient_id,breast_density,mass_shape,mass_margins,calc_type,calc_distribution,label\n";
    CHECK(load_clinical_csv(p.string(), v).empty());
  }

  SUBCASE("all-missing row is valid") {
    fs::path p = dir / "missing.csv";
    std::ofstream(p) << "patient_id,breast_density,mass_shape,mass_margins,calc_type,calc_distribution,label\n"
                     << "p1,,,,,,\n";
    auto recs = load_clinical_csv(p.string(), v);
    REQUIRE(recs.size() == 1);
    for (int f = 0; f < kNumClinicalFields; ++f) CHECK(recs[0].missing(f));
    CHECK(recs[0].label == Label::kUnknown);
  }

  SUBCASE("malformed row reports its line number") {
    fs::path p = dir / "bad.csv";
    std::ofstream(p) << "patient_id,breast_density,mass_shape,mass_margins,calc_type,calc_distribution,label\n"
                     << "p1,,,,,,\n"
                     << "p2,density_1,oval\n";
    CHECK_THROWS_WITH_AS(load_clinical_csv(p.string(), v), doctest::Contains(":3"), InputError);
  }

  SUBCASE("duplicate patient id is rejected") {
    fs::path p = dir / "dup.csv";
    std::ofstream(p) << "patient_id,breast_density,mass_shape,mass_margins,calc_type,calc_distribution,label\n"
                     << "p1,,,,,,benign\n"
                     << "p1,,,,,,malignant\n";
    CHECK_THROWS_WITH_AS(load_clinical_csv(p.string(), v), doctest::Contains("duplicate"), InputError);
  }

  SUBCASE("header mismatch is rejected") {
    fs::path p = dir / "hdr.csv";
    std::ofstream(p) << "id,density\n";
    CHECK_THROWS_AS(load_clinical_csv(p.string(), v), InputError);
  }
}

TEST_CASE("clinical CSV round trip preserves every field") {
  ClinicalVocabulary v = ClinicalVocabulary::defaults();
  Rng rng(31);
  std::vector<ClinicalRecord> records;
  for (int i = 0; i < 25; ++i) {
    std::array<int, kNumClinicalFields> cats{};
    for (int f = 0; f < kNumClinicalFields; ++f)
      cats[static_cast<size_t>(f)] =
          rng.bernoulli(0.25) ? -1 : static_cast<int>(rng.uniform_int(static_cast<uint64_t>(v.field_dim(f))));
    ClinicalRecord r = make_record(v, cats, "p" + std::to_string(i));
    r.label = rng.bernoulli(0.5) ? Label::kMalignant : Label::kBenign;
    records.push_back(r);
  }

  fs::path p = temp_dir() / "roundtrip.csv";
  write_clinical_csv(p.string(), records);
  auto loaded = load_clinical_csv(p.string(), v);
  REQUIRE(loaded.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].patient_id == records[i].patient_id);
    CHECK(loaded[i].fields == records[i].fields);
    CHECK(loaded[i].label == records[i].label);
  }
}
