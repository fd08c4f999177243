#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>

#include "mmfx/vendor_json_fwd.hpp"

namespace mmfx {

// Throws ConfigError if j contains a key outside `allowed`. Unknown keys are
// rejected everywhere so hyperparameter typos fail loudly.
void require_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed);

nlohmann::json load_json_file(const std::string& path);

// Deterministic dump: sorted keys (nlohmann object order), 2-space indent,
// trailing newline.
void write_json_file(const std::string& path, const nlohmann::json& j);

// FNV-1a 64-bit of a file's bytes, as 16 hex digits. Used for data hashes in
// run manifests.
std::string fnv1a64_file_hex(const std::string& path);
std::string fnv1a64_hex(const std::string& bytes);

}  // namespace mmfx
