#pragma once

#include "ipga/bundle.hpp"

#include <string>

namespace ipga {

inline constexpr const char* kToolVersion = "0.1.0";

// Bundle file: "IPGB" magic, u32 format version, u64 JSON header length,
// JSON header (kind, dims, vocabulary, named section table, metadata),
// then raw little-endian float64 payload. Round-trips bit-exactly.
void save_bundle(const SurrogateBundle& b, const std::string& path,
                 const std::string& config_hash = "");
SurrogateBundle load_bundle(const std::string& path);

// Metadata echoed from the header without loading the payload.
struct BundleInfo {
    BundleKind kind;
    Dims dims;
    std::string config_hash;
    std::string tool_version;
};
BundleInfo peek_bundle(const std::string& path);

} // namespace ipga
