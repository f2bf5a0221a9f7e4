#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace desta {

// SHA-256 (FIPS 180-4), returned as 64 lowercase hex digits. Used for
// response cache keys, run-manifest input digests and frozen-tensor checks.
std::string sha256_hex(std::string_view data);

// Digest of a file's raw bytes. Throws ValidationError if unreadable.
std::string sha256_file_hex(const std::string& path);

}  // namespace desta
