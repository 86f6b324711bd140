#pragma once

#include <string>

namespace stril {

// Hex digest of a byte string / file; used for artifact manifests.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

}  // namespace stril
