#pragma once

#include <filesystem>
#include <string>

#include "forge/bytes.hpp"

namespace forge {

Bytes read_file(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
// Writes via a temporary sibling and rename so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
Hash256 file_digest(const std::filesystem::path& path);

}  // namespace forge
