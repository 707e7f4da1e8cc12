#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace moralprobe {

/// Lower-case hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// First 8 bytes of SHA-256, big-endian. Used to derive seeds and mock scores.
std::uint64_t digest64(std::string_view data);

}  // namespace moralprobe
