#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

namespace souf {

/// Writes 8-bit interleaved pixels (1 = gray, 3 = RGB) as a PNG file.
void write_png(const std::filesystem::path& path, int width, int height, int channels,
               std::span<const std::uint8_t> pixels);

}  // namespace souf
