#pragma once

#include <filesystem>

#include "msfm/dataset.hpp"

namespace msfm {

// 3-channel PFM ("PF"), little-endian (negative scale), scanlines bottom-up.
void write_pfm(const NormalMap& map, const std::filesystem::path& path);
NormalMap read_pfm(const std::filesystem::path& path);

// Header-only probe: returns (width, height) without reading pixel data.
std::pair<int, int> read_pfm_size(const std::filesystem::path& path);

}  // namespace msfm
