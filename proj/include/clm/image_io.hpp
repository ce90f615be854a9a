#pragma once

#include <filesystem>

#include "clm/jpeg/codec.hpp"

namespace clm {

// Binary PGM (P5) / PPM (P6), 8-bit. Used by the codec CLI and for dumping
// decoded rasters of generated files.
jpeg::Raster read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const jpeg::Raster& raster);

}  // namespace clm
