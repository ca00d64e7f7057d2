#pragma once

#include <string>

#include "tofsplat/image.hpp"

namespace tofsplat {

// Portable FloatMap I/O. "Pf" = 1 channel, "PF" = 3 interleaved channels.
// We always write scale -1.0 (little-endian float32) and store rows
// bottom-to-top as the format demands; Image rows are top-to-bottom.
// Readers accept positive scale headers (big-endian) as well.

void write_pfm(const std::string& path, const Image& img);
Image read_pfm(const std::string& path);

}  // namespace tofsplat
