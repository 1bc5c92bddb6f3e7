#pragma once

#include "ipga/core.hpp"

#include <string>

namespace ipga {

// Minimal RGB8 PNG writer (zlib-deflated scanlines). Inspection only —
// quantizes to 8 bits; metrics always use the exact float payloads.
void write_png(const Image& img, const std::string& path);

} // namespace ipga
