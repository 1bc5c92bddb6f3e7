#pragma once

#include "ipga/core.hpp"

#include <string>

namespace ipga {

enum class DefenseKind { none, bit_red, jpeg };

const char* defense_kind_name(DefenseKind k);
DefenseKind defense_kind_from_name(const std::string& s);

struct DefenseConfig {
    DefenseKind kind = DefenseKind::none;
    int bits = 3;       // bit_red: target bit depth, 1..8
    int quality = 75;   // jpeg: 1..100

    void validate() const;
    std::string tag() const;  // e.g. "bit_red3", "jpeg75", "none"
};

// round(x * (2^bits - 1)) / (2^bits - 1), elementwise.
Image bit_depth_reduce(const Image& x, int bits);

// RGB -> YCbCr, 8x8 block DCT, quantization with the standard tables scaled
// by the JPEG quality factor, dequantize, inverse DCT, clamp. No entropy
// coding and no chroma subsampling: only the pixel effect matters here.
Image jpeg_compress(const Image& x, int quality);

Image apply_defense(const Image& x, const DefenseConfig& cfg);

} // namespace ipga
