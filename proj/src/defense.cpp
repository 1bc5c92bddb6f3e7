#include "ipga/defense.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ipga {

const char* defense_kind_name(DefenseKind k) {
    switch (k) {
    case DefenseKind::none: return "none";
    case DefenseKind::bit_red: return "bit_red";
    case DefenseKind::jpeg: return "jpeg";
    }
    return "?";
}

DefenseKind defense_kind_from_name(const std::string& s) {
    if (s == "none") return DefenseKind::none;
    if (s == "bit_red") return DefenseKind::bit_red;
    if (s == "jpeg") return DefenseKind::jpeg;
    throw std::invalid_argument("unknown defense kind: " + s);
}

void DefenseConfig::validate() const {
    if (kind == DefenseKind::bit_red && (bits < 1 || bits > 8))
        throw std::invalid_argument("defense: bits must lie in 1..8");
    if (kind == DefenseKind::jpeg && (quality < 1 || quality > 100))
        throw std::invalid_argument("defense: quality must lie in 1..100");
}

std::string DefenseConfig::tag() const {
    switch (kind) {
    case DefenseKind::none: return "none";
    case DefenseKind::bit_red: return "bit_red" + std::to_string(bits);
    case DefenseKind::jpeg: return "jpeg" + std::to_string(quality);
    }
    return "?";
}

Image bit_depth_reduce(const Image& x, int bits) {
    if (bits < 1 || bits > 8) throw std::invalid_argument("bit_depth_reduce: bits must be 1..8");
    const double levels = static_cast<double>((1 << bits) - 1);
    Image out(x.h, x.w);
    for (std::size_t i = 0; i < x.size(); ++i)
        out.v[i] = std::round(x.v[i] * levels) / levels;
    return out;
}

namespace {

// Standard JPEG base quantization tables (Annex K), row-major 8x8.
constexpr int kLumaQ[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr int kChromaQ[64] = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

// quality -> scaled table. q < 50: 5000/q percent; q >= 50: 200 - 2q.
std::array<double, 64> scaled_table(const int* base, int quality) {
    const double s = quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
    std::array<double, 64> out{};
    for (int i = 0; i < 64; ++i) {
        double q = std::floor((base[i] * s + 50.0) / 100.0);
        out[i] = q < 1.0 ? 1.0 : (q > 255.0 ? 255.0 : q);
    }
    return out;
}

struct DctBasis {
    // basis[u][x] = C(u) * cos((2x+1) u pi / 16) with C(0)=1/sqrt(2).
    double b[8][8];
    DctBasis() {
        const double pi = 3.14159265358979323846;
        for (int u = 0; u < 8; ++u) {
            double cu = (u == 0) ? 1.0 / std::sqrt(2.0) : 1.0;
            for (int x = 0; x < 8; ++x) b[u][x] = cu * std::cos((2 * x + 1) * u * pi / 16.0);
        }
    }
};

const DctBasis& dct_basis() {
    static const DctBasis basis;
    return basis;
}

void dct2(const double in[64], double out[64]) {
    const auto& B = dct_basis().b;
    double tmp[64];
    // rows
    for (int y = 0; y < 8; ++y)
        for (int u = 0; u < 8; ++u) {
            double acc = 0.0;
            for (int x = 0; x < 8; ++x) acc += in[y * 8 + x] * B[u][x];
            tmp[y * 8 + u] = acc;
        }
    // cols
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u) {
            double acc = 0.0;
            for (int y = 0; y < 8; ++y) acc += tmp[y * 8 + u] * B[v][y];
            out[v * 8 + u] = acc / 4.0;
        }
}

void idct2(const double in[64], double out[64]) {
    const auto& B = dct_basis().b;
    double tmp[64];
    for (int v = 0; v < 8; ++v)
        for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int u = 0; u < 8; ++u) acc += in[v * 8 + u] * B[u][x];
            tmp[v * 8 + x] = acc;
        }
    for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y) {
            double acc = 0.0;
            for (int v = 0; v < 8; ++v) acc += tmp[v * 8 + x] * B[v][y];
            out[y * 8 + x] = acc / 4.0;
        }
}

int reflect(int i, int n) {
    if (i < n) return i;
    return 2 * n - 1 - i;
}

} // namespace

Image jpeg_compress(const Image& x, int quality) {
    if (quality < 1 || quality > 100)
        throw std::invalid_argument("jpeg_compress: quality must be 1..100");
    const int h = x.h, w = x.w;
    const int ph = (h + 7) / 8 * 8;
    const int pw = (w + 7) / 8 * 8;

    // RGB -> YCbCr in the 0..255 domain (reflect-padded to block multiples).
    std::vector<double> ycc(3u * ph * pw);
    for (int y = 0; y < ph; ++y) {
        for (int xx = 0; xx < pw; ++xx) {
            int sy = reflect(y, h), sx = reflect(xx, w);
            double r = x.at(0, sy, sx) * 255.0;
            double g = x.at(1, sy, sx) * 255.0;
            double b = x.at(2, sy, sx) * 255.0;
            ycc[(0 * ph + y) * pw + xx] = 0.299 * r + 0.587 * g + 0.114 * b;
            ycc[(1 * ph + y) * pw + xx] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
            ycc[(2 * ph + y) * pw + xx] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
        }
    }

    const auto luma = scaled_table(kLumaQ, quality);
    const auto chroma = scaled_table(kChromaQ, quality);

    for (int ch = 0; ch < 3; ++ch) {
        const auto& table = (ch == 0) ? luma : chroma;
        for (int by = 0; by < ph; by += 8) {
            for (int bx = 0; bx < pw; bx += 8) {
                double block[64], coef[64];
                for (int y = 0; y < 8; ++y)
                    for (int xx = 0; xx < 8; ++xx)
                        block[y * 8 + xx] = ycc[(ch * ph + by + y) * pw + bx + xx] - 128.0;
                dct2(block, coef);
                for (int i = 0; i < 64; ++i) coef[i] = std::round(coef[i] / table[i]) * table[i];
                idct2(coef, block);
                for (int y = 0; y < 8; ++y)
                    for (int xx = 0; xx < 8; ++xx)
                        ycc[(ch * ph + by + y) * pw + bx + xx] = block[y * 8 + xx] + 128.0;
            }
        }
    }

    Image out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
            double Y = ycc[(0 * ph + y) * pw + xx];
            double cb = ycc[(1 * ph + y) * pw + xx] - 128.0;
            double cr = ycc[(2 * ph + y) * pw + xx] - 128.0;
            double r = Y + 1.402 * cr;
            double g = Y - 0.344136 * cb - 0.714136 * cr;
            double b = Y + 1.772 * cb;
            auto clamp01 = [](double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); };
            out.at(0, y, xx) = clamp01(r / 255.0);
            out.at(1, y, xx) = clamp01(g / 255.0);
            out.at(2, y, xx) = clamp01(b / 255.0);
        }
    }
    return out;
}

Image apply_defense(const Image& x, const DefenseConfig& cfg) {
    cfg.validate();
    switch (cfg.kind) {
    case DefenseKind::none: return x;
    case DefenseKind::bit_red: return bit_depth_reduce(x, cfg.bits);
    case DefenseKind::jpeg: return jpeg_compress(x, cfg.quality);
    }
    throw std::logic_error("apply_defense: bad kind");
}

} // namespace ipga
