#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace semgrasp {

/// RGB image, float values in [0,1], row-major, channels interleaved.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;  // height * width * 3

    Image() = default;
    Image(int h, int w) : height(h), width(w), pixels(size_t(h) * size_t(w) * 3, 0.f) {}

    float* at(int row, int col) { return pixels.data() + 3 * (size_t(row) * size_t(width) + size_t(col)); }
    const float* at(int row, int col) const {
        return pixels.data() + 3 * (size_t(row) * size_t(width) + size_t(col));
    }

    bool operator==(const Image& o) const {
        return height == o.height && width == o.width && pixels == o.pixels;
    }
};

/// Snaps every value to the 8-bit grid round(p*255)/255. Rendering applies
/// this before images are consumed, so in-memory pixels match the PNG bytes
/// exactly.
void quantize8(Image& img);

/// 8-bit RGB PNG. Encoding is deterministic (fixed zlib level, filter 0).
std::vector<uint8_t> png_encode(const Image& img);
Image png_decode(const uint8_t* data, size_t len);
inline Image png_decode(const std::vector<uint8_t>& bytes) { return png_decode(bytes.data(), bytes.size()); }

void write_file(const std::string& path, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_file(const std::string& path);

}  // namespace semgrasp
