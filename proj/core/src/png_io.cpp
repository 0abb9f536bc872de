#include "semgrasp/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "semgrasp/errors.hpp"

namespace semgrasp {

void quantize8(Image& img) {
    for (float& p : img.pixels) {
        float v = p < 0.f ? 0.f : (p > 1.f ? 1.f : p);
        p = std::round(v * 255.f) / 255.f;
    }
}

namespace {

void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

uint32_t get_u32be(const uint8_t* p) {
    return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 | uint32_t(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& payload) {
    put_u32be(out, uint32_t(payload.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uLong crc = crc32(crc32(0L, Z_NULL, 0), out.data() + start, uInt(out.size() - start));
    put_u32be(out, uint32_t(crc));
}

constexpr uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

}  // namespace

std::vector<uint8_t> png_encode(const Image& img) {
    if (img.height <= 0 || img.width <= 0) throw ShapeError("png_encode: empty image");
    const int h = img.height, w = img.width;

    // filter byte 0 per scanline, 8-bit RGB
    std::vector<uint8_t> raw(size_t(h) * (size_t(w) * 3 + 1));
    size_t k = 0;
    for (int r = 0; r < h; ++r) {
        raw[k++] = 0;
        for (int c = 0; c < w; ++c) {
            const float* px = img.at(r, c);
            for (int ch = 0; ch < 3; ++ch) {
                float v = px[ch] < 0.f ? 0.f : (px[ch] > 1.f ? 1.f : px[ch]);
                raw[k++] = uint8_t(std::lround(v * 255.f));
            }
        }
    }

    uLongf comp_len = compressBound(uLong(raw.size()));
    std::vector<uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), uLong(raw.size()), 6) != Z_OK)
        throw IoError("png_encode: deflate failed");
    comp.resize(comp_len);

    std::vector<uint8_t> out(kSignature, kSignature + 8);
    std::vector<uint8_t> ihdr;
    put_u32be(ihdr, uint32_t(w));
    put_u32be(ihdr, uint32_t(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type RGB
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", comp);
    put_chunk(out, "IEND", {});
    return out;
}

Image png_decode(const uint8_t* data, size_t len) {
    if (len < 8 + 25 || std::memcmp(data, kSignature, 8) != 0) throw IoError("png_decode: bad signature");
    size_t pos = 8;
    int w = 0, h = 0;
    std::vector<uint8_t> idat;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 12 <= len && !saw_iend) {
        const uint32_t clen = get_u32be(data + pos);
        if (pos + 12 + clen > len) throw IoError("png_decode: truncated chunk");
        const uint8_t* type = data + pos + 4;
        const uint8_t* payload = data + pos + 8;
        const uint32_t want_crc = get_u32be(payload + clen);
        const uLong got_crc = crc32(crc32(0L, Z_NULL, 0), type, clen + 4);
        if (uint32_t(got_crc) != want_crc) throw IoError("png_decode: chunk crc mismatch");
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (clen != 13) throw IoError("png_decode: bad IHDR");
            w = int(get_u32be(payload));
            h = int(get_u32be(payload + 4));
            if (payload[8] != 8 || payload[9] != 2 || payload[12] != 0)
                throw IoError("png_decode: only 8-bit non-interlaced RGB is supported");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + clen);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + clen;
    }
    if (!saw_ihdr || !saw_iend || w <= 0 || h <= 0) throw IoError("png_decode: missing chunks");

    const size_t stride = size_t(w) * 3;
    std::vector<uint8_t> raw(size_t(h) * (stride + 1));
    uLongf raw_len = uLongf(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size())) != Z_OK || raw_len != raw.size())
        throw IoError("png_decode: inflate failed");

    Image img(h, w);
    std::vector<uint8_t> prev(stride, 0);
    std::vector<uint8_t> line(stride);
    for (int r = 0; r < h; ++r) {
        const uint8_t* src = raw.data() + size_t(r) * (stride + 1);
        const uint8_t filter = src[0];
        const uint8_t* s = src + 1;
        for (size_t i = 0; i < stride; ++i) {
            const uint8_t a = i >= 3 ? line[i - 3] : 0;  // left
            const uint8_t b = prev[i];                   // up
            const uint8_t c = i >= 3 ? prev[i - 3] : 0;  // upper-left
            int v = s[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: {
                    const int p = a + b - c;
                    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
                    v += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                    break;
                }
                default: throw IoError("png_decode: unknown filter type");
            }
            line[i] = uint8_t(v);
        }
        float* dst = img.at(r, 0);
        for (size_t i = 0; i < stride; ++i) dst[i] = float(line[i]) / 255.f;
        prev = line;
    }
    return img;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open for reading: " + path);
    const std::streamsize n = in.tellg();
    in.seekg(0);
    std::vector<uint8_t> bytes(static_cast<size_t>(n), 0);
    in.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!in) throw IoError("read failed: " + path);
    return bytes;
}

}  // namespace semgrasp
