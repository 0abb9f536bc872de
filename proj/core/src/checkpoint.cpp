#include "semgrasp/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "semgrasp/errors.hpp"

namespace semgrasp {

namespace {

constexpr char kMagic[4] = {'G', 'S', 'P', 'K'};

void put_u32(std::string& out, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = char(uint8_t(v >> (8 * i)));
    out.append(b, 4);
}

uint32_t get_u32(const char* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(p[i])) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params, const std::string& meta_json) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, uint32_t(meta_json.size()));
    out += meta_json;
    put_u32(out, uint32_t(params.size()));
    for (const auto& e : params.entries()) {
        put_u32(out, uint32_t(e.name.size()));
        out += e.name;
        out.push_back(char(0));  // dtype 0 = f32
        out.push_back(e.trainable ? char(1) : char(0));
        put_u32(out, uint32_t(e.value.shape.size()));
        for (int d : e.value.shape) put_u32(out, uint32_t(d));
    }
    for (const auto& e : params.entries()) {
        static_assert(sizeof(float) == 4);
        // floats stored little-endian; this build targets little-endian hosts
        out.append(reinterpret_cast<const char*>(e.value.data.data()), e.value.data.size() * 4);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path);
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw IoError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    const std::streamsize n = f.tellg();
    f.seekg(0);
    std::string buf(size_t(n), '\0');
    f.read(buf.data(), n);
    if (!f) throw IoError("checkpoint read failed: " + path);

    size_t pos = 0;
    const auto need = [&](size_t k) {
        if (pos + k > buf.size()) throw IoError("checkpoint truncated: " + path);
    };
    need(12);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw IoError("not a GSPK checkpoint: " + path);
    pos = 4;
    const uint32_t version = get_u32(buf.data() + pos);
    pos += 4;
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    const uint32_t meta_len = get_u32(buf.data() + pos);
    pos += 4;
    need(meta_len);
    LoadedCheckpoint out;
    out.meta_json.assign(buf.data() + pos, meta_len);
    pos += meta_len;
    need(4);
    const uint32_t count = get_u32(buf.data() + pos);
    pos += 4;

    struct Decl {
        std::string name;
        bool trainable;
        std::vector<int> shape;
        int64_t count;
    };
    std::vector<Decl> decls;
    int64_t payload = 0;
    for (uint32_t i = 0; i < count; ++i) {
        need(4);
        const uint32_t name_len = get_u32(buf.data() + pos);
        pos += 4;
        need(name_len + 2 + 4);
        Decl d;
        d.name.assign(buf.data() + pos, name_len);
        pos += name_len;
        const uint8_t dtype = uint8_t(buf[pos++]);
        if (dtype != 0) throw IoError("checkpoint tensor " + d.name + " has unsupported dtype");
        d.trainable = buf[pos++] != 0;
        const uint32_t ndim = get_u32(buf.data() + pos);
        pos += 4;
        need(size_t(ndim) * 4);
        d.count = 1;
        for (uint32_t k = 0; k < ndim; ++k) {
            const int dim = int(get_u32(buf.data() + pos));
            pos += 4;
            d.shape.push_back(dim);
            d.count *= dim;
        }
        payload += d.count;
        decls.push_back(std::move(d));
    }
    if (pos + size_t(payload) * 4 != buf.size())
        throw IoError("checkpoint payload length mismatch: " + path);
    for (auto& d : decls) {
        Tensor t(d.shape);
        std::memcpy(t.data.data(), buf.data() + pos, size_t(d.count) * 4);
        pos += size_t(d.count) * 4;
        out.params.add(d.name, std::move(t), d.trainable);
    }
    return out;
}

}  // namespace semgrasp
