#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

namespace semgrasp {

/// Incremental SHA-256 (FIPS 180-4).
class Sha256 {
public:
    Sha256() { reset(); }

    void reset();
    void update(const void* data, size_t len);
    /// Finalizes and returns the 32-byte digest. The object must be reset
    /// before further use.
    std::array<uint8_t, 32> finish();

    static std::string hex_digest(const void* data, size_t len);
    static std::string hex_digest(const std::string& s) { return hex_digest(s.data(), s.size()); }
    static std::string hex_digest(const std::vector<uint8_t>& v) { return hex_digest(v.data(), v.size()); }
    static std::string file_digest(const std::string& path);

private:
    void process_block(const uint8_t* block);

    uint32_t h_[8];
    uint64_t total_len_ = 0;
    uint8_t buf_[64];
    size_t buf_len_ = 0;
};

}  // namespace semgrasp
