#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace w2sg {

// Streaming SHA-256 (FIPS 180-4). Used for cache keys and artifact digests;
// verified against the published test vectors in the unit suite.
class Sha256 {
public:
    Sha256() { reset(); }

    void reset();
    void update(std::string_view bytes);
    // Finalizes and returns the 64-char lowercase hex digest.
    std::string hex_digest();

private:
    void process_block(const unsigned char* block);

    std::uint32_t state_[8];
    std::uint64_t total_len_ = 0;
    unsigned char buffer_[64];
    std::size_t buffer_len_ = 0;
};

inline std::string sha256_hex(std::string_view bytes) {
    Sha256 h;
    h.update(bytes);
    return h.hex_digest();
}

} // namespace w2sg
