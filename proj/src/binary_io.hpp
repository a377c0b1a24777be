#pragma once

// Little-endian primitive I/O shared by the fixture and checkpoint formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "svan/error.hpp"

namespace svan::detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b, 8);
}

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

/// Reader that turns short reads into CorruptFileError tagged with the source name.
class LeReader {
public:
    LeReader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}

    void bytes(char* out, std::size_t count) {
        is_.read(out, static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(is_.gcount()) != count)
            throw CorruptFileError(source_ + ": truncated file");
    }

    std::uint32_t u32() {
        unsigned char b[4];
        bytes(reinterpret_cast<char*>(b), 4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    std::uint64_t u64() {
        unsigned char b[8];
        bytes(reinterpret_cast<char*>(b), 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string string(std::size_t max_len = 4096) {
        const std::uint32_t len = u32();
        if (len > max_len) throw CorruptFileError(source_ + ": implausible string length");
        std::string s(len, '\0');
        bytes(s.data(), len);
        return s;
    }

    bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }
    const std::string& source() const { return source_; }

private:
    std::istream& is_;
    std::string source_;
};

}  // namespace svan::detail
