#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsic {

// Errors from malformed or truncated files. Readers never hand back a
// partially filled object.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace io {

// All on-disk integers and floats are little-endian. We assume a
// little-endian host (checked once at file open).
inline void require_little_endian() {
    const std::uint16_t probe = 1;
    char byte;
    std::memcpy(&byte, &probe, 1);
    if (byte != 1) throw DataError("big-endian hosts are not supported");
}

class Reader {
public:
    explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        require_little_endian();
        if (!in_) throw DataError("cannot open file: " + path);
        in_.seekg(0, std::ios::end);
        size_ = static_cast<std::uint64_t>(in_.tellg());
        in_.seekg(0, std::ios::beg);
    }

    void bytes(void* dst, std::uint64_t n) {
        if (offset_ + n > size_)
            throw DataError(path_ + ": truncated, needed " + std::to_string(offset_ + n) +
                            " bytes but file has " + std::to_string(size_));
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (!in_) throw DataError(path_ + ": read failure at offset " + std::to_string(offset_));
        offset_ += n;
    }

    void expect_magic(const char magic[8]) {
        char got[8];
        bytes(got, 8);
        if (std::memcmp(got, magic, 8) != 0)
            throw DataError(path_ + ": bad magic, expected \"" + std::string(magic, 8) + "\"");
    }

    std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
    std::uint16_t u16() { std::uint16_t v; bytes(&v, 2); return v; }
    std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
    double f64() { double v; bytes(&v, 8); return v; }

    void f64_array(double* dst, std::uint64_t count) { bytes(dst, count * 8); }
    void u16_array(std::uint16_t* dst, std::uint64_t count) { bytes(dst, count * 2); }

    std::string line() {
        std::string s;
        char c;
        while (true) {
            bytes(&c, 1);
            if (c == '\n') break;
            s.push_back(c);
        }
        return s;
    }

    std::uint64_t remaining() const { return size_ - offset_; }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ifstream in_;
    std::uint64_t size_ = 0;
    std::uint64_t offset_ = 0;
};

class Writer {
public:
    explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
        require_little_endian();
        if (!out_) throw DataError("cannot open file for writing: " + path);
    }

    void bytes(const void* src, std::uint64_t n) {
        out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
        if (!out_) throw DataError(path_ + ": write failure");
    }

    void magic(const char m[8]) { bytes(m, 8); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u16(std::uint16_t v) { bytes(&v, 2); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void f64(double v) { bytes(&v, 8); }
    void f64_array(const double* src, std::uint64_t count) { bytes(src, count * 8); }
    void u16_array(const std::uint16_t* src, std::uint64_t count) { bytes(src, count * 2); }
    void line(const std::string& s) { bytes(s.data(), s.size()); bytes("\n", 1); }

    void close() {
        out_.close();
        if (!out_) throw DataError(path_ + ": close failure");
    }

private:
    std::string path_;
    std::ofstream out_;
};

}  // namespace io
}  // namespace hsic
