#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cgf/error.hpp"

namespace cgf::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

class ByteWriter {
public:
    void raw(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void f64s(std::span<const double> v) { raw(v.data(), v.size_bytes()); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void append_crc() { u32(crc32(buf_)); }

    const std::vector<std::uint8_t>& bytes() const { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void raw(void* out, std::size_t n) {
        if (n > bytes_.size() - pos_) throw FormatError("truncated file");
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        raw(&v, sizeof v);
        return v;
    }
    std::vector<double> f64s(std::size_t n) {
        if (n > (bytes_.size() - pos_) / sizeof(double)) throw FormatError("truncated file");
        std::vector<double> v(n);
        raw(v.data(), n * sizeof(double));
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (n > bytes_.size() - pos_) throw FormatError("truncated file");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

/// Verifies and strips a trailing CRC-32 over the preceding bytes.
std::span<const std::uint8_t> checked_payload(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace cgf::io
