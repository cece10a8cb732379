#pragma once

// Little-endian encoding helpers shared by the bag archive and checkpoints.
// Values are assembled byte by byte, so host endianness does not matter.

#include <milpool/error.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace milpool::io {

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    std::uint64_t offset() const noexcept { return buf_.size(); }
    const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }

    void save(const std::string& path) const;

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write to '" + path + "' failed");
}

inline void ByteWriter::save(const std::string& path) const { write_file(path, buf_); }

/// Bounds-checked cursor over an in-memory file image.
class ByteReader {
public:
    explicit ByteReader(std::vector<std::uint8_t> data) : data_(std::move(data)) {}

    static ByteReader load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ParseError(ParseError::Kind::io, 0, "cannot open '" + path + "'");
        std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return ByteReader(std::move(data));
    }

    std::uint64_t offset() const noexcept { return pos_; }
    std::uint64_t size() const noexcept { return data_.size(); }
    std::uint64_t remaining() const noexcept { return data_.size() - pos_; }
    void seek(std::uint64_t pos, std::string_view what) {
        if (pos > data_.size()) throw ParseError(ParseError::Kind::corrupt, pos, std::string(what) + " points past end of file");
        pos_ = pos;
    }

    std::uint8_t u8(std::string_view what) { return static_cast<std::uint8_t>(get(1, what)); }
    std::uint32_t u32(std::string_view what) { return static_cast<std::uint32_t>(get(4, what)); }
    std::uint64_t u64(std::string_view what) { return get(8, what); }
    float f32(std::string_view what) { return std::bit_cast<float>(u32(what)); }
    double f64(std::string_view what) { return std::bit_cast<double>(u64(what)); }

    std::string bytes(std::uint64_t n, std::string_view what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void need(std::uint64_t n, std::string_view what) const {
        if (n > remaining())
            throw ParseError(ParseError::Kind::truncated, pos_,
                             "truncated " + std::string(what) + ": need " + std::to_string(n) + " bytes, " +
                                 std::to_string(remaining()) + " left");
    }

private:
    std::uint64_t get(int n, std::string_view what) {
        need(static_cast<std::uint64_t>(n), what);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::uint64_t>(n);
        return v;
    }

    std::vector<std::uint8_t> data_;
    std::uint64_t pos_ = 0;
};

/// Reads a four-byte magic and names the expected and actual format on mismatch.
inline void expect_magic(ByteReader& r, std::string_view expected) {
    if (r.size() < 4)
        throw ParseError(ParseError::Kind::truncated, 0, "file too short for a " + std::string(expected) + " header");
    const std::string got = r.bytes(4, "magic");
    if (got != expected) {
        std::string shown;
        for (char c : got) shown += (c >= 0x20 && c < 0x7f) ? c : '?';
        throw ParseError(ParseError::Kind::bad_magic, 0, shown + " is not " + std::string(expected));
    }
}

} // namespace milpool::io
