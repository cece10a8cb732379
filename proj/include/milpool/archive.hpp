#pragma once

// Bag archive, little-endian:
//
//   header   "MILB" | u32 version (=1) | u32 K | u32 M | u64 N
//   records  N times:
//              u32 id length | id bytes (UTF-8)
//              u32 L
//              ceil(K/8) label bytes, class k = bit (k % 8) of byte (k / 8), LSB first
//              L*M float32 features, row-major
//   index    N u64 record offsets
//   footer   u64 offset of the index
//
// Features are stored at single precision; datasets whose values are exact
// floats round-trip bit for bit.

#include <milpool/binary_io.hpp>
#include <milpool/dataset.hpp>
#include <milpool/error.hpp>

#include <string>
#include <vector>

namespace milpool {

inline constexpr std::uint32_t kArchiveVersion = 1;

inline std::vector<std::uint8_t> encode_archive(const Dataset& ds) {
    ds.validate();
    io::ByteWriter w;
    w.bytes("MILB");
    w.u32(kArchiveVersion);
    w.u32(static_cast<std::uint32_t>(ds.num_classes));
    w.u32(static_cast<std::uint32_t>(ds.feature_dim));
    w.u64(ds.size());

    const std::size_t label_bytes = (ds.num_classes + 7) / 8;
    std::vector<std::uint64_t> offsets;
    offsets.reserve(ds.size());
    for (const Bag& b : ds.bags) {
        offsets.push_back(w.offset());
        w.u32(static_cast<std::uint32_t>(b.id.size()));
        w.bytes(b.id);
        w.u32(static_cast<std::uint32_t>(b.size()));
        std::vector<std::uint8_t> bitmap(label_bytes, 0);
        for (std::size_t k = 0; k < ds.num_classes; ++k)
            if (b.label[k]) bitmap[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
        for (auto byte : bitmap) w.u8(byte);
        for (double x : b.instances.values()) w.f32(static_cast<float>(x));
    }
    const std::uint64_t index_at = w.offset();
    for (auto off : offsets) w.u64(off);
    w.u64(index_at);
    return w.buffer();
}

inline void write_archive(const Dataset& ds, const std::string& path) { io::write_file(path, encode_archive(ds)); }

struct ArchiveHeader {
    std::uint32_t version = 0;
    std::uint32_t num_classes = 0;
    std::uint32_t feature_dim = 0;
    std::uint64_t count = 0;
};

inline ArchiveHeader read_archive_header(io::ByteReader& r) {
    io::expect_magic(r, "MILB");
    ArchiveHeader h;
    const auto version_at = r.offset();
    h.version = r.u32("version");
    if (h.version != kArchiveVersion)
        throw ParseError(ParseError::Kind::bad_version, version_at,
                         "unsupported archive version " + std::to_string(h.version) + " (expected " +
                             std::to_string(kArchiveVersion) + ")");
    h.num_classes = r.u32("class count");
    h.feature_dim = r.u32("feature dim");
    h.count = r.u64("bag count");
    return h;
}

inline Dataset decode_archive(io::ByteReader r) {
    const ArchiveHeader h = read_archive_header(r);
    Dataset ds;
    ds.num_classes = h.num_classes;
    ds.feature_dim = h.feature_dim;
    const std::size_t label_bytes = (h.num_classes + 7) / 8;

    std::vector<std::uint64_t> offsets;
    for (std::uint64_t n = 0; n < h.count; ++n) {
        const std::uint64_t record_at = r.offset();
        offsets.push_back(record_at);
        Bag b;
        const auto id_len = r.u32("record id length");
        b.id = r.bytes(id_len, "record id");
        const auto len_at = r.offset();
        const auto L = r.u32("instance count");
        if (L == 0) throw ParseError(ParseError::Kind::corrupt, len_at, "record " + std::to_string(n) + " has no instances");
        const std::uint64_t label_at = r.offset();
        const std::string bitmap = r.bytes(label_bytes, "label bitmap");
        b.label.assign(h.num_classes, 0);
        for (std::size_t k = 0; k < h.num_classes; ++k)
            b.label[k] = (static_cast<std::uint8_t>(bitmap[k / 8]) >> (k % 8)) & 1u;
        if (h.num_classes % 8 != 0 && (static_cast<std::uint8_t>(bitmap.back()) >> (h.num_classes % 8)) != 0)
            throw ParseError(ParseError::Kind::corrupt, label_at, "label bitmap has bits set past class count");
        r.need(4ull * L * h.feature_dim, "feature block");
        b.instances = Matrix(L, h.feature_dim);
        for (double& x : b.instances.values()) x = r.f32("feature");
        ds.bags.push_back(std::move(b));
    }

    const std::uint64_t index_at = r.offset();
    for (std::uint64_t n = 0; n < h.count; ++n) {
        const auto at = r.offset();
        if (r.u64("index entry") != offsets[n])
            throw ParseError(ParseError::Kind::corrupt, at, "index entry " + std::to_string(n) + " does not match record");
    }
    const auto footer_at = r.offset();
    if (r.u64("footer") != index_at) throw ParseError(ParseError::Kind::corrupt, footer_at, "footer does not point at index");
    if (r.remaining() != 0) throw ParseError(ParseError::Kind::corrupt, r.offset(), "trailing bytes after footer");
    return ds;
}

inline Dataset read_archive(const std::string& path) { return decode_archive(io::ByteReader::load(path)); }

} // namespace milpool
