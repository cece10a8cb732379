#pragma once

// Checkpoint file, all integers and floats little-endian:
//
//   "MILN"                 4 bytes
//   u32 version            = 1
//   u32 M                  feature dim
//   u32 K                  classes
//   u32 H                  number of hidden layers
//   u32 hidden[H]          widths
//   u8  phi                0 relu, 1 sigmoid, 2 softmax
//   u8  pooling            0 collective, 1 max, 2 weighted (learned), 3 attention
//   f64 dropout
//   f64 parameters...      every matrix in declaration order, row-major:
//                          embed[i].weight, embed[i].bias, classifier.weight,
//                          classifier.bias, measure.weight, measure.bias

#include <milpool/binary_io.hpp>
#include <milpool/error.hpp>
#include <milpool/network.hpp>
#include <milpool/pooling.hpp>

#include <string>

namespace milpool {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    MilNetwork network;
    PoolingStrategy strategy = Attention{};
};

inline std::uint8_t pooling_tag(const PoolingStrategy& s) {
    if (std::holds_alternative<Collective>(s)) return 0;
    if (std::holds_alternative<MaxSelection>(s)) return 1;
    if (auto* w = std::get_if<WeightedCollective>(&s)) {
        if (w->weight) throw ContractError("a weighted strategy with a user weight function cannot be checkpointed");
        return 2;
    }
    return 3;
}

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    const MilNetwork& net = ck.network;
    io::ByteWriter w;
    w.bytes("MILN");
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(net.feature_dim()));
    w.u32(static_cast<std::uint32_t>(net.num_classes()));
    const auto hidden = net.hidden_dims();
    w.u32(static_cast<std::uint32_t>(hidden.size()));
    for (auto h : hidden) w.u32(static_cast<std::uint32_t>(h));
    w.u8(static_cast<std::uint8_t>(net.phi));
    w.u8(pooling_tag(ck.strategy));
    w.f64(net.dropout_rate);
    net.params.for_each([&](const Matrix& m) {
        for (double x : m.values()) w.f64(x);
    });
    return w.buffer();
}

inline void write_checkpoint(const Checkpoint& ck, const std::string& path) {
    io::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint decode_checkpoint(io::ByteReader r) {
    io::expect_magic(r, "MILN");
    const std::uint64_t version_at = r.offset();
    const auto version = r.u32("version");
    if (version != kCheckpointVersion)
        throw ParseError(ParseError::Kind::bad_version, version_at,
                         "unsupported checkpoint version " + std::to_string(version));
    NetworkConfig cfg;
    cfg.feature_dim = r.u32("feature dim");
    cfg.num_classes = r.u32("class count");
    const auto layers = r.u32("layer count");
    r.need(4ull * layers, "hidden widths");
    cfg.hidden.clear();
    for (std::uint32_t i = 0; i < layers; ++i) cfg.hidden.push_back(r.u32("hidden width"));
    const std::uint64_t tags_at = r.offset();
    const auto phi = r.u8("phi tag");
    const auto pooling = r.u8("pooling tag");
    if (phi > 2 || pooling > 3) throw ParseError(ParseError::Kind::corrupt, tags_at, "unknown phi or pooling tag");
    cfg.phi = static_cast<Phi>(phi);
    cfg.dropout = r.f64("dropout");

    Checkpoint ck;
    try {
        Rng unused(0);
        ck.network = init_network(cfg, unused);
    } catch (const ConfigError& e) {
        throw ParseError(ParseError::Kind::corrupt, tags_at, std::string("bad architecture header: ") + e.what());
    }
    r.need(8 * ck.network.parameter_count(), "parameters");
    ck.network.params.for_each([&](Matrix& m) {
        for (double& x : m.values()) x = r.f64("parameter");
    });
    if (r.remaining() != 0)
        throw ParseError(ParseError::Kind::corrupt, r.offset(), "trailing bytes after parameters");
    switch (pooling) {
    case 0: ck.strategy = Collective{}; break;
    case 1: ck.strategy = MaxSelection{}; break;
    case 2: ck.strategy = WeightedCollective{}; break;
    default: ck.strategy = Attention{ck.network.phi}; break;
    }
    return ck;
}

inline Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(io::ByteReader::load(path)); }

} // namespace milpool
