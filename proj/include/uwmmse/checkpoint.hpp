#pragma once

// Model checkpoint layout (all little-endian):
//   "IAID" | u16 version | u32 Nt, Nr, d, K | f64 P_T | f64 sigma[K] | f64 omega[K]
//   | u32 L | u8 variant
//   then every parameter block in for_each_block order as (re, im) f64 pairs, row-major.
// Block shapes follow from the header, so none are stored.

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "uwmmse/binary_io.hpp"
#include "uwmmse/dataset_io.hpp"
#include "uwmmse/network.hpp"

namespace uwmmse {

inline constexpr char kCheckpointMagic[5] = "IAID";
inline constexpr std::uint16_t kCheckpointVersion = 1;

inline void save_checkpoint(std::ostream& os, const ModelParams& params) {
    binary::write_magic(os, kCheckpointMagic);
    binary::write_le<std::uint16_t>(os, kCheckpointVersion);
    detail::write_config(os, params.config);
    binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.layers.size()));
    binary::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(params.variant));
    const ModelParams shape = zero_params(params.config, params.num_layers(), params.variant);
    for_each_block_pair(const_cast<ModelParams&>(shape), params, [&](const ComplexMatrix& expected, const ComplexMatrix& m) {
        if (expected.rows() != m.rows() || expected.cols() != m.cols()) {
            throw ShapeMismatch("save_checkpoint: parameter block has shape " + shape_string(m) + ", expected " +
                                shape_string(expected));
        }
        binary::write_matrix(os, m);
    });
}

inline ModelParams load_checkpoint(std::istream& is) {
    binary::expect_magic(is, kCheckpointMagic);
    const auto version = binary::read_le<std::uint16_t>(is);
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const SystemConfig config = detail::read_config(is);
    const auto layers = binary::read_le<std::uint32_t>(is);
    if (layers == 0 || layers > 1024) throw FormatError("implausible layer count in checkpoint");
    const auto variant = binary::read_le<std::uint8_t>(is);
    if (variant > 1) throw FormatError("unknown variant tag in checkpoint");
    ModelParams p = zero_params(config, static_cast<int>(layers), static_cast<Variant>(variant));
    for_each_block(p, [&](ComplexMatrix& m) { m = binary::read_matrix(is, m.rows(), m.cols()); });
    return p;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    save_checkpoint(os, params);
    if (!os) throw IoError("write failed for " + path.string());
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return load_checkpoint(is);
}

} // namespace uwmmse
