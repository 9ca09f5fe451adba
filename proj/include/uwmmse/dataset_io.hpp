#pragma once

// Dataset file layout (all little-endian):
//   "UWMM" | u16 version | u32 Nt, Nr, d, K | f64 P_T | f64 sigma[K] | f64 omega[K]
//   | u64 sample count
//   then per sample: u64 seed | u8 split | K matrices Nr x Nt of (re, im) f64, row-major.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "uwmmse/binary_io.hpp"
#include "uwmmse/scenario.hpp"

namespace uwmmse {

inline constexpr char kDatasetMagic[5] = "UWMM";
inline constexpr std::uint16_t kDatasetVersion = 1;

namespace detail {

inline void write_config(std::ostream& os, const SystemConfig& c) {
    binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.nt));
    binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.nr));
    binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.d));
    binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.k));
    binary::write_le<double>(os, c.total_power);
    for (double s : c.sigma) binary::write_le<double>(os, s);
    for (double w : c.omega) binary::write_le<double>(os, w);
}

inline SystemConfig read_config(std::istream& is) {
    SystemConfig c;
    c.nt = static_cast<int>(binary::read_le<std::uint32_t>(is));
    c.nr = static_cast<int>(binary::read_le<std::uint32_t>(is));
    c.d = static_cast<int>(binary::read_le<std::uint32_t>(is));
    c.k = static_cast<int>(binary::read_le<std::uint32_t>(is));
    if (c.nt <= 0 || c.nr <= 0 || c.d <= 0 || c.k < 0 || c.nt > (1 << 16) || c.nr > (1 << 16) || c.k > (1 << 20)) {
        throw FormatError("implausible scenario dimensions in header");
    }
    c.total_power = binary::read_le<double>(is);
    c.sigma.resize(static_cast<std::size_t>(c.k));
    c.omega.resize(static_cast<std::size_t>(c.k));
    for (auto& s : c.sigma) s = binary::read_le<double>(is);
    for (auto& w : c.omega) w = binary::read_le<double>(is);
    return c;
}

} // namespace detail

inline void write_dataset(std::ostream& os, const Dataset& ds) {
    if (ds.splits.size() != ds.samples.size()) throw DegenerateInput("write_dataset: one split label per sample required");
    binary::write_magic(os, kDatasetMagic);
    binary::write_le<std::uint16_t>(os, kDatasetVersion);
    detail::write_config(os, ds.config);
    binary::write_le<std::uint64_t>(os, ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const ChannelSample& s = ds.samples[i];
        if (s.h.size() != static_cast<std::size_t>(ds.config.k)) throw ShapeMismatch("write_dataset: user count mismatch");
        binary::write_le<std::uint64_t>(os, s.seed);
        binary::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(ds.splits[i]));
        for (const auto& h : s.h) {
            if (h.rows() != ds.config.nr || h.cols() != ds.config.nt) throw ShapeMismatch("write_dataset: channel shape mismatch");
            binary::write_matrix(os, h);
        }
    }
}

inline Dataset read_dataset(std::istream& is) {
    binary::expect_magic(is, kDatasetMagic);
    const auto version = binary::read_le<std::uint16_t>(is);
    if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
    Dataset ds;
    ds.config = detail::read_config(is);
    const auto count = binary::read_le<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < count; ++i) {
        ChannelSample s;
        s.seed = binary::read_le<std::uint64_t>(is);
        const auto split = binary::read_le<std::uint8_t>(is);
        if (split > 2) throw FormatError("invalid split label");
        for (int user = 0; user < ds.config.k; ++user) {
            s.h.push_back(binary::read_matrix(is, ds.config.nr, ds.config.nt));
        }
        ds.samples.push_back(std::move(s));
        ds.splits.push_back(static_cast<Split>(split));
    }
    return ds;
}

inline void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    write_dataset(os, ds);
    if (!os) throw IoError("write failed for " + path.string());
}

inline Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return read_dataset(is);
}

} // namespace uwmmse
