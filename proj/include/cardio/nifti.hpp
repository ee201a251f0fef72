#pragma once

// Minimal NIfTI-1 single-file (.nii) reader and writer.
//
// Supported subset: little-endian, magic "n+1\0", vox_offset >= 352,
// datatypes uint8 (2), int16 (4) and float32 (16), identity scaling only.
// Label volumes are rank 3; probability maps are rank 4 with the class
// index as the fourth (slowest) axis.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "cardio/error.hpp"
#include "cardio/volume.hpp"

namespace cardio::nifti {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kMinVoxOffset = 352;

enum class Datatype : std::int16_t { UInt8 = 2, Int16 = 4, Float32 = 16 };

namespace offsets {
inline constexpr std::size_t sizeof_hdr = 0;
inline constexpr std::size_t dim = 40;
inline constexpr std::size_t datatype = 70;
inline constexpr std::size_t bitpix = 72;
inline constexpr std::size_t pixdim = 76;
inline constexpr std::size_t vox_offset = 108;
inline constexpr std::size_t scl_slope = 112;
inline constexpr std::size_t scl_inter = 116;
inline constexpr std::size_t magic = 344;
}  // namespace offsets

namespace detail {

inline std::uint16_t load_u16(std::span<const std::uint8_t> b, std::size_t off) {
    return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}
inline std::int16_t load_i16(std::span<const std::uint8_t> b, std::size_t off) {
    return static_cast<std::int16_t>(load_u16(b, off));
}
inline std::uint32_t load_u32(std::span<const std::uint8_t> b, std::size_t off) {
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) | (static_cast<std::uint32_t>(b[off + 3]) << 24);
}
inline float load_f32(std::span<const std::uint8_t> b, std::size_t off) {
    return std::bit_cast<float>(load_u32(b, off));
}

inline void store_u16(Bytes& b, std::size_t off, std::uint16_t v) {
    b[off] = static_cast<std::uint8_t>(v & 0xff);
    b[off + 1] = static_cast<std::uint8_t>(v >> 8);
}
inline void store_i16(Bytes& b, std::size_t off, std::int16_t v) { store_u16(b, off, static_cast<std::uint16_t>(v)); }
inline void store_u32(Bytes& b, std::size_t off, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b[off + i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xff);
}
inline void store_f32(Bytes& b, std::size_t off, float v) { store_u32(b, off, std::bit_cast<std::uint32_t>(v)); }

inline std::size_t bytes_per_value(Datatype t) {
    switch (t) {
        case Datatype::UInt8: return 1;
        case Datatype::Int16: return 2;
        case Datatype::Float32: return 4;
    }
    return 0;
}

}  // namespace detail

/// Decoded header fields that matter for this subset.
struct Header {
    int rank = 0;
    std::array<std::size_t, 4> dim{};  // dim[1..4], unused entries are 1
    VoxelSpacing spacing;
    Datatype datatype = Datatype::UInt8;
    std::size_t vox_offset = kMinVoxOffset;

    [[nodiscard]] std::size_t values() const { return dim[0] * dim[1] * dim[2] * dim[3]; }
};

inline Header parse_header(std::span<const std::uint8_t> bytes) {
    using namespace detail;
    require(bytes.size() >= kHeaderSize, Errc::Format,
            "file shorter than the 348-byte header (" + std::to_string(bytes.size()) + " bytes)");
    require(load_u32(bytes, offsets::sizeof_hdr) == kHeaderSize, Errc::Format,
            "sizeof_hdr is not 348 (wrong endianness or not NIfTI-1)");
    require(std::memcmp(bytes.data() + offsets::magic, "n+1\0", 4) == 0, Errc::Format,
            "bad magic, expected single-file \"n+1\"");

    Header h;
    const std::int16_t rank = load_i16(bytes, offsets::dim);
    require(rank >= 1 && rank <= 7, Errc::UnsupportedRank, "dim[0] out of range: " + std::to_string(rank));
    h.rank = rank;
    h.dim = {1, 1, 1, 1};
    for (int i = 1; i <= rank && i <= 4; ++i) {
        const std::int16_t d = load_i16(bytes, offsets::dim + 2 * i);
        require(d >= 1, Errc::Format, "dim[" + std::to_string(i) + "] must be positive");
        h.dim[i - 1] = static_cast<std::size_t>(d);
    }
    for (int i = 5; i <= rank; ++i)
        require(load_i16(bytes, offsets::dim + 2 * i) == 1, Errc::UnsupportedRank,
                "dimensions beyond the fourth must be 1");

    const std::int16_t dt = load_i16(bytes, offsets::datatype);
    if (dt != 2 && dt != 4 && dt != 16)
        fail(Errc::UnsupportedDatatype, "datatype code " + std::to_string(dt) + " (supported: 2, 4, 16)");
    h.datatype = static_cast<Datatype>(dt);
    const std::int16_t bitpix = load_i16(bytes, offsets::bitpix);
    require(static_cast<std::size_t>(bitpix) == 8 * bytes_per_value(h.datatype), Errc::Format,
            "bitpix " + std::to_string(bitpix) + " inconsistent with datatype");

    h.spacing = {load_f32(bytes, offsets::pixdim + 4), load_f32(bytes, offsets::pixdim + 8),
                 load_f32(bytes, offsets::pixdim + 12)};
    require(h.spacing.valid(), Errc::Format, "pixdim[1..3] must be positive and finite");

    const float vox = load_f32(bytes, offsets::vox_offset);
    require(std::isfinite(vox) && vox >= static_cast<float>(kMinVoxOffset) && vox == std::floor(vox) &&
                vox < 1.0e9f,
            Errc::Format, "vox_offset must be an integer >= 352");
    h.vox_offset = static_cast<std::size_t>(vox);

    const float slope = load_f32(bytes, offsets::scl_slope);
    const float inter = load_f32(bytes, offsets::scl_inter);
    require((slope == 0.0f || slope == 1.0f) && inter == 0.0f, Errc::Format,
            "non-identity scl_slope/scl_inter is not supported for label data");
    return h;
}

namespace detail {

/// Payload values as doubles in file order; validates the length.
inline std::vector<double> read_payload(std::span<const std::uint8_t> bytes, const Header& h) {
    const std::size_t width = bytes_per_value(h.datatype);
    const std::size_t n = h.values();
    const std::size_t available = bytes.size() > h.vox_offset ? bytes.size() - h.vox_offset : 0;
    require(available / width >= n, Errc::LengthMismatch,
            "payload has " + std::to_string(available) + " bytes, header needs " + std::to_string(n * width));
    std::vector<double> out(n);
    const std::size_t base = h.vox_offset;
    for (std::size_t i = 0; i < n; ++i) {
        switch (h.datatype) {
            case Datatype::UInt8: out[i] = bytes[base + i]; break;
            case Datatype::Int16: out[i] = load_i16(bytes, base + 2 * i); break;
            case Datatype::Float32: out[i] = load_f32(bytes, base + 4 * i); break;
        }
    }
    return out;
}

inline Bytes make_header(int rank, std::array<std::size_t, 4> dim, VoxelSpacing spacing, Datatype dt) {
    Bytes b(kMinVoxOffset, 0);
    store_u32(b, offsets::sizeof_hdr, kHeaderSize);
    store_i16(b, offsets::dim, static_cast<std::int16_t>(rank));
    for (int i = 1; i <= 7; ++i) {
        const std::size_t d = i <= 4 ? dim[i - 1] : 1;
        require(d >= 1 && d <= 32767, Errc::InvalidArgument, "dimension does not fit NIfTI-1 int16");
        store_i16(b, offsets::dim + 2 * i, static_cast<std::int16_t>(d));
    }
    store_i16(b, offsets::datatype, static_cast<std::int16_t>(dt));
    store_i16(b, offsets::bitpix, static_cast<std::int16_t>(8 * bytes_per_value(dt)));
    store_f32(b, offsets::pixdim, 1.0f);
    store_f32(b, offsets::pixdim + 4, static_cast<float>(spacing.dx));
    store_f32(b, offsets::pixdim + 8, static_cast<float>(spacing.dy));
    store_f32(b, offsets::pixdim + 12, static_cast<float>(spacing.dz));
    for (int i = 4; i <= 7; ++i) store_f32(b, offsets::pixdim + 4 * i, 1.0f);
    store_f32(b, offsets::vox_offset, static_cast<float>(kMinVoxOffset));
    store_f32(b, offsets::scl_slope, 1.0f);
    b[123] = 2;  // xyzt_units: NIFTI_UNITS_MM
    std::memcpy(b.data() + offsets::magic, "n+1\0", 4);
    return b;
}

inline void append_value(Bytes& b, Datatype dt, double v) {
    const std::size_t off = b.size();
    b.resize(off + bytes_per_value(dt));
    switch (dt) {
        case Datatype::UInt8: b[off] = static_cast<std::uint8_t>(v); break;
        case Datatype::Int16: store_i16(b, off, static_cast<std::int16_t>(v)); break;
        case Datatype::Float32: store_f32(b, off, static_cast<float>(v)); break;
    }
}

}  // namespace detail

/// Decode a rank-3 label volume. Float payloads must hold integral values (within 1e-3).
inline LabelVolume read_volume(std::span<const std::uint8_t> bytes) {
    const Header h = parse_header(bytes);
    require(h.rank == 3, Errc::UnsupportedRank, "label volume needs dim[0] = 3, got " + std::to_string(h.rank));
    const auto raw = detail::read_payload(bytes, h);
    std::vector<std::uint8_t> labels(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double v = raw[i];
        if (h.datatype == Datatype::Float32) {
            const double r = std::round(v);
            require(std::isfinite(v) && std::abs(v - r) <= 1e-3, Errc::InvalidLabel,
                    "non-integral label value at voxel " + std::to_string(i));
            v = r;
        }
        require(v >= 0.0 && v < static_cast<double>(kTissueClassCount), Errc::InvalidLabel,
                "label value " + std::to_string(static_cast<long long>(v)) + " at voxel " + std::to_string(i));
        labels[i] = static_cast<std::uint8_t>(v);
    }
    return LabelVolume({h.dim[0], h.dim[1], h.dim[2]}, h.spacing, std::move(labels));
}

inline Bytes write_volume(const LabelVolume& v, Datatype dt = Datatype::UInt8) {
    const auto& d = v.dims();
    Bytes b = detail::make_header(3, {d.nx, d.ny, d.nz, 1}, v.spacing(), dt);
    b.reserve(b.size() + v.size() * detail::bytes_per_value(dt));
    for (auto label : v.data()) detail::append_value(b, dt, label);
    return b;
}

/// Rank-4 float32 map; the fourth axis indexes classes.
inline ProbabilityMap read_probability_map(std::span<const std::uint8_t> bytes) {
    const Header h = parse_header(bytes);
    require(h.rank == 4, Errc::UnsupportedRank, "probability map needs dim[0] = 4, got " + std::to_string(h.rank));
    require(h.datatype == Datatype::Float32, Errc::UnsupportedDatatype, "probability maps must be float32");
    const auto raw = detail::read_payload(bytes, h);
    const Dims dims{h.dim[0], h.dim[1], h.dim[2]};
    const std::size_t classes = h.dim[3];
    const std::size_t n = dims.count();
    std::vector<double> p(n * classes);
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t v = 0; v < n; ++v) p[v * classes + c] = raw[c * n + v];
    return ProbabilityMap(dims, classes, std::move(p));
}

inline Bytes write_probability_map(const ProbabilityMap& p, VoxelSpacing spacing = {}) {
    const auto& d = p.dims();
    Bytes b = detail::make_header(4, {d.nx, d.ny, d.nz, p.classes()}, spacing, Datatype::Float32);
    const std::size_t n = p.voxels();
    for (std::size_t c = 0; c < p.classes(); ++c)
        for (std::size_t v = 0; v < n; ++v) detail::append_value(b, Datatype::Float32, p.voxel(v)[c]);
    return b;
}

inline Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::NotFound, "cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::Io, "short write to " + path.string());
}

}  // namespace cardio::nifti
