#pragma once

// Model file layout, all integers and reals little-endian:
//
//   "SCM1" | u16 version
//   u32 d | u32 m | u32 layers | per layer: u32 in, u32 out, u8 activation, f64 brelu bound, u8 weight mode
//   u8 mechanism tag (0 zero, 1 linear, 2 external)
//     linear:   p (d x m, row-major f64) | u (m f64)
//     external: u32 name length | name bytes
//   per layer: scales (out f64) | biases (out f64) |
//              binary: ceil(in*out / 8) packed sign bytes; real: in x out row-major f64
//   readout (m x T row-major f64)
//   norm: input min (d) | input max (d) | target min (m) | target max (m)
//   meta: u64 seed | u32 config length | config bytes
//   u32 CRC-32 of every preceding byte

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <zlib.h>

#include "scm/error.hpp"
#include "scm/model.hpp"

namespace scm {

inline constexpr char model_magic[4] = {'S', 'C', 'M', '1'};
inline constexpr std::uint16_t model_format_version = 1;

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) { put_le(v, 2); }
    void u32(std::uint32_t v) { put_le(v, 4); }
    void u64(std::uint64_t v) { put_le(v, 8); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes_.insert(bytes_.end(), p, p + n);
    }
    void count(Eigen::Index n) {
        if (n < 0 || n > static_cast<Eigen::Index>(UINT32_MAX)) throw ValidationError("serialize: count out of range");
        u32(static_cast<std::uint32_t>(n));
    }
    void reals(const Vector& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
    }
    void reals_row_major(const Matrix& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    void put_le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return size_ - pos_; }

    void need(std::size_t n) const {
        if (n > remaining())
            throw FormatError(FormatErrorKind::Truncated, "need " + std::to_string(n) + " bytes at offset " +
                                                              std::to_string(pos_) + ", " +
                                                              std::to_string(remaining()) + " available");
    }
    std::uint64_t le(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    double f64() { return std::bit_cast<double>(le(8)); }
    Eigen::Index count() { return static_cast<Eigen::Index>(u32()); }

    Vector reals(Eigen::Index n) {
        need(static_cast<std::size_t>(n) * 8);
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = f64();
        return v;
    }
    Matrix reals_row_major(Eigen::Index rows, Eigen::Index cols) {
        need(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 8);
        Matrix m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f64();
        return m;
    }
    std::vector<std::uint8_t> bytes(std::size_t n) {
        need(n);
        std::vector<std::uint8_t> out(data_ + pos_, data_ + pos_ + n);
        pos_ += n;
        return out;
    }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = ::crc32(crc, data, chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

/// Encodes a model in the SCM1 layout.
inline std::vector<std::uint8_t> serialize_bytes(const ScmModel& model) {
    model.validate();
    detail::ByteWriter w;
    w.raw(model_magic, 4);
    w.u16(model_format_version);
    w.count(model.input_dim);
    w.count(model.output_dim);
    w.count(static_cast<Eigen::Index>(model.layers.size()));
    for (const auto& layer : model.layers) {
        w.count(layer.in_dim());
        w.count(layer.out_dim());
        w.u8(static_cast<std::uint8_t>(layer.activation.kind));
        w.f64(layer.activation.bound);
        w.u8(static_cast<std::uint8_t>(layer.mode()));
    }

    std::visit(
        [&](const auto& mech) {
            using T = std::decay_t<decltype(mech)>;
            if constexpr (std::is_same_v<T, ZeroMechanism>) {
                w.u8(0);
            } else if constexpr (std::is_same_v<T, LinearMechanism>) {
                w.u8(1);
                w.reals_row_major(mech.p);
                w.reals(mech.u);
            } else {
                w.u8(2);
                w.count(static_cast<Eigen::Index>(mech.name.size()));
                w.raw(mech.name.data(), mech.name.size());
            }
        },
        model.mechanism);

    for (const auto& layer : model.layers) {
        w.reals(layer.scales());
        w.reals(layer.biases);
        if (const auto* bin = std::get_if<BinaryWeightMatrix>(&layer.weights)) {
            w.raw(bin->packed().data(), bin->packed().size());
        } else {
            w.reals_row_major(std::get<RealWeightMatrix>(layer.weights).weights);
        }
    }

    w.reals_row_major(model.readout);
    w.reals(model.norm.input_min);
    w.reals(model.norm.input_max);
    w.reals(model.norm.target_min);
    w.reals(model.norm.target_max);
    w.u64(model.meta.seed);
    w.count(static_cast<Eigen::Index>(model.meta.config.size()));
    w.raw(model.meta.config.data(), model.meta.config.size());

    auto& bytes = w.bytes();
    w.u32(detail::crc32_of(bytes.data(), bytes.size()));
    return std::move(bytes);
}

namespace detail {

inline bool trailing_crc_matches(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8) return false;
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + static_cast<std::size_t>(i)]) << (8 * i);
    return stored == crc32_of(bytes.data(), body);
}

inline ScmModel parse_model(const std::vector<std::uint8_t>& bytes, const MechanismRegistry& registry);

}  // namespace detail

/// Decodes an SCM1 byte stream. External mechanisms are resolved through `registry`;
/// an unregistered name still loads but cannot be evaluated.
inline ScmModel deserialize_bytes(const std::vector<std::uint8_t>& bytes,
                                  const MechanismRegistry& registry = MechanismRegistry::global()) {
    try {
        return detail::parse_model(bytes, registry);
    } catch (const FormatError& e) {
        // Structurally inconsistent content under a bad checksum is corruption.
        if (e.kind() == FormatErrorKind::Malformed && !detail::trailing_crc_matches(bytes))
            throw FormatError(FormatErrorKind::Checksum, std::string("stored CRC-32 does not match contents (") + e.what() + ")");
        throw;
    }
}

inline ScmModel detail::parse_model(const std::vector<std::uint8_t>& bytes, const MechanismRegistry& registry) {
    if (bytes.size() < 4) throw FormatError(FormatErrorKind::Truncated, "file shorter than magic");
    if (!std::equal(model_magic, model_magic + 4, bytes.begin())) throw FormatError(FormatErrorKind::BadMagic, "expected SCM1");

    detail::ByteReader r(bytes.data(), bytes.size());
    r.bytes(4);
    const std::uint16_t version = r.u16();
    if (version != model_format_version)
        throw FormatError(FormatErrorKind::VersionMismatch,
                          "file version " + std::to_string(version) + ", reader supports " + std::to_string(model_format_version));

    ScmModel model;
    model.input_dim = r.count();
    model.output_dim = r.count();
    const Eigen::Index layer_count = r.count();
    r.need(static_cast<std::size_t>(layer_count) * 18);

    struct Shape {
        Eigen::Index in, out;
        Activation act;
        WeightMode mode;
    };
    std::vector<Shape> shapes;
    for (Eigen::Index k = 0; k < layer_count; ++k) {
        Shape s{};
        s.in = r.count();
        s.out = r.count();
        const std::uint8_t tag = r.u8();
        if (tag > static_cast<std::uint8_t>(ActivationKind::HardLimit))
            throw FormatError(FormatErrorKind::Malformed, "unknown activation tag " + std::to_string(tag));
        s.act = {static_cast<ActivationKind>(tag), r.f64()};
        const std::uint8_t mode = r.u8();
        if (mode > 1) throw FormatError(FormatErrorKind::Malformed, "unknown weight mode " + std::to_string(mode));
        s.mode = static_cast<WeightMode>(mode);
        shapes.push_back(s);
    }

    const std::uint8_t mech_tag = r.u8();
    if (mech_tag == 0) {
        model.mechanism = ZeroMechanism{};
    } else if (mech_tag == 1) {
        LinearMechanism lin;
        lin.p = r.reals_row_major(model.input_dim, model.output_dim);
        lin.u = r.reals(model.output_dim);
        for (Eigen::Index k = 0; k < lin.p.rows(); ++k) lin.selected.push_back((lin.p.row(k).array() != 0.0).any());
        model.mechanism = std::move(lin);
    } else if (mech_tag == 2) {
        const auto len = static_cast<std::size_t>(r.count());
        auto name_bytes = r.bytes(len);
        ExternalMechanism ext{std::string(name_bytes.begin(), name_bytes.end()), nullptr};
        ext.plugin = registry.find(ext.name);
        model.mechanism = std::move(ext);
    } else {
        throw FormatError(FormatErrorKind::Malformed, "unknown mechanism tag " + std::to_string(mech_tag));
    }

    for (const auto& s : shapes) {
        Layer layer;
        layer.activation = s.act;
        Vector scales = r.reals(s.out);
        layer.biases = r.reals(s.out);
        try {
            if (s.mode == WeightMode::Binary) {
                auto packed = r.bytes(BinaryWeightMatrix::byte_count(s.in * s.out));
                layer.weights = BinaryWeightMatrix::from_packed(s.in, s.out, std::move(packed), std::move(scales));
            } else {
                layer.weights = RealWeightMatrix{r.reals_row_major(s.in, s.out), std::move(scales)};
            }
        } catch (const ValidationError& e) {
            throw FormatError(FormatErrorKind::Malformed, e.what());
        }
        model.layers.push_back(std::move(layer));
    }

    model.readout = r.reals_row_major(model.output_dim, model.hidden_count());
    model.norm.input_min = r.reals(model.input_dim);
    model.norm.input_max = r.reals(model.input_dim);
    model.norm.target_min = r.reals(model.output_dim);
    model.norm.target_max = r.reals(model.output_dim);
    model.meta.seed = r.u64();
    const auto cfg_len = static_cast<std::size_t>(r.count());
    auto cfg = r.bytes(cfg_len);
    model.meta.config.assign(cfg.begin(), cfg.end());

    const std::size_t body = r.offset();
    const std::uint32_t stored = r.u32();
    if (r.remaining() != 0)
        throw FormatError(FormatErrorKind::Malformed, std::to_string(r.remaining()) + " trailing bytes after checksum");
    const std::uint32_t actual = detail::crc32_of(bytes.data(), body);
    if (stored != actual) throw FormatError(FormatErrorKind::Checksum, "stored CRC-32 does not match contents");

    try {
        model.validate();
    } catch (const ValidationError& e) {
        throw FormatError(FormatErrorKind::Malformed, e.what());
    }
    return model;
}

inline void serialize(const ScmModel& model, const std::string& path) {
    const auto bytes = serialize_bytes(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrorKind::Io, "cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatErrorKind::Io, "write to '" + path + "' failed");
}

inline ScmModel deserialize(const std::string& path, const MechanismRegistry& registry = MechanismRegistry::global()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatErrorKind::Io, "cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_bytes(bytes, registry);
}

}  // namespace scm
