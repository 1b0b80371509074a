#pragma once

// Binary PSF-basis artifact (basis + optional P2S surrogate).
//
// Byte layout, all little-endian:
//   char[8]  magic "TURBPSF1"
//   u32      format version (1)
//   u32      K, u32 s, u32 pupil_n
//   f64      dr0_lo, f64 dr0_hi, f64 pixel_scale (lambda/D per pixel)
//   f32[K]   captured-variance fractions
//   f32[K*s*s] kernels, kernel-major, row-major within a kernel
//   u32      has_surrogate (0 or 1)
//   if has_surrogate:
//     u32    n_features (67: bias, a_4..a_36, a_4^2..a_36^2)
//     f64    train dr0_lo, f64 train dr0_hi, f64 ridge, f64 held-out median error
//     f32[n_features*K] weights, feature-major
//
// The artifact identifier is the FNV-1a 64-bit hash of the whole file.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "turbsim/error.hpp"
#include "turbsim/psf.hpp"

namespace turbsim {

inline constexpr std::array<char, 8> kPsfArtifactMagic{'T', 'U', 'R', 'B', 'P', 'S', 'F', '1'};
inline constexpr std::uint32_t kPsfArtifactVersion = 1;

struct PsfArtifact {
    PsfBasis basis;
    std::optional<P2sMap> map;
};

inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xF];
    return s;
}

namespace detail {

class LeWriter {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    template <class T>
    void scalar(T v) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        if constexpr (std::endian::native == std::endian::big)
            for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        bytes(b, sizeof(T));
    }
    void u32(std::uint32_t v) { scalar(v); }
    void f64(double v) { scalar(v); }
    void f32(double v) { scalar(static_cast<float>(v)); }
    const std::string& str() const { return out_; }

private:
    std::string out_;
};

class LeReader {
public:
    explicit LeReader(const std::string& s) : s_(s) {}
    void bytes(void* p, std::size_t n) {
        require(pos_ + n <= s_.size(), ErrorKind::format, "PSF artifact truncated");
        std::memcpy(p, s_.data() + pos_, n);
        pos_ += n;
    }
    template <class T>
    T scalar() {
        unsigned char b[sizeof(T)];
        bytes(b, sizeof(T));
        if constexpr (std::endian::native == std::endian::big)
            for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        T v;
        std::memcpy(&v, b, sizeof(T));
        return v;
    }
    std::uint32_t u32() { return scalar<std::uint32_t>(); }
    double f64() { return scalar<double>(); }
    double f32() { return static_cast<double>(scalar<float>()); }
    bool done() const { return pos_ == s_.size(); }

private:
    const std::string& s_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const PsfArtifact& art) {
    const auto& b = art.basis;
    detail::LeWriter w;
    w.bytes(kPsfArtifactMagic.data(), kPsfArtifactMagic.size());
    w.u32(kPsfArtifactVersion);
    w.u32(static_cast<std::uint32_t>(b.num_kernels));
    w.u32(static_cast<std::uint32_t>(b.kernel_size));
    w.u32(static_cast<std::uint32_t>(b.pupil_n));
    w.f64(b.dr0_lo);
    w.f64(b.dr0_hi);
    w.f64(b.pixel_scale);
    for (double v : b.variance_fraction) w.f32(v);
    for (double v : b.kernels) w.f32(v);
    w.u32(art.map ? 1 : 0);
    if (art.map) {
        const auto& m = *art.map;
        require(m.mode == P2sMode::surrogate, ErrorKind::domain, "only surrogate maps are persisted");
        w.u32(kNumP2sFeatures);
        w.f64(m.dr0_lo);
        w.f64(m.dr0_hi);
        w.f64(m.ridge);
        w.f64(m.heldout_median_error);
        for (double v : m.weights) w.f32(v);
    }
    return w.str();
}

/// Parses an artifact; a stored surrogate is re-verified against its
/// recorded error bound.
inline PsfArtifact deserialize_psf_artifact(const std::string& bytes) {
    detail::LeReader r(bytes);
    std::array<char, 8> magic{};
    r.bytes(magic.data(), magic.size());
    require(magic == kPsfArtifactMagic, ErrorKind::format, "not a PSF basis artifact (bad magic)");
    const auto version = r.u32();
    require(version == kPsfArtifactVersion, ErrorKind::version,
            "unsupported PSF artifact version " + std::to_string(version));
    PsfArtifact art;
    auto& b = art.basis;
    b.num_kernels = static_cast<int>(r.u32());
    b.kernel_size = static_cast<int>(r.u32());
    b.pupil_n = static_cast<int>(r.u32());
    require(b.num_kernels > 0 && b.kernel_size > 0 && b.kernel_size % 2 == 1 && b.num_kernels <= 1 << 16 &&
                b.kernel_size <= 1 << 10,
            ErrorKind::format, "PSF artifact header out of range");
    b.dr0_lo = r.f64();
    b.dr0_hi = r.f64();
    b.pixel_scale = r.f64();
    b.variance_fraction.resize(b.num_kernels);
    for (auto& v : b.variance_fraction) v = r.f32();
    b.kernels.resize(static_cast<std::size_t>(b.num_kernels) * b.kernel_len());
    for (auto& v : b.kernels) v = r.f32();
    const auto has = r.u32();
    require(has <= 1, ErrorKind::format, "bad surrogate flag");
    if (has) {
        P2sMap m;
        m.mode = P2sMode::surrogate;
        m.num_kernels = b.num_kernels;
        m.kernel_size = b.kernel_size;
        const auto nf = r.u32();
        require(nf == kNumP2sFeatures, ErrorKind::version, "unsupported surrogate feature count");
        m.dr0_lo = r.f64();
        m.dr0_hi = r.f64();
        m.ridge = r.f64();
        m.heldout_median_error = r.f64();
        m.weights.resize(static_cast<std::size_t>(nf) * b.num_kernels);
        for (auto& v : m.weights) v = r.f32();
        require(std::isfinite(m.heldout_median_error) && m.heldout_median_error <= kSurrogateErrorBound,
                ErrorKind::fit,
                "stored surrogate records held-out error " + std::to_string(m.heldout_median_error) +
                    " above bound " + std::to_string(kSurrogateErrorBound));
        art.map = std::move(m);
    }
    require(r.done(), ErrorKind::format, "trailing bytes in PSF artifact");
    return art;
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::io, "cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::io, "cannot write " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(f), ErrorKind::io, "write failed: " + path);
}

inline std::string artifact_hash(const PsfArtifact& art) { return hex64(fnv1a64(serialize(art))); }

inline void save_psf_artifact(const std::string& path, const PsfArtifact& art) {
    write_file_bytes(path, serialize(art));
}

inline PsfArtifact load_psf_artifact(const std::string& path) {
    return deserialize_psf_artifact(read_file_bytes(path));
}

}  // namespace turbsim
