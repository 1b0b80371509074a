#pragma once

// Image persistence.
//
// PNG: 8-bit gray or RGB, intensities mapped to [0,1]; writing clamps and rounds.
// Raw planes, all little-endian:
//   char[8] magic "TURBRAW1"
//   u32     height, u32 width, u32 channels
//   f32[channels*height*width] planes, channel-major, row-major within a plane
// Raw files are exact for values already representable as f32.

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "turbsim/error.hpp"
#include "turbsim/image.hpp"
#include "turbsim/psf_artifact.hpp"

namespace turbsim {

inline ImageBuffer read_png(const std::string& path) {
    png_image im{};
    im.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&im, path.c_str()))
        throw Error(ErrorKind::io, "cannot read PNG " + path + ": " + im.message);
    const bool color = (im.format & PNG_FORMAT_FLAG_COLOR) != 0;
    im.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int c = color ? 3 : 1;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(im));
    if (!png_image_finish_read(&im, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = im.message;
        png_image_free(&im);
        throw Error(ErrorKind::format, "bad PNG " + path + ": " + msg);
    }
    const int h = static_cast<int>(im.height), w = static_cast<int>(im.width);
    ImageBuffer out(h, w, c);
    out.colorspace = color ? ColorSpace::rgb : ColorSpace::gray;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int ch = 0; ch < c; ++ch)
                out.at(ch, i, j) = buf[(static_cast<std::size_t>(i) * w + j) * c + ch] / 255.0;
    return out;
}

inline std::uint8_t to_u8(double v) {
    if (!(v > 0.0)) return 0;
    if (v >= 1.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

inline void write_png(const std::string& path, const ImageBuffer& img) {
    require(img.channels == 1 || img.channels == 3, ErrorKind::shape, "PNG export needs 1 or 3 channels");
    png_image im{};
    im.version = PNG_IMAGE_VERSION;
    im.width = static_cast<png_uint_32>(img.width);
    im.height = static_cast<png_uint_32>(img.height);
    im.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int c = img.channels;
    std::vector<png_byte> buf(static_cast<std::size_t>(img.height) * img.width * c);
    for (int i = 0; i < img.height; ++i)
        for (int j = 0; j < img.width; ++j)
            for (int ch = 0; ch < c; ++ch)
                buf[(static_cast<std::size_t>(i) * img.width + j) * c + ch] = to_u8(img.at(ch, i, j));
    if (!png_image_write_to_file(&im, path.c_str(), 0, buf.data(), 0, nullptr))
        throw Error(ErrorKind::io, "cannot write PNG " + path + ": " + im.message);
}

inline constexpr std::array<char, 8> kRawMagic{'T', 'U', 'R', 'B', 'R', 'A', 'W', '1'};

inline std::string encode_raw(const ImageBuffer& img) {
    detail::LeWriter w;
    w.bytes(kRawMagic.data(), kRawMagic.size());
    w.u32(static_cast<std::uint32_t>(img.height));
    w.u32(static_cast<std::uint32_t>(img.width));
    w.u32(static_cast<std::uint32_t>(img.channels));
    for (double v : img.data) w.f32(v);
    return w.str();
}

inline ImageBuffer decode_raw(const std::string& bytes) {
    detail::LeReader r(bytes);
    std::array<char, 8> magic{};
    r.bytes(magic.data(), magic.size());
    require(magic == kRawMagic, ErrorKind::format, "not a raw image (bad magic)");
    const auto h = r.u32(), w = r.u32(), c = r.u32();
    require(h > 0 && w > 0 && c > 0 && h <= 1u << 16 && w <= 1u << 16 && c <= 16, ErrorKind::format,
            "raw image header out of range");
    ImageBuffer img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    img.colorspace = c == 3 ? ColorSpace::rgb : ColorSpace::gray;
    for (auto& v : img.data) v = r.f32();
    require(r.done(), ErrorKind::format, "trailing bytes in raw image");
    return img;
}

inline void write_raw(const std::string& path, const ImageBuffer& img) { write_file_bytes(path, encode_raw(img)); }
inline ImageBuffer read_raw(const std::string& path) { return decode_raw(read_file_bytes(path)); }

/// Rounds every sample to the nearest f32, i.e. what a raw round-trip stores.
inline ImageBuffer round_to_f32(ImageBuffer img) {
    for (auto& v : img.data) v = static_cast<double>(static_cast<float>(v));
    return img;
}

/// Dispatches on extension: ".png" or anything else as raw planes.
inline ImageBuffer read_image(const std::string& path) {
    const auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext == ".png" ? read_png(path) : read_raw(path);
}

inline void write_image(const std::string& path, const ImageBuffer& img) {
    const auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png")
        write_png(path, img);
    else
        write_raw(path, img);
}

/// Center crop to h x w.
inline ImageBuffer center_crop(const ImageBuffer& img, int h, int w) {
    require(img.height >= h && img.width >= w, ErrorKind::shape,
            "source image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                " smaller than raster " + std::to_string(h) + "x" + std::to_string(w));
    const int oi = (img.height - h) / 2, oj = (img.width - w) / 2;
    ImageBuffer out(h, w, img.channels);
    out.colorspace = img.colorspace;
    for (int c = 0; c < img.channels; ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) out.at(c, i, j) = img.at(c, i + oi, j + oj);
    return out;
}

}  // namespace turbsim
