#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "turbsim/error.hpp"

namespace turbsim {

enum class ColorSpace { gray, rgb };

/// H x W x C real image stored as C contiguous row-major planes.
/// Values are nominally in [0,1]; nothing here clamps them.
struct ImageBuffer {
    int height = 0;
    int width = 0;
    int channels = 1;
    ColorSpace colorspace = ColorSpace::gray;
    std::vector<double> data;

    ImageBuffer() = default;
    ImageBuffer(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c), colorspace(c == 3 ? ColorSpace::rgb : ColorSpace::gray),
          data(static_cast<std::size_t>(h) * w * c, fill) {
        require(h > 0 && w > 0, ErrorKind::shape, "image dimensions must be positive");
        require(c == 1 || c == 3, ErrorKind::shape, "image must have 1 or 3 channels");
    }

    std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return data.size(); }

    double& at(int c, int i, int j) { return data[(static_cast<std::size_t>(c) * height + i) * width + j]; }
    double at(int c, int i, int j) const { return data[(static_cast<std::size_t>(c) * height + i) * width + j]; }

    std::span<double> plane(int c) { return {data.data() + c * plane_size(), plane_size()}; }
    std::span<const double> plane(int c) const { return {data.data() + c * plane_size(), plane_size()}; }

    bool same_shape(const ImageBuffer& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
    require(a.same_shape(b), ErrorKind::shape,
            std::string(what) + ": shape mismatch " + std::to_string(a.height) + "x" + std::to_string(a.width) + "x" +
                std::to_string(a.channels) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) +
                "x" + std::to_string(b.channels));
}

inline double dot(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t n = 0; n < a.data.size(); ++n) s += a.data[n] * b.data[n];
    return s;
}

inline double norm(const ImageBuffer& a) { return std::sqrt(dot(a, a)); }

}  // namespace turbsim
