#pragma once

// Image quality metrics. Intensities are assumed to lie in [0, data_range].

#include <cmath>
#include <limits>
#include <vector>

#include "turbsim/error.hpp"
#include "turbsim/image.hpp"

namespace turbsim {

inline double mse(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b, "mse");
    require(!a.data.empty(), ErrorKind::shape, "mse: empty image");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

/// Identical images give +infinity.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b, double data_range = 1.0) {
    require(data_range > 0.0, ErrorKind::domain, "psnr: data_range must be positive");
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / m);
}

struct SsimOptions {
    double data_range = 1.0;
    double k1 = 0.01;
    double k2 = 0.03;
    double sigma = 1.5;
    int window = 11;
};

namespace detail {

inline std::vector<double> gaussian_window_1d(int n, double sigma) {
    std::vector<double> w(n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = i - (n - 1) / 2.0;
        w[i] = std::exp(-x * x / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable "valid" filtering of a row-major h x w plane.
inline std::vector<double> filter_valid(const double* src, int h, int w, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int ow = w - n + 1, oh = h - n + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < ow; ++j) {
            double s = 0.0;
            for (int t = 0; t < n; ++t) s += k[t] * src[static_cast<std::size_t>(i) * w + j + t];
            tmp[static_cast<std::size_t>(i) * ow + j] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
            double s = 0.0;
            for (int t = 0; t < n; ++t) s += k[t] * tmp[static_cast<std::size_t>(i + t) * ow + j];
            out[static_cast<std::size_t>(i) * ow + j] = s;
        }
    return out;
}

}  // namespace detail

/// Mean SSIM over the valid region and over channels (Gaussian window).
inline double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimOptions& opt = {}) {
    require_same_shape(a, b, "ssim");
    require(opt.window >= 1 && opt.window % 2 == 1, ErrorKind::domain, "ssim: window must be odd");
    require(a.height >= opt.window && a.width >= opt.window, ErrorKind::shape,
            "ssim: image smaller than the " + std::to_string(opt.window) + "x" + std::to_string(opt.window) +
                " window");
    const auto k = detail::gaussian_window_1d(opt.window, opt.sigma);
    const double c1 = (opt.k1 * opt.data_range) * (opt.k1 * opt.data_range);
    const double c2 = (opt.k2 * opt.data_range) * (opt.k2 * opt.data_range);
    const std::size_t hw = a.plane_size();
    double total = 0.0;
    std::size_t count = 0;
    std::vector<double> xx(hw), yy(hw), xy(hw);
    for (int c = 0; c < a.channels; ++c) {
        const auto x = a.plane(c);
        const auto y = b.plane(c);
        for (std::size_t i = 0; i < hw; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = detail::filter_valid(x.data(), a.height, a.width, k);
        const auto my = detail::filter_valid(y.data(), a.height, a.width, k);
        const auto sxx = detail::filter_valid(xx.data(), a.height, a.width, k);
        const auto syy = detail::filter_valid(yy.data(), a.height, a.width, k);
        const auto sxy = detail::filter_valid(xy.data(), a.height, a.width, k);
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cv = sxy[i] - mx[i] * my[i];
            total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cv + c2)) /
                     ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace turbsim
