#pragma once

// Protocol representation, Kolmogorov scalars, Noll-indexed Zernike
// polynomials and the Kolmogorov modal covariance of Zernike coefficients.

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "turbsim/error.hpp"
#include "turbsim/keyvalue.hpp"

namespace turbsim {

inline constexpr double kDefaultWavelength = 525e-9;
inline constexpr int kNumZernike = 36;

/// Camera + atmosphere parameters that define one degradation distribution.
struct TurbulenceProtocol {
    double distance_m = 400.0;
    double focal_length_m = 1.5;
    double f_number = 8.0;
    double scene_width_m = 0.5;
    double cn2 = 5e-14;  // m^(-2/3)
    double wavelength_m = kDefaultWavelength;
    int image_width_px = 256;
    int image_height_px = 256;
    double noise_sigma = 0.0;

    double aperture_m() const { return focal_length_m / f_number; }
    double wavenumber() const { return 2.0 * std::numbers::pi / wavelength_m; }
    /// Object-plane sample spacing (m / px).
    double object_pitch_m() const { return scene_width_m / image_width_px; }
    /// Sensor-plane sample spacing (m / px).
    double sensor_pitch_m() const { return object_pitch_m() * focal_length_m / distance_m; }
    /// Angular size of one pixel in units of lambda / D.
    double pixel_scale_lambda_over_d() const {
        return (object_pitch_m() / distance_m) / (wavelength_m / aperture_m());
    }
    bool has_turbulence() const { return cn2 > 0.0; }

    bool operator==(const TurbulenceProtocol&) const = default;
};

inline void validate(const TurbulenceProtocol& p) {
    auto pos = [](double v) { return std::isfinite(v) && v > 0.0; };
    require(pos(p.distance_m), ErrorKind::domain, "distance_m must be positive");
    require(pos(p.focal_length_m), ErrorKind::domain, "focal_length_m must be positive");
    require(std::isfinite(p.f_number) && p.f_number >= 1.0, ErrorKind::domain, "f_number must be >= 1");
    require(pos(p.scene_width_m), ErrorKind::domain, "scene_width_m must be positive");
    require(std::isfinite(p.cn2) && p.cn2 >= 0.0, ErrorKind::domain, "cn2 must be >= 0");
    require(pos(p.wavelength_m), ErrorKind::domain, "wavelength_m must be positive");
    require(p.image_width_px > 0 && p.image_height_px > 0, ErrorKind::domain, "image raster must be positive");
    require(std::isfinite(p.noise_sigma) && p.noise_sigma >= 0.0, ErrorKind::domain, "noise_sigma must be >= 0");
}

inline KeyValueDoc to_keyvalue(const TurbulenceProtocol& p) {
    KeyValueDoc d;
    d.set("distance_m", p.distance_m);
    d.set("focal_length_m", p.focal_length_m);
    d.set("f_number", p.f_number);
    d.set("scene_width_m", p.scene_width_m);
    d.set("cn2", p.cn2);
    d.set("wavelength_m", p.wavelength_m);
    d.set("image_width_px", p.image_width_px);
    d.set("image_height_px", p.image_height_px);
    d.set("noise_sigma", p.noise_sigma);
    return d;
}

/// Reads the protocol fields from `d`; other keys are ignored so sidecars can
/// embed a protocol. Wavelength and noise default when absent.
inline TurbulenceProtocol protocol_from_keyvalue(const KeyValueDoc& d) {
    TurbulenceProtocol p;
    p.distance_m = d.get_double("distance_m");
    p.focal_length_m = d.get_double("focal_length_m");
    p.f_number = d.get_double("f_number");
    p.scene_width_m = d.get_double("scene_width_m");
    p.cn2 = d.get_double("cn2");
    p.wavelength_m = d.get_double("wavelength_m", kDefaultWavelength);
    p.image_width_px = d.get_int("image_width_px");
    p.image_height_px = d.get_int("image_height_px");
    p.noise_sigma = d.get_double("noise_sigma", 0.0);
    validate(p);
    return p;
}

// ---------------------------------------------------------------------------
// Kolmogorov scalars (constant Cn^2 along the path, spherical-wave weighting)
// ---------------------------------------------------------------------------

/// Spherical-wave Fried parameter r0 = [0.423 k^2 Cn^2 L 3/8]^(-3/5).
/// nullopt signals "no turbulence" (Cn^2 = 0, r0 infinite).
inline std::optional<double> fried_parameter(const TurbulenceProtocol& p) {
    validate(p);
    if (!p.has_turbulence()) return std::nullopt;
    const double k = p.wavenumber();
    return std::pow(0.423 * k * k * p.cn2 * p.distance_m * (3.0 / 8.0), -3.0 / 5.0);
}

/// Isoplanatic angle theta0 = [2.914 k^2 Cn^2 L^(8/3) 3/8]^(-3/5) in radians,
/// the constant-Cn^2 value of 2.914 k^2 int_0^L Cn^2 z^(5/3) dz.
inline std::optional<double> isoplanatic_angle(const TurbulenceProtocol& p) {
    validate(p);
    if (!p.has_turbulence()) return std::nullopt;
    const double k = p.wavenumber();
    return std::pow(2.914 * k * k * p.cn2 * std::pow(p.distance_m, 8.0 / 3.0) * (3.0 / 8.0), -3.0 / 5.0);
}

/// D / r0, with 0 for a turbulence-free protocol.
inline double d_over_r0(const TurbulenceProtocol& p) {
    const auto r0 = fried_parameter(p);
    return r0 ? p.aperture_m() / *r0 : 0.0;
}

/// Pixels of image displacement per phase-radian of a Noll tilt coefficient.
inline double tilt_pixel_scale(const TurbulenceProtocol& p) {
    validate(p);
    return 4.0 * p.focal_length_m / (p.wavenumber() * p.aperture_m() * p.sensor_pitch_m());
}

// ---------------------------------------------------------------------------
// Zernike polynomials, Noll indexing
// ---------------------------------------------------------------------------

struct ZernikeSpec {
    int max_index = kNumZernike;
    int pupil_grid_n = 256;
};

inline void validate(const ZernikeSpec& s) {
    require(s.max_index == kNumZernike, ErrorKind::domain, "ZernikeSpec.max_index must be 36");
    require(s.pupil_grid_n >= 64 && s.pupil_grid_n % 2 == 0, ErrorKind::domain,
            "ZernikeSpec.pupil_grid_n must be even and >= 64");
}

struct NollMode {
    int n;  // radial order
    int m;  // azimuthal order (>= 0)
};

inline NollMode noll_mode(int j) {
    require(j >= 1, ErrorKind::index, "Noll index must be >= 1");
    int n = 0;
    while ((n + 1) * (n + 2) / 2 < j) ++n;
    const int r = j - n * (n + 1) / 2 - 1;  // position within the radial row
    // Row order is m = 0 (n even) or 1 (n odd), then each m > 0 twice.
    const int m = (n % 2 == 0) ? 2 * ((r + 1) / 2) : 2 * (r / 2) + 1;
    return {n, m};
}

inline double zernike_radial(int n, int m, double rho) {
    double sum = 0.0;
    for (int s = 0; s <= (n - m) / 2; ++s) {
        const double c = std::tgamma(n - s + 1.0) /
                         (std::tgamma(s + 1.0) * std::tgamma((n + m) / 2 - s + 1.0) * std::tgamma((n - m) / 2 - s + 1.0));
        sum += ((s % 2) ? -c : c) * std::pow(rho, n - 2 * s);
    }
    return sum;
}

/// Noll-normalized Z_j (unit mean square over the unit disk).
inline double zernike_eval(const ZernikeSpec& spec, int j, double rho, double theta) {
    require(j >= 1 && j <= spec.max_index, ErrorKind::index, "Zernike index out of range: " + std::to_string(j));
    const auto [n, m] = noll_mode(j);
    const double r = zernike_radial(n, m, rho);
    if (m == 0) return std::sqrt(n + 1.0) * r;
    const double norm = std::sqrt(2.0 * (n + 1.0));
    return (j % 2 == 0) ? norm * r * std::cos(m * theta) : norm * r * std::sin(m * theta);
}

/// Pupil sample coordinate in [-1, 1] (cell centers across the diameter).
inline double pupil_coord(int idx, int n) { return (idx - 0.5 * (n - 1)) / (0.5 * n); }

/// Row-major N x N raster of Z_j, zero outside the unit disk.
inline std::vector<double> zernike_raster(const ZernikeSpec& spec, int j) {
    validate(spec);
    const int n = spec.pupil_grid_n;
    std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
    for (int r = 0; r < n; ++r) {
        const double y = pupil_coord(r, n);
        for (int c = 0; c < n; ++c) {
            const double x = pupil_coord(c, n);
            const double rho = std::hypot(x, y);
            if (rho <= 1.0) out[static_cast<std::size_t>(r) * n + c] = zernike_eval(spec, j, rho, std::atan2(y, x));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Kolmogorov modal covariance
// ---------------------------------------------------------------------------

using Matrix36 = Eigen::Matrix<double, kNumZernike, kNumZernike>;

struct ModalCovariance {
    double d_over_r0 = 1.0;
    Matrix36 matrix = Matrix36::Zero();  // E[a_i a_j] at (i-1, j-1), rad^2

    double operator()(int i, int j) const { return matrix(i - 1, j - 1); }
};

namespace detail {

/// Exact phase structure-function constant: Phi(f) = c r0^(-5/3) f^(-11/3), f in cycles/m.
inline double kolmogorov_psd_constant() {
    using std::numbers::pi;
    return std::tgamma(11.0 / 6.0) * std::tgamma(11.0 / 6.0) / (2.0 * std::pow(pi, 11.0 / 3.0)) *
           std::pow(24.0 / 5.0 * std::tgamma(6.0 / 5.0), 5.0 / 6.0);
}

/// Integral over x in (0, inf) of x^(-14/3) J_mu(2 pi x) J_nu(2 pi x).
inline double bessel_product_integral(int mu, int nu) {
    using std::numbers::pi;
    auto f = [mu, nu](double x) {
        if (x <= 0.0) return 0.0;
        const double t = 2.0 * pi * x;
        if (x < 1e-3) {
            // Two-term series, avoids inf * 0 near the origin.
            const double h2 = pi * pi * x * x;
            return std::pow(pi, mu + nu) * std::pow(x, mu + nu - 14.0 / 3.0) /
                   (std::tgamma(mu + 1.0) * std::tgamma(nu + 1.0)) * (1.0 - h2 / (mu + 1.0)) * (1.0 - h2 / (nu + 1.0));
        }
        return std::pow(x, -14.0 / 3.0) * std::cyl_bessel_j(mu, t) * std::cyl_bessel_j(nu, t);
    };
    boost::math::quadrature::tanh_sinh<double> ts;
    double total = ts.integrate(f, 0.0, 1.0, 1e-10);
    // Oscillatory tail, half-period panels; |integrand| < x^(-17/3) / pi^2 beyond.
    for (double a = 1.0; a < 200.0; a += 0.5)
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, a + 0.5, 10, 1e-10);
    return total;
}

inline Matrix36 unit_noll_matrix() {
    using std::numbers::pi;
    const double pref = 2.0 * kolmogorov_psd_constant() / pi * std::pow(2.0, -5.0 / 3.0);
    std::map<std::pair<int, int>, double> radial;
    Matrix36 out = Matrix36::Zero();
    for (int i = 2; i <= kNumZernike; ++i) {
        for (int j = i; j <= kNumZernike; ++j) {
            const auto a = noll_mode(i);
            const auto b = noll_mode(j);
            if (a.m != b.m) continue;
            if (a.m != 0 && (i % 2) != (j % 2)) continue;
            const auto key = std::minmax(a.n, b.n);
            auto it = radial.find(key);
            if (it == radial.end()) it = radial.emplace(key, bessel_product_integral(key.first + 1, key.second + 1)).first;
            const double sign = (((a.n + b.n - 2 * a.m) / 2) % 2) ? -1.0 : 1.0;
            const double v = pref * sign * std::sqrt((a.n + 1.0) * (b.n + 1.0)) * it->second;
            out(i - 1, j - 1) = v;
            out(j - 1, i - 1) = v;
        }
    }
    // Piston excluded: it does not affect the image (and diverges for Kolmogorov).
    return out;
}

}  // namespace detail

/// Kolmogorov covariance E[a_i a_j] of Noll-normalized Zernike coefficients.
/// The D/r0 = 1 matrix is integrated once and cached; other values follow
/// from the exact (D/r0)^(5/3) scaling.
inline ModalCovariance noll_covariance(double d_over_r0) {
    require(std::isfinite(d_over_r0) && d_over_r0 > 0.0, ErrorKind::domain, "noll_covariance: D/r0 must be positive");
    static const Matrix36 unit = detail::unit_noll_matrix();
    ModalCovariance cov;
    cov.d_over_r0 = d_over_r0;
    cov.matrix = unit * std::pow(d_over_r0, 5.0 / 3.0);
    return cov;
}

}  // namespace turbsim
