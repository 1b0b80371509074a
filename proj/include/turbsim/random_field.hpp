#pragma once

// Anisoplanatic Zernike random field a_x: a wide-sense stationary Gaussian
// field over the image raster with 36 Noll coefficients per pixel.
//
// Correlation model (separable):
//   cov[(x,i),(x',j)] = modal[i,j] * rho_class(|x - x'|)
// where rho is a squared-exponential kernel with one length for the tilt
// modes (2,3) and one for the high-order modes (>= 4). Each Cholesky noise
// channel is filtered with the kernel of its own class; because the modal
// matrix couples tilt and high-order modes only through m = 1 terms, channels
// with m != 1 follow the separable model exactly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>

#include "turbsim/counter_rng.hpp"
#include "turbsim/error.hpp"
#include "turbsim/fft.hpp"
#include "turbsim/optics.hpp"
#include "turbsim/parallel.hpp"

namespace turbsim {

/// Squared-exponential correlation exp(-d^2 / (2 l^2)); 1 at zero lag.
inline double se_kernel(double d, double len) { return std::exp(-d * d / (2.0 * len * len)); }

struct FieldAutocorrelation {
    ModalCovariance modal;
    double tilt_corr_len_px = 1.0;
    double ho_corr_len_px = 1.0;
    int height = 0;
    int width = 0;
    bool degenerate = false;  // no-turbulence protocol: the sampler returns zeros

    double tilt_kernel(double d) const { return se_kernel(d, tilt_corr_len_px); }
    double high_order_kernel(double d) const { return se_kernel(d, ho_corr_len_px); }
    double kernel_for_mode(int noll, double d) const { return noll <= 3 ? tilt_kernel(d) : high_order_kernel(d); }

    /// Border added on each side of the raster before periodic synthesis.
    int padding() const { return static_cast<int>(std::ceil(2.0 * tilt_corr_len_px)); }
    int padded_height() const { return good_fft_size(height + 2 * padding()); }
    int padded_width() const { return good_fft_size(width + 2 * padding()); }

    static int good_fft_size(int n) {
        for (;; ++n) {
            int m = n;
            for (int f : {2, 3, 5, 7})
                while (m % f == 0) m /= f;
            if (m == 1) return n;
        }
    }
};

struct WhiteNoiseSeed {
    std::uint64_t seed = 0;
    std::string generator_id{kGeneratorId};

    bool operator==(const WhiteNoiseSeed&) const = default;
};

/// H x W x 36 coefficient field, stored as 36 row-major planes (Noll i at plane i-1).
struct ZernikeField {
    int height = 0;
    int width = 0;
    std::vector<double> data;
    TurbulenceProtocol protocol;
    WhiteNoiseSeed seed;

    ZernikeField() = default;
    ZernikeField(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * kNumZernike, 0.0) {}

    std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
    double& at(int noll, int r, int c) { return data[(noll - 1) * plane_size() + static_cast<std::size_t>(r) * width + c]; }
    double at(int noll, int r, int c) const {
        return data[(noll - 1) * plane_size() + static_cast<std::size_t>(r) * width + c];
    }
    const double* plane(int noll) const { return data.data() + (noll - 1) * plane_size(); }
    double* plane(int noll) { return data.data() + (noll - 1) * plane_size(); }
};

/// Derives the spatial correlation model of the protocol's Zernike field.
inline FieldAutocorrelation build_autocorrelation(const TurbulenceProtocol& p) {
    validate(p);
    FieldAutocorrelation ac;
    ac.height = p.image_height_px;
    ac.width = p.image_width_px;
    const auto theta0 = isoplanatic_angle(p);
    if (!theta0) {
        ac.degenerate = true;
        ac.modal = ModalCovariance{};
        ac.modal.d_over_r0 = 0.0;
        return ac;
    }
    ac.modal = noll_covariance(d_over_r0(p));
    const double hi = std::max(p.image_height_px, p.image_width_px);
    const double ho = (*theta0) * p.distance_m / p.object_pitch_m();
    ac.ho_corr_len_px = std::clamp(ho, 1.0, hi);
    ac.tilt_corr_len_px = std::clamp(3.0 * ho, 1.0, hi);
    return ac;
}

namespace detail {

/// DFT of the sampled Gaussian periodized on a length-n ring. The periodic
/// sum keeps the spectrum nonnegative; tiny rounding negatives are clipped.
inline std::vector<double> periodic_se_spectrum(int n, double len) {
    const int reps = static_cast<int>(std::ceil(8.0 * len / n)) + 1;
    std::vector<double> c(n, 0.0);
    for (int d = 0; d < n; ++d)
        for (int r = -reps; r <= reps; ++r) c[d] += se_kernel(d + static_cast<double>(r) * n, len);
    std::vector<double> s(n, 0.0);
    for (int u = 0; u < n; ++u) {
        double acc = 0.0;
        for (int d = 0; d < n; ++d) acc += c[d] * std::cos(2.0 * std::numbers::pi * static_cast<double>(u) * d / n);
        s[u] = std::max(acc, 0.0);
    }
    return s;
}

/// Square-root spectral filter (r2c layout), with the 1/(rows*cols)
/// normalization of the unnormalized inverse transform folded in.
inline std::vector<double> sqrt_filter(int rows, int cols, double len) {
    const auto sr = periodic_se_spectrum(rows, len);
    const auto sc = periodic_se_spectrum(cols, len);
    const int hc = cols / 2 + 1;
    std::vector<double> f(static_cast<std::size_t>(rows) * hc);
    const double scale = 1.0 / (static_cast<double>(rows) * cols);
    for (int u = 0; u < rows; ++u)
        for (int v = 0; v < hc; ++v) f[static_cast<std::size_t>(u) * hc + v] = std::sqrt(sr[u] * sc[v]) * scale;
    return f;
}

/// Lower Cholesky factor of the modal matrix restricted to Noll 2..36.
inline Eigen::MatrixXd modal_cholesky(const ModalCovariance& modal) {
    const Eigen::MatrixXd sub = modal.matrix.block(1, 1, kNumZernike - 1, kNumZernike - 1);
    Eigen::LLT<Eigen::MatrixXd> llt(sub);
    require(llt.info() == Eigen::Success, ErrorKind::numeric, "modal covariance is not positive definite");
    return llt.matrixL();
}

}  // namespace detail

/// Fills one padded white-noise plane for Noll channel `noll` (2..36).
using NoiseSource = std::function<void(int noll, double* out, std::size_t n)>;

inline NoiseSource counter_noise(const WhiteNoiseSeed& seed) {
    require(seed.generator_id == kGeneratorId, ErrorKind::version,
            "unsupported generator_id '" + seed.generator_id + "' (expected " + std::string(kGeneratorId) + ")");
    return [s = seed.seed](int noll, double* out, std::size_t n) {
        fill_counter_normals(s, static_cast<std::uint64_t>(noll), out, n);
    };
}

/// Precomputed spectral filters and modal factor for one autocorrelation;
/// reuse it when drawing many fields from the same protocol.
class FieldSampler {
public:
    explicit FieldSampler(FieldAutocorrelation ac) : ac_(std::move(ac)) {
        if (ac_.degenerate) return;
        rows_ = ac_.padded_height();
        cols_ = ac_.padded_width();
        plan_ = fft_plan(rows_, cols_);
        tilt_filter_ = detail::sqrt_filter(rows_, cols_, ac_.tilt_corr_len_px);
        ho_filter_ = detail::sqrt_filter(rows_, cols_, ac_.ho_corr_len_px);
        chol_ = detail::modal_cholesky(ac_.modal);
    }

    const FieldAutocorrelation& autocorrelation() const { return ac_; }

    ZernikeField sample(const TurbulenceProtocol& p, const WhiteNoiseSeed& seed, int workers = 1) const {
        auto field = synthesize(p, counter_noise(seed), workers);
        field.seed = seed;
        return field;
    }

    /// `noise` fills the padded white-noise plane of each Noll channel 2..36.
    ZernikeField synthesize(const TurbulenceProtocol& p, const NoiseSource& noise, int workers = 1) const {
        require(ac_.height == p.image_height_px && ac_.width == p.image_width_px, ErrorKind::shape,
                "autocorrelation raster does not match protocol raster");
        ZernikeField field(ac_.height, ac_.width);
        field.protocol = p;
        if (ac_.degenerate) return field;

        const int pad = ac_.padding();
        constexpr int nch = kNumZernike - 1;
        const std::size_t hw = field.plane_size();
        // Spatially correlated, unit-variance, mutually independent channels.
        std::vector<double> filtered(static_cast<std::size_t>(nch) * hw);
        parallel_for(nch, workers, [&](std::size_t k) {
            const int noll = static_cast<int>(k) + 2;
            FftwBuffer<double> buf(plan_->real_size());
            FftwBuffer<cplx> spec(plan_->spectrum_size());
            noise(noll, buf.data(), buf.size());
            plan_->forward(buf, spec);
            const auto& filt = noll <= 3 ? tilt_filter_ : ho_filter_;
            for (std::size_t n = 0; n < spec.size(); ++n) spec[n] *= filt[n];
            plan_->inverse(spec, buf);
            double* dst = filtered.data() + k * hw;
            for (int r = 0; r < ac_.height; ++r)
                for (int c = 0; c < ac_.width; ++c)
                    dst[static_cast<std::size_t>(r) * ac_.width + c] =
                        buf[static_cast<std::size_t>(r + pad) * cols_ + c + pad];
        });

        // Pointwise modal mixing by the Cholesky factor; piston stays zero.
        parallel_for(nch, workers, [&](std::size_t i) {
            double* out = field.plane(static_cast<int>(i) + 2);
            for (std::size_t k = 0; k <= i; ++k) {
                const double w = chol_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
                if (w == 0.0) continue;
                const double* src = filtered.data() + k * hw;
                for (std::size_t n = 0; n < hw; ++n) out[n] += w * src[n];
            }
        });
        return field;
    }

private:
    FieldAutocorrelation ac_;
    int rows_ = 0;
    int cols_ = 0;
    std::shared_ptr<const FftPlan2d> plan_;
    std::vector<double> tilt_filter_;
    std::vector<double> ho_filter_;
    Eigen::MatrixXd chol_;
};

/// Samples a_x = g(C, p, eps) with eps expanded from the counter generator.
inline ZernikeField sample_field(const FieldAutocorrelation& ac, const TurbulenceProtocol& p,
                                 const WhiteNoiseSeed& seed, int workers = 1) {
    return FieldSampler(ac).sample(p, seed, workers);
}

#ifdef TURBSIM_ENABLE_TEST_HOOKS
namespace testing {
/// Samples from an explicit noise tensor laid out as 36 planes of
/// padded_height x padded_width (plane 0, piston, is ignored).
inline ZernikeField sample_field_from_noise(const FieldAutocorrelation& ac, const TurbulenceProtocol& p,
                                            const std::vector<double>& noise) {
    const std::size_t plane = static_cast<std::size_t>(ac.padded_height()) * ac.padded_width();
    require(noise.size() == plane * kNumZernike, ErrorKind::shape, "noise tensor must be 36 x padded raster");
    return FieldSampler(ac).synthesize(
        p, [&](int noll, double* out, std::size_t n) { std::copy_n(noise.data() + (noll - 1) * plane, n, out); });
}
}  // namespace testing
#endif

// ---------------------------------------------------------------------------
// Validation statistics
// ---------------------------------------------------------------------------

struct FieldReport {
    int samples = 0;
    Matrix36 covariance = Matrix36::Zero();        // pooled over pixels
    std::vector<std::vector<double>> row_autocorr;  // [noll-1][lag], normalized to 1 at lag 0
    std::vector<std::array<double, 4>> quadrant_variance;  // [noll-1][quadrant]
    double max_variance_drift = 0.0;  // max over modes 2..36 of (max - min) / mean of quadrant variances
};

/// Streaming form of field_statistics: raw sums are accumulated per sample and
/// centered on the per-pixel sample mean at report time, so memory does not
/// grow with the number of samples.
class FieldStatisticsAccumulator {
public:
    FieldStatisticsAccumulator(int height, int width, int max_lag = -1)
        : h_(height), w_(width), max_lag_(std::min(max_lag < 0 ? width / 2 : max_lag, width - 1)),
          hw_(static_cast<std::size_t>(height) * width), sum_(hw_ * kNumZernike, 0.0),
          cross_(Matrix36::Zero()), lag_(kNumZernike, std::vector<double>(max_lag_ + 1, 0.0)),
          quad_(kNumZernike, std::array<double, 4>{}) {
        require(height > 0 && width > 0, ErrorKind::shape, "field_statistics: empty raster");
    }

    void add(const ZernikeField& f) {
        require(f.height == h_ && f.width == w_, ErrorKind::shape, "field_statistics: shape mismatch");
        ++n_;
        for (std::size_t k = 0; k < sum_.size(); ++k) sum_[k] += f.data[k];
        std::array<double, kNumZernike> v{};
        for (int r = 0; r < h_; ++r)
            for (int c = 0; c < w_; ++c) {
                const std::size_t px = static_cast<std::size_t>(r) * w_ + c;
                const int q = quadrant(r, c);
                for (int i = 0; i < kNumZernike; ++i) v[i] = f.data[i * hw_ + px];
                for (int i = 0; i < kNumZernike; ++i) {
                    if (v[i] == 0.0) continue;
                    for (int j = 0; j <= i; ++j) cross_(i, j) += v[i] * v[j];
                    quad_[i][q] += v[i] * v[i];
                    const double* row = f.data.data() + i * hw_ + px;
                    for (int d = 0; d <= max_lag_ && c + d < w_; ++d) lag_[i][d] += v[i] * row[d];
                }
            }
    }

    FieldReport report() const {
        require(n_ >= 2, ErrorKind::domain, "field_statistics needs at least 2 samples");
        const double n = static_cast<double>(n_);
        std::vector<double> mean(sum_.size());
        for (std::size_t k = 0; k < sum_.size(); ++k) mean[k] = sum_[k] / n;

        FieldReport rep;
        rep.samples = n_;
        Matrix36 mm = Matrix36::Zero();
        std::vector<std::vector<double>> lag_mm(kNumZernike, std::vector<double>(max_lag_ + 1, 0.0));
        std::vector<std::array<double, 4>> quad_mm(kNumZernike, std::array<double, 4>{});
        std::array<double, 4> quad_count{};
        std::vector<double> lag_count(max_lag_ + 1, 0.0);
        for (int r = 0; r < h_; ++r)
            for (int c = 0; c < w_; ++c) {
                const std::size_t px = static_cast<std::size_t>(r) * w_ + c;
                const int q = quadrant(r, c);
                quad_count[q] += 1.0;
                for (int d = 0; d <= max_lag_ && c + d < w_; ++d) lag_count[d] += 1.0;
                for (int i = 0; i < kNumZernike; ++i) {
                    const double mi = mean[i * hw_ + px];
                    for (int j = 0; j <= i; ++j) mm(i, j) += mi * mean[j * hw_ + px];
                    quad_mm[i][q] += mi * mi;
                    for (int d = 0; d <= max_lag_ && c + d < w_; ++d) lag_mm[i][d] += mi * mean[i * hw_ + px + d];
                }
            }
        // Each pixel contributes n - 1 degrees of freedom after centering.
        const double dof = n - 1.0;
        for (int i = 0; i < kNumZernike; ++i)
            for (int j = 0; j <= i; ++j) {
                rep.covariance(i, j) = (cross_(i, j) - n * mm(i, j)) / (dof * static_cast<double>(hw_));
                rep.covariance(j, i) = rep.covariance(i, j);
            }
        rep.row_autocorr.assign(kNumZernike, std::vector<double>(max_lag_ + 1, 0.0));
        rep.quadrant_variance.assign(kNumZernike, std::array<double, 4>{});
        for (int i = 0; i < kNumZernike; ++i) {
            for (int q = 0; q < 4; ++q)
                rep.quadrant_variance[i][q] = std::max(0.0, quad_[i][q] - n * quad_mm[i][q]) / (dof * quad_count[q]);
            const double v0 = (lag_[i][0] - n * lag_mm[i][0]) / lag_count[0];
            for (int d = 0; d <= max_lag_; ++d) {
                const double v = (lag_[i][d] - n * lag_mm[i][d]) / lag_count[d];
                rep.row_autocorr[i][d] = v0 > 1e-300 ? v / v0 : 0.0;
            }
            if (i == 0) continue;
            const auto& qv = rep.quadrant_variance[i];
            const double mx = *std::max_element(qv.begin(), qv.end());
            const double mn = *std::min_element(qv.begin(), qv.end());
            const double mu = (qv[0] + qv[1] + qv[2] + qv[3]) / 4.0;
            if (mu > 1e-300) rep.max_variance_drift = std::max(rep.max_variance_drift, (mx - mn) / mu);
        }
        return rep;
    }

private:
    int quadrant(int r, int c) const { return (r >= h_ / 2 ? 2 : 0) + (c >= w_ / 2 ? 1 : 0); }

    int h_, w_, max_lag_;
    std::size_t hw_;
    int n_ = 0;
    std::vector<double> sum_;
    Matrix36 cross_;
    std::vector<std::vector<double>> lag_;
    std::vector<std::array<double, 4>> quad_;
};

/// Empirical statistics over >= 2 fields of identical shape: pooled modal
/// covariance, row autocorrelation per mode and quadrant variance drift.
inline FieldReport field_statistics(const std::vector<ZernikeField>& samples, int max_lag = -1) {
    require(samples.size() >= 2, ErrorKind::domain, "field_statistics needs at least 2 samples");
    FieldStatisticsAccumulator acc(samples.front().height, samples.front().width, max_lag);
    for (const auto& f : samples) acc.add(f);
    return acc.report();
}

struct FieldValidation {
    FieldReport report;
    ModalCovariance expected;
    double covariance_rel_frobenius = 0.0;  // modes 2..36
    double tilt_variance_x = 0.0;           // empirical a_2 variance
    double tilt_variance_y = 0.0;           // empirical a_3 variance
    double autocorr_max_abs_error = 0.0;    // mode 4 rows vs. the declared kernel
    int autocorr_max_lag = 0;
    double ho_corr_len_px = 0.0;
};

/// Monte-Carlo check of sampled fields against the declared model. Sample i
/// uses seed derive_seed(seed, i, 4).
inline FieldValidation validate_field(const TurbulenceProtocol& p, int n_samples, std::uint64_t seed,
                                      int workers = 1) {
    require(p.has_turbulence(), ErrorKind::domain, "validate_field needs cn2 > 0");
    require(n_samples >= 2, ErrorKind::domain, "validate_field needs at least 2 samples");
    const auto ac = build_autocorrelation(p);
    const FieldSampler sampler(ac);
    FieldValidation v;
    v.ho_corr_len_px = ac.ho_corr_len_px;
    v.autocorr_max_lag = std::min(static_cast<int>(std::floor(3.0 * ac.ho_corr_len_px)), p.image_width_px - 1);
    FieldStatisticsAccumulator acc(p.image_height_px, p.image_width_px, v.autocorr_max_lag);
    for (int i = 0; i < n_samples; ++i)
        acc.add(sampler.sample(p, {derive_seed(seed, static_cast<std::uint64_t>(i), 4)}, workers));
    v.report = acc.report();
    v.expected = ac.modal;
    const Eigen::MatrixXd emp = v.report.covariance.block(1, 1, kNumZernike - 1, kNumZernike - 1);
    const Eigen::MatrixXd ref = ac.modal.matrix.block(1, 1, kNumZernike - 1, kNumZernike - 1);
    v.covariance_rel_frobenius = (emp - ref).norm() / ref.norm();
    v.tilt_variance_x = v.report.covariance(1, 1);
    v.tilt_variance_y = v.report.covariance(2, 2);
    for (int d = 0; d <= v.autocorr_max_lag; ++d)
        v.autocorr_max_abs_error = std::max(
            v.autocorr_max_abs_error, std::abs(v.report.row_autocorr[3][d] - se_kernel(d, ac.ho_corr_len_px)));
    return v;
}

}  // namespace turbsim
