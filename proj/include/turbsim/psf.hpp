#pragma once

// Pupil-plane PSF rendering, the PCA blur-kernel basis and the
// phase-to-space (P2S) map from high-order Zernike coefficients to basis
// weights.
//
// Sampling: one object-plane pixel subtends `pixel_scale` * lambda / D. The
// focal field is computed on a finer grid of `oversample` sub-pixels per
// pixel (each <= lambda / 2D, Nyquist for intensity) and box-binned, which
// integrates the PSF over the detector pixel.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "turbsim/counter_rng.hpp"
#include "turbsim/error.hpp"
#include "turbsim/fft.hpp"
#include "turbsim/optics.hpp"
#include "turbsim/parallel.hpp"
#include "turbsim/random_field.hpp"

namespace turbsim {

inline constexpr int kFirstHighOrder = 4;
inline constexpr int kNumHighOrder = kNumZernike - kFirstHighOrder + 1;  // 33
inline constexpr int kNumP2sFeatures = 1 + 2 * kNumHighOrder;            // bias, a_i, a_i^2

/// s x s nonnegative, unit-sum kernel (row-major, center at (s/2, s/2)).
struct PsfKernel {
    int size = 0;
    std::vector<double> data;

    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * size + c]; }
    double sum() const {
        double t = 0.0;
        for (double v : data) t += v;
        return t;
    }
};

namespace detail {

/// Noll modes 4..36 sampled at the in-disk cells of an n x n pupil grid.
struct PupilModes {
    int n = 0;
    std::vector<int> disk;        // flattened indices inside the unit disk
    std::vector<double> values;   // [mode][disk index]
};

inline std::shared_ptr<const PupilModes> pupil_modes(int n) {
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const PupilModes>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[n];
    if (slot) return slot;
    auto pm = std::make_shared<PupilModes>();
    pm->n = n;
    const ZernikeSpec spec{kNumZernike, n};
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            if (std::hypot(pupil_coord(c, n), pupil_coord(r, n)) <= 1.0) pm->disk.push_back(r * n + c);
    pm->values.resize(static_cast<std::size_t>(kNumHighOrder) * pm->disk.size());
    for (int m = 0; m < kNumHighOrder; ++m)
        for (std::size_t d = 0; d < pm->disk.size(); ++d) {
            const double x = pupil_coord(pm->disk[d] % n, n);
            const double y = pupil_coord(pm->disk[d] / n, n);
            pm->values[m * pm->disk.size() + d] =
                zernike_eval(spec, m + kFirstHighOrder, std::hypot(x, y), std::atan2(y, x));
        }
    slot = std::move(pm);
    return slot;
}

}  // namespace detail

/// Renders tilt-free PSFs for high-order coefficient vectors (Noll 4..36).
///
/// The focal field E = A U A^T is a matrix Fourier transform of the pupil
/// field U with half-sample centered grids, equivalent to a zero-padded DFT of
/// arbitrary (non-integer) padding factor. When the padding factor is an
/// integer the same field is computed with an FFT.
class PsfRenderer {
public:
    PsfRenderer(int pupil_n, double pixel_scale, int kernel_size)
        : n_(pupil_n), s_(kernel_size), q_(pixel_scale) {
        validate(ZernikeSpec{kNumZernike, pupil_n});
        require(kernel_size >= 1 && kernel_size % 2 == 1, ErrorKind::domain, "PSF kernel size must be odd");
        require(std::isfinite(pixel_scale) && pixel_scale > 0.0, ErrorKind::domain, "pixel scale must be positive");
        b_ = std::max(2, static_cast<int>(std::ceil(2.0 * q_ - 1e-9)));
        const int fine = s_ * b_;
        const double m = static_cast<double>(n_) * b_ / q_;  // equivalent zero-padded transform size
        require(fine <= m + 1e-9, ErrorKind::domain,
                "kernel size " + std::to_string(s_) + " exceeds the transform raster (" + std::to_string(m / b_) +
                    " px) at this pupil sampling");
        modes_ = detail::pupil_modes(n_);
        const double cs = 0.5 * (fine - 1);
        if (std::abs(m - std::round(m)) < 1e-9) {
            m_ = static_cast<int>(std::round(m));
            plan_ = fft_plan_c2c(m_, m_);
            premod_.resize(n_);
            for (int j = 0; j < n_; ++j) premod_[j] = std::polar(1.0, 2.0 * std::numbers::pi * cs * j / m_);
        } else {
            dft_.resize(fine, n_);
            const double cn = 0.5 * (n_ - 1);
            for (int k = 0; k < fine; ++k)
                for (int j = 0; j < n_; ++j) dft_(k, j) = std::polar(1.0, -2.0 * std::numbers::pi * (k - cs) * (j - cn) / m);
        }
    }

    int pupil_n() const { return n_; }
    int kernel_size() const { return s_; }
    double pixel_scale() const { return q_; }
    int oversample() const { return b_; }
    bool uses_fft() const { return m_ > 0; }

    PsfKernel render(std::span<const double> high_order) const {
        require(high_order.size() == kNumHighOrder, ErrorKind::shape, "expected 33 high-order coefficients");
        for (double v : high_order) require(std::isfinite(v), ErrorKind::domain, "non-finite Zernike coefficient");
        const auto& disk = modes_->disk;
        const std::size_t nd = disk.size();
        std::vector<double> phase(nd, 0.0);
        for (int m = 0; m < kNumHighOrder; ++m) {
            const double a = high_order[m];
            if (a == 0.0) continue;
            const double* z = modes_->values.data() + m * nd;
            for (std::size_t d = 0; d < nd; ++d) phase[d] += a * z[d];
        }
        const int fine = s_ * b_;
        std::vector<double> intensity(static_cast<std::size_t>(fine) * fine);
        if (uses_fft()) {
            FftwBuffer<cplx> in(plan_->size());
            FftwBuffer<cplx> out(plan_->size());
            for (std::size_t d = 0; d < nd; ++d) {
                const int r = disk[d] / n_;
                const int c = disk[d] % n_;
                in[static_cast<std::size_t>(r) * m_ + c] = std::polar(1.0, phase[d]) * premod_[r] * premod_[c];
            }
            plan_->forward(in, out);
            for (int r = 0; r < fine; ++r)
                for (int c = 0; c < fine; ++c)
                    intensity[static_cast<std::size_t>(r) * fine + c] = std::norm(out[static_cast<std::size_t>(r) * m_ + c]);
        } else {
            Eigen::MatrixXcd u = Eigen::MatrixXcd::Zero(n_, n_);
            for (std::size_t d = 0; d < nd; ++d) u(disk[d] / n_, disk[d] % n_) = std::polar(1.0, phase[d]);
            const Eigen::MatrixXcd e = dft_ * u * dft_.transpose();
            for (int r = 0; r < fine; ++r)
                for (int c = 0; c < fine; ++c) intensity[static_cast<std::size_t>(r) * fine + c] = std::norm(e(r, c));
        }
        PsfKernel k{s_, std::vector<double>(static_cast<std::size_t>(s_) * s_, 0.0)};
        for (int r = 0; r < fine; ++r)
            for (int c = 0; c < fine; ++c)
                k.data[static_cast<std::size_t>(r / b_) * s_ + c / b_] += intensity[static_cast<std::size_t>(r) * fine + c];
        const double total = k.sum();
        require(total > 0.0, ErrorKind::numeric, "PSF has no energy in the kernel window");
        for (double& v : k.data) v /= total;
        return k;
    }

private:
    int n_;
    int s_;
    double q_;
    int b_ = 2;
    std::shared_ptr<const detail::PupilModes> modes_;
    int m_ = 0;
    std::shared_ptr<const FftPlanC2c2d> plan_;
    std::vector<cplx> premod_;
    Eigen::MatrixXcd dft_;
};

/// Exact PSF of high-order coefficients `a` (Noll 4..36) at the protocol's
/// object-plane pixel pitch.
inline PsfKernel render_psf_exact(const ZernikeSpec& spec, std::span<const double> a, const TurbulenceProtocol& p,
                                  int kernel_size) {
    validate(spec);
    validate(p);
    return PsfRenderer(spec.pupil_grid_n, p.pixel_scale_lambda_over_d(), kernel_size).render(a);
}

// ---------------------------------------------------------------------------
// Basis
// ---------------------------------------------------------------------------

struct PsfBasis {
    int num_kernels = 0;
    int kernel_size = 0;
    int pupil_n = 0;
    double pixel_scale = 2.0;  // pixel angle in lambda / D
    double dr0_lo = 0.0;
    double dr0_hi = 4.0;
    std::vector<double> kernels;             // [k][s*s]
    std::vector<double> variance_fraction;  // captured fraction per component, nonincreasing

    std::size_t kernel_len() const { return static_cast<std::size_t>(kernel_size) * kernel_size; }
    std::span<const double> kernel(int k) const { return {kernels.data() + k * kernel_len(), kernel_len()}; }
    double kernel_sum(int k) const {
        double t = 0.0;
        for (double v : kernel(k)) t += v;
        return t;
    }
};

struct BasisConfig {
    double dr0_lo = 0.0;
    double dr0_hi = 4.0;
    int n_samples = 20000;
    int num_kernels = 100;
    int kernel_size = 33;
    double pixel_scale = 2.0;
    int pupil_n = 256;
    std::uint64_t seed = 0;
    int workers = 1;
};

/// Draws (D/r0, high-order coefficients) training pairs from the Kolmogorov
/// modal statistics, D/r0 uniform over a range.
class HighOrderSampler {
public:
    HighOrderSampler(double dr0_lo, double dr0_hi, std::uint64_t seed, std::uint64_t stream_base)
        : lo_(dr0_lo), hi_(dr0_hi), seed_(seed), base_(stream_base) {
        require(dr0_lo >= 0.0 && dr0_hi > dr0_lo, ErrorKind::domain, "invalid D/r0 range");
        const auto unit = noll_covariance(1.0);
        const Eigen::MatrixXd sub =
            unit.matrix.block(kFirstHighOrder - 1, kFirstHighOrder - 1, kNumHighOrder, kNumHighOrder);
        Eigen::LLT<Eigen::MatrixXd> llt(sub);
        require(llt.info() == Eigen::Success, ErrorKind::numeric, "high-order covariance is not positive definite");
        chol_ = llt.matrixL();
    }

    /// Sample `index`: returns D/r0 and fills `a` (33 values).
    double draw(std::uint64_t index, std::span<double> a) const {
        const double dr0 = lo_ + (hi_ - lo_) * (counter_uniform(seed_, base_, index) - 0x1.0p-53);
        Eigen::VectorXd z(kNumHighOrder);
        for (int i = 0; i < kNumHighOrder; ++i) z[i] = counter_normal(seed_, base_ + 1 + index, i);
        const Eigen::VectorXd v = chol_ * z * std::pow(dr0, 5.0 / 6.0);
        for (int i = 0; i < kNumHighOrder; ++i) a[i] = v[i];
        return dr0;
    }

private:
    double lo_, hi_;
    std::uint64_t seed_, base_;
    Eigen::MatrixXd chol_;
};

inline double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

/// Uncentered PCA of exact PSFs rendered over the D/r0 range. Kernel values
/// are rounded to float precision so the persisted artifact is lossless.
inline PsfBasis build_psf_basis(const BasisConfig& cfg) {
    require(cfg.num_kernels >= 1, ErrorKind::domain, "K must be positive");
    require(cfg.n_samples > cfg.num_kernels, ErrorKind::domain, "build_psf_basis: n_samples must exceed K");
    const PsfRenderer renderer(cfg.pupil_n, cfg.pixel_scale, cfg.kernel_size);
    const int len = cfg.kernel_size * cfg.kernel_size;
    require(cfg.num_kernels <= len, ErrorKind::domain, "K exceeds kernel dimension");
    const HighOrderSampler sampler(cfg.dr0_lo, cfg.dr0_hi, cfg.seed, 0);

    // Chunked Gram accumulation; chunking is fixed so the sum order never
    // depends on the worker count.
    constexpr int kChunk = 512;
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(len, len);
    for (int start = 0; start < cfg.n_samples; start += kChunk) {
        const int rows = std::min(kChunk, cfg.n_samples - start);
        Eigen::MatrixXd chunk(rows, len);
        parallel_for(rows, cfg.workers, [&](std::size_t r) {
            std::vector<double> a(kNumHighOrder);
            sampler.draw(static_cast<std::uint64_t>(start) + r, a);
            const auto k = renderer.render(a);
            for (int e = 0; e < len; ++e) chunk(static_cast<Eigen::Index>(r), e) = k.data[e];
        });
        gram.noalias() += chunk.transpose() * chunk;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    require(eig.info() == Eigen::Success, ErrorKind::numeric, "basis eigendecomposition failed");

    PsfBasis b;
    b.num_kernels = cfg.num_kernels;
    b.kernel_size = cfg.kernel_size;
    b.pupil_n = cfg.pupil_n;
    b.pixel_scale = cfg.pixel_scale;
    b.dr0_lo = cfg.dr0_lo;
    b.dr0_hi = cfg.dr0_hi;
    b.kernels.resize(static_cast<std::size_t>(cfg.num_kernels) * len);
    b.variance_fraction.resize(cfg.num_kernels);
    const double trace = gram.trace();
    for (int k = 0; k < cfg.num_kernels; ++k) {
        const Eigen::Index col = len - 1 - k;  // eigenvalues ascend
        Eigen::VectorXd v = eig.eigenvectors().col(col);
        // Deterministic sign: positive sum, else positive largest entry.
        double s = v.sum();
        if (std::abs(s) < 1e-8) {
            Eigen::Index imax = 0;
            v.cwiseAbs().maxCoeff(&imax);
            s = v[imax];
        }
        if (s < 0.0) v = -v;
        for (int e = 0; e < len; ++e) b.kernels[static_cast<std::size_t>(k) * len + e] = quantize_f32(v[e]);
        b.variance_fraction[k] = quantize_f32(std::max(0.0, eig.eigenvalues()[col]) / trace);
    }
    return b;
}

/// Orthogonal projection onto the basis span: beta_k = <psf, psi_k>.
inline std::vector<double> project_coeffs_exact(const PsfBasis& basis, const PsfKernel& psf) {
    require(psf.size == basis.kernel_size, ErrorKind::shape, "PSF size does not match basis kernel size");
    std::vector<double> beta(basis.num_kernels, 0.0);
    for (int k = 0; k < basis.num_kernels; ++k) {
        const auto psi = basis.kernel(k);
        double acc = 0.0;
        for (std::size_t e = 0; e < psi.size(); ++e) acc += psf.data[e] * psi[e];
        beta[k] = acc;
    }
    return beta;
}

/// sum_k beta_k psi_k as a flat s*s raster.
inline std::vector<double> reconstruct_kernel(const PsfBasis& basis, std::span<const double> beta) {
    std::vector<double> out(basis.kernel_len(), 0.0);
    for (int k = 0; k < basis.num_kernels; ++k) {
        const auto psi = basis.kernel(k);
        for (std::size_t e = 0; e < psi.size(); ++e) out[e] += beta[k] * psi[e];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Phase-to-space map
// ---------------------------------------------------------------------------

enum class P2sMode { exact, surrogate };

struct P2sMap {
    P2sMode mode = P2sMode::surrogate;
    int num_kernels = 0;
    int kernel_size = 0;
    double dr0_lo = 0.0;
    double dr0_hi = 4.0;
    double ridge = 0.0;
    double heldout_median_error = 0.0;
    std::vector<double> weights;  // [feature][k], kNumP2sFeatures x K

    static P2sMap exact_for(const PsfBasis& b) {
        P2sMap m;
        m.mode = P2sMode::exact;
        m.num_kernels = b.num_kernels;
        m.kernel_size = b.kernel_size;
        m.dr0_lo = b.dr0_lo;
        m.dr0_hi = b.dr0_hi;
        return m;
    }
};

inline constexpr double kSurrogateErrorBound = 0.10;

struct P2sFitConfig {
    double dr0_lo = 0.0;
    double dr0_hi = 4.0;
    int n_train = 4000;
    int n_heldout = 500;
    double ridge = 1e-6;  // relative to the mean diagonal of X^T X
    double max_error = kSurrogateErrorBound;
    std::uint64_t seed = 1;
    int workers = 1;
};

inline void p2s_features(std::span<const double> a, std::span<double> f) {
    f[0] = 1.0;
    for (int i = 0; i < kNumHighOrder; ++i) {
        f[1 + i] = a[i];
        f[1 + kNumHighOrder + i] = a[i] * a[i];
    }
}

/// Ridge regression W = (X^T X + lambda D)^-1 X^T Y where D leaves the bias
/// column unpenalized; lambda is scaled by the mean diagonal of X^T X.
inline Eigen::MatrixXd ridge_solve(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double relative_lambda) {
    Eigen::MatrixXd a = x.transpose() * x;
    const double scale = a.diagonal().mean();
    for (Eigen::Index i = 1; i < a.rows(); ++i) a(i, i) += relative_lambda * scale;
    return a.ldlt().solve(x.transpose() * y);
}

inline std::vector<double> p2s_surrogate_beta(const P2sMap& map, std::span<const double> a) {
    std::vector<double> f(kNumP2sFeatures);
    p2s_features(a, f);
    std::vector<double> beta(map.num_kernels, 0.0);
    for (int i = 0; i < kNumP2sFeatures; ++i) {
        const double fi = f[i];
        const double* w = map.weights.data() + static_cast<std::size_t>(i) * map.num_kernels;
        for (int k = 0; k < map.num_kernels; ++k) beta[k] += fi * w[k];
    }
    return beta;
}

inline double relative_kernel_error(const PsfBasis& basis, std::span<const double> beta, const PsfKernel& psf) {
    const auto rec = reconstruct_kernel(basis, beta);
    double num = 0.0, den = 0.0;
    for (std::size_t e = 0; e < rec.size(); ++e) {
        num += (rec[e] - psf.data[e]) * (rec[e] - psf.data[e]);
        den += psf.data[e] * psf.data[e];
    }
    return std::sqrt(num / den);
}

/// Fits the quadratic-feature ridge surrogate to exact-projection targets
/// and records its held-out median relative kernel error (against the exact
/// PSF). Throws FitError when the error exceeds cfg.max_error.
inline P2sMap fit_p2s_surrogate(const PsfBasis& basis, const P2sFitConfig& cfg) {
    require(cfg.n_train > 4 * kNumP2sFeatures, ErrorKind::domain, "n_train must be well above the feature count");
    require(cfg.n_heldout >= 1, ErrorKind::domain, "n_heldout must be positive");
    const PsfRenderer renderer(basis.pupil_n, basis.pixel_scale, basis.kernel_size);
    const HighOrderSampler train(cfg.dr0_lo, cfg.dr0_hi, cfg.seed, 0x7000000000ULL);
    const HighOrderSampler held(cfg.dr0_lo, cfg.dr0_hi, cfg.seed, 0x9000000000ULL);
    const int k = basis.num_kernels;

    Eigen::MatrixXd x(cfg.n_train, kNumP2sFeatures);
    Eigen::MatrixXd y(cfg.n_train, k);
    parallel_for(cfg.n_train, cfg.workers, [&](std::size_t r) {
        std::vector<double> a(kNumHighOrder), f(kNumP2sFeatures);
        train.draw(r, a);
        p2s_features(a, f);
        const auto beta = project_coeffs_exact(basis, renderer.render(a));
        for (int i = 0; i < kNumP2sFeatures; ++i) x(static_cast<Eigen::Index>(r), i) = f[i];
        for (int j = 0; j < k; ++j) y(static_cast<Eigen::Index>(r), j) = beta[j];
    });
    const Eigen::MatrixXd w = ridge_solve(x, y, cfg.ridge);

    P2sMap map;
    map.mode = P2sMode::surrogate;
    map.num_kernels = k;
    map.kernel_size = basis.kernel_size;
    map.dr0_lo = cfg.dr0_lo;
    map.dr0_hi = cfg.dr0_hi;
    map.ridge = cfg.ridge;
    map.weights.resize(static_cast<std::size_t>(kNumP2sFeatures) * k);
    for (int i = 0; i < kNumP2sFeatures; ++i)
        for (int j = 0; j < k; ++j) {
            const double v = w(i, j);
            require(std::isfinite(v), ErrorKind::numeric, "non-finite surrogate coefficient");
            map.weights[static_cast<std::size_t>(i) * k + j] = quantize_f32(v);
        }

    std::vector<double> err(cfg.n_heldout);
    parallel_for(cfg.n_heldout, cfg.workers, [&](std::size_t r) {
        std::vector<double> a(kNumHighOrder);
        held.draw(r, a);
        err[r] = relative_kernel_error(basis, p2s_surrogate_beta(map, a), renderer.render(a));
    });
    std::nth_element(err.begin(), err.begin() + err.size() / 2, err.end());
    map.heldout_median_error = err[err.size() / 2];
    if (map.heldout_median_error > cfg.max_error) throw FitError(map.heldout_median_error, cfg.max_error);
    return map;
}

/// H x W x K basis weights, stored as K row-major planes.
struct CoeffMaps {
    int height = 0;
    int width = 0;
    int num_kernels = 0;
    std::vector<double> data;

    CoeffMaps() = default;
    CoeffMaps(int h, int w, int k) : height(h), width(w), num_kernels(k), data(static_cast<std::size_t>(h) * w * k, 0.0) {}

    std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
    double* plane(int k) { return data.data() + k * plane_size(); }
    const double* plane(int k) const { return data.data() + k * plane_size(); }
    double at(int k, int r, int c) const { return plane(k)[static_cast<std::size_t>(r) * width + c]; }

    /// Sum of the reconstructed kernel at a pixel (energy).
    double kernel_sum(const PsfBasis& basis, int r, int c) const {
        double t = 0.0;
        for (int k = 0; k < num_kernels; ++k) t += at(k, r, c) * basis.kernel_sum(k);
        return t;
    }
};

/// Per-pixel basis weights beta_x = f_p(a_x, i >= 4).
///
/// Fields whose D/r0 exceeds the map's training range are evaluated with the
/// high-order coefficients scaled down to the range edge, (hi / D/r0)^(5/6),
/// and a warning is logged: the quadratic surrogate does not extrapolate.
inline CoeffMaps p2s_eval(const P2sMap& map, const PsfBasis& basis, const ZernikeField& field, int workers = 1) {
    require(map.num_kernels == basis.num_kernels && map.kernel_size == basis.kernel_size, ErrorKind::shape,
            "P2S map does not match the PSF basis (K or kernel size)");
    if (map.mode == P2sMode::surrogate)
        require(map.weights.size() == static_cast<std::size_t>(kNumP2sFeatures) * map.num_kernels, ErrorKind::shape,
                "P2S surrogate weight table has the wrong size");
    const double dr0 = d_over_r0(field.protocol);
    double scale = 1.0;
    if (dr0 > map.dr0_hi) {
        scale = std::pow(map.dr0_hi / dr0, 5.0 / 6.0);
        spdlog::warn("D/r0 = {:.3f} outside P2S training range [{}, {}]; high-order coefficients scaled by {:.4f}",
                     dr0, map.dr0_lo, map.dr0_hi, scale);
    } else if (dr0 < map.dr0_lo) {
        spdlog::warn("D/r0 = {:.3f} below P2S training range [{}, {}]", dr0, map.dr0_lo, map.dr0_hi);
    }

    CoeffMaps out(field.height, field.width, map.num_kernels);
    const std::size_t hw = out.plane_size();
    std::unique_ptr<PsfRenderer> renderer;
    if (map.mode == P2sMode::exact)
        renderer = std::make_unique<PsfRenderer>(basis.pupil_n, basis.pixel_scale, basis.kernel_size);
    parallel_for(static_cast<std::size_t>(field.height), workers, [&](std::size_t r) {
        std::vector<double> a(kNumHighOrder);
        for (int c = 0; c < field.width; ++c) {
            const std::size_t px = r * field.width + c;
            for (int i = 0; i < kNumHighOrder; ++i) a[i] = scale * field.data[(kFirstHighOrder - 1 + i) * hw + px];
            const auto beta = map.mode == P2sMode::exact ? project_coeffs_exact(basis, renderer->render(a))
                                                         : p2s_surrogate_beta(map, a);
            for (int k = 0; k < map.num_kernels; ++k) out.data[k * hw + px] = beta[k];
        }
    });
    return out;
}

}  // namespace turbsim
