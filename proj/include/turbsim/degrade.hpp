#pragma once

// Forward turbulence degradation O = B_x (*) T(I) + n and its adjoint.
//
//   T  backward bilinear warp by the tilt-induced pixel shift, edge clamped
//   B  spatially varying blur, gather convention:
//        O(x) = sum_k beta_k(x) (psi_k (*) I)(x)
//      with edge-replicate padding
//   n  Gaussian noise from its own counter stream (noise_seed)
//
// The blur is always applied after the warp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "turbsim/counter_rng.hpp"
#include "turbsim/error.hpp"
#include "turbsim/fft.hpp"
#include "turbsim/image.hpp"
#include "turbsim/optics.hpp"
#include "turbsim/parallel.hpp"
#include "turbsim/psf.hpp"
#include "turbsim/psf_artifact.hpp"
#include "turbsim/random_field.hpp"

namespace turbsim {

/// Per-pixel displacement in pixels; dx along columns, dy along rows.
struct ShiftField {
    int height = 0;
    int width = 0;
    std::vector<double> dx;
    std::vector<double> dy;

    ShiftField() = default;
    ShiftField(int h, int w)
        : height(h), width(w), dx(static_cast<std::size_t>(h) * w, 0.0), dy(static_cast<std::size_t>(h) * w, 0.0) {}

    static ShiftField constant(int h, int w, double sx, double sy) {
        ShiftField s(h, w);
        std::fill(s.dx.begin(), s.dx.end(), sx);
        std::fill(s.dy.begin(), s.dy.end(), sy);
        return s;
    }
};

namespace detail {

struct BilinearTap {
    int y0, y1, x0, x1;
    double fy, fx;
};

inline BilinearTap bilinear_tap(int h, int w, double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    BilinearTap t;
    t.y0 = static_cast<int>(std::floor(y));
    t.x0 = static_cast<int>(std::floor(x));
    t.fy = y - t.y0;
    t.fx = x - t.x0;
    t.y1 = std::min(t.y0 + 1, h - 1);
    t.x1 = std::min(t.x0 + 1, w - 1);
    return t;
}

inline void check_shift(const ImageBuffer& img, const ShiftField& s, const char* what) {
    require(img.height == s.height && img.width == s.width, ErrorKind::shape,
            std::string(what) + ": shift field does not match image raster");
}

}  // namespace detail

/// out(x) = img(x - shift(x)), bilinear, sample positions clamped to the raster.
inline ImageBuffer tilt_warp(const ImageBuffer& img, const ShiftField& shift) {
    detail::check_shift(img, shift, "tilt_warp");
    ImageBuffer out(img.height, img.width, img.channels);
    out.colorspace = img.colorspace;
    const int h = img.height, w = img.width;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const std::size_t px = static_cast<std::size_t>(i) * w + j;
            const auto t = detail::bilinear_tap(h, w, i - shift.dy[px], j - shift.dx[px]);
            for (int c = 0; c < img.channels; ++c) {
                const double top = (1.0 - t.fx) * img.at(c, t.y0, t.x0) + t.fx * img.at(c, t.y0, t.x1);
                const double bot = (1.0 - t.fx) * img.at(c, t.y1, t.x0) + t.fx * img.at(c, t.y1, t.x1);
                out.at(c, i, j) = (1.0 - t.fy) * top + t.fy * bot;
            }
        }
    return out;
}

/// Exact transpose of tilt_warp: scatters each pixel through its four taps.
inline ImageBuffer tilt_warp_adjoint(const ImageBuffer& grad, const ShiftField& shift) {
    detail::check_shift(grad, shift, "tilt_warp_adjoint");
    ImageBuffer out(grad.height, grad.width, grad.channels);
    out.colorspace = grad.colorspace;
    const int h = grad.height, w = grad.width;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const std::size_t px = static_cast<std::size_t>(i) * w + j;
            const auto t = detail::bilinear_tap(h, w, i - shift.dy[px], j - shift.dx[px]);
            for (int c = 0; c < grad.channels; ++c) {
                const double g = grad.at(c, i, j);
                out.at(c, t.y0, t.x0) += (1.0 - t.fy) * (1.0 - t.fx) * g;
                out.at(c, t.y0, t.x1) += (1.0 - t.fy) * t.fx * g;
                out.at(c, t.y1, t.x0) += t.fy * (1.0 - t.fx) * g;
                out.at(c, t.y1, t.x1) += t.fy * t.fx * g;
            }
        }
    return out;
}

/// Spatially varying blur by the basis trick, bound to one raster size.
/// Each basis kernel costs one inverse FFT (forward) or one forward FFT
/// (adjoint) per channel; kernel spectra are precomputed.
class SvBlur {
public:
    SvBlur(const PsfBasis& basis, int height, int width)
        : k_(basis.num_kernels), s_(basis.kernel_size), r_(basis.kernel_size / 2), h_(height), w_(width) {
        require(height > 0 && width > 0, ErrorKind::shape, "SvBlur: empty raster");
        require(basis.kernels.size() == static_cast<std::size_t>(k_) * basis.kernel_len(), ErrorKind::shape,
                "SvBlur: malformed basis");
        rows_ = h_ + 2 * r_;
        cols_ = w_ + 2 * r_;
        plan_ = fft_plan(rows_, cols_);
        spectra_.reserve(k_);
        const double norm = 1.0 / (static_cast<double>(rows_) * cols_);
        FftwBuffer<double> buf(plan_->real_size());
        for (int k = 0; k < k_; ++k) {
            buf.fill(0.0);
            const auto psi = basis.kernel(k);
            for (int u = 0; u < s_; ++u)
                for (int v = 0; v < s_; ++v) buf[static_cast<std::size_t>(u) * cols_ + v] = psi[u * s_ + v];
            FftwBuffer<cplx> spec(plan_->spectrum_size());
            plan_->forward(buf, spec);
            for (std::size_t n = 0; n < spec.size(); ++n) spec[n] *= norm;
            spectra_.push_back(std::move(spec));
        }
    }

    int num_kernels() const { return k_; }
    int kernel_size() const { return s_; }
    int height() const { return h_; }
    int width() const { return w_; }

    ImageBuffer apply(const ImageBuffer& img, const CoeffMaps& coeffs, int workers = 1) const {
        check(img, coeffs, "sv_blur");
        ImageBuffer out(h_, w_, img.channels);
        out.colorspace = img.colorspace;
        parallel_for(img.channels, workers, [&](std::size_t c) {
            FftwBuffer<double> buf(plan_->real_size());
            FftwBuffer<cplx> img_spec(plan_->spectrum_size());
            FftwBuffer<cplx> work(plan_->spectrum_size());
            const int ch = static_cast<int>(c);
            for (int a = 0; a < rows_; ++a) {
                const int i = std::clamp(a - r_, 0, h_ - 1);
                for (int b = 0; b < cols_; ++b)
                    buf[static_cast<std::size_t>(a) * cols_ + b] = img.at(ch, i, std::clamp(b - r_, 0, w_ - 1));
            }
            plan_->forward(buf, img_spec);
            auto dst = out.plane(ch);
            for (int k = 0; k < k_; ++k) {
                const double* beta = coeffs.plane(k);
                if (all_zero(beta)) continue;
                const auto& ker = spectra_[k];
                for (std::size_t n = 0; n < work.size(); ++n) work[n] = img_spec[n] * ker[n];
                plan_->inverse(work, buf);
                for (int i = 0; i < h_; ++i) {
                    const double* z = buf.data() + static_cast<std::size_t>(i + 2 * r_) * cols_ + 2 * r_;
                    const double* bk = beta + static_cast<std::size_t>(i) * w_;
                    double* o = dst.data() + static_cast<std::size_t>(i) * w_;
                    for (int j = 0; j < w_; ++j) o[j] += bk[j] * z[j];
                }
            }
        });
        return out;
    }

    ImageBuffer adjoint(const ImageBuffer& grad, const CoeffMaps& coeffs, int workers = 1) const {
        check(grad, coeffs, "sv_blur_adjoint");
        ImageBuffer out(h_, w_, grad.channels);
        out.colorspace = grad.colorspace;
        parallel_for(grad.channels, workers, [&](std::size_t c) {
            const int ch = static_cast<int>(c);
            FftwBuffer<double> buf(plan_->real_size());
            FftwBuffer<cplx> work(plan_->spectrum_size());
            FftwBuffer<cplx> acc(plan_->spectrum_size());
            const auto g = grad.plane(ch);
            for (int k = 0; k < k_; ++k) {
                const double* beta = coeffs.plane(k);
                if (all_zero(beta)) continue;
                buf.fill(0.0);
                for (int i = 0; i < h_; ++i) {
                    double* z = buf.data() + static_cast<std::size_t>(i + 2 * r_) * cols_ + 2 * r_;
                    const double* bk = beta + static_cast<std::size_t>(i) * w_;
                    const double* gi = g.data() + static_cast<std::size_t>(i) * w_;
                    for (int j = 0; j < w_; ++j) z[j] = bk[j] * gi[j];
                }
                plan_->forward(buf, work);
                const auto& ker = spectra_[k];
                for (std::size_t n = 0; n < acc.size(); ++n) acc[n] += work[n] * std::conj(ker[n]);
            }
            plan_->inverse(acc, buf);
            // Transpose of edge-replicate padding: fold the border back.
            for (int a = 0; a < rows_; ++a) {
                const int i = std::clamp(a - r_, 0, h_ - 1);
                for (int b = 0; b < cols_; ++b)
                    out.at(ch, i, std::clamp(b - r_, 0, w_ - 1)) += buf[static_cast<std::size_t>(a) * cols_ + b];
            }
        });
        return out;
    }

private:
    void check(const ImageBuffer& img, const CoeffMaps& coeffs, const char* what) const {
        require(img.height == h_ && img.width == w_, ErrorKind::shape, std::string(what) + ": image raster mismatch");
        require(coeffs.height == h_ && coeffs.width == w_, ErrorKind::shape,
                std::string(what) + ": coefficient raster mismatch");
        require(coeffs.num_kernels == k_, ErrorKind::shape, std::string(what) + ": coefficient K does not match basis");
    }
    bool all_zero(const double* p) const {
        const std::size_t n = static_cast<std::size_t>(h_) * w_;
        for (std::size_t i = 0; i < n; ++i)
            if (p[i] != 0.0) return false;
        return true;
    }

    int k_, s_, r_, h_, w_;
    int rows_ = 0, cols_ = 0;
    std::shared_ptr<const FftPlan2d> plan_;
    std::vector<FftwBuffer<cplx>> spectra_;
};

inline ImageBuffer sv_blur(const ImageBuffer& img, const CoeffMaps& coeffs, const PsfBasis& basis) {
    return SvBlur(basis, img.height, img.width).apply(img, coeffs);
}

inline ImageBuffer sv_blur_adjoint(const ImageBuffer& grad, const CoeffMaps& coeffs, const PsfBasis& basis) {
    return SvBlur(basis, grad.height, grad.width).adjoint(grad, coeffs);
}

// ---------------------------------------------------------------------------
// Realizations
// ---------------------------------------------------------------------------

/// A loaded basis artifact: basis, P2S map and the artifact identifier.
struct BasisBundle {
    std::shared_ptr<const PsfBasis> basis;
    P2sMap map;
    std::string hash;

    static BasisBundle from_artifact(const PsfArtifact& art) {
        require(art.map.has_value(), ErrorKind::version, "PSF artifact has no P2S surrogate (run fit-p2s)");
        return {std::make_shared<const PsfBasis>(art.basis), *art.map, artifact_hash(art)};
    }
    static BasisBundle load(const std::string& path) { return from_artifact(load_psf_artifact(path)); }
};

struct DegradationRealization {
    TurbulenceProtocol protocol;
    WhiteNoiseSeed seed;
    std::uint64_t noise_seed = 0;
    std::string basis_ref;
    ShiftField shift;
    CoeffMaps coeffs;
    std::shared_ptr<const SvBlur> blur;

    int height() const { return shift.height; }
    int width() const { return shift.width; }
};

/// Builds a realization from an already sampled field.
inline DegradationRealization realize_from_field(const ZernikeField& field, const BasisBundle& bundle,
                                                 std::uint64_t noise_seed, int workers = 1) {
    const auto& p = field.protocol;
    validate(p);
    require(bundle.basis != nullptr, ErrorKind::domain, "realize: missing PSF basis");
    require(field.height == p.image_height_px && field.width == p.image_width_px, ErrorKind::shape,
            "realize: field raster does not match protocol");
    DegradationRealization r;
    r.protocol = p;
    r.seed = field.seed;
    r.noise_seed = noise_seed;
    r.basis_ref = bundle.hash;
    const double c_tilt = tilt_pixel_scale(p);
    r.shift = ShiftField(field.height, field.width);
    const double* a2 = field.plane(2);
    const double* a3 = field.plane(3);
    for (std::size_t n = 0; n < field.plane_size(); ++n) {
        r.shift.dx[n] = c_tilt * a2[n];
        r.shift.dy[n] = c_tilt * a3[n];
    }
    r.coeffs = p2s_eval(bundle.map, *bundle.basis, field, workers);
    r.blur = std::make_shared<const SvBlur>(*bundle.basis, field.height, field.width);
    return r;
}

/// Samples the Zernike field for (p, seed) and derives the shift field and
/// blur coefficient maps. Deterministic in its arguments.
inline DegradationRealization realize(const TurbulenceProtocol& p, const WhiteNoiseSeed& seed,
                                      const BasisBundle& bundle, std::uint64_t noise_seed, int workers = 1) {
    validate(p);
    return realize_from_field(sample_field(build_autocorrelation(p), p, seed, workers), bundle, noise_seed, workers);
}

namespace detail {
inline void check_realization(const ImageBuffer& img, const DegradationRealization& r, const char* what) {
    require(img.height == r.height() && img.width == r.width(), ErrorKind::shape,
            std::string(what) + ": image does not match realization raster");
    require(r.blur != nullptr, ErrorKind::domain, std::string(what) + ": realization has no blur operator");
}
}  // namespace detail

/// The additive noise term n of the realization for a C-channel image.
inline ImageBuffer realization_noise(const DegradationRealization& r, int channels) {
    ImageBuffer n(r.height(), r.width(), channels);
    if (r.protocol.noise_sigma == 0.0) return n;
    for (int c = 0; c < channels; ++c) {
        auto plane = n.plane(c);
        fill_counter_normals(r.noise_seed, static_cast<std::uint64_t>(c), plane.data(), plane.size());
        for (double& v : plane) v *= r.protocol.noise_sigma;
    }
    return n;
}

enum class Noise { include, exclude };

/// O = sv_blur(tilt_warp(img)) + n. Identical turbulence on every channel.
inline ImageBuffer simulate_forward(const ImageBuffer& img, const DegradationRealization& r,
                                    Noise noise = Noise::include, int workers = 1) {
    detail::check_realization(img, r, "simulate_forward");
    auto out = r.blur->apply(tilt_warp(img, r.shift), r.coeffs, workers);
    if (noise == Noise::include && r.protocol.noise_sigma > 0.0) {
        const auto n = realization_noise(r, img.channels);
        for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += n.data[k];
    }
    return out;
}

/// A^T cotangent for the linear part A of simulate_forward.
inline ImageBuffer simulate_vjp(const ImageBuffer& cotangent, const DegradationRealization& r, int workers = 1) {
    detail::check_realization(cotangent, r, "simulate_vjp");
    return tilt_warp_adjoint(r.blur->adjoint(cotangent, r.coeffs, workers), r.shift);
}

}  // namespace turbsim
