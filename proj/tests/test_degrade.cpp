#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "turbsim/degrade.hpp"

using namespace turbsim;

namespace {

PsfBasis random_basis(int k, int s, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    PsfBasis b;
    b.num_kernels = k;
    b.kernel_size = s;
    b.pupil_n = 32;
    b.kernels.resize(static_cast<std::size_t>(k) * s * s);
    for (auto& v : b.kernels) v = n(gen);
    b.variance_fraction.assign(k, 1.0 / k);
    return b;
}

CoeffMaps random_coeffs(int h, int w, int k, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    CoeffMaps m(h, w, k);
    for (auto& v : m.data) v = n(gen);
    return m;
}

// O(x) = sum_k beta_k(x) sum_d psi_k(r + d) I(clamp(x - d)).
ImageBuffer brute_force_blur(const ImageBuffer& img, const CoeffMaps& beta, const PsfBasis& b) {
    const int r = b.kernel_size / 2, s = b.kernel_size;
    ImageBuffer out(img.height, img.width, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int i = 0; i < img.height; ++i)
            for (int j = 0; j < img.width; ++j) {
                double acc = 0.0;
                for (int k = 0; k < b.num_kernels; ++k) {
                    const auto psi = b.kernel(k);
                    double conv = 0.0;
                    for (int di = -r; di <= r; ++di)
                        for (int dj = -r; dj <= r; ++dj) {
                            const int ii = std::clamp(i - di, 0, img.height - 1);
                            const int jj = std::clamp(j - dj, 0, img.width - 1);
                            conv += psi[(r + di) * s + (r + dj)] * img.at(c, ii, jj);
                        }
                    acc += beta.at(k, i, j) * conv;
                }
                out.at(c, i, j) = acc;
            }
    return out;
}

ShiftField random_shift(int h, int w, double amp, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    ShiftField s(h, w);
    for (auto& v : s.dx) v = u(gen);
    for (auto& v : s.dy) v = u(gen);
    return s;
}

double rel_gap(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

DegradationRealization small_realization(int n, std::uint64_t seed, std::uint64_t noise_seed) {
    return realize(fixtures::small_protocol(n), WhiteNoiseSeed{seed}, fixtures::surrogate_bundle(), noise_seed);
}

}  // namespace

TEST(TiltWarp, ZeroShiftIsIdentity) {
    const auto img = fixtures::random_image(7, 9, 3, 1);
    EXPECT_EQ(tilt_warp(img, ShiftField(7, 9)).data, img.data);
}

TEST(TiltWarp, IntegerShiftTranslatesWithEdgeClamp) {
    const auto img = fixtures::random_image(6, 8, 1, 2);
    const auto out = tilt_warp(img, ShiftField::constant(6, 8, 2.0, -1.0));
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 8; ++j)
            EXPECT_DOUBLE_EQ(out.at(0, i, j), img.at(0, std::min(i + 1, 5), std::max(j - 2, 0)));
}

TEST(TiltWarp, FractionalShiftInterpolatesLinearly) {
    const auto img = fixtures::random_image(5, 6, 1, 3);
    const auto out = tilt_warp(img, ShiftField::constant(5, 6, 0.25, 0.0));
    for (int i = 0; i < 5; ++i)
        for (int j = 1; j < 6; ++j)
            EXPECT_NEAR(out.at(0, i, j), 0.25 * img.at(0, i, j - 1) + 0.75 * img.at(0, i, j), 1e-15);
}

TEST(TiltWarp, AdjointIdentity) {
    for (unsigned t = 0; t < 10; ++t) {
        const auto x = fixtures::random_image(11, 13, t % 2 ? 3 : 1, 10 + t);
        const auto y = fixtures::random_image(11, 13, t % 2 ? 3 : 1, 50 + t);
        const auto s = random_shift(11, 13, 4.0, 90 + t);
        EXPECT_LT(rel_gap(dot(tilt_warp(x, s), y), dot(x, tilt_warp_adjoint(y, s))), 1e-12);
    }
}

TEST(TiltWarp, RasterMismatchIsShapeError) {
    const auto img = fixtures::random_image(4, 4, 1, 1);
    EXPECT_THROW(tilt_warp(img, ShiftField(4, 5)), Error);
}

TEST(SvBlur, MatchesBruteForce) {
    const auto b = random_basis(3, 5, 7);
    const auto img = fixtures::random_image(8, 8, 3, 8);
    const auto beta = random_coeffs(8, 8, 3, 9);
    const auto got = sv_blur(img, beta, b);
    const auto want = brute_force_blur(img, beta, b);
    for (std::size_t n = 0; n < got.data.size(); ++n) EXPECT_NEAR(got.data[n], want.data[n], 1e-12);
}

TEST(SvBlur, KernelLargerThanRaster) {
    const auto b = random_basis(2, 9, 17);
    const auto img = fixtures::random_image(3, 5, 1, 18);
    const auto beta = random_coeffs(3, 5, 2, 19);
    const auto got = sv_blur(img, beta, b);
    const auto want = brute_force_blur(img, beta, b);
    for (std::size_t n = 0; n < got.data.size(); ++n) EXPECT_NEAR(got.data[n], want.data[n], 1e-12);
}

TEST(SvBlur, ConstantImageScalesByKernelSum) {
    const auto& b = fixtures::small_basis();
    const auto beta = random_coeffs(10, 12, b.num_kernels, 21);
    const ImageBuffer img(10, 12, 1, 0.7);
    const auto out = sv_blur(img, beta, b);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 12; ++j) EXPECT_NEAR(out.at(0, i, j), 0.7 * beta.kernel_sum(b, i, j), 1e-11);
}

TEST(SvBlur, AdjointIdentity) {
    const auto b = random_basis(4, 7, 31);
    const SvBlur op(b, 10, 13);
    for (unsigned t = 0; t < 10; ++t) {
        const int c = t % 2 ? 3 : 1;
        const auto x = fixtures::random_image(10, 13, c, 100 + t);
        const auto y = fixtures::random_image(10, 13, c, 200 + t);
        const auto beta = random_coeffs(10, 13, 4, 300 + t);
        EXPECT_LT(rel_gap(dot(op.apply(x, beta), y), dot(x, op.adjoint(y, beta))), 1e-12);
    }
}

TEST(SvBlur, AdjointMatchesBruteForceTranspose) {
    const auto b = random_basis(2, 3, 41);
    const auto beta = random_coeffs(4, 5, 2, 42);
    const auto g = fixtures::random_image(4, 5, 1, 43);
    const auto got = sv_blur_adjoint(g, beta, b);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) {
            ImageBuffer e(4, 5, 1);
            e.at(0, i, j) = 1.0;
            EXPECT_NEAR(got.at(0, i, j), dot(brute_force_blur(e, beta, b), g), 1e-12);
        }
}

TEST(SvBlur, ZeroCoefficientsGiveZero) {
    const auto b = random_basis(3, 5, 51);
    const CoeffMaps beta(6, 6, 3);
    const auto img = fixtures::random_image(6, 6, 1, 52);
    for (double v : sv_blur(img, beta, b).data) EXPECT_EQ(v, 0.0);
    for (double v : sv_blur_adjoint(img, beta, b).data) EXPECT_EQ(v, 0.0);
}

TEST(SvBlur, WorkerCountDoesNotChangeOutput) {
    const auto b = random_basis(3, 5, 61);
    const SvBlur op(b, 9, 9);
    const auto img = fixtures::random_image(9, 9, 3, 62);
    const auto beta = random_coeffs(9, 9, 3, 63);
    EXPECT_EQ(op.apply(img, beta, 1).data, op.apply(img, beta, 3).data);
    EXPECT_EQ(op.adjoint(img, beta, 1).data, op.adjoint(img, beta, 3).data);
}

TEST(SvBlur, MismatchedCoefficientsAreShapeErrors) {
    const auto b = random_basis(3, 5, 71);
    const SvBlur op(b, 6, 6);
    const auto img = fixtures::random_image(6, 6, 1, 72);
    try {
        op.apply(img, CoeffMaps(6, 6, 2));
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::shape);
    }
    EXPECT_THROW(op.apply(img, CoeffMaps(5, 6, 3)), Error);
    EXPECT_THROW(op.apply(fixtures::random_image(7, 6, 1, 1), CoeffMaps(6, 6, 3)), Error);
}

TEST(Realization, DeterministicInSeeds) {
    const auto a = small_realization(24, 5, 6);
    const auto b = small_realization(24, 5, 6);
    EXPECT_EQ(a.shift.dx, b.shift.dx);
    EXPECT_EQ(a.shift.dy, b.shift.dy);
    EXPECT_EQ(a.coeffs.data, b.coeffs.data);
    const auto c = small_realization(24, 7, 6);
    EXPECT_NE(a.shift.dx, c.shift.dx);
    EXPECT_EQ(a.basis_ref, fixtures::surrogate_bundle().hash);
}

TEST(Realization, ShiftIsScaledTilt) {
    const auto p = fixtures::small_protocol(16);
    const auto field = sample_field(build_autocorrelation(p), p, WhiteNoiseSeed{3});
    const auto r = realize_from_field(field, fixtures::exact_bundle(), 0);
    const double c = tilt_pixel_scale(p);
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) {
            EXPECT_DOUBLE_EQ(r.shift.dx[i * 16 + j], c * field.at(2, i, j));
            EXPECT_DOUBLE_EQ(r.shift.dy[i * 16 + j], c * field.at(3, i, j));
        }
}

TEST(Realization, NoTurbulenceHasZeroShift) {
    auto p = fixtures::small_protocol(16);
    p.cn2 = 0.0;
    const auto r = realize(p, WhiteNoiseSeed{1}, fixtures::exact_bundle(), 0);
    for (double v : r.shift.dx) EXPECT_EQ(v, 0.0);
    for (double v : r.shift.dy) EXPECT_EQ(v, 0.0);
}

TEST(Realization, RasterMismatchIsShapeError) {
    const auto p = fixtures::small_protocol(16);
    auto field = sample_field(build_autocorrelation(p), p, WhiteNoiseSeed{3});
    field.protocol.image_width_px = 17;
    EXPECT_THROW(realize_from_field(field, fixtures::exact_bundle(), 0), Error);
}

TEST(Forward, BlurIsAppliedAfterWarp) {
    const auto r = small_realization(24, 11, 0);
    const auto img = fixtures::random_image(24, 24, 1, 12);
    const auto fwd = simulate_forward(img, r, Noise::exclude);
    const auto blur_after = r.blur->apply(tilt_warp(img, r.shift), r.coeffs);
    const auto blur_before = tilt_warp(r.blur->apply(img, r.coeffs), r.shift);
    EXPECT_EQ(fwd.data, blur_after.data);
    double diff = 0.0;
    for (std::size_t n = 0; n < fwd.data.size(); ++n) diff = std::max(diff, std::abs(fwd.data[n] - blur_before.data[n]));
    EXPECT_GT(diff, 1e-6);
}

TEST(Forward, NoiseIsAdditiveAndIndependentOfField) {
    auto p = fixtures::small_protocol(24);
    p.noise_sigma = 0.05;
    const auto& bundle = fixtures::surrogate_bundle();
    const auto r1 = realize(p, WhiteNoiseSeed{1}, bundle, 77);
    const auto r2 = realize(p, WhiteNoiseSeed{2}, bundle, 77);
    const auto img = fixtures::random_image(24, 24, 3, 13);
    const auto with = simulate_forward(img, r1, Noise::include);
    const auto without = simulate_forward(img, r1, Noise::exclude);
    const auto n1 = realization_noise(r1, 3);
    for (std::size_t k = 0; k < with.data.size(); ++k) EXPECT_DOUBLE_EQ(with.data[k], without.data[k] + n1.data[k]);
    EXPECT_EQ(n1.data, realization_noise(r2, 3).data);

    double mean = 0.0, var = 0.0;
    for (double v : n1.data) mean += v;
    mean /= n1.data.size();
    for (double v : n1.data) var += (v - mean) * (v - mean);
    EXPECT_NEAR(std::sqrt(var / n1.data.size()), 0.05, 0.005);
}

TEST(Forward, ChannelsShareTurbulence) {
    const auto r = small_realization(24, 14, 0);
    const auto gray = fixtures::random_image(24, 24, 1, 15);
    ImageBuffer rgb(24, 24, 3);
    for (int c = 0; c < 3; ++c) std::copy(gray.data.begin(), gray.data.end(), rgb.plane(c).begin());
    const auto g = simulate_forward(gray, r, Noise::exclude);
    const auto o = simulate_forward(rgb, r, Noise::exclude);
    for (int c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < g.data.size(); ++k) EXPECT_NEAR(o.plane(c)[k], g.data[k], 1e-14);
}

TEST(Forward, ComposedAdjointIdentity) {
    const auto r = small_realization(24, 16, 0);
    for (unsigned t = 0; t < 5; ++t) {
        const auto x = fixtures::random_image(24, 24, t % 2 ? 3 : 1, 400 + t);
        const auto y = fixtures::random_image(24, 24, t % 2 ? 3 : 1, 500 + t);
        EXPECT_LT(rel_gap(dot(simulate_forward(x, r, Noise::exclude), y), dot(x, simulate_vjp(y, r))), 1e-12);
    }
}

TEST(Forward, DirectionalDerivativeMatchesVjp) {
    auto p = fixtures::small_protocol(16);
    p.noise_sigma = 0.02;
    const auto r = realize(p, WhiteNoiseSeed{17}, fixtures::surrogate_bundle(), 3);
    const auto x = fixtures::random_image(16, 16, 1, 600);
    const auto v = fixtures::random_image(16, 16, 1, 601);
    const auto g = fixtures::random_image(16, 16, 1, 602);
    const double h = 1e-3;
    ImageBuffer xp = x, xm = x;
    for (std::size_t k = 0; k < x.data.size(); ++k) {
        xp.data[k] += h * v.data[k];
        xm.data[k] -= h * v.data[k];
    }
    const double fd = (dot(simulate_forward(xp, r), g) - dot(simulate_forward(xm, r), g)) / (2 * h);
    EXPECT_LT(rel_gap(fd, dot(simulate_vjp(g, r), v)), 1e-6);
}
