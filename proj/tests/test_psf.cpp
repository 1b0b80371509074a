#include <gtest/gtest.h>

#include <boost/math/special_functions/bessel.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "fixtures.hpp"
#include "turbsim/psf.hpp"
#include "turbsim/psf_artifact.hpp"

using namespace turbsim;

namespace {

std::vector<double> random_high_order(std::uint64_t seed, double scale) {
    std::vector<double> a(kNumHighOrder);
    for (int i = 0; i < kNumHighOrder; ++i) a[i] = scale * counter_normal(seed, 11, i);
    return a;
}

// Direct double sum over the pupil disk, evaluated on the oversampled focal
// grid and binned to pixels.
PsfKernel brute_force_psf(int n, double q, int s, std::span<const double> a) {
    const int b = std::max(2, static_cast<int>(std::ceil(2.0 * q - 1e-9)));
    const int fine = s * b;
    const double m = static_cast<double>(n) * b / q;
    const double cs = 0.5 * (fine - 1), cn = 0.5 * (n - 1);
    const ZernikeSpec spec{kNumZernike, n};
    std::vector<std::complex<double>> u(static_cast<std::size_t>(n) * n, 0.0);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double x = pupil_coord(c, n), y = pupil_coord(r, n);
            const double rho = std::hypot(x, y);
            if (rho > 1.0) continue;
            double phi = 0.0;
            for (int i = 0; i < kNumHighOrder; ++i)
                phi += a[i] * zernike_eval(spec, kFirstHighOrder + i, rho, std::atan2(y, x));
            u[static_cast<std::size_t>(r) * n + c] = std::polar(1.0, phi);
        }
    PsfKernel k{s, std::vector<double>(static_cast<std::size_t>(s) * s, 0.0)};
    for (int kr = 0; kr < fine; ++kr)
        for (int kc = 0; kc < fine; ++kc) {
            std::complex<double> e = 0.0;
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) {
                    const auto v = u[static_cast<std::size_t>(r) * n + c];
                    if (v == 0.0) continue;
                    const double arg = -2.0 * std::numbers::pi * ((kr - cs) * (r - cn) + (kc - cs) * (c - cn)) / m;
                    e += v * std::polar(1.0, arg);
                }
            k.data[static_cast<std::size_t>(kr / b) * s + kc / b] += std::norm(e);
        }
    const double t = k.sum();
    for (auto& v : k.data) v /= t;
    return k;
}

double airy_intensity(double rho) {
    if (rho < 1e-12) return 1.0;
    const double x = std::numbers::pi * rho;
    const double j = boost::math::cyl_bessel_j(1, x);
    return 4.0 * j * j / (x * x);
}

template <class F>
void expect_error_kind(F&& f, ErrorKind kind) {
    try {
        f();
        ADD_FAILURE() << "expected an error of kind " << kind_name(kind);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), kind) << e.what();
    }
}

}  // namespace

TEST(PsfRenderer, UnitSumAndNonnegative) {
    const PsfRenderer r(64, 2.0, 9);
    const auto k = r.render(random_high_order(3, 0.8));
    EXPECT_NEAR(k.sum(), 1.0, 1e-12);
    for (double v : k.data) EXPECT_GE(v, 0.0);
}

TEST(PsfRenderer, FftPathMatchesDirectSum) {
    const PsfRenderer r(64, 2.0, 5);
    ASSERT_TRUE(r.uses_fft());
    const auto a = random_high_order(5, 0.5);
    const auto got = r.render(a);
    const auto want = brute_force_psf(64, 2.0, 5, a);
    for (std::size_t e = 0; e < got.data.size(); ++e) EXPECT_NEAR(got.data[e], want.data[e], 1e-10);
}

TEST(PsfRenderer, MatrixTransformPathMatchesDirectSum) {
    const PsfRenderer r(64, 1.7, 5);
    ASSERT_FALSE(r.uses_fft());
    const auto a = random_high_order(6, 0.5);
    const auto got = r.render(a);
    const auto want = brute_force_psf(64, 1.7, 5, a);
    for (std::size_t e = 0; e < got.data.size(); ++e) EXPECT_NEAR(got.data[e], want.data[e], 1e-10);
}

TEST(PsfRenderer, DiffractionLimitMatchesPixelIntegratedAiry) {
    const int s = 9;
    const double q = 2.0;
    const PsfRenderer r(256, q, s);
    const auto k = r.render(std::vector<double>(kNumHighOrder, 0.0));

    // Intensity is point-sampled on the renderer's oversampled grid (b per
    // pixel side), so the oracle samples the Airy pattern at the same points.
    const int sub = r.oversample();
    std::vector<double> airy(static_cast<std::size_t>(s) * s, 0.0);
    const int c = s / 2;
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) {
            double acc = 0.0;
            for (int u = 0; u < sub; ++u)
                for (int v = 0; v < sub; ++v) {
                    const double y = (i - c - 0.5 + (u + 0.5) / sub) * q;
                    const double x = (j - c - 0.5 + (v + 0.5) / sub) * q;
                    acc += airy_intensity(std::hypot(x, y));
                }
            airy[static_cast<std::size_t>(i) * s + j] = acc;
        }
    double t = 0.0;
    for (double v : airy) t += v;
    for (std::size_t e = 0; e < airy.size(); ++e) EXPECT_NEAR(k.data[e], airy[e] / t, 1e-3) << "pixel " << e;
    EXPECT_NEAR(k.at(c, c) / (airy[c * s + c] / t), 1.0, 2e-3);
}

TEST(PsfRenderer, NegatedPhaseRotatesPsf) {
    const PsfRenderer r(64, 2.0, 9);
    auto a = random_high_order(9, 0.7);
    const auto k1 = r.render(a);
    for (auto& v : a) v = -v;
    const auto k2 = r.render(a);
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) EXPECT_NEAR(k1.at(i, j), k2.at(8 - i, 8 - j), 1e-12);
}

TEST(PsfRenderer, RejectsBadArguments) {
    expect_error_kind([] { PsfRenderer(64, 2.0, 41); }, ErrorKind::domain);
    expect_error_kind([] { PsfRenderer(64, 2.0, 8); }, ErrorKind::domain);
    expect_error_kind([] { PsfRenderer(64, 0.0, 9); }, ErrorKind::domain);
    const PsfRenderer r(64, 2.0, 9);
    expect_error_kind([&] { r.render(std::vector<double>(10, 0.0)); }, ErrorKind::shape);
    auto a = std::vector<double>(kNumHighOrder, 0.0);
    a[3] = std::nan("");
    expect_error_kind([&] { r.render(a); }, ErrorKind::domain);
}

TEST(HighOrderSampler, MatchesModalCovariance) {
    const HighOrderSampler s(2.0, 2.0 + 1e-9, 4, 0);
    const auto cov = noll_covariance(2.0);
    const int n = 6000;
    std::vector<double> a(kNumHighOrder);
    double s44 = 0.0, s77 = 0.0, s7_17 = 0.0;
    for (int i = 0; i < n; ++i) {
        s.draw(i, a);
        s44 += a[0] * a[0];
        s77 += a[3] * a[3];
        s7_17 += a[3] * a[13];
    }
    EXPECT_NEAR(s44 / n / cov(4, 4), 1.0, 0.06);
    EXPECT_NEAR(s77 / n / cov(7, 7), 1.0, 0.06);
    EXPECT_NEAR(s7_17 / n, cov(7, 17), 0.06 * std::sqrt(cov(7, 7) * cov(17, 17)));
}

TEST(PsfBasis, OrthonormalKernels) {
    const auto& b = fixtures::small_basis();
    for (int i = 0; i < b.num_kernels; ++i)
        for (int j = 0; j < b.num_kernels; ++j) {
            double d = 0.0;
            const auto ki = b.kernel(i), kj = b.kernel(j);
            for (std::size_t e = 0; e < ki.size(); ++e) d += ki[e] * kj[e];
            EXPECT_NEAR(d, i == j ? 1.0 : 0.0, 1e-6);
        }
}

TEST(PsfBasis, VarianceFractionsNonincreasing) {
    const auto& b = fixtures::small_basis();
    double total = 0.0;
    for (int k = 0; k < b.num_kernels; ++k) {
        total += b.variance_fraction[k];
        if (k > 0) EXPECT_LE(b.variance_fraction[k], b.variance_fraction[k - 1]);
    }
    EXPECT_LE(total, 1.0 + 1e-6);
    EXPECT_GT(b.variance_fraction[0], 0.5);
}

TEST(PsfBasis, WorkerCountDoesNotChangeBasis) {
    BasisConfig cfg;
    cfg.n_samples = 200;
    cfg.num_kernels = 8;
    cfg.kernel_size = 7;
    cfg.pupil_n = 64;
    cfg.workers = 1;
    const auto b1 = build_psf_basis(cfg);
    cfg.workers = 4;
    const auto b4 = build_psf_basis(cfg);
    EXPECT_EQ(b1.kernels, b4.kernels);
    EXPECT_EQ(b1.variance_fraction, b4.variance_fraction);
}

TEST(PsfBasis, ProjectionReproducesBasisKernels) {
    const auto& b = fixtures::small_basis();
    for (int k : {0, 5, b.num_kernels - 1}) {
        PsfKernel psf{b.kernel_size, std::vector<double>(b.kernel(k).begin(), b.kernel(k).end())};
        const auto beta = project_coeffs_exact(b, psf);
        const auto rec = reconstruct_kernel(b, beta);
        for (std::size_t e = 0; e < rec.size(); ++e) EXPECT_NEAR(rec[e], psf.data[e], 1e-6);
    }
}

TEST(PsfBasis, CapturesHeldOutEnergy) {
    const auto& b = fixtures::small_basis();
    const PsfRenderer r(b.pupil_n, b.pixel_scale, b.kernel_size);
    const HighOrderSampler s(0.0, 4.0, 99, 0x5000);
    std::vector<double> a(kNumHighOrder);
    for (int i = 0; i < 20; ++i) {
        s.draw(i, a);
        const auto psf = r.render(a);
        const auto beta = project_coeffs_exact(b, psf);
        double captured = 0.0, total = 0.0;
        for (double v : beta) captured += v * v;
        for (double v : psf.data) total += v * v;
        EXPECT_GT(captured / total, 0.9);
        EXPECT_LE(captured / total, 1.0 + 1e-6);
    }
}

TEST(P2sSurrogate, FeatureLayout) {
    std::vector<double> a(kNumHighOrder), f(kNumP2sFeatures);
    for (int i = 0; i < kNumHighOrder; ++i) a[i] = i + 1.0;
    p2s_features(a, f);
    EXPECT_EQ(f[0], 1.0);
    EXPECT_EQ(f[1], 1.0);
    EXPECT_EQ(f[kNumHighOrder], 33.0);
    EXPECT_EQ(f[kNumHighOrder + 1], 1.0);
    EXPECT_EQ(f[2 * kNumHighOrder], 33.0 * 33.0);
}

TEST(P2sSurrogate, FitMeetsBound) {
    const auto bundle = fixtures::surrogate_bundle();
    EXPECT_EQ(bundle.map.mode, P2sMode::surrogate);
    EXPECT_LE(bundle.map.heldout_median_error, kSurrogateErrorBound);
}

TEST(P2sSurrogate, TightBoundRaisesFitError) {
    P2sFitConfig cfg;
    cfg.n_train = 300;
    cfg.n_heldout = 20;
    cfg.max_error = 1e-9;
    try {
        fit_p2s_surrogate(fixtures::small_basis(), cfg);
        ADD_FAILURE() << "expected FitError";
    } catch (const FitError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::fit);
        EXPECT_GT(e.measured_error(), 1e-9);
    }
}

TEST(P2sEval, ExactModeEqualsProjection) {
    const auto& b = fixtures::small_basis();
    const auto map = P2sMap::exact_for(b);
    ZernikeField f(2, 3);
    f.protocol = fixtures::small_protocol(32);
    for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] = 0.3 * counter_normal(17, 0, i);
    const auto maps = p2s_eval(map, b, f);
    const PsfRenderer r(b.pupil_n, b.pixel_scale, b.kernel_size);
    std::vector<double> a(kNumHighOrder);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) {
            for (int m = 0; m < kNumHighOrder; ++m) a[m] = f.at(kFirstHighOrder + m, i, j);
            const auto beta = project_coeffs_exact(b, r.render(a));
            for (int k = 0; k < b.num_kernels; ++k) EXPECT_DOUBLE_EQ(maps.at(k, i, j), beta[k]);
        }
}

TEST(P2sEval, OutOfRangeStrengthIsScaledToRangeEdge) {
    const auto& b = fixtures::small_basis();
    const auto map = P2sMap::exact_for(b);
    ZernikeField f(1, 1);
    f.protocol = fixtures::small_protocol(32);
    f.protocol.cn2 = 4e-13;
    const double dr0 = d_over_r0(f.protocol);
    ASSERT_GT(dr0, map.dr0_hi);
    for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] = 0.5 * counter_normal(18, 0, i);
    const auto maps = p2s_eval(map, b, f);
    const double scale = std::pow(map.dr0_hi / dr0, 5.0 / 6.0);
    std::vector<double> a(kNumHighOrder);
    for (int m = 0; m < kNumHighOrder; ++m) a[m] = scale * f.at(kFirstHighOrder + m, 0, 0);
    const auto beta = project_coeffs_exact(b, PsfRenderer(b.pupil_n, b.pixel_scale, b.kernel_size).render(a));
    for (int k = 0; k < b.num_kernels; ++k) EXPECT_NEAR(maps.at(k, 0, 0), beta[k], 1e-12);
}

TEST(P2sEval, MismatchedMapIsShapeError) {
    const auto& b = fixtures::small_basis();
    auto map = P2sMap::exact_for(b);
    map.num_kernels -= 1;
    ZernikeField f(1, 1);
    f.protocol = fixtures::small_protocol(32);
    expect_error_kind([&] { p2s_eval(map, b, f); }, ErrorKind::shape);
    auto sur = fixtures::surrogate_bundle().map;
    sur.weights.pop_back();
    expect_error_kind([&] { p2s_eval(sur, b, f); }, ErrorKind::shape);
}

TEST(PsfArtifact, RoundTripIsByteExact) {
    const auto bundle = fixtures::surrogate_bundle();
    const PsfArtifact art{*bundle.basis, bundle.map};
    const auto bytes = serialize(art);
    const auto back = deserialize_psf_artifact(bytes);
    EXPECT_EQ(serialize(back), bytes);
    EXPECT_EQ(back.basis.kernels, art.basis.kernels);
    ASSERT_TRUE(back.map.has_value());
    EXPECT_EQ(back.map->weights, art.map->weights);
    EXPECT_EQ(artifact_hash(back), artifact_hash(art));
    EXPECT_EQ(artifact_hash(art).size(), 16u);
}

TEST(PsfArtifact, BasisOnlyRoundTrip) {
    const PsfArtifact art{fixtures::small_basis(), std::nullopt};
    const auto back = deserialize_psf_artifact(serialize(art));
    EXPECT_FALSE(back.map.has_value());
    EXPECT_EQ(back.basis.variance_fraction, art.basis.variance_fraction);
    expect_error_kind([&] { BasisBundle::from_artifact(back); }, ErrorKind::version);
}

TEST(PsfArtifact, CorruptionIsDetected) {
    const auto bundle = fixtures::surrogate_bundle();
    const auto bytes = serialize(PsfArtifact{*bundle.basis, bundle.map});

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    expect_error_kind([&] { deserialize_psf_artifact(bad_magic); }, ErrorKind::format);

    auto bad_version = bytes;
    bad_version[8] = 2;
    expect_error_kind([&] { deserialize_psf_artifact(bad_version); }, ErrorKind::version);

    expect_error_kind([&] { deserialize_psf_artifact(bytes.substr(0, bytes.size() - 3)); }, ErrorKind::format);
    expect_error_kind([&] { deserialize_psf_artifact(bytes + "x"); }, ErrorKind::format);
}

TEST(PsfArtifact, StoredErrorAboveBoundIsFitError) {
    auto map = fixtures::surrogate_bundle().map;
    map.heldout_median_error = 0.2;
    const auto bytes = serialize(PsfArtifact{fixtures::small_basis(), map});
    expect_error_kind([&] { deserialize_psf_artifact(bytes); }, ErrorKind::fit);
}

TEST(PsfArtifact, ExactMapIsNotPersisted) {
    const auto& b = fixtures::small_basis();
    expect_error_kind([&] { serialize(PsfArtifact{b, P2sMap::exact_for(b)}); }, ErrorKind::domain);
}

TEST(PsfArtifact, FileRoundTrip) {
    const auto bundle = fixtures::surrogate_bundle();
    const PsfArtifact art{*bundle.basis, bundle.map};
    const std::string path = ::testing::TempDir() + "/basis_roundtrip.bin";
    save_psf_artifact(path, art);
    const auto loaded = BasisBundle::load(path);
    EXPECT_EQ(loaded.hash, artifact_hash(art));
    EXPECT_EQ(loaded.basis->kernels, art.basis.kernels);
    expect_error_kind([] { load_psf_artifact("/nonexistent/basis.bin"); }, ErrorKind::io);
}
