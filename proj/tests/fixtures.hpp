#pragma once

#include <cmath>
#include <memory>
#include <random>

#include "turbsim/turbsim.hpp"

namespace fixtures {

/// Small basis shared by the operator tests: pupil 64, K = 24, 9x9 kernels.
inline const turbsim::PsfBasis& small_basis() {
    static const turbsim::PsfBasis b = [] {
        turbsim::BasisConfig cfg;
        cfg.n_samples = 400;
        cfg.num_kernels = 24;
        cfg.kernel_size = 9;
        cfg.pupil_n = 64;
        return turbsim::build_psf_basis(cfg);
    }();
    return b;
}

/// Bundle with the exact (render and project) phase-to-space map.
inline turbsim::BasisBundle exact_bundle() {
    const auto& b = small_basis();
    return {std::make_shared<const turbsim::PsfBasis>(b), turbsim::P2sMap::exact_for(b), "test-exact"};
}

inline turbsim::BasisBundle surrogate_bundle() {
    static const turbsim::BasisBundle bundle = [] {
        turbsim::P2sFitConfig cfg;
        cfg.n_train = 600;
        cfg.n_heldout = 100;
        turbsim::PsfArtifact art{small_basis(), turbsim::fit_p2s_surrogate(small_basis(), cfg)};
        return turbsim::BasisBundle::from_artifact(art);
    }();
    return bundle;
}

inline turbsim::ImageBuffer random_image(int h, int w, int c, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    turbsim::ImageBuffer img(h, w, c);
    for (auto& v : img.data) v = u(gen);
    return img;
}

/// Smooth test scene: two Gaussian blobs on a pedestal.
inline turbsim::ImageBuffer smooth_scene(int n, double width, int channels = 1) {
    turbsim::ImageBuffer img(n, n, channels);
    for (int c = 0; c < channels; ++c)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double x1 = i - 0.4 * n, y1 = j - 0.55 * n, x2 = i - 0.7 * n, y2 = j - 0.3 * n;
                img.at(c, i, j) = 0.2 + (0.5 - 0.1 * c) * std::exp(-(x1 * x1 + y1 * y1) / (2 * width * width)) +
                                  0.3 * std::exp(-(x2 * x2 + y2 * y2) / (4 * width * width));
            }
    return img;
}

/// Piecewise-constant scene with hard edges.
inline turbsim::ImageBuffer checker_scene(int n, int cell = 16) {
    turbsim::ImageBuffer img(n, n, 1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double v = ((i / cell) + (j / cell)) % 2 ? 0.8 : 0.2;
            const double x = i - n / 2.0, y = j - n / 2.0;
            if (x * x + y * y < (n / 6.0) * (n / 6.0)) v = 0.5;
            img.at(0, i, j) = v;
        }
    return img;
}

/// Protocol with a short correlation length on a small raster.
inline turbsim::TurbulenceProtocol small_protocol(int n) {
    turbsim::TurbulenceProtocol p;
    p.distance_m = 300.0;
    p.focal_length_m = 1.2;
    p.f_number = 8.0;
    p.scene_width_m = 0.5 * n / 64.0;
    p.cn2 = 1e-14;
    p.image_height_px = n;
    p.image_width_px = n;
    return p;
}

}  // namespace fixtures
