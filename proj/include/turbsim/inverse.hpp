#pragma once

// Image recovery by gradient descent through the differentiable simulator.
//
// Objective: sum_x huber_delta(A c - o) + tau * TV(c), with A the noise-free
// forward operator of a fixed realization and TV the anisotropic total
// variation with forward differences.

#include <cmath>
#include <functional>
#include <vector>

#include <spdlog/spdlog.h>

#include "turbsim/degrade.hpp"
#include "turbsim/error.hpp"
#include "turbsim/image.hpp"

namespace turbsim {

struct InverseConfig {
    double step_size = 0.5;
    int max_iters = 300;
    double tv_weight = 1e-4;
    double huber_delta = 1e-3;
    double stop_tol = 0.0;
    int max_halvings = 40;
    int workers = 1;
};

inline void validate(const InverseConfig& c) {
    require(c.step_size > 0.0 && std::isfinite(c.step_size), ErrorKind::domain, "step_size must be positive");
    require(c.huber_delta > 0.0, ErrorKind::domain, "huber_delta must be positive");
    require(c.tv_weight >= 0.0, ErrorKind::domain, "tv_weight must be nonnegative");
    require(c.max_iters >= 0, ErrorKind::domain, "max_iters must be nonnegative");
    require(c.stop_tol >= 0.0, ErrorKind::domain, "stop_tol must be nonnegative");
}

struct LossValue {
    double value = 0.0;
    double data = 0.0;
    double tv = 0.0;
    ImageBuffer gradient;
};

inline double huber(double x, double delta) {
    const double a = std::abs(x);
    return a <= delta ? 0.5 * x * x / delta : a - 0.5 * delta;
}

inline double huber_derivative(double x, double delta) {
    return x > delta ? 1.0 : x < -delta ? -1.0 : x / delta;
}

inline double sign0(double x) { return x > 0.0 ? 1.0 : x < 0.0 ? -1.0 : 0.0; }

/// Anisotropic TV and, if `grad` is non-null, adds tau times its subgradient.
inline double total_variation(const ImageBuffer& img, double tau = 0.0, ImageBuffer* grad = nullptr) {
    double tv = 0.0;
    for (int c = 0; c < img.channels; ++c)
        for (int i = 0; i < img.height; ++i)
            for (int j = 0; j < img.width; ++j) {
                const double v = img.at(c, i, j);
                if (i + 1 < img.height) {
                    const double d = img.at(c, i + 1, j) - v;
                    tv += std::abs(d);
                    if (grad) {
                        grad->at(c, i + 1, j) += tau * sign0(d);
                        grad->at(c, i, j) -= tau * sign0(d);
                    }
                }
                if (j + 1 < img.width) {
                    const double d = img.at(c, i, j + 1) - v;
                    tv += std::abs(d);
                    if (grad) {
                        grad->at(c, i, j + 1) += tau * sign0(d);
                        grad->at(c, i, j) -= tau * sign0(d);
                    }
                }
            }
    return tv;
}

inline LossValue consistency_loss(const ImageBuffer& candidate, const ImageBuffer& observed,
                                  const DegradationRealization& r, const InverseConfig& cfg = {}) {
    require_same_shape(candidate, observed, "consistency_loss");
    auto resid = simulate_forward(candidate, r, Noise::exclude, cfg.workers);
    LossValue out;
    for (std::size_t k = 0; k < resid.data.size(); ++k) {
        const double e = resid.data[k] - observed.data[k];
        out.data += huber(e, cfg.huber_delta);
        resid.data[k] = huber_derivative(e, cfg.huber_delta);
    }
    out.gradient = simulate_vjp(resid, r, cfg.workers);
    out.tv = total_variation(candidate, cfg.tv_weight, cfg.tv_weight > 0.0 ? &out.gradient : nullptr);
    out.value = out.data + cfg.tv_weight * out.tv;
    return out;
}

struct InverseResult {
    ImageBuffer image;
    std::vector<double> trace;  // objective at the initial point, then after each iteration
    int iterations = 0;
    double final_step = 0.0;
};

/// Gradient descent; a step that raises the objective is halved and retried,
/// so the trace never increases and the last iterate is the best one.
inline InverseResult invert(const ImageBuffer& observed, const DegradationRealization& r, const InverseConfig& cfg,
                            const ImageBuffer& init,
                            const std::function<void(int, double)>& on_iter = {}) {
    validate(cfg);
    require_same_shape(init, observed, "invert");
    InverseResult res;
    res.image = init;
    auto cur = consistency_loss(res.image, observed, r, cfg);
    require(std::isfinite(cur.value), ErrorKind::numeric, "invert: non-finite objective at the initial point");
    res.trace.push_back(cur.value);
    double step = cfg.step_size;
    for (int it = 0; it < cfg.max_iters; ++it) {
        bool accepted = false;
        ImageBuffer trial = res.image;
        LossValue next;
        for (int h = 0; h <= cfg.max_halvings; ++h) {
            for (std::size_t k = 0; k < trial.data.size(); ++k)
                trial.data[k] = res.image.data[k] - step * cur.gradient.data[k];
            next = consistency_loss(trial, observed, r, cfg);
            require(!std::isnan(next.value), ErrorKind::numeric,
                    "invert: non-finite objective at iteration " + std::to_string(it));
            if (next.value <= cur.value) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            spdlog::debug("invert: no decrease after {} halvings at iteration {}", cfg.max_halvings, it);
            break;
        }
        const double prev = cur.value;
        res.image = std::move(trial);
        cur = std::move(next);
        res.trace.push_back(cur.value);
        res.iterations = it + 1;
        if (on_iter) on_iter(it + 1, cur.value);
        if (prev > 0.0 && (prev - cur.value) / prev < cfg.stop_tol) break;
    }
    res.final_step = step;
    return res;
}

}  // namespace turbsim
