#pragma once

// Thin RAII layer over FFTW's 2-D real transforms. Plans are created with
// FFTW_ESTIMATE so the chosen algorithm (and thus every output bit) does not
// depend on run-time timing measurements.

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include <fftw3.h>

#include "turbsim/error.hpp"

namespace turbsim {

using cplx = std::complex<double>;

template <class T>
class FftwBuffer {
public:
    FftwBuffer() = default;
    explicit FftwBuffer(std::size_t n) : n_(n), p_(static_cast<T*>(fftw_malloc(sizeof(T) * (n ? n : 1)))) {
        require(p_ != nullptr, ErrorKind::numeric, "fftw_malloc failed");
        for (std::size_t i = 0; i < n_; ++i) p_[i] = T{};
    }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
    FftwBuffer(FftwBuffer&& o) noexcept : n_(std::exchange(o.n_, 0)), p_(std::exchange(o.p_, nullptr)) {}
    FftwBuffer& operator=(FftwBuffer&& o) noexcept {
        std::swap(n_, o.n_);
        std::swap(p_, o.p_);
        return *this;
    }
    ~FftwBuffer() {
        if (p_) fftw_free(p_);
    }

    T* data() { return p_; }
    const T* data() const { return p_; }
    std::size_t size() const { return n_; }
    T& operator[](std::size_t i) { return p_[i]; }
    const T& operator[](std::size_t i) const { return p_[i]; }
    void fill(T v) {
        for (std::size_t i = 0; i < n_; ++i) p_[i] = v;
    }

private:
    std::size_t n_ = 0;
    T* p_ = nullptr;
};

namespace detail {
inline std::mutex& fftw_planner_mutex() {
    static std::mutex mu;
    return mu;
}
}  // namespace detail

/// Forward (r2c) and inverse (c2r) plans for a rows x cols real grid.
/// Transforms are unnormalized. Execution is thread-safe; buffers must come
/// from FftwBuffer so alignment matches the planning arrays.
class FftPlan2d {
public:
    FftPlan2d(int rows, int cols) : rows_(rows), cols_(cols) {
        require(rows > 0 && cols > 0, ErrorKind::shape, "FFT size must be positive");
        FftwBuffer<double> r(real_size());
        FftwBuffer<cplx> c(spectrum_size());
        std::lock_guard lock(detail::fftw_planner_mutex());
        fwd_ = fftw_plan_dft_r2c_2d(rows, cols, r.data(), reinterpret_cast<fftw_complex*>(c.data()), FFTW_ESTIMATE);
        inv_ = fftw_plan_dft_c2r_2d(rows, cols, reinterpret_cast<fftw_complex*>(c.data()), r.data(), FFTW_ESTIMATE);
        require(fwd_ && inv_, ErrorKind::numeric, "FFTW planning failed");
    }
    FftPlan2d(const FftPlan2d&) = delete;
    FftPlan2d& operator=(const FftPlan2d&) = delete;
    ~FftPlan2d() {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(inv_);
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int spectrum_cols() const { return cols_ / 2 + 1; }
    std::size_t real_size() const { return static_cast<std::size_t>(rows_) * cols_; }
    std::size_t spectrum_size() const { return static_cast<std::size_t>(rows_) * spectrum_cols(); }

    void forward(FftwBuffer<double>& in, FftwBuffer<cplx>& out) const {
        fftw_execute_dft_r2c(fwd_, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
    }
    /// Destroys `in`.
    void inverse(FftwBuffer<cplx>& in, FftwBuffer<double>& out) const {
        fftw_execute_dft_c2r(inv_, reinterpret_cast<fftw_complex*>(in.data()), out.data());
    }

private:
    int rows_;
    int cols_;
    fftw_plan fwd_ = nullptr;
    fftw_plan inv_ = nullptr;
};

/// Unnormalized forward complex 2-D transform (e^{-i...} sign convention).
class FftPlanC2c2d {
public:
    FftPlanC2c2d(int rows, int cols) : rows_(rows), cols_(cols) {
        require(rows > 0 && cols > 0, ErrorKind::shape, "FFT size must be positive");
        FftwBuffer<cplx> a(size());
        FftwBuffer<cplx> b(size());
        std::lock_guard lock(detail::fftw_planner_mutex());
        plan_ = fftw_plan_dft_2d(rows, cols, reinterpret_cast<fftw_complex*>(a.data()),
                                 reinterpret_cast<fftw_complex*>(b.data()), FFTW_FORWARD, FFTW_ESTIMATE);
        require(plan_ != nullptr, ErrorKind::numeric, "FFTW planning failed");
    }
    FftPlanC2c2d(const FftPlanC2c2d&) = delete;
    FftPlanC2c2d& operator=(const FftPlanC2c2d&) = delete;
    ~FftPlanC2c2d() {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(plan_);
    }

    std::size_t size() const { return static_cast<std::size_t>(rows_) * cols_; }
    void forward(FftwBuffer<cplx>& in, FftwBuffer<cplx>& out) const {
        fftw_execute_dft(plan_, reinterpret_cast<fftw_complex*>(in.data()), reinterpret_cast<fftw_complex*>(out.data()));
    }

private:
    int rows_;
    int cols_;
    fftw_plan plan_ = nullptr;
};

inline std::shared_ptr<const FftPlanC2c2d> fft_plan_c2c(int rows, int cols) {
    detail::fftw_planner_mutex();
    static std::mutex mu;
    static std::map<std::pair<int, int>, std::shared_ptr<const FftPlanC2c2d>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[{rows, cols}];
    if (!slot) slot = std::make_shared<const FftPlanC2c2d>(rows, cols);
    return slot;
}

/// Process-wide plan cache keyed by grid size.
inline std::shared_ptr<const FftPlan2d> fft_plan(int rows, int cols) {
    detail::fftw_planner_mutex();  // must outlive the cache below
    static std::mutex mu;
    static std::map<std::pair<int, int>, std::shared_ptr<const FftPlan2d>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[{rows, cols}];
    if (!slot) slot = std::make_shared<const FftPlan2d>(rows, cols);
    return slot;
}

}  // namespace turbsim
